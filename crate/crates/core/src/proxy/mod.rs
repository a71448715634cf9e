//! The target-side proxy: holds the replicated storage, accepts the one-off
//! migration, and applies verified synchronization payloads.

mod cost;
mod payload;

use std::collections::BTreeMap;
use std::sync::PoisonError;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chainsim::{AccountProof, Address};
use crate::hash::{hash_invocations, H256};
use crate::proofs::{compute_transition_confirmation, verify_multi_proof, ProofError, StateDiff};
use crate::relay::{RelayError, RelayStore, SharedRelay};
use crate::trie::{StateKey, StateValue, Trie};

pub use cost::{CostReport, BYTE_WEIGHT, HASH_WEIGHT, WRITE_WEIGHT};
pub use payload::{PayloadDecodeError, SyncPayload};

/// Default payload ceiling, standing in for a block gas limit.
pub const DEFAULT_MAX_PAYLOAD_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProxyError {
    #[error("migration has not been finalized")]
    NotSealed,
    #[error("migration is already sealed")]
    AlreadySealed,
    #[error("block {got} does not succeed the last synced block {last}")]
    StaleSync { last: u64, got: u64 },
    #[error("relay holds no header for block {0}")]
    HeaderUnavailable(u64),
    #[error("account proof rejected: {0}")]
    AccountProofInvalid(String),
    #[error("multi proof rejected: {0}")]
    MultiProofInvalid(String),
    #[error("transition confirmation {computed} does not match the stored root {expected}")]
    IncompleteTransition { expected: H256, computed: H256 },
    #[error("restructuring needs node {0}, which the proof pruned")]
    InsufficientProofNodes(H256),
    #[error("payload of {size} bytes exceeds the {limit} byte limit")]
    PayloadTooLarge { size: usize, limit: usize },
    #[error("source storage root {source_root} differs from the local root {local}")]
    RootDivergence { source_root: H256, local: H256 },
    #[error("code hash {actual} differs from the expected {expected}")]
    CodeHashMismatch { expected: H256, actual: H256 },
    #[error("payload envelope is malformed: {0}")]
    MalformedPayload(String),
}

impl ProxyError {
    /// Stable machine-readable name.
    pub fn reason(&self) -> &'static str {
        match self {
            ProxyError::NotSealed => "NotSealed",
            ProxyError::AlreadySealed => "AlreadySealed",
            ProxyError::StaleSync { .. } => "StaleSync",
            ProxyError::HeaderUnavailable(_) => "HeaderUnavailable",
            ProxyError::AccountProofInvalid(_) => "AccountProofInvalid",
            ProxyError::MultiProofInvalid(_) => "MultiProofInvalid",
            ProxyError::IncompleteTransition { .. } => "IncompleteTransition",
            ProxyError::InsufficientProofNodes(_) => "InsufficientProofNodes",
            ProxyError::PayloadTooLarge { .. } => "PayloadTooLarge",
            ProxyError::RootDivergence { .. } => "RootDivergence",
            ProxyError::CodeHashMismatch { .. } => "CodeHashMismatch",
            ProxyError::MalformedPayload(_) => "MalformedPayload",
        }
    }
}

impl From<RelayError> for ProxyError {
    fn from(e: RelayError) -> Self {
        match e {
            RelayError::HeaderUnavailable(n) => ProxyError::HeaderUnavailable(n),
            other => ProxyError::AccountProofInvalid(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProxyConfig {
    pub max_payload_bytes: usize,
    /// When set, migration also requires the source account's code hash to match.
    #[serde(default)]
    pub expected_code_hash: Option<H256>,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            max_payload_bytes: DEFAULT_MAX_PAYLOAD_BYTES,
            expected_code_hash: None,
        }
    }
}

#[derive(Debug)]
pub struct ProxyContract {
    source: Address,
    storage: Trie,
    current_root: H256,
    last_synced_block: Option<u64>,
    sealed: bool,
    relay: SharedRelay,
    config: ProxyConfig,
    reports: Vec<CostReport>,
}

impl ProxyContract {
    pub fn new(source: Address, relay: SharedRelay) -> Self {
        Self::with_config(source, relay, ProxyConfig::default())
    }

    pub fn with_config(source: Address, relay: SharedRelay, config: ProxyConfig) -> Self {
        let storage = Trie::new();
        ProxyContract {
            source,
            current_root: storage.root_hash(),
            storage,
            last_synced_block: None,
            sealed: false,
            relay,
            config,
            reports: Vec::new(),
        }
    }

    pub fn source_address(&self) -> Address {
        self.source
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn current_root(&self) -> H256 {
        self.current_root
    }

    pub fn last_synced_block(&self) -> Option<u64> {
        self.last_synced_block
    }

    pub fn relay(&self) -> &SharedRelay {
        &self.relay
    }

    pub fn config(&self) -> &ProxyConfig {
        &self.config
    }

    /// Reports of accepted synchronizations, oldest first.
    pub fn cost_reports(&self) -> &[CostReport] {
        &self.reports
    }

    pub fn last_cost_report(&self) -> Option<&CostReport> {
        self.reports.last()
    }

    /// Root of the replicated storage, recomputed from the trie.
    pub fn storage_root(&self) -> H256 {
        self.storage.root_hash()
    }

    pub fn init_migration<'a, I>(&mut self, entries: I) -> Result<(), ProxyError>
    where
        I: IntoIterator<Item = &'a (StateKey, StateValue)>,
    {
        if self.sealed {
            return Err(ProxyError::AlreadySealed);
        }
        let mut storage = self.storage.clone();
        for (k, v) in entries {
            storage
                .insert(k, v)
                .expect("a full trie has no pruned nodes");
        }
        self.storage = storage;
        Ok(())
    }

    /// Seals the migration if the relayed source account commits to exactly
    /// the storage loaded so far.
    pub fn finalize_migration(
        &mut self,
        proof: &AccountProof,
        local_root: H256,
    ) -> Result<(), ProxyError> {
        if self.sealed {
            return Err(ProxyError::AlreadySealed);
        }
        let global_root = self.relayed_root(proof.block_number)?;
        let account = self.verify_account(proof, global_root)?;
        if let Some(expected) = self.config.expected_code_hash {
            if account.code_hash != expected {
                return Err(ProxyError::CodeHashMismatch {
                    expected,
                    actual: account.code_hash,
                });
            }
        }
        let local = self.storage.root_hash();
        for candidate in [local, local_root] {
            if account.storage_root != candidate {
                return Err(ProxyError::RootDivergence {
                    source_root: account.storage_root,
                    local: candidate,
                });
            }
        }
        self.current_root = local;
        self.last_synced_block = Some(proof.block_number);
        self.sealed = true;
        Ok(())
    }

    pub fn query(&self, key: &StateKey) -> Result<Option<StateValue>, ProxyError> {
        if !self.sealed {
            return Err(ProxyError::NotSealed);
        }
        Ok(self
            .storage
            .get_value(key)
            .expect("a full trie has no pruned nodes"))
    }

    /// Full replicated state.
    pub fn entries(&self) -> Result<BTreeMap<StateKey, StateValue>, ProxyError> {
        if !self.sealed {
            return Err(ProxyError::NotSealed);
        }
        Ok(self
            .storage
            .storage_entries()
            .expect("a full trie has no pruned nodes"))
    }

    /// Size-checks and decodes a wire payload, then synchronizes.
    pub fn synchronize_bytes(&mut self, bytes: &[u8]) -> Result<StateDiff, ProxyError> {
        if !self.sealed {
            return Err(ProxyError::NotSealed);
        }
        self.check_size(bytes.len())?;
        let payload = SyncPayload::decode(bytes).map_err(|e| match e {
            PayloadDecodeError::Envelope(e) => ProxyError::MalformedPayload(e.to_string()),
            PayloadDecodeError::AccountProof(e) => ProxyError::AccountProofInvalid(e.to_string()),
            PayloadDecodeError::MultiProof(e) => ProxyError::MultiProofInvalid(e.to_string()),
        })?;
        self.apply_verified(&payload, bytes.len())
    }

    /// Verifies `payload` and applies its state changes. Any failure leaves the proxy untouched.
    pub fn synchronize(&mut self, payload: &SyncPayload) -> Result<StateDiff, ProxyError> {
        if !self.sealed {
            return Err(ProxyError::NotSealed);
        }
        let size = payload.encode().len();
        self.check_size(size)?;
        self.apply_verified(payload, size)
    }

    fn check_size(&self, size: usize) -> Result<(), ProxyError> {
        if size > self.config.max_payload_bytes {
            return Err(ProxyError::PayloadTooLarge {
                size,
                limit: self.config.max_payload_bytes,
            });
        }
        Ok(())
    }

    fn apply_verified(
        &mut self,
        payload: &SyncPayload,
        payload_bytes: usize,
    ) -> Result<StateDiff, ProxyError> {
        let last = self
            .last_synced_block
            .expect("sealed proxies have a synced block");
        if payload.source_block <= last {
            return Err(ProxyError::StaleSync {
                last,
                got: payload.source_block,
            });
        }
        if payload.account_proof.block_number != payload.source_block {
            return Err(ProxyError::AccountProofInvalid(
                "proof is for a different block".into(),
            ));
        }
        let hashes_before = hash_invocations();

        let global_root = self.relayed_root(payload.source_block)?;
        let new_root = self
            .verify_account(&payload.account_proof, global_root)?
            .storage_root;
        let verified = verify_multi_proof(new_root, &payload.multi_proof)
            .map_err(|e| ProxyError::MultiProofInvalid(e.to_string()))?;
        let current: BTreeMap<StateKey, Option<StateValue>> = verified
            .values()
            .keys()
            .map(|k| {
                (
                    *k,
                    self.storage
                        .get_value(k)
                        .expect("a full trie has no pruned nodes"),
                )
            })
            .collect();
        let confirmation =
            compute_transition_confirmation(&verified, &current).map_err(|e| match e {
                ProofError::InsufficientProofNodes(h) => ProxyError::InsufficientProofNodes(h),
                other => ProxyError::MultiProofInvalid(other.to_string()),
            })?;
        if confirmation.computed_root != self.current_root {
            return Err(ProxyError::IncompleteTransition {
                expected: self.current_root,
                computed: confirmation.computed_root,
            });
        }
        let hashes = hash_invocations() - hashes_before;

        let diff = StateDiff::from_changes(
            verified
                .values()
                .iter()
                .map(|(k, new)| (*k, current[k].clone(), new.clone())),
        );
        let mut storage = self.storage.clone();
        diff.apply_to(&mut storage)
            .expect("a full trie has no pruned nodes");
        debug_assert_eq!(storage.root_hash(), new_root);

        self.storage = storage;
        self.current_root = new_root;
        self.last_synced_block = Some(payload.source_block);
        self.reports.push(CostReport::new(
            payload_bytes as u64,
            hashes,
            (payload.account_proof.nodes.len() + payload.multi_proof.node_count()) as u64,
            diff.len() as u64 + 1,
            payload.multi_proof.keys.len() as u64,
        ));
        Ok(diff)
    }

    fn relayed_root(&self, block: u64) -> Result<H256, ProxyError> {
        let relay = self.relay.read().unwrap_or_else(PoisonError::into_inner);
        Ok(relay.get_state_root(block)?)
    }

    fn verify_account<'p>(
        &self,
        proof: &'p AccountProof,
        global_root: H256,
    ) -> Result<&'p crate::chainsim::AccountTuple, ProxyError> {
        if proof.address != self.source {
            return Err(ProxyError::AccountProofInvalid(
                "proof is for a different account".into(),
            ));
        }
        proof
            .verify(global_root)
            .map_err(|e| ProxyError::AccountProofInvalid(e.to_string()))?
            .ok_or_else(|| {
                ProxyError::AccountProofInvalid("account does not exist at that block".into())
            })
    }

    pub fn snapshot(&self) -> ProxySnapshot {
        ProxySnapshot {
            source: self.source,
            sealed: self.sealed,
            current_root: self.current_root,
            last_synced_block: self.last_synced_block,
            config: self.config.clone(),
            relay: self
                .relay
                .read()
                .unwrap_or_else(PoisonError::into_inner)
                .clone(),
            entries: self
                .storage
                .storage_entries()
                .expect("a full trie has no pruned nodes")
                .into_iter()
                .collect(),
        }
    }

    pub fn from_snapshot(s: ProxySnapshot) -> Result<Self, ProxyError> {
        let storage = Trie::from_entries(s.entries)
            .map_err(|e| ProxyError::MalformedPayload(e.to_string()))?;
        let local = storage.root_hash();
        if s.sealed && local != s.current_root {
            return Err(ProxyError::RootDivergence {
                source_root: s.current_root,
                local,
            });
        }
        Ok(ProxyContract {
            source: s.source,
            storage,
            current_root: if s.sealed { s.current_root } else { local },
            last_synced_block: s.last_synced_block,
            sealed: s.sealed,
            relay: s.relay.shared(),
            config: s.config,
            reports: Vec::new(),
        })
    }
}

/// Serializable proxy state, used by the command-line tool between runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProxySnapshot {
    pub source: Address,
    pub sealed: bool,
    pub current_root: H256,
    pub last_synced_block: Option<u64>,
    pub config: ProxyConfig,
    pub relay: RelayStore,
    pub entries: Vec<(StateKey, StateValue)>,
}
