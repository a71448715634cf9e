//! Off-chain relayer: replays source transactions to find the touched keys,
//! fetches the proofs and submits a payload to the proxy.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::chainsim::{Address, Chain, ChainError};
use crate::proofs::{build_multi_proof, merge_storage_proofs, MultiProof, ProofError, StateDiff};
use crate::proxy::{CostReport, ProxyContract, ProxyError, SyncPayload};
use crate::relay::RelayError;
use crate::trie::{StateKey, StateValue};

pub const DEFAULT_CHUNK_SIZE: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyncError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("nothing to synchronize")]
    EmptyDiff,
    #[error(transparent)]
    Proof(#[from] ProofError),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Proxy(#[from] ProxyError),
}

/// How storage proofs are gathered into the multi proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProofMode {
    /// Build the multi proof straight from the source trie.
    #[default]
    Direct,
    /// Fetch one storage proof per key and merge them.
    MergedSingleProofs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncPlan {
    pub source_block: u64,
    pub touched_keys: Vec<StateKey>,
    pub diff: StateDiff,
    pub payload: SyncPayload,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SyncOutcome {
    Applied {
        diff: StateDiff,
        report: CostReport,
        payload_bytes: usize,
    },
    Noop,
}

/// Net storage effect of the batches sent to `address` in blocks
/// `from + 1 ..= to`, replayed over the state at `from`.
pub fn compute_diff(
    chain: &Chain,
    address: Address,
    from: u64,
    to: u64,
) -> Result<StateDiff, ChainError> {
    let base = chain.storage_trie(from, address)?;
    let batches = chain.get_transactions(address, from, to)?;
    let mut overlay: BTreeMap<StateKey, Option<StateValue>> = BTreeMap::new();
    let mut changes = Vec::new();
    for batch in batches {
        for (key, new) in batch.ops {
            let old = match overlay.get(&key) {
                Some(v) => v.clone(),
                None => base.get_value(&key)?,
            };
            overlay.insert(key, new.clone());
            changes.push((key, old, new));
        }
    }
    Ok(StateDiff::from_changes(changes))
}

/// Diff between a known local state and the source state at `to`, for when
/// the replay range is no longer retained.
pub fn compute_diff_from_state(
    chain: &Chain,
    address: Address,
    local: &BTreeMap<StateKey, StateValue>,
    to: u64,
) -> Result<StateDiff, ChainError> {
    let remote = chain.storage_trie(to, address)?.storage_entries()?;
    Ok(StateDiff::between(local, &remote))
}

pub fn build_sync_payload(
    chain: &Chain,
    address: Address,
    to: u64,
    keys: &[StateKey],
    mode: ProofMode,
) -> Result<SyncPayload, SyncError> {
    if keys.is_empty() {
        return Err(SyncError::EmptyDiff);
    }
    let account_proof = chain.get_account_proof(to, address)?;
    let trie = chain.storage_trie(to, address)?;
    let multi_proof: MultiProof = match mode {
        ProofMode::Direct => build_multi_proof(trie, keys.iter().copied())?,
        ProofMode::MergedSingleProofs => {
            let proofs = keys
                .iter()
                .map(|k| chain.get_storage_proof(to, address, k))
                .collect::<Result<Vec<_>, _>>()?;
            let store = chain.storage_nodes(to, address)?;
            merge_storage_proofs(trie.root_hash(), &proofs, &|h| store.get(h).cloned())?
        }
    };
    Ok(SyncPayload {
        source_block: to,
        account_proof,
        multi_proof,
    })
}

/// Drives synchronizations of one source contract.
#[derive(Debug, Clone)]
pub struct SyncClient<'c> {
    chain: &'c Chain,
    address: Address,
    mode: ProofMode,
    withhold: BTreeSet<StateKey>,
}

impl<'c> SyncClient<'c> {
    pub fn new(chain: &'c Chain, address: Address) -> Self {
        SyncClient {
            chain,
            address,
            mode: ProofMode::Direct,
            withhold: BTreeSet::new(),
        }
    }

    pub fn with_mode(mut self, mode: ProofMode) -> Self {
        self.mode = mode;
        self
    }

    /// Makes the client leave `keys` out of every payload, as an attacker would.
    pub fn withholding(mut self, keys: impl IntoIterator<Item = StateKey>) -> Self {
        self.withhold.extend(keys);
        self
    }

    /// Plans a sync from the proxy's last block to `to`; `None` if nothing changed.
    pub fn plan(&self, proxy: &ProxyContract, to: u64) -> Result<Option<SyncPlan>, SyncError> {
        let from = proxy.last_synced_block().ok_or(ProxyError::NotSealed)?;
        if to <= from {
            return Err(ProxyError::StaleSync {
                last: from,
                got: to,
            }
            .into());
        }
        let diff = match compute_diff(self.chain, self.address, from, to) {
            Ok(d) => d,
            Err(ChainError::BlockPruned(_)) => {
                compute_diff_from_state(self.chain, self.address, &proxy.entries()?, to)?
            }
            Err(e) => return Err(e.into()),
        };
        if diff.is_empty() {
            return Ok(None);
        }
        let touched_keys: Vec<StateKey> = diff
            .keys()
            .into_iter()
            .filter(|k| !self.withhold.contains(k))
            .collect();
        let payload = build_sync_payload(self.chain, self.address, to, &touched_keys, self.mode)?;
        Ok(Some(SyncPlan {
            source_block: to,
            touched_keys,
            diff,
            payload,
        }))
    }

    /// Relays the header for `to` if needed, then submits the payload.
    pub fn run_sync(&self, proxy: &mut ProxyContract, to: u64) -> Result<SyncOutcome, SyncError> {
        let Some(plan) = self.plan(proxy, to)? else {
            return Ok(SyncOutcome::Noop);
        };
        ensure_header(self.chain, proxy, to)?;
        let bytes = plan.payload.encode();
        let diff = proxy.synchronize_bytes(&bytes)?;
        let report = *proxy
            .last_cost_report()
            .expect("accepted syncs are reported");
        Ok(SyncOutcome::Applied {
            diff,
            report,
            payload_bytes: bytes.len(),
        })
    }
}

fn ensure_header(chain: &Chain, proxy: &ProxyContract, block: u64) -> Result<(), SyncError> {
    let mut relay = proxy
        .relay()
        .write()
        .unwrap_or_else(std::sync::PoisonError::into_inner);
    if !relay.contains(block) {
        relay.submit_header(chain.header(block)?)?;
    }
    Ok(())
}

/// Copies the contract's storage at `at` into an unsealed proxy and seals it.
pub fn fork_contract(
    chain: &Chain,
    address: Address,
    at: u64,
    proxy: &mut ProxyContract,
) -> Result<(), SyncError> {
    let entries: Vec<(StateKey, StateValue)> = chain
        .storage_trie(at, address)?
        .storage_entries()
        .map_err(ChainError::from)?
        .into_iter()
        .collect();
    fork_with_entries(chain, address, at, proxy, &entries)
}

/// Like [`fork_contract`] but loads the given entries, which may differ from the source.
pub fn fork_with_entries(
    chain: &Chain,
    address: Address,
    at: u64,
    proxy: &mut ProxyContract,
    entries: &[(StateKey, StateValue)],
) -> Result<(), SyncError> {
    for chunk in entries.chunks(DEFAULT_CHUNK_SIZE) {
        proxy.init_migration(chunk)?;
    }
    ensure_header(chain, proxy, at)?;
    let proof = chain.get_account_proof(at, address)?;
    let local = proxy.storage_root();
    proxy.finalize_migration(&proof, local)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chainsim::{generate_fixture, GenesisAccount, Retention, WriteBatch};
    use crate::hash::H256;
    use crate::relay::RelayStore;

    fn k(b: u8) -> StateKey {
        StateKey::with_prefix(&[b])
    }

    fn v(x: u64) -> StateValue {
        StateValue::from_u64(x)
    }

    fn contract() -> Address {
        Address::from_low_u64(0xC)
    }

    // a goes 6 -> 7 -> 6 while b and c are set.
    fn revert_chain() -> Chain {
        let mut chain = Chain::new(vec![GenesisAccount {
            address: contract(),
            nonce: 1,
            balance: 0,
            code_hash: H256::ZERO,
            storage: [(k(0xa), v(6))].into(),
        }])
        .unwrap();
        for ops in [
            vec![(k(0xa), Some(v(7)))],
            vec![(k(0xb), Some(v(1)))],
            vec![(k(0xa), Some(v(6))), (k(0xc), Some(v(3)))],
        ] {
            chain
                .apply_block(vec![WriteBatch::new(contract(), ops)])
                .unwrap();
        }
        chain
    }

    fn proxy_for(chain: &Chain, at: u64) -> ProxyContract {
        let mut p = ProxyContract::new(contract(), RelayStore::new().shared());
        fork_contract(chain, contract(), at, &mut p).unwrap();
        p
    }

    #[test]
    fn diff_skips_intermediate_values() {
        let chain = revert_chain();
        let d = compute_diff(&chain, contract(), 0, 3).unwrap();
        assert_eq!(d.keys(), vec![k(0xb), k(0xc)]);
        assert!(compute_diff(&chain, contract(), 3, 3).unwrap().is_empty());

        let mut p = proxy_for(&chain, 0);
        let out = SyncClient::new(&chain, contract())
            .run_sync(&mut p, 3)
            .unwrap();
        assert!(matches!(out, SyncOutcome::Applied { ref diff, .. } if diff.len() == 2));
        assert_eq!(p.query(&k(0xa)).unwrap(), Some(v(6)));
        assert_eq!(
            p.entries().unwrap(),
            chain
                .storage_trie(3, contract())
                .unwrap()
                .storage_entries()
                .unwrap()
        );
    }

    #[test]
    fn quiet_period_is_noop() {
        let mut chain = revert_chain();
        chain.apply_block(vec![]).unwrap();
        let mut p = proxy_for(&chain, 3);
        assert_eq!(
            SyncClient::new(&chain, contract())
                .run_sync(&mut p, 4)
                .unwrap(),
            SyncOutcome::Noop
        );
        assert_eq!(p.last_synced_block(), Some(3));
    }

    #[test]
    fn withholding_client_is_rejected() {
        let chain = revert_chain();
        let mut p = proxy_for(&chain, 0);
        let before = p.current_root();
        let err = SyncClient::new(&chain, contract())
            .withholding([k(0xc)])
            .run_sync(&mut p, 3)
            .unwrap_err();
        assert!(matches!(
            err,
            SyncError::Proxy(ProxyError::IncompleteTransition { .. })
        ));
        assert_eq!(p.current_root(), before);
    }

    #[test]
    fn both_proof_modes_give_identical_payloads() {
        let f = generate_fixture(300, 10, 4);
        let chain = Chain::from_fixture(&f, Retention::Full).unwrap();
        let d = compute_diff(&chain, f.contract, 0, 10).unwrap();
        let a = build_sync_payload(&chain, f.contract, 10, &d.keys(), ProofMode::Direct).unwrap();
        let b = build_sync_payload(
            &chain,
            f.contract,
            10,
            &d.keys(),
            ProofMode::MergedSingleProofs,
        )
        .unwrap();
        assert_eq!(a.encode(), b.encode());
        assert_eq!(
            build_sync_payload(&chain, f.contract, 10, &[], ProofMode::Direct),
            Err(SyncError::EmptyDiff)
        );
    }

    #[test]
    fn replay_diff_matches_state_diff() {
        let f = generate_fixture(200, 30, 9);
        let chain = Chain::from_fixture(&f, Retention::Full).unwrap();
        for (from, to) in [(0, 30), (5, 6), (10, 29)] {
            let replay = compute_diff(&chain, f.contract, from, to).unwrap();
            let local = chain
                .storage_trie(from, f.contract)
                .unwrap()
                .storage_entries()
                .unwrap();
            assert_eq!(
                replay,
                compute_diff_from_state(&chain, f.contract, &local, to).unwrap()
            );
        }
    }

    #[test]
    fn pruned_history_falls_back_to_state_diff() {
        let f = generate_fixture(50, 300, 2);
        let chain = Chain::from_fixture(&f, Retention::Window(256)).unwrap();
        let full = Chain::from_fixture(&f, Retention::Full).unwrap();
        let mut p = ProxyContract::new(f.contract, RelayStore::new().shared());
        fork_contract(&full, f.contract, 10, &mut p).unwrap();
        assert_eq!(
            compute_diff(&chain, f.contract, 10, 300).unwrap_err(),
            ChainError::BlockPruned(10)
        );
        let client = SyncClient::new(&chain, f.contract);
        assert!(matches!(
            client.run_sync(&mut p, 300).unwrap(),
            SyncOutcome::Applied { .. }
        ));
        assert_eq!(
            p.current_root(),
            chain.account(300, f.contract).unwrap().storage_root
        );
    }

    #[test]
    fn tampered_fork_diverges() {
        let chain = revert_chain();
        let mut p = ProxyContract::new(contract(), RelayStore::new().shared());
        let err =
            fork_with_entries(&chain, contract(), 0, &mut p, &[(k(0xa), v(0x16))]).unwrap_err();
        assert!(matches!(
            err,
            SyncError::Proxy(ProxyError::RootDivergence { .. })
        ));

        let mut empty = Chain::new(vec![GenesisAccount {
            address: contract(),
            nonce: 0,
            balance: 0,
            code_hash: H256::ZERO,
            storage: BTreeMap::new(),
        }])
        .unwrap();
        empty.apply_block(vec![]).unwrap();
        let p = proxy_for(&empty, 1);
        assert_eq!(p.current_root(), crate::trie::empty_root());
    }

    #[test]
    fn one_sync_subsumes_many() {
        let f = generate_fixture(100, 12, 5);
        let chain = Chain::from_fixture(&f, Retention::Full).unwrap();
        let client = SyncClient::new(&chain, f.contract);
        let mut once = ProxyContract::new(f.contract, RelayStore::new().shared());
        fork_contract(&chain, f.contract, 0, &mut once).unwrap();
        let mut stepwise = ProxyContract::new(f.contract, RelayStore::new().shared());
        fork_contract(&chain, f.contract, 0, &mut stepwise).unwrap();
        client.run_sync(&mut once, 12).unwrap();
        for n in 1..=12 {
            client.run_sync(&mut stepwise, n).unwrap();
        }
        assert_eq!(once.current_root(), stepwise.current_root());
    }
}
