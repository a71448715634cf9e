//! A minimal source chain: accounts with storage tries, write-batch
//! transactions, headers committing to a global state root, and the proof
//! endpoints a full node would expose.

mod account;
mod fixture;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::H256;
use crate::proofs::{prove, prove_path, StorageProof};
use crate::trie::{StateKey, StateValue, Trie, TrieError};

pub use account::{AccountProof, AccountTuple, Address, BlockHeader};
pub use fixture::{
    generate_fixture, ChainFixture, EntryFixture, GenesisAccountFixture, GenesisFixture,
    TrieFixture,
};

pub const GENESIS_TIMESTAMP: u64 = 1_600_000_000;
pub const BLOCK_TIME: u64 = 12;
/// Minimum header window a source node keeps (EVM `BLOCKHASH` reach).
pub const MIN_RETENTION: u64 = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("unknown account {0}")]
    UnknownAccount(Address),
    #[error("duplicate genesis account {0}")]
    DuplicateAccount(Address),
    #[error("block {0} has been pruned")]
    BlockPruned(u64),
    #[error("block {0} does not exist yet")]
    UnknownBlock(u64),
    #[error(transparent)]
    Trie(#[from] TrieError),
}

/// One storage-writing transaction. `None` deletes the key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteBatch {
    pub target: Address,
    pub ops: Vec<(StateKey, Option<StateValue>)>,
    #[serde(default)]
    pub block_number: Option<u64>,
}

impl WriteBatch {
    pub fn new(target: Address, ops: Vec<(StateKey, Option<StateValue>)>) -> Self {
        WriteBatch {
            target,
            ops,
            block_number: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenesisAccount {
    pub address: Address,
    pub nonce: u64,
    pub balance: u128,
    pub code_hash: H256,
    pub storage: BTreeMap<StateKey, StateValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retention {
    #[default]
    Full,
    /// Keep only the most recent `n` blocks (`n` ≥ 256).
    Window(u64),
}

#[derive(Debug, Clone)]
struct Account {
    tuple: AccountTuple,
    storage: Trie,
}

#[derive(Debug, Clone)]
struct BlockRecord {
    header: BlockHeader,
    global: Trie,
    accounts: BTreeMap<Address, Account>,
    batches: Vec<WriteBatch>,
}

/// Single-writer chain; committed blocks are immutable snapshots that share
/// trie structure with their neighbours.
#[derive(Debug, Clone)]
pub struct Chain {
    blocks: BTreeMap<u64, BlockRecord>,
    head: u64,
    retention: Retention,
}

impl Chain {
    pub fn new(genesis: Vec<GenesisAccount>) -> Result<Self, ChainError> {
        Self::with_retention(genesis, Retention::Full)
    }

    pub fn with_retention(
        genesis: Vec<GenesisAccount>,
        retention: Retention,
    ) -> Result<Self, ChainError> {
        if let Retention::Window(n) = retention {
            assert!(
                n >= MIN_RETENTION,
                "retention window below {MIN_RETENTION} blocks"
            );
        }
        let mut accounts = BTreeMap::new();
        let mut global = Trie::new();
        for g in genesis {
            if accounts.contains_key(&g.address) {
                return Err(ChainError::DuplicateAccount(g.address));
            }
            let storage = Trie::from_entries(g.storage)?;
            let tuple = AccountTuple {
                address: g.address,
                nonce: g.nonce,
                balance: g.balance,
                storage_root: storage.root_hash(),
                code_hash: g.code_hash,
            };
            global.insert(g.address, tuple.encode_value())?;
            accounts.insert(g.address, Account { tuple, storage });
        }
        let header = BlockHeader {
            number: 0,
            parent_hash: H256::ZERO,
            global_state_root: global.root_hash(),
            timestamp: GENESIS_TIMESTAMP,
        };
        let mut blocks = BTreeMap::new();
        blocks.insert(
            0,
            BlockRecord {
                header,
                global,
                accounts,
                batches: Vec::new(),
            },
        );
        Ok(Chain {
            blocks,
            head: 0,
            retention,
        })
    }

    pub fn head(&self) -> u64 {
        self.head
    }

    pub fn oldest_retained(&self) -> u64 {
        *self.blocks.keys().next().expect("head is always retained")
    }

    fn record(&self, number: u64) -> Result<&BlockRecord, ChainError> {
        if number > self.head {
            return Err(ChainError::UnknownBlock(number));
        }
        self.blocks
            .get(&number)
            .ok_or(ChainError::BlockPruned(number))
    }

    pub fn header(&self, number: u64) -> Result<&BlockHeader, ChainError> {
        Ok(&self.record(number)?.header)
    }

    /// Applies `batches` in order and seals a new block. All targets must exist.
    pub fn apply_block(&mut self, batches: Vec<WriteBatch>) -> Result<BlockHeader, ChainError> {
        let parent = self.record(self.head)?;
        for b in &batches {
            if !parent.accounts.contains_key(&b.target) {
                return Err(ChainError::UnknownAccount(b.target));
            }
        }
        let number = self.head + 1;
        let mut accounts = parent.accounts.clone();
        let mut global = parent.global.clone();
        let mut touched = std::collections::BTreeSet::new();
        let mut included = Vec::with_capacity(batches.len());
        for mut batch in batches {
            let acc = accounts.get_mut(&batch.target).expect("checked above");
            for (key, value) in &batch.ops {
                acc.storage
                    .set(key, value.as_ref().map(StateValue::as_bytes))?;
            }
            touched.insert(batch.target);
            batch.block_number = Some(number);
            included.push(batch);
        }
        for addr in touched {
            let acc = accounts.get_mut(&addr).expect("exists");
            acc.tuple.storage_root = acc.storage.root_hash();
            global.insert(addr, acc.tuple.encode_value())?;
        }
        let header = BlockHeader {
            number,
            parent_hash: parent.header.hash(),
            global_state_root: global.root_hash(),
            timestamp: GENESIS_TIMESTAMP + BLOCK_TIME * number,
        };
        self.blocks.insert(
            number,
            BlockRecord {
                header: header.clone(),
                global,
                accounts,
                batches: included,
            },
        );
        self.head = number;
        if let Retention::Window(n) = self.retention {
            while self.head - self.oldest_retained() >= n {
                let oldest = self.oldest_retained();
                self.blocks.remove(&oldest);
            }
        }
        Ok(header)
    }

    pub fn account(&self, number: u64, address: Address) -> Result<&AccountTuple, ChainError> {
        self.record(number)?
            .accounts
            .get(&address)
            .map(|a| &a.tuple)
            .ok_or(ChainError::UnknownAccount(address))
    }

    pub fn storage_trie(&self, number: u64, address: Address) -> Result<&Trie, ChainError> {
        self.record(number)?
            .accounts
            .get(&address)
            .map(|a| &a.storage)
            .ok_or(ChainError::UnknownAccount(address))
    }

    pub fn global_trie(&self, number: u64) -> Result<&Trie, ChainError> {
        Ok(&self.record(number)?.global)
    }

    /// Proof of the account tuple (or its absence) under the block's global root.
    pub fn get_account_proof(
        &self,
        number: u64,
        address: Address,
    ) -> Result<AccountProof, ChainError> {
        let record = self.record(number)?;
        let (_, nodes) = prove_path(&record.global, address.as_ref())?;
        let account = record.accounts.get(&address).map(|a| a.tuple.clone());
        Ok(AccountProof {
            block_number: number,
            address,
            account,
            nodes,
        })
    }

    pub fn get_storage_proof(
        &self,
        number: u64,
        address: Address,
        key: &StateKey,
    ) -> Result<StorageProof, ChainError> {
        Ok(prove(self.storage_trie(number, address)?, key)?)
    }

    /// Node-by-hash lookup over one account's storage trie at a block.
    pub fn storage_nodes(
        &self,
        number: u64,
        address: Address,
    ) -> Result<HashMap<H256, Vec<u8>>, ChainError> {
        Ok(self.storage_trie(number, address)?.node_store())
    }

    /// Batches sent to `address` in blocks `from + 1 ..= to`, in block order.
    pub fn get_transactions(
        &self,
        address: Address,
        from: u64,
        to: u64,
    ) -> Result<Vec<WriteBatch>, ChainError> {
        if to > self.head {
            return Err(ChainError::UnknownBlock(to));
        }
        let mut out = Vec::new();
        for n in from.saturating_add(1)..=to {
            let record = self.blocks.get(&n).ok_or(ChainError::BlockPruned(n))?;
            out.extend(
                record
                    .batches
                    .iter()
                    .filter(|b| b.target == address)
                    .cloned(),
            );
        }
        Ok(out)
    }

    pub fn from_fixture(fixture: &ChainFixture, retention: Retention) -> Result<Self, ChainError> {
        let mut chain = Chain::with_retention(fixture.genesis_accounts(), retention)?;
        for block in &fixture.blocks {
            chain.apply_block(block.clone())?;
        }
        Ok(chain)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proofs::verify_proof;

    fn addr() -> Address {
        Address::from_low_u64(0xC0FFEE)
    }

    fn k(b: u8) -> StateKey {
        StateKey::with_prefix(&[b])
    }

    fn v(x: u64) -> StateValue {
        StateValue::from_u64(x)
    }

    fn chain() -> Chain {
        Chain::new(vec![
            GenesisAccount {
                address: addr(),
                nonce: 1,
                balance: 0,
                code_hash: crate::hash::hash(b"logic"),
                storage: [(k(0xa), v(6))].into(),
            },
            GenesisAccount {
                address: Address::from_low_u64(1),
                nonce: 0,
                balance: 5,
                code_hash: H256::ZERO,
                storage: BTreeMap::new(),
            },
        ])
        .unwrap()
    }

    #[test]
    fn empty_block_keeps_global_root() {
        let mut c = chain();
        let h = c.apply_block(vec![]).unwrap();
        assert_eq!(h.global_state_root, c.header(0).unwrap().global_state_root);
        assert_eq!(h.parent_hash, c.header(0).unwrap().hash());
    }

    #[test]
    fn write_then_prove() {
        let mut c = chain();
        c.apply_block(vec![WriteBatch::new(addr(), vec![(k(1), Some(v(2)))])])
            .unwrap();
        let p = c.get_storage_proof(1, addr(), &k(1)).unwrap();
        assert_eq!(p.value, Some(v(2)));
        verify_proof(c.account(1, addr()).unwrap().storage_root, &p).unwrap();
    }

    #[test]
    fn unknown_target_rejected_atomically() {
        let mut c = chain();
        let err = c
            .apply_block(vec![
                WriteBatch::new(addr(), vec![(k(1), Some(v(2)))]),
                WriteBatch::new(Address::from_low_u64(99), vec![]),
            ])
            .unwrap_err();
        assert_eq!(err, ChainError::UnknownAccount(Address::from_low_u64(99)));
        assert_eq!(c.head(), 0);
    }

    #[test]
    fn revert_restores_storage_root() {
        let mut c = chain();
        for x in [7, 6] {
            c.apply_block(vec![WriteBatch::new(addr(), vec![(k(0xa), Some(v(x)))])])
                .unwrap();
        }
        c.apply_block(vec![WriteBatch::new(
            Address::from_low_u64(1),
            vec![(k(1), Some(v(1)))],
        )])
        .unwrap();
        assert_eq!(
            c.account(3, addr()).unwrap().storage_root,
            c.account(0, addr()).unwrap().storage_root
        );
        assert_eq!(c.get_transactions(addr(), 0, 3).unwrap().len(), 2);
    }

    #[test]
    fn account_proofs() {
        let mut c = chain();
        let p0 = c.get_account_proof(0, addr()).unwrap();
        assert_eq!(
            p0.verify(c.header(0).unwrap().global_state_root)
                .unwrap()
                .unwrap()
                .nonce,
            1
        );

        let missing = c.get_account_proof(0, Address::from_low_u64(42)).unwrap();
        assert!(missing.account.is_none());
        assert_eq!(
            missing
                .verify(c.header(0).unwrap().global_state_root)
                .unwrap(),
            None
        );

        c.apply_block(vec![WriteBatch::new(addr(), vec![(k(1), Some(v(2)))])])
            .unwrap();
        assert!(p0.verify(c.header(1).unwrap().global_state_root).is_err());
        assert_eq!(AccountProof::decode(&p0.encode()).unwrap(), p0);
    }

    #[test]
    fn storage_proofs_across_heights() {
        let mut c = chain();
        c.apply_block(vec![WriteBatch::new(addr(), vec![(k(1), Some(v(2)))])])
            .unwrap();
        c.apply_block(vec![WriteBatch::new(
            addr(),
            vec![(k(1), None), (k(2), Some(v(3)))],
        )])
        .unwrap();
        assert_eq!(c.get_storage_proof(2, addr(), &k(1)).unwrap().value, None);
        let a1 = c.get_storage_proof(1, addr(), &k(0xa)).unwrap();
        let a2 = c.get_storage_proof(2, addr(), &k(0xa)).unwrap();
        assert_eq!(a1.nodes.last(), a2.nodes.last());
    }

    #[test]
    fn retention_window_prunes() {
        let mut c = Chain::with_retention(
            chain().blocks[&0]
                .accounts
                .values()
                .map(|a| GenesisAccount {
                    address: a.tuple.address,
                    nonce: a.tuple.nonce,
                    balance: a.tuple.balance,
                    code_hash: a.tuple.code_hash,
                    storage: a.storage.storage_entries().unwrap(),
                })
                .collect(),
            Retention::Window(256),
        )
        .unwrap();
        for _ in 0..300 {
            c.apply_block(vec![]).unwrap();
        }
        assert_eq!(c.oldest_retained(), 300 - 255);
        assert_eq!(
            c.get_account_proof(10, addr()).unwrap_err(),
            ChainError::BlockPruned(10)
        );
        assert!(c.get_account_proof(45, addr()).is_ok());
        assert_eq!(
            c.get_transactions(addr(), 10, 300).unwrap_err(),
            ChainError::BlockPruned(11)
        );
        assert_eq!(c.header(301).unwrap_err(), ChainError::UnknownBlock(301));
    }

    #[test]
    fn replay_reproduces_state() {
        let mut c = chain();
        c.apply_block(vec![WriteBatch::new(
            addr(),
            vec![(k(1), Some(v(1))), (k(2), Some(v(2)))],
        )])
        .unwrap();
        c.apply_block(vec![WriteBatch::new(
            addr(),
            vec![(k(1), None), (k(0xa), Some(v(9)))],
        )])
        .unwrap();
        let mut t = c.storage_trie(0, addr()).unwrap().clone();
        for b in c.get_transactions(addr(), 0, 2).unwrap() {
            for (key, val) in &b.ops {
                t.set(key, val.as_ref().map(StateValue::as_bytes)).unwrap();
            }
        }
        assert_eq!(
            t.root_hash(),
            c.storage_trie(2, addr()).unwrap().root_hash()
        );
        assert!(c.get_transactions(addr(), 2, 2).unwrap().is_empty());
    }
}
