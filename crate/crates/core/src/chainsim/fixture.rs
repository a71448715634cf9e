use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hash::{hash, H256};
use crate::trie::{StateKey, StateValue};

use super::{Address, GenesisAccount, WriteBatch};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryFixture {
    pub key: StateKey,
    pub value: StateValue,
}

/// `{"entries": [{"key", "value"}, ...]}`
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrieFixture {
    pub entries: Vec<EntryFixture>,
}

impl TrieFixture {
    pub fn to_map(&self) -> BTreeMap<StateKey, StateValue> {
        self.entries
            .iter()
            .map(|e| (e.key, e.value.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenesisAccountFixture {
    pub address: Address,
    #[serde(default)]
    pub nonce: u64,
    #[serde(default)]
    pub balance: u128,
    #[serde(default)]
    pub code_hash: H256,
    #[serde(default)]
    pub storage: Vec<EntryFixture>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisFixture {
    pub accounts: Vec<GenesisAccountFixture>,
}

/// `{"contract": addr, "genesis": {"accounts": [...]}, "blocks": [[WriteBatch...]...]}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainFixture {
    /// The account whose storage is meant to be forked.
    pub contract: Address,
    pub genesis: GenesisFixture,
    pub blocks: Vec<Vec<WriteBatch>>,
}

impl ChainFixture {
    pub fn genesis_accounts(&self) -> Vec<GenesisAccount> {
        self.genesis
            .accounts
            .iter()
            .map(|a| GenesisAccount {
                address: a.address,
                nonce: a.nonce,
                balance: a.balance,
                code_hash: a.code_hash,
                storage: a.storage.iter().map(|e| (e.key, e.value.clone())).collect(),
            })
            .collect()
    }

    pub fn contract_storage(&self) -> TrieFixture {
        let entries = self
            .genesis
            .accounts
            .iter()
            .find(|a| a.address == self.contract)
            .map(|a| a.storage.clone())
            .unwrap_or_default();
        TrieFixture { entries }
    }
}

pub(crate) fn random_value(rng: &mut impl Rng) -> StateValue {
    let len = rng.gen_range(1..=32);
    let mut bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
    bytes[0] = rng.gen_range(1..=u8::MAX);
    StateValue::new(bytes).expect("leading byte is non-zero")
}

/// Deterministic chain with one contract holding `entries` genesis values and
/// `blocks` blocks of mixed creates, updates and deletes.
pub fn generate_fixture(entries: usize, blocks: usize, seed: u64) -> ChainFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let contract = Address::from_low_u64(0x5EED_C0DE);
    let bystander = Address::from_low_u64(0xB0B);

    let mut live: BTreeMap<StateKey, StateValue> = BTreeMap::new();
    while live.len() < entries {
        live.insert(StateKey(rng.gen()), random_value(&mut rng));
    }
    let storage = live
        .iter()
        .map(|(k, v)| EntryFixture {
            key: *k,
            value: v.clone(),
        })
        .collect();
    let genesis = GenesisFixture {
        accounts: vec![
            GenesisAccountFixture {
                address: contract,
                nonce: 1,
                balance: 0,
                code_hash: hash(b"smartsync fixture logic"),
                storage,
            },
            GenesisAccountFixture {
                address: bystander,
                nonce: 0,
                balance: 1_000,
                code_hash: H256::ZERO,
                storage: Vec::new(),
            },
        ],
    };

    let mut out = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let mut block = Vec::new();
        for _ in 0..rng.gen_range(0..=3) {
            let mut ops = Vec::new();
            for _ in 0..rng.gen_range(1..=8) {
                let keys: Vec<StateKey> = live.keys().copied().collect();
                let op = match rng.gen_range(0..10) {
                    0..=3 if !keys.is_empty() => {
                        let k = *keys.choose(&mut rng).expect("non-empty");
                        (k, Some(random_value(&mut rng)))
                    }
                    4..=5 if !keys.is_empty() => (*keys.choose(&mut rng).expect("non-empty"), None),
                    _ => (StateKey(rng.gen()), Some(random_value(&mut rng))),
                };
                match &op.1 {
                    Some(v) => live.insert(op.0, v.clone()),
                    None => live.remove(&op.0),
                };
                ops.push(op);
            }
            block.push(WriteBatch::new(contract, ops));
        }
        if rng.gen_bool(0.2) {
            block.push(WriteBatch::new(
                bystander,
                vec![(StateKey(rng.gen()), Some(random_value(&mut rng)))],
            ));
        }
        out.push(block);
    }
    ChainFixture {
        contract,
        genesis,
        blocks: out,
    }
}
