#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;

use rand::Rng;
use smartsync::chainsim::{Address, Chain, GenesisAccount, WriteBatch};
use smartsync::hash::H256;
use smartsync::proxy::ProxyContract;
use smartsync::relay::RelayStore;
use smartsync::syncclient::fork_contract;
use smartsync::trie::{StateKey, StateValue};

pub const CONTRACT: u64 = 0xC0DE;

pub fn contract() -> Address {
    Address::from_low_u64(CONTRACT)
}

pub fn value(rng: &mut impl Rng) -> StateValue {
    let len = rng.gen_range(1..=32);
    let mut bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
    bytes[0] = rng.gen_range(1..=255);
    StateValue::new(bytes).unwrap()
}

/// Keys drawn from a small prefix space so tries get shared prefixes,
/// extensions and collapsible branches, mixed with fully random keys.
pub fn key(rng: &mut impl Rng) -> StateKey {
    let mut k: [u8; 32] = rng.gen();
    if rng.gen_bool(0.5) {
        let shared = rng.gen_range(1..31);
        k[..shared].fill(0);
        k[shared] &= 0x0F;
    }
    StateKey(k)
}

pub fn random_state(rng: &mut impl Rng, n: usize) -> BTreeMap<StateKey, StateValue> {
    let mut m = BTreeMap::new();
    while m.len() < n {
        m.insert(key(rng), value(rng));
    }
    m
}

/// Random creates, updates and deletes; never empty.
pub fn random_changes(
    rng: &mut impl Rng,
    state: &BTreeMap<StateKey, StateValue>,
    count: usize,
) -> BTreeMap<StateKey, Option<StateValue>> {
    let existing: Vec<StateKey> = state.keys().copied().collect();
    let mut out = BTreeMap::new();
    while out.len() < count {
        let pick = rng.gen_range(0..3);
        if pick == 0 || existing.is_empty() {
            let k = key(rng);
            if !state.contains_key(&k) {
                out.insert(k, Some(value(rng)));
            }
        } else {
            let k = existing[rng.gen_range(0..existing.len())];
            if pick == 1 {
                let v = value(rng);
                if state.get(&k) != Some(&v) {
                    out.insert(k, Some(v));
                }
            } else {
                out.insert(k, None);
            }
        }
    }
    out
}

pub fn genesis(storage: BTreeMap<StateKey, StateValue>) -> Chain {
    Chain::new(vec![
        GenesisAccount {
            address: contract(),
            nonce: 1,
            balance: 0,
            code_hash: smartsync::hash::hash(b"logic"),
            storage,
        },
        GenesisAccount {
            address: Address::from_low_u64(0xBEEF),
            nonce: 0,
            balance: 7,
            code_hash: H256::ZERO,
            storage: BTreeMap::new(),
        },
    ])
    .unwrap()
}

pub fn batch(changes: &BTreeMap<StateKey, Option<StateValue>>) -> WriteBatch {
    WriteBatch::new(
        contract(),
        changes.iter().map(|(k, v)| (*k, v.clone())).collect(),
    )
}

pub fn forked(chain: &Chain, at: u64) -> ProxyContract {
    let mut p = ProxyContract::new(contract(), RelayStore::new().shared());
    fork_contract(chain, contract(), at, &mut p).unwrap();
    p
}

pub fn raw(map: &BTreeMap<StateKey, StateValue>) -> BTreeMap<[u8; 32], Vec<u8>> {
    map.iter()
        .map(|(k, v)| (k.0, v.as_bytes().to_vec()))
        .collect()
}
