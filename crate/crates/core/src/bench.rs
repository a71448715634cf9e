//! Cost sweeps: one-value syncs at every depth of tries of growing size, and
//! batched syncs of growing size over a fixed trie.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chainsim::{Address, Chain, GenesisAccount, WriteBatch};
use crate::hash::H256;
use crate::proxy::ProxyContract;
use crate::relay::RelayStore;
use crate::syncclient::{fork_contract, SyncClient, SyncError, SyncOutcome};
use crate::trie::{StateKey, StateValue};

/// One synchronize call. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub scenario: String,
    pub storage_size: usize,
    pub tree_depth: usize,
    pub value_index: usize,
    pub batch_size: usize,
    pub payload_bytes: u64,
    pub hash_invocations: u64,
    pub per_value_cost: f64,
    pub wall_clock_ms: f64,
}

pub const CSV_HEADER: [&str; 9] = [
    "scenario",
    "storage_size",
    "tree_depth",
    "value_index",
    "batch_size",
    "payload_bytes",
    "hash_invocations",
    "per_value_cost",
    "wall_clock_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Single,
    Multi,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub seed: u64,
    pub single_sizes: Vec<usize>,
    /// Values updated per storage size in the single suite.
    pub samples_per_size: usize,
    pub multi_sizes: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 42,
            single_sizes: vec![10, 100, 1_000, 10_000],
            samples_per_size: 40,
            multi_sizes: vec![1_000, 10_000],
            batch_sizes: vec![1, 10, 100, 1_000],
            repetitions: 3,
        }
    }
}

const BENCH_CONTRACT: u64 = 0xBE4C;

fn word(rng: &mut impl Rng) -> StateValue {
    let mut w: [u8; 32] = rng.gen();
    w[0] |= 1;
    StateValue::from_word(&w).expect("non-zero leading byte")
}

struct Harness {
    chain: Chain,
    proxy: ProxyContract,
    keys: Vec<StateKey>,
}

impl Harness {
    fn new(size: usize, rng: &mut impl Rng) -> Result<Self, SyncError> {
        let address = Address::from_low_u64(BENCH_CONTRACT);
        let mut storage = BTreeMap::new();
        while storage.len() < size {
            storage.insert(StateKey(rng.gen()), word(rng));
        }
        let keys = storage.keys().copied().collect();
        let chain = Chain::new(vec![GenesisAccount {
            address,
            nonce: 1,
            balance: 0,
            code_hash: H256::ZERO,
            storage,
        }])?;
        let mut proxy = ProxyContract::new(address, RelayStore::new().shared());
        fork_contract(&chain, address, 0, &mut proxy)?;
        Ok(Harness { chain, proxy, keys })
    }

    fn address(&self) -> Address {
        self.proxy.source_address()
    }

    /// Updates `keys` on the source in one block and syncs that block.
    fn sync_update(
        &mut self,
        keys: &[StateKey],
        rng: &mut impl Rng,
    ) -> Result<(u64, u64, f64, f64), SyncError> {
        let ops = keys.iter().map(|k| (*k, Some(word(rng)))).collect();
        self.chain
            .apply_block(vec![WriteBatch::new(self.address(), ops)])?;
        let head = self.chain.head();
        let start = Instant::now();
        let out = SyncClient::new(&self.chain, self.address()).run_sync(&mut self.proxy, head)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        match out {
            SyncOutcome::Applied { report, .. } => Ok((
                report.payload_bytes,
                report.hash_invocations,
                report.per_value_cost,
                ms,
            )),
            SyncOutcome::Noop => unreachable!("fresh random words always change the state"),
        }
    }

    fn depth(&self, key: &StateKey) -> usize {
        let trie = self
            .chain
            .storage_trie(self.chain.head(), self.address())
            .expect("head is retained");
        trie.path_nodes(key).expect("full trie").len()
    }
}

pub fn run_suite(suite: Suite, cfg: &BenchConfig) -> Result<Vec<BenchRecord>, SyncError> {
    match suite {
        Suite::Single => run_single_suite(cfg),
        Suite::Multi => run_multi_suite(cfg),
    }
}

/// One-value syncs. Sampled keys are spread over the sorted key space and
/// always include the shallowest and deepest key.
pub fn run_single_suite(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, SyncError> {
    let mut out = Vec::new();
    for &size in &cfg.single_sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ size as u64);
        let mut h = Harness::new(size, &mut rng)?;
        let depths: Vec<usize> = h.keys.iter().map(|k| h.depth(k)).collect();
        let mut picks: Vec<usize> = (0..cfg.samples_per_size.min(size))
            .map(|i| i * size / cfg.samples_per_size.min(size).max(1))
            .collect();
        for target in [depths.iter().min(), depths.iter().max()]
            .into_iter()
            .flatten()
        {
            let idx = depths.iter().position(|d| d == target).expect("present");
            if !picks.contains(&idx) {
                picks.push(idx);
            }
        }
        picks.sort_unstable();
        for idx in picks {
            let key = h.keys[idx];
            let (payload_bytes, hash_invocations, per_value_cost, wall_clock_ms) =
                h.sync_update(&[key], &mut rng)?;
            out.push(BenchRecord {
                scenario: format!("single-n{size}-i{idx}"),
                storage_size: size,
                tree_depth: h.depth(&key),
                value_index: idx,
                batch_size: 1,
                payload_bytes,
                hash_invocations,
                per_value_cost,
                wall_clock_ms,
            });
        }
    }
    Ok(out)
}

/// Batched syncs of distinct random keys. `tree_depth` is the deepest path
/// among the batch and `value_index` the repetition number.
pub fn run_multi_suite(cfg: &BenchConfig) -> Result<Vec<BenchRecord>, SyncError> {
    let mut out = Vec::new();
    for &size in &cfg.multi_sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ size as u64 ^ 0x6D75);
        let mut h = Harness::new(size, &mut rng)?;
        for &batch in &cfg.batch_sizes {
            let batch = batch.min(size);
            for rep in 0..cfg.repetitions {
                let keys: Vec<StateKey> =
                    h.keys.choose_multiple(&mut rng, batch).copied().collect();
                let (payload_bytes, hash_invocations, per_value_cost, wall_clock_ms) =
                    h.sync_update(&keys, &mut rng)?;
                out.push(BenchRecord {
                    scenario: format!("multi-n{size}-b{batch}-r{rep}"),
                    storage_size: size,
                    tree_depth: keys.iter().map(|k| h.depth(k)).max().unwrap_or(0),
                    value_index: rep,
                    batch_size: batch,
                    payload_bytes,
                    hash_invocations,
                    per_value_cost,
                    wall_clock_ms,
                });
            }
        }
    }
    Ok(out)
}

/// Writes records as CSV with a header row.
pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<BenchRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Mean per-value cost keyed by `(storage_size, tree_depth)`.
pub fn mean_cost_by_depth(records: &[BenchRecord]) -> BTreeMap<(usize, usize), f64> {
    mean_by(records, |r| (r.storage_size, r.tree_depth))
}

/// Mean per-value cost keyed by `(storage_size, batch_size)`.
pub fn mean_cost_by_batch(records: &[BenchRecord]) -> BTreeMap<(usize, usize), f64> {
    mean_by(records, |r| (r.storage_size, r.batch_size))
}

fn mean_by(
    records: &[BenchRecord],
    key: impl Fn(&BenchRecord) -> (usize, usize),
) -> BTreeMap<(usize, usize), f64> {
    let mut acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(key(r)).or_default();
        e.0 += r.per_value_cost;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect()
}
