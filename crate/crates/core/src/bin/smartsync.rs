use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use smartsync::bench::{self, BenchConfig, Suite};
use smartsync::chainsim::{generate_fixture, Chain, ChainFixture, Retention};
use smartsync::hash::H256;
use smartsync::proxy::{ProxyConfig, ProxyContract, ProxySnapshot, DEFAULT_MAX_PAYLOAD_BYTES};
use smartsync::relay::RelayStore;
use smartsync::syncclient::{
    compute_diff, fork_contract, fork_with_entries, ProofMode, SyncClient, SyncError, SyncOutcome,
};
use smartsync::trie::{StateKey, StateValue};

#[derive(Parser)]
#[command(
    name = "smartsync",
    version,
    about = "Verifiable replication of contract storage across chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic chain fixture.
    Gen {
        #[arg(long, default_value_t = 100)]
        entries: usize,
        #[arg(long, default_value_t = 10)]
        blocks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for chain.json and storage.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Copy the contract's state at a block into a new proxy and seal it.
    Fork {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 0)]
        at: u64,
        /// Require the source code hash to equal this value.
        #[arg(long)]
        code_hash: Option<H256>,
        #[arg(long, default_value_t = DEFAULT_MAX_PAYLOAD_BYTES)]
        max_payload: usize,
        /// Corrupt one loaded value before sealing.
        #[arg(long)]
        tamper: bool,
    },
    /// Bring the proxy up to a source block.
    Sync {
        #[command(flatten)]
        target: SyncTarget,
        /// Also write the submitted payload bytes here.
        #[arg(long)]
        payload_out: Option<PathBuf>,
    },
    /// Read a value from the proxy.
    Query {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        key: StateKey,
    },
    /// Submit a payload that leaves out one changed key.
    Attack {
        #[command(flatten)]
        target: SyncTarget,
        /// A 32-byte hex key, or an index into the sorted changed keys.
        #[arg(long)]
        withhold: String,
    },
    /// Run a cost sweep and emit CSV.
    Bench {
        #[arg(long, value_enum)]
        suite: BenchSuite,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct SyncTarget {
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    state: PathBuf,
    /// Source block to sync to; defaults to the chain head.
    #[arg(long)]
    to: Option<u64>,
    #[arg(long, value_enum, default_value_t = Mode::Direct)]
    mode: Mode,
    /// Keep only this many recent source blocks.
    #[arg(long)]
    retention: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Direct,
    Merged,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchSuite {
    Single,
    Multi,
}

#[derive(Debug, Serialize)]
struct CliError {
    code: u8,
    reason: String,
    detail: String,
}

impl CliError {
    fn usage(reason: &str, detail: impl ToString) -> Self {
        CliError {
            code: 1,
            reason: reason.into(),
            detail: detail.to_string(),
        }
    }
}

impl From<SyncError> for CliError {
    fn from(e: SyncError) -> Self {
        match &e {
            SyncError::Proxy(p) => CliError {
                code: 3,
                reason: p.reason().into(),
                detail: e.to_string(),
            },
            SyncError::Chain(c) => {
                let reason = format!("{c:?}");
                let reason = reason.split('(').next().unwrap_or("ChainError").to_string();
                CliError {
                    code: 4,
                    reason,
                    detail: e.to_string(),
                }
            }
            SyncError::EmptyDiff => CliError {
                code: 4,
                reason: "EmptyDiff".into(),
                detail: e.to_string(),
            },
            SyncError::Proof(_) => CliError {
                code: 4,
                reason: "ProofError".into(),
                detail: e.to_string(),
            },
            SyncError::Relay(_) => CliError {
                code: 4,
                reason: "RelayError".into(),
                detail: e.to_string(),
            },
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::usage("Io", e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::usage("Json", e)
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e).expect("plain struct"));
            ExitCode::from(e.code)
        }
    }
}

fn seed_override(flag: u64) -> Result<u64, CliError> {
    match std::env::var("SMARTSYNC_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::usage("InvalidSeed", format!("SMARTSYNC_SEED={s}"))),
        Err(_) => Ok(flag),
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Gen {
            entries,
            blocks,
            seed,
            out,
        } => gen(entries, blocks, seed_override(seed)?, &out),
        Command::Fork {
            chain,
            state,
            at,
            code_hash,
            max_payload,
            tamper,
        } => {
            let (fixture, chain) = load_chain(&chain, None)?;
            let config = ProxyConfig {
                max_payload_bytes: max_payload,
                expected_code_hash: code_hash,
            };
            let mut proxy =
                ProxyContract::with_config(fixture.contract, RelayStore::new().shared(), config);
            let result = if tamper {
                let mut entries: Vec<(StateKey, StateValue)> = chain
                    .storage_trie(at, fixture.contract)
                    .map_err(SyncError::from)?
                    .storage_entries()
                    .map_err(|e| SyncError::Chain(e.into()))?
                    .into_iter()
                    .collect();
                if let Some((_, v)) = entries.first_mut() {
                    let mut bytes = v.as_bytes().to_vec();
                    *bytes.last_mut().expect("values are non-empty") ^= 1;
                    *v = StateValue::new(bytes).map_err(|e| CliError::usage("Tamper", e))?;
                }
                fork_with_entries(&chain, fixture.contract, at, &mut proxy, &entries)
            } else {
                fork_contract(&chain, fixture.contract, at, &mut proxy)
            };
            save_state(&state, &proxy)?;
            result?;
            print_json(&json!({
                "status": "sealed",
                "block": at,
                "storageRoot": proxy.current_root(),
                "entries": proxy.entries().map_err(SyncError::from)?.len(),
            }));
            Ok(())
        }
        Command::Sync {
            target,
            payload_out,
        } => {
            let (fixture, chain) = load_chain(&target.chain, target.retention)?;
            let mut proxy = load_state(&target.state)?;
            let to = target.to.unwrap_or(chain.head());
            let client = SyncClient::new(&chain, fixture.contract).with_mode(target.mode.into());
            if let Some(path) = payload_out {
                if let Some(plan) = client.plan(&proxy, to)? {
                    fs::write(path, plan.payload.encode())?;
                }
            }
            let outcome = client.run_sync(&mut proxy, to)?;
            save_state(&target.state, &proxy)?;
            match outcome {
                SyncOutcome::Noop => print_json(&json!({ "status": "noop", "block": to })),
                SyncOutcome::Applied {
                    diff,
                    report,
                    payload_bytes,
                } => {
                    print_json(&json!({
                        "status": "applied",
                        "block": to,
                        "storageRoot": proxy.current_root(),
                        "changes": diff.len(),
                        "payloadBytes": payload_bytes,
                    }));
                    println!("{}", report.to_json_line());
                }
            }
            Ok(())
        }
        Command::Query { state, key } => {
            let proxy = load_state(&state)?;
            let value = proxy.query(&key).map_err(SyncError::from)?;
            print_json(&json!({ "key": key, "value": value }));
            Ok(())
        }
        Command::Attack { target, withhold } => {
            let (fixture, chain) = load_chain(&target.chain, target.retention)?;
            let mut proxy = load_state(&target.state)?;
            let to = target.to.unwrap_or(chain.head());
            let key = match withhold.parse::<StateKey>() {
                Ok(k) if withhold.trim_start_matches("0x").len() == 64 => k,
                _ => {
                    let index: usize = withhold.parse().map_err(|_| {
                        CliError::usage("InvalidKey", format!("cannot parse {withhold:?}"))
                    })?;
                    let from = proxy.last_synced_block().unwrap_or(0);
                    let keys = compute_diff(&chain, fixture.contract, from, to)
                        .map_err(SyncError::from)?
                        .keys();
                    *keys.get(index).ok_or_else(|| {
                        CliError::usage(
                            "InvalidKey",
                            format!(
                                "diff has {} keys, index {index} is out of range",
                                keys.len()
                            ),
                        )
                    })?
                }
            };
            let client = SyncClient::new(&chain, fixture.contract)
                .with_mode(target.mode.into())
                .withholding([key]);
            let outcome = client.run_sync(&mut proxy, to)?;
            save_state(&target.state, &proxy)?;
            print_json(&json!({
                "status": match outcome { SyncOutcome::Noop => "noop", SyncOutcome::Applied { .. } => "applied" },
                "withheld": key,
            }));
            Ok(())
        }
        Command::Bench { suite, seed, out } => {
            let cfg = BenchConfig {
                seed: seed_override(seed)?,
                ..BenchConfig::default()
            };
            let suite = match suite {
                BenchSuite::Single => Suite::Single,
                BenchSuite::Multi => Suite::Multi,
            };
            let records = bench::run_suite(suite, &cfg)?;
            let written = match out {
                Some(path) => bench::write_csv(&records, fs::File::create(path)?),
                None => bench::write_csv(&records, io::stdout().lock()),
            };
            written.map_err(|e| CliError::usage("Csv", e))
        }
    }
}

impl From<Mode> for ProofMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Direct => ProofMode::Direct,
            Mode::Merged => ProofMode::MergedSingleProofs,
        }
    }
}

fn gen(entries: usize, blocks: usize, seed: u64, out: &Path) -> CliResult {
    fs::create_dir_all(out)?;
    let fixture = generate_fixture(entries, blocks, seed);
    fs::write(out.join("chain.json"), serde_json::to_vec(&fixture)?)?;
    fs::write(
        out.join("storage.json"),
        serde_json::to_vec(&fixture.contract_storage())?,
    )?;
    print_json(&json!({
        "contract": fixture.contract,
        "entries": entries,
        "blocks": blocks,
        "seed": seed,
        "chain": out.join("chain.json"),
        "storage": out.join("storage.json"),
    }));
    Ok(())
}

fn load_chain(path: &Path, retention: Option<u64>) -> Result<(ChainFixture, Chain), CliError> {
    let fixture: ChainFixture = serde_json::from_slice(&fs::read(path)?)?;
    let retention = match retention {
        Some(n) if n < smartsync::chainsim::MIN_RETENTION => {
            return Err(CliError::usage(
                "InvalidRetention",
                format!(
                    "retention must be at least {}",
                    smartsync::chainsim::MIN_RETENTION
                ),
            ))
        }
        Some(n) => Retention::Window(n),
        None => Retention::Full,
    };
    let chain = Chain::from_fixture(&fixture, retention).map_err(SyncError::from)?;
    Ok((fixture, chain))
}

fn load_state(path: &Path) -> Result<ProxyContract, CliError> {
    let snapshot: ProxySnapshot = serde_json::from_slice(&fs::read(path)?)?;
    Ok(ProxyContract::from_snapshot(snapshot).map_err(SyncError::from)?)
}

fn save_state(path: &Path, proxy: &ProxyContract) -> CliResult {
    fs::write(path, serde_json::to_vec_pretty(&proxy.snapshot())?)?;
    Ok(())
}

fn print_json(v: &serde_json::Value) {
    println!("{v}");
}
