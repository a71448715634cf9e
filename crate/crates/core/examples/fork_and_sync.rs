//! Forks a contract from a simulated source chain into a proxy, then keeps
//! the proxy in step with the source block by block.

use smartsync::chainsim::{generate_fixture, Chain, Retention};
use smartsync::proxy::ProxyContract;
use smartsync::relay::RelayStore;
use smartsync::syncclient::{fork_contract, SyncClient, SyncOutcome};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixture = generate_fixture(500, 20, 11);
    let chain = Chain::from_fixture(&fixture, Retention::Full)?;
    let contract = fixture.contract;

    let mut proxy = ProxyContract::new(contract, RelayStore::new().shared());
    fork_contract(&chain, contract, 0, &mut proxy)?;
    println!(
        "forked {} entries at block 0, root {}",
        proxy.entries()?.len(),
        proxy.current_root()
    );

    let client = SyncClient::new(&chain, contract);
    for to in (5..=chain.head()).step_by(5) {
        match client.run_sync(&mut proxy, to)? {
            SyncOutcome::Noop => println!("block {to}: nothing changed"),
            SyncOutcome::Applied { diff, report, payload_bytes } => println!(
                "block {to}: {} changes, {payload_bytes} bytes, {} hashes, cost {} ({:.0} per value)",
                diff.len(),
                report.hash_invocations,
                report.total_cost,
                report.per_value_cost
            ),
        }
        let source = chain.storage_trie(to, contract)?.root_hash();
        assert_eq!(proxy.current_root(), source);
    }
    println!("proxy matches the source at block {}", chain.head());
    Ok(())
}
