//! A relayer that leaves one changed key out of the payload. The proxy
//! detects that the transition is incomplete and keeps its state.

use std::collections::BTreeMap;

use smartsync::chainsim::{Address, Chain, GenesisAccount, WriteBatch};
use smartsync::hash::H256;
use smartsync::proxy::{ProxyContract, ProxyError};
use smartsync::relay::RelayStore;
use smartsync::syncclient::{fork_contract, SyncClient, SyncError};
use smartsync::trie::{StateKey, StateValue};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let contract = Address::from_low_u64(0xC0FFEE);
    let a = StateKey::with_prefix(&[0xA0]);
    let b = StateKey::with_prefix(&[0xB0]);
    let c = StateKey::with_prefix(&[0xC0]);
    let storage = BTreeMap::from([(a, StateValue::from_u64(6)), (b, StateValue::from_u64(1))]);
    let mut chain = Chain::new(vec![GenesisAccount {
        address: contract,
        nonce: 1,
        balance: 0,
        code_hash: H256::ZERO,
        storage,
    }])?;
    chain.apply_block(vec![WriteBatch::new(
        contract,
        vec![
            (a, Some(StateValue::from_u64(7))),
            (c, Some(StateValue::from_u64(42))),
        ],
    )])?;

    let mut proxy = ProxyContract::new(contract, RelayStore::new().shared());
    fork_contract(&chain, contract, 0, &mut proxy)?;
    let before = proxy.current_root();

    let attacker = SyncClient::new(&chain, contract).withholding([c]);
    match attacker.run_sync(&mut proxy, 1) {
        Err(SyncError::Proxy(e @ ProxyError::IncompleteTransition { .. })) => {
            println!("rejected: {e}")
        }
        other => return Err(format!("expected IncompleteTransition, got {other:?}").into()),
    }
    assert_eq!(proxy.current_root(), before);
    assert_eq!(proxy.query(&c)?, None);

    SyncClient::new(&chain, contract).run_sync(&mut proxy, 1)?;
    assert_eq!(proxy.query(&c)?, Some(StateValue::from_u64(42)));
    println!("honest payload accepted, {c} = 42");
    Ok(())
}
