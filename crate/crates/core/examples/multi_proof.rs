//! Compares one multi proof against the separate storage proofs for the same
//! keys, then verifies it and reads the proven values back.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smartsync::proofs::{build_multi_proof, prove, verify_multi_proof, MultiProof};
use smartsync::trie::{StateKey, StateValue, Trie};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut storage = BTreeMap::new();
    while storage.len() < 1_000 {
        storage.insert(
            StateKey(rng.gen()),
            StateValue::from_u64(rng.gen_range(1..u64::MAX)),
        );
    }
    let trie = Trie::from_entries(storage.clone())?;
    let keys: Vec<StateKey> = storage.keys().copied().step_by(50).collect();

    let singles: usize = keys
        .iter()
        .map(|k| prove(&trie, k).map(|p| p.encode().len()))
        .sum::<Result<_, _>>()?;
    let mp = build_multi_proof(&trie, keys.iter().copied())?;
    let bytes = mp.encode();
    println!(
        "{} keys: separate proofs {singles} bytes, multi proof {} bytes ({} nodes, {} placeholders)",
        keys.len(),
        bytes.len(),
        mp.node_count(),
        mp.placeholder_count()
    );

    let decoded = MultiProof::decode(&bytes)?;
    let verified = verify_multi_proof(trie.root_hash(), &decoded)?;
    for (k, v) in verified.values() {
        assert_eq!(v.as_ref(), storage.get(k));
    }
    println!(
        "verified {} values against {}",
        verified.values().len(),
        trie.root_hash()
    );

    let mut tampered = bytes.clone();
    let last = tampered.len() - 1;
    tampered[last] ^= 1;
    let rejected = MultiProof::decode(&tampered).map_or(true, |mp| {
        verify_multi_proof(trie.root_hash(), &mp).is_err()
    });
    assert!(rejected);
    println!("flipping the last byte is rejected");
    Ok(())
}
