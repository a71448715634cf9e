//! Links an old storage root to a new one: the multi proof for the changed
//! keys is verified against the new root, the old values are substituted
//! back in, and the recomputed root must match the old root.

use std::collections::BTreeMap;

use smartsync::proofs::{
    build_multi_proof, compute_transition_confirmation, verify_multi_proof, StateDiff,
};
use smartsync::trie::{StateKey, StateValue, Trie};

fn key(b: u8) -> StateKey {
    StateKey::with_prefix(&[b])
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let old: BTreeMap<StateKey, StateValue> = [
        (key(0x10), 6),
        (key(0x11), 3),
        (key(0x20), 9),
        (key(0x30), 1),
    ]
    .into_iter()
    .map(|(k, v)| (k, StateValue::from_u64(v)))
    .collect();
    let old_trie = Trie::from_entries(old.clone())?;

    // update one key, delete one, create one
    let mut new_trie = old_trie.clone();
    new_trie.insert(key(0x10), StateValue::from_u64(7))?;
    new_trie.delete(key(0x20))?;
    new_trie.insert(key(0x12), StateValue::from_u64(4))?;

    let diff = StateDiff::between_tries(&old_trie, &new_trie)?;
    println!("{} changed keys", diff.len());

    let current: BTreeMap<StateKey, Option<StateValue>> = diff
        .keys()
        .into_iter()
        .map(|k| (k, old.get(&k).cloned()))
        .collect();

    let mp = build_multi_proof(&new_trie, diff.keys())?;
    let verified = verify_multi_proof(new_trie.root_hash(), &mp)?;
    let confirmation = compute_transition_confirmation(&verified, &current)?;
    assert_eq!(confirmation.computed_root, old_trie.root_hash());
    println!(
        "complete proof: {} -> {}",
        confirmation.computed_root,
        new_trie.root_hash()
    );

    // drop the created key from the proof
    let partial: Vec<StateKey> = diff
        .keys()
        .into_iter()
        .filter(|k| *k != key(0x12))
        .collect();
    let mp = build_multi_proof(&new_trie, partial.iter().copied())?;
    let verified = verify_multi_proof(new_trie.root_hash(), &mp)?;
    let current: BTreeMap<_, _> = partial.iter().map(|k| (*k, old.get(k).cloned())).collect();
    let computed = compute_transition_confirmation(&verified, &current)?.computed_root;
    assert_ne!(computed, old_trie.root_hash());
    println!("proof without the created key recomputes {computed}, not the old root");
    Ok(())
}
