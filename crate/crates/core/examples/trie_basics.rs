//! Builds a storage trie, checks that insertion order does not matter and
//! verifies inclusion and exclusion proofs against the root.

use smartsync::proofs::{prove, verify_proof};
use smartsync::trie::{StateKey, StateValue, Trie};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let entries: Vec<(StateKey, StateValue)> = (1..=8u64)
        .map(|i| {
            (
                StateKey::with_prefix(&[i as u8 * 17]),
                StateValue::from_u64(i * 100),
            )
        })
        .collect();

    let mut forward = Trie::new();
    for (k, v) in &entries {
        forward.insert(k, v)?;
    }
    let mut backward = Trie::new();
    for (k, v) in entries.iter().rev() {
        backward.insert(k, v)?;
    }
    assert_eq!(forward.root_hash(), backward.root_hash());
    println!("root after 8 inserts: {}", forward.root_hash());

    let (k, v) = &entries[3];
    assert_eq!(forward.get_value(k)?.as_ref(), Some(v));

    let proof = prove(&forward, k)?;
    verify_proof(forward.root_hash(), &proof)?;
    println!(
        "inclusion proof for {k}: {} nodes, {} bytes",
        proof.nodes.len(),
        proof.encode().len()
    );

    let missing = StateKey::with_prefix(&[0xEE]);
    let proof = prove(&forward, &missing)?;
    assert!(proof.value.is_none());
    verify_proof(forward.root_hash(), &proof)?;
    println!("exclusion proof for {missing}: {} nodes", proof.nodes.len());

    let before = forward.root_hash();
    forward.delete(k)?;
    assert_ne!(forward.root_hash(), before);
    forward.insert(k, v)?;
    assert_eq!(forward.root_hash(), before);
    println!("delete then re-insert restores the root");
    Ok(())
}
