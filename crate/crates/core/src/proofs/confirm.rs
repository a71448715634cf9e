use std::collections::BTreeMap;

use crate::hash::H256;
use crate::trie::{StateKey, StateValue, Trie, TrieError};

use super::multi::VerifiedMultiProof;
use super::ProofError;

/// The multi proof's subtree rewound to the verifier's current values.
#[derive(Debug, Clone)]
pub struct TransitionConfirmation {
    pub subtree: Trie,
    pub computed_root: H256,
}

/// Substitutes `current` (the verifier's stored value or absence for every
/// touched key) into the proven subtree and recomputes its root.
///
/// Keys whose current value differs are re-inserted or updated first; keys
/// that currently do not exist are removed afterwards, collapsing branches
/// as needed. Hitting a pruned node while restructuring yields
/// [`ProofError::InsufficientProofNodes`].
pub fn compute_transition_confirmation(
    mp: &VerifiedMultiProof,
    current: &BTreeMap<StateKey, Option<StateValue>>,
) -> Result<TransitionConfirmation, ProofError> {
    let mut subtree = mp.subtree.clone();
    let mut removals = Vec::new();
    for (key, proven) in &mp.values {
        let now = current
            .get(key)
            .ok_or(ProofError::MissingCurrentValue(*key))?;
        if now == proven {
            continue;
        }
        match now {
            Some(v) => subtree.insert(key, v).map_err(insufficient)?,
            None => removals.push(*key),
        }
    }
    for key in removals {
        subtree.delete(key).map_err(insufficient)?;
    }
    let computed_root = subtree.root_hash();
    Ok(TransitionConfirmation {
        subtree,
        computed_root,
    })
}

fn insufficient(e: TrieError) -> ProofError {
    match e {
        TrieError::CorruptNode(h) => ProofError::InsufficientProofNodes(h),
        other => ProofError::Trie(other),
    }
}
