//! Storage proofs, multi proofs and transition confirmations.
//!
//! A multi proof is a pruned copy of a storage trie: every node on the path
//! of a touched key is present, everything else is replaced by its hash.
//! Re-evaluating that pruned trie with the verifier's *current* values for
//! the touched keys (the transition confirmation) must reproduce the
//! verifier's current root; any withheld change leaves a stale leaf or a
//! stale hash behind and the roots diverge.

mod confirm;
mod diff;
mod multi;
mod single;

use thiserror::Error;

use crate::codec::DecodeError;
use crate::hash::H256;
use crate::trie::{StateKey, TrieError};

pub use confirm::{compute_transition_confirmation, TransitionConfirmation};
pub use diff::{ChangeKind, DiffEntry, StateDiff};
pub use multi::{
    build_multi_proof, build_multi_proof_with, merge_storage_proofs, verify_multi_proof,
    MultiProof, ProofItem, VerifiedMultiProof,
};
pub use single::{
    prove, prove_path, verify_path, verify_proof, PathOutcome, PathProof, StorageProof,
};

pub(crate) const STORAGE_PROOF_TAG: u8 = 0x53;
pub(crate) const MULTI_PROOF_TAG: u8 = 0x4D;
pub(crate) const PLACEHOLDER_TAG: u8 = 0xFE;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error("root mismatch: expected {expected}, got {actual}")]
    RootMismatch { expected: H256, actual: H256 },
    #[error("hash chain broken at proof node {0}")]
    BrokenHashChain(usize),
    #[error("proof does not follow the key's path")]
    PathMismatch,
    #[error("proven value differs from the claimed value")]
    ValueMismatch,
    #[error("malformed subtree: {0}")]
    MalformedSubtree(&'static str),
    #[error("placeholder on the path of touched key {0}")]
    PlaceholderOnKeyPath(StateKey),
    #[error("restructuring needs node {0}, which the proof pruned")]
    InsufficientProofNodes(H256),
    #[error("no current value supplied for touched key {0}")]
    MissingCurrentValue(StateKey),
    #[error("multi proof needs at least one key")]
    NoKeys,
    #[error(transparent)]
    Trie(#[from] TrieError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}
