use crate::codec::{put_bytes, put_varint, Reader};
use crate::hash::{hash, H256};
use crate::nibbles::Nibbles;
use crate::node::{read_node, NodeKind, NodeRef, INLINE_LIMIT};
use crate::trie::{empty_root, StateKey, StateValue, Trie, TrieError};

use super::{ProofError, STORAGE_PROOF_TAG};

/// Inclusion (or non-inclusion) witness for one key: the hash-referenced
/// nodes on its path, root first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageProof {
    pub key: StateKey,
    pub value: Option<StateValue>,
    pub nodes: Vec<Vec<u8>>,
}

/// Encodings of the hash-referenced nodes on `key`'s path plus the value found.
/// The value found (if any) and the proof node encodings.
pub type PathProof = (Option<Vec<u8>>, Vec<Vec<u8>>);

pub fn prove_path(trie: &Trie, key: &[u8]) -> Result<PathProof, TrieError> {
    let path = trie.path_nodes(key)?;
    let nodes = path
        .iter()
        .enumerate()
        .filter(|(i, n)| *i == 0 || n.is_hashed())
        .map(|(_, n)| n.encoding().expect("full trie").to_vec())
        .collect();
    Ok((trie.get(key)?.map(<[u8]>::to_vec), nodes))
}

pub fn prove(trie: &Trie, key: &StateKey) -> Result<StorageProof, TrieError> {
    let (value, nodes) = prove_path(trie, key.as_ref())?;
    let value = value.map(StateValue::new).transpose()?;
    Ok(StorageProof {
        key: *key,
        value,
        nodes,
    })
}

/// Where a verified path ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathOutcome {
    Found(Vec<u8>),
    /// Ended at an empty slot, a diverging extension, or the empty trie.
    Absent,
    /// Ended at a leaf belonging to a different key.
    OtherLeaf,
}

impl PathOutcome {
    pub fn value(&self) -> Option<&[u8]> {
        match self {
            PathOutcome::Found(v) => Some(v),
            _ => None,
        }
    }
}

fn hashed_refs(node: &NodeRef) -> Vec<H256> {
    match node.kind() {
        NodeKind::Extension { child, .. } => child
            .is_placeholder()
            .then(|| child.hash())
            .into_iter()
            .collect(),
        NodeKind::Branch { children, .. } => children
            .iter()
            .flatten()
            .filter(|c| c.is_placeholder())
            .map(|c| c.hash())
            .collect(),
        _ => Vec::new(),
    }
}

fn decode_proof_node(enc: &[u8]) -> Result<NodeRef, ProofError> {
    let mut r = Reader::new(enc);
    let node = read_node(&mut r)?;
    r.finish()?;
    Ok(node)
}

/// Walks `nodes` from `root` along `key`'s nibble path.
pub fn verify_path(root: H256, key: &[u8], nodes: &[Vec<u8>]) -> Result<PathOutcome, ProofError> {
    let Some(first) = nodes.first() else {
        if root == empty_root() {
            return Ok(PathOutcome::Absent);
        }
        return Err(ProofError::RootMismatch {
            expected: root,
            actual: empty_root(),
        });
    };
    let actual = hash(first);
    if actual != root {
        return Err(ProofError::RootMismatch {
            expected: root,
            actual,
        });
    }
    let full_path = Nibbles::from_bytes(key);
    let mut path = full_path.as_slice();
    let mut index = 0;
    let mut parent = decode_proof_node(first)?;
    let mut node = parent.clone();
    let outcome = loop {
        match node.kind() {
            NodeKind::Leaf { path: p, value } => {
                break if p.as_slice() == path {
                    PathOutcome::Found(value.clone())
                } else {
                    PathOutcome::OtherLeaf
                };
            }
            NodeKind::Extension { path: p, child } => {
                if !path.starts_with(p.as_slice()) {
                    break PathOutcome::Absent;
                }
                path = &path[p.len()..];
                node = child.clone();
            }
            NodeKind::Branch { children, value } => match path.split_first() {
                None => {
                    break match value {
                        Some(v) => PathOutcome::Found(v.clone()),
                        None => PathOutcome::Absent,
                    }
                }
                Some((n, rest)) => match &children[*n as usize] {
                    None => break PathOutcome::Absent,
                    Some(c) => {
                        node = c.clone();
                        path = rest;
                    }
                },
            },
            NodeKind::Hash(expected) => {
                index += 1;
                let enc = nodes.get(index).ok_or(ProofError::BrokenHashChain(index))?;
                let got = hash(enc);
                if got != *expected {
                    return Err(if hashed_refs(&parent).contains(&got) {
                        ProofError::PathMismatch
                    } else {
                        ProofError::BrokenHashChain(index)
                    });
                }
                if enc.len() < INLINE_LIMIT {
                    return Err(ProofError::MalformedSubtree(
                        "hash-referenced node below inline size",
                    ));
                }
                parent = decode_proof_node(enc)?;
                node = parent.clone();
            }
        }
    };
    if index + 1 != nodes.len() {
        return Err(ProofError::PathMismatch);
    }
    Ok(outcome)
}

pub fn verify_proof(root: H256, proof: &StorageProof) -> Result<(), ProofError> {
    let outcome = verify_path(root, proof.key.as_ref(), &proof.nodes)?;
    match (&outcome, &proof.value) {
        (PathOutcome::Found(v), Some(claimed)) if v.as_slice() == claimed.as_bytes() => Ok(()),
        (PathOutcome::Absent | PathOutcome::OtherLeaf, None) => Ok(()),
        (PathOutcome::OtherLeaf, Some(_)) => Err(ProofError::PathMismatch),
        _ => Err(ProofError::ValueMismatch),
    }
}

impl StorageProof {
    /// `0x53 ‖ key ‖ (0x00 | 0x01 ‖ value) ‖ varint n ‖ nodes`
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![STORAGE_PROOF_TAG];
        out.extend_from_slice(&self.key.0);
        match &self.value {
            None => out.push(0),
            Some(v) => {
                out.push(1);
                put_bytes(&mut out, v.as_bytes());
            }
        }
        put_varint(&mut out, self.nodes.len() as u64);
        for n in &self.nodes {
            out.extend_from_slice(n);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProofError> {
        let mut r = Reader::new(bytes);
        let proof = Self::read(&mut r)?;
        r.finish()?;
        Ok(proof)
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, ProofError> {
        if r.byte()? != STORAGE_PROOF_TAG {
            return Err(ProofError::MalformedSubtree("not a storage proof"));
        }
        let key = StateKey(r.array()?);
        let value = match r.byte()? {
            0 => None,
            1 => Some(StateValue::new(r.bytes()?.to_vec())?),
            _ => return Err(ProofError::MalformedSubtree("bad value flag")),
        };
        let count = r.length()?;
        let mut nodes = Vec::new();
        for _ in 0..count {
            let start = r.position();
            read_node(r)?;
            nodes.push(r.consumed_since(start).to_vec());
        }
        Ok(StorageProof { key, value, nodes })
    }
}
