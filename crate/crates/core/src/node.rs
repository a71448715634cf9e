//! Trie nodes and their canonical encoding.
//!
//! ```text
//! Leaf      = list[ [0x00], hex-prefix(path, leaf=1), value ]
//! Extension = list[ [0x01], hex-prefix(path, leaf=0), childRef ]
//! Branch    = list[ [0x02], childRef-or-empty × 16, value-or-empty ]
//! ```
//!
//! A child whose encoding is shorter than 32 bytes is embedded verbatim,
//! otherwise it is referenced by the 32-byte hash of its encoding.

use std::sync::{Arc, OnceLock};

use crate::codec::{put_bytes, put_list_header, DecodeError, Reader, LIST_MARKER};
use crate::hash::{hash, H256};
use crate::nibbles::{hex_prefix_decode, hex_prefix_encode, Nibbles};

pub const INLINE_LIMIT: usize = 32;

const TAG_LEAF: u8 = 0x00;
const TAG_EXTENSION: u8 = 0x01;
const TAG_BRANCH: u8 = 0x02;

pub type NodeRef = Arc<TrieNode>;
pub type Children = [Option<NodeRef>; 16];

#[derive(Debug)]
pub enum NodeKind {
    Leaf {
        path: Nibbles,
        value: Vec<u8>,
    },
    Extension {
        path: Nibbles,
        child: NodeRef,
    },
    Branch {
        children: Box<Children>,
        value: Option<Vec<u8>>,
    },
    /// A node known only by its hash: pruned from a proof, or absent from a node store.
    Hash(H256),
}

/// How a node appears inside its parent's encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChildRef<'a> {
    Inline(&'a [u8]),
    Hashed(H256),
}

#[derive(Debug)]
pub struct TrieNode {
    kind: NodeKind,
    encoded: OnceLock<Vec<u8>>,
    digest: OnceLock<H256>,
}

impl TrieNode {
    pub fn new(kind: NodeKind) -> NodeRef {
        Arc::new(TrieNode {
            kind,
            encoded: OnceLock::new(),
            digest: OnceLock::new(),
        })
    }

    /// Builds a node whose encoding and hash are already known.
    pub(crate) fn with_cache(kind: NodeKind, encoding: Vec<u8>, digest: Option<H256>) -> NodeRef {
        let node = TrieNode {
            kind,
            encoded: OnceLock::from(encoding),
            digest: OnceLock::new(),
        };
        if let Some(d) = digest {
            let _ = node.digest.set(d);
        }
        Arc::new(node)
    }

    pub fn leaf(path: Nibbles, value: Vec<u8>) -> NodeRef {
        Self::new(NodeKind::Leaf { path, value })
    }

    pub fn extension(path: Nibbles, child: NodeRef) -> NodeRef {
        Self::new(NodeKind::Extension { path, child })
    }

    pub fn branch(children: Children, value: Option<Vec<u8>>) -> NodeRef {
        Self::new(NodeKind::Branch {
            children: Box::new(children),
            value,
        })
    }

    pub fn placeholder(h: H256) -> NodeRef {
        Self::new(NodeKind::Hash(h))
    }

    pub fn kind(&self) -> &NodeKind {
        &self.kind
    }

    pub fn is_placeholder(&self) -> bool {
        matches!(self.kind, NodeKind::Hash(_))
    }

    /// Canonical encoding; `None` for hash-only nodes.
    pub fn encoding(&self) -> Option<&[u8]> {
        if self.is_placeholder() {
            return None;
        }
        Some(self.encoded.get_or_init(|| encode_kind(&self.kind)))
    }

    pub fn hash(&self) -> H256 {
        match &self.kind {
            NodeKind::Hash(h) => *h,
            _ => *self
                .digest
                .get_or_init(|| hash(self.encoding().expect("not a placeholder"))),
        }
    }

    pub fn reference(&self) -> ChildRef<'_> {
        match self.encoding() {
            Some(enc) if enc.len() < INLINE_LIMIT => ChildRef::Inline(enc),
            _ => ChildRef::Hashed(self.hash()),
        }
    }

    /// True when the parent stores this node by hash rather than embedding it.
    pub fn is_hashed(&self) -> bool {
        matches!(self.reference(), ChildRef::Hashed(_))
    }
}

fn put_child(out: &mut Vec<u8>, child: &TrieNode) {
    match child.reference() {
        ChildRef::Inline(enc) => out.extend_from_slice(enc),
        ChildRef::Hashed(h) => put_bytes(out, h.as_bytes()),
    }
}

fn encode_kind(kind: &NodeKind) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    match kind {
        NodeKind::Leaf { path, value } => {
            put_list_header(&mut out, 3);
            put_bytes(&mut out, &[TAG_LEAF]);
            put_bytes(&mut out, &hex_prefix_encode(path.as_slice(), true));
            put_bytes(&mut out, value);
        }
        NodeKind::Extension { path, child } => {
            put_list_header(&mut out, 3);
            put_bytes(&mut out, &[TAG_EXTENSION]);
            put_bytes(&mut out, &hex_prefix_encode(path.as_slice(), false));
            put_child(&mut out, child);
        }
        NodeKind::Branch { children, value } => {
            put_list_header(&mut out, 18);
            put_bytes(&mut out, &[TAG_BRANCH]);
            for child in children.iter() {
                match child {
                    Some(c) => put_child(&mut out, c),
                    None => put_bytes(&mut out, &[]),
                }
            }
            put_bytes(&mut out, value.as_deref().unwrap_or(&[]));
        }
        NodeKind::Hash(_) => unreachable!("placeholders have no encoding"),
    }
    out
}

/// Decodes exactly one node from `bytes`.
pub fn decode_node(bytes: &[u8]) -> Result<NodeRef, DecodeError> {
    let mut r = Reader::new(bytes);
    let node = read_node(&mut r)?;
    r.finish()?;
    Ok(node)
}

/// Reads one canonical node encoding from the cursor. Hashed children come
/// back as [`NodeKind::Hash`] placeholders.
pub fn read_node(r: &mut Reader<'_>) -> Result<NodeRef, DecodeError> {
    let start = r.position();
    let items = r.list_header()?;
    let tag = r.bytes()?;
    let kind = match (tag, items) {
        ([TAG_LEAF], 3) => {
            let (path, leaf) = hex_prefix_decode(r.bytes()?)?;
            if !leaf {
                return Err(DecodeError::InvalidNode("leaf without leaf flag"));
            }
            let value = r.bytes()?;
            if value.is_empty() {
                return Err(DecodeError::InvalidNode("leaf with empty value"));
            }
            NodeKind::Leaf {
                path,
                value: value.to_vec(),
            }
        }
        ([TAG_EXTENSION], 3) => {
            let (path, leaf) = hex_prefix_decode(r.bytes()?)?;
            if leaf {
                return Err(DecodeError::InvalidNode("extension with leaf flag"));
            }
            if path.is_empty() {
                return Err(DecodeError::InvalidNode("extension with empty path"));
            }
            let child =
                read_child(r)?.ok_or(DecodeError::InvalidNode("extension without child"))?;
            if !matches!(child.kind(), NodeKind::Branch { .. } | NodeKind::Hash(_)) {
                return Err(DecodeError::InvalidNode("extension child must be a branch"));
            }
            NodeKind::Extension { path, child }
        }
        ([TAG_BRANCH], 18) => {
            let mut children: Children = Default::default();
            for slot in children.iter_mut() {
                *slot = read_child(r)?;
            }
            let value = r.bytes()?;
            let value = (!value.is_empty()).then(|| value.to_vec());
            let occupied =
                children.iter().filter(|c| c.is_some()).count() + usize::from(value.is_some());
            if occupied < 2 {
                return Err(DecodeError::InvalidNode(
                    "branch with fewer than two entries",
                ));
            }
            NodeKind::Branch {
                children: Box::new(children),
                value,
            }
        }
        _ => return Err(DecodeError::InvalidNode("unknown node tag or arity")),
    };
    let node = TrieNode::new(kind);
    if node.encoding() != Some(r.consumed_since(start)) {
        return Err(DecodeError::NonCanonical(
            "node does not re-encode identically",
        ));
    }
    Ok(node)
}

fn read_child(r: &mut Reader<'_>) -> Result<Option<NodeRef>, DecodeError> {
    let at = r.position();
    match r.peek()? {
        LIST_MARKER => {
            let child = read_node(r)?;
            if r.position() - at >= INLINE_LIMIT {
                return Err(DecodeError::NonCanonical("oversized inline child"));
            }
            Ok(Some(child))
        }
        _ => {
            let bytes = r.bytes()?;
            match bytes.len() {
                0 => Ok(None),
                32 => Ok(Some(TrieNode::placeholder(
                    H256::from_slice(bytes).expect("32 bytes"),
                ))),
                _ => Err(DecodeError::UnexpectedTag {
                    tag: bytes.len() as u8,
                    offset: at,
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_path(byte: u8) -> Nibbles {
        let mut k = [0u8; 32];
        k[0] = byte;
        Nibbles::from_bytes(&k)
    }

    #[test]
    fn leaf_encoding_layout() {
        let leaf = TrieNode::leaf(Nibbles::from_nibbles(&[1, 2, 3]), vec![0x07]);
        assert_eq!(
            leaf.encoding().unwrap(),
            &[0xC0, 0x03, 0x01, 0x00, 0x02, 0x31, 0x23, 0x01, 0x07]
        );
        assert!(matches!(leaf.reference(), ChildRef::Inline(_)));
    }

    #[test]
    fn long_leaf_is_hashed() {
        let leaf = TrieNode::leaf(key_path(0x42), vec![0xff; 32]);
        assert!(leaf.encoding().unwrap().len() >= INLINE_LIMIT);
        assert_eq!(
            leaf.reference(),
            ChildRef::Hashed(hash(leaf.encoding().unwrap()))
        );
    }

    #[test]
    fn decode_round_trip_with_inline_and_hashed_children() {
        let mut children: Children = Default::default();
        children[1] = Some(TrieNode::leaf(Nibbles::from_nibbles(&[5]), vec![1]));
        children[9] = Some(TrieNode::leaf(key_path(0x99), vec![2; 20]));
        let branch = TrieNode::branch(children, None);
        let enc = branch.encoding().unwrap().to_vec();
        let back = decode_node(&enc).unwrap();
        assert_eq!(back.encoding().unwrap(), &enc[..]);
        assert_eq!(back.hash(), branch.hash());
        let NodeKind::Branch { children, .. } = back.kind() else {
            panic!()
        };
        assert!(!children[1].as_ref().unwrap().is_placeholder());
        assert!(children[9].as_ref().unwrap().is_placeholder());
    }

    #[test]
    fn decode_rejects_single_slot_branch() {
        let mut enc = Vec::new();
        put_list_header(&mut enc, 18);
        put_bytes(&mut enc, &[TAG_BRANCH]);
        put_bytes(&mut enc, &[7u8; 32]);
        for _ in 0..15 {
            put_bytes(&mut enc, &[]);
        }
        put_bytes(&mut enc, &[]);
        assert!(decode_node(&enc).is_err());
    }

    #[test]
    fn decode_rejects_empty_leaf_value_and_trailing_bytes() {
        let mut enc = Vec::new();
        put_list_header(&mut enc, 3);
        put_bytes(&mut enc, &[TAG_LEAF]);
        put_bytes(&mut enc, &[0x20]);
        put_bytes(&mut enc, &[]);
        assert!(decode_node(&enc).is_err());

        let leaf = TrieNode::leaf(Nibbles::from_nibbles(&[1]), vec![1]);
        let mut enc = leaf.encoding().unwrap().to_vec();
        enc.push(0);
        assert_eq!(
            decode_node(&enc).unwrap_err(),
            DecodeError::TrailingBytes(1)
        );
    }
}
