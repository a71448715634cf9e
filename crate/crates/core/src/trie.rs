//! Modified Merkle Patricia trie over persistent, structurally shared nodes.
//!
//! The same structure doubles as a *partial* trie: any subtree may be a
//! [`NodeKind::Hash`] placeholder. Operations that need to look inside a
//! placeholder fail with [`TrieError::CorruptNode`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::DecodeError;
use crate::hash::{hash, H256};
use crate::nibbles::{common_prefix_len, Nibbles};
use crate::node::{decode_node, Children, NodeKind, NodeRef, TrieNode, INLINE_LIMIT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrieError {
    #[error("node {0} is not available")]
    CorruptNode(H256),
    #[error("value is not canonical: {0}")]
    NonCanonicalValue(&'static str),
    #[error("empty values cannot be stored; delete the key instead")]
    EmptyValue,
    #[error("duplicate key {0}")]
    DuplicateKey(StateKey),
    #[error("structural audit failed: {0}")]
    Structure(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

pub type RawEntry = (Vec<u8>, Vec<u8>);

/// Root of the trie holding no entries: `H(0xC0 ‖ 0x00)`.
pub fn empty_root() -> H256 {
    static EMPTY: OnceLock<H256> = OnceLock::new();
    *EMPTY.get_or_init(|| hash(&[0xC0, 0x00]))
}

/// A 32-byte storage slot.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct StateKey(pub [u8; 32]);

impl StateKey {
    /// `prefix` followed by zero bytes.
    pub fn with_prefix(prefix: &[u8]) -> Self {
        let mut k = [0u8; 32];
        k[..prefix.len()].copy_from_slice(prefix);
        StateKey(k)
    }

    pub fn nibbles(&self) -> Nibbles {
        Nibbles::from_bytes(&self.0)
    }
}

impl AsRef<[u8]> for StateKey {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl FromStr for StateKey {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(StateKey(s.parse::<H256>()?.0))
    }
}

/// A storage word: 1..=32 big-endian bytes without leading zeros.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateValue(Vec<u8>);

impl StateValue {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self, TrieError> {
        let bytes = bytes.into();
        match bytes.first() {
            None => Err(TrieError::NonCanonicalValue("empty")),
            Some(0) => Err(TrieError::NonCanonicalValue("leading zero byte")),
            Some(_) if bytes.len() > 32 => {
                Err(TrieError::NonCanonicalValue("longer than 32 bytes"))
            }
            Some(_) => Ok(StateValue(bytes)),
        }
    }

    /// Strips leading zeros from a full word. An all-zero word is rejected.
    pub fn from_word(word: &[u8; 32]) -> Result<Self, TrieError> {
        let skip = word.iter().take_while(|b| **b == 0).count();
        Self::new(&word[skip..])
    }

    /// Panics on zero.
    pub fn from_u64(v: u64) -> Self {
        assert!(v != 0, "zero is represented by absence");
        let raw = v.to_be_bytes();
        let skip = raw.iter().take_while(|b| **b == 0).count();
        StateValue(raw[skip..].to_vec())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl AsRef<[u8]> for StateValue {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for StateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(&self.0))
    }
}

impl fmt::Display for StateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(&self.0))
    }
}

impl FromStr for StateValue {
    type Err = TrieError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s.strip_prefix("0x").unwrap_or(s))
            .map_err(|_| TrieError::NonCanonicalValue("not hex"))?;
        StateValue::new(bytes)
    }
}

macro_rules! hex_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_serde!(StateKey);
hex_serde!(StateValue);

/// A Merkle Patricia trie. Cloning is O(1); clones share unchanged subtrees.
#[derive(Clone, Default, Debug)]
pub struct Trie {
    root: Option<NodeRef>,
}

enum Deleted {
    Unchanged,
    Replaced(Option<NodeRef>),
}

impl Trie {
    pub fn new() -> Self {
        Trie { root: None }
    }

    pub(crate) fn from_root(root: Option<NodeRef>) -> Self {
        Trie { root }
    }

    pub fn root_node(&self) -> Option<&NodeRef> {
        self.root.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    pub fn root_hash(&self) -> H256 {
        match &self.root {
            None => empty_root(),
            Some(node) => node.hash(),
        }
    }

    /// Builds a trie from unique entries. Order does not matter.
    pub fn from_entries<I>(entries: I) -> Result<Trie, TrieError>
    where
        I: IntoIterator<Item = (StateKey, StateValue)>,
    {
        let mut seen = std::collections::HashSet::new();
        let mut trie = Trie::new();
        for (k, v) in entries {
            if !seen.insert(k) {
                return Err(TrieError::DuplicateKey(k));
            }
            trie.insert(k, v)?;
        }
        Ok(trie)
    }

    pub fn get(&self, key: impl AsRef<[u8]>) -> Result<Option<&[u8]>, TrieError> {
        let path = Nibbles::from_bytes(key.as_ref());
        let mut path = path.as_slice();
        let mut node = match &self.root {
            None => return Ok(None),
            Some(n) => n,
        };
        loop {
            match node.kind() {
                NodeKind::Leaf { path: p, value } => {
                    return Ok((p.as_slice() == path).then_some(value.as_slice()));
                }
                NodeKind::Extension { path: p, child } => {
                    if !path.starts_with(p.as_slice()) {
                        return Ok(None);
                    }
                    path = &path[p.len()..];
                    node = child;
                }
                NodeKind::Branch { children, value } => match path.split_first() {
                    None => return Ok(value.as_deref()),
                    Some((n, rest)) => match &children[*n as usize] {
                        None => return Ok(None),
                        Some(c) => {
                            node = c;
                            path = rest;
                        }
                    },
                },
                NodeKind::Hash(h) => return Err(TrieError::CorruptNode(*h)),
            }
        }
    }

    /// Typed lookup for storage tries.
    pub fn get_value(&self, key: &StateKey) -> Result<Option<StateValue>, TrieError> {
        self.get(key)?
            .map(|v| StateValue::new(v.to_vec()))
            .transpose()
    }

    pub fn insert(
        &mut self,
        key: impl AsRef<[u8]>,
        value: impl AsRef<[u8]>,
    ) -> Result<(), TrieError> {
        let value = value.as_ref();
        if value.is_empty() {
            return Err(TrieError::EmptyValue);
        }
        let path = Nibbles::from_bytes(key.as_ref());
        self.root = Some(insert_at(self.root.as_ref(), path.as_slice(), value)?);
        Ok(())
    }

    /// Removes `key`; a missing key is a no-op.
    pub fn delete(&mut self, key: impl AsRef<[u8]>) -> Result<(), TrieError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let path = Nibbles::from_bytes(key.as_ref());
        if let Deleted::Replaced(node) = delete_at(root, path.as_slice())? {
            self.root = node;
        }
        Ok(())
    }

    /// Insert when `Some`, delete when `None`.
    pub fn set(&mut self, key: impl AsRef<[u8]>, value: Option<&[u8]>) -> Result<(), TrieError> {
        match value {
            Some(v) => self.insert(key, v),
            None => self.delete(key),
        }
    }

    /// All entries in key order.
    pub fn entries(&self) -> Result<Vec<RawEntry>, TrieError> {
        let mut out = Vec::new();
        if let Some(root) = &self.root {
            collect(root, &mut Vec::new(), &mut out)?;
        }
        Ok(out)
    }

    /// Storage entries in key order. Fails on keys that are not 32 bytes or
    /// values that are not canonical words.
    pub fn storage_entries(&self) -> Result<BTreeMap<StateKey, StateValue>, TrieError> {
        self.entries()?
            .into_iter()
            .map(|(k, v)| {
                let key = <[u8; 32]>::try_from(k.as_slice())
                    .map_err(|_| TrieError::Structure("key is not 32 bytes".into()))?;
                Ok((StateKey(key), StateValue::new(v)?))
            })
            .collect()
    }

    /// Nodes along `key`'s path, root first, including inline ones.
    pub fn path_nodes(&self, key: impl AsRef<[u8]>) -> Result<Vec<NodeRef>, TrieError> {
        let path = Nibbles::from_bytes(key.as_ref());
        let mut path = path.as_slice();
        let mut out = Vec::new();
        let mut next = self.root.clone();
        while let Some(node) = next.take() {
            out.push(node.clone());
            match node.kind() {
                NodeKind::Leaf { .. } => {}
                NodeKind::Extension { path: p, child } => {
                    if path.starts_with(p.as_slice()) {
                        path = &path[p.len()..];
                        next = Some(child.clone());
                    }
                }
                NodeKind::Branch { children, .. } => {
                    if let Some((n, rest)) = path.split_first() {
                        next = children[*n as usize].clone();
                        path = rest;
                    }
                }
                NodeKind::Hash(h) => return Err(TrieError::CorruptNode(*h)),
            }
        }
        Ok(out)
    }

    /// Every hash-referenced node (plus the root) keyed by its hash.
    pub fn node_store(&self) -> HashMap<H256, Vec<u8>> {
        let mut store = HashMap::new();
        if let Some(root) = &self.root {
            if let Some(enc) = root.encoding() {
                store.insert(root.hash(), enc.to_vec());
            }
            walk_store(root, &mut store);
        }
        store
    }

    /// Reassembles a trie from a node store. Nodes missing from the store
    /// stay as placeholders and surface later as [`TrieError::CorruptNode`].
    pub fn from_node_store(root: H256, store: &HashMap<H256, Vec<u8>>) -> Result<Trie, TrieError> {
        if root == empty_root() {
            return Ok(Trie::new());
        }
        let Some(enc) = store.get(&root) else {
            return Ok(Trie::from_root(Some(TrieNode::placeholder(root))));
        };
        if hash(enc) != root {
            return Err(TrieError::CorruptNode(root));
        }
        let node = decode_node(enc)?;
        Ok(Trie::from_root(Some(resolve(&node, store)?)))
    }

    /// Checks the structural invariants on every reachable node.
    pub fn audit(&self) -> Result<(), TrieError> {
        match &self.root {
            None => Ok(()),
            Some(root) => audit_node(root),
        }
    }
}

pub(crate) fn resolve(
    node: &NodeRef,
    store: &HashMap<H256, Vec<u8>>,
) -> Result<NodeRef, TrieError> {
    match node.kind() {
        NodeKind::Hash(h) => match store.get(h) {
            None => Ok(node.clone()),
            Some(enc) => {
                if hash(enc) != *h || enc.len() < INLINE_LIMIT {
                    return Err(TrieError::CorruptNode(*h));
                }
                resolve(&decode_node(enc)?, store)
            }
        },
        NodeKind::Leaf { .. } => Ok(node.clone()),
        NodeKind::Extension { path, child } => {
            Ok(TrieNode::extension(path.clone(), resolve(child, store)?))
        }
        NodeKind::Branch { children, value } => {
            let mut out: Children = Default::default();
            for (slot, child) in out.iter_mut().zip(children.iter()) {
                *slot = child.as_ref().map(|c| resolve(c, store)).transpose()?;
            }
            Ok(TrieNode::branch(out, value.clone()))
        }
    }
}

fn walk_store(node: &NodeRef, store: &mut HashMap<H256, Vec<u8>>) {
    let mut visit = |child: &NodeRef| {
        if child.is_placeholder() {
            return;
        }
        if child.is_hashed() {
            store.insert(child.hash(), child.encoding().expect("full node").to_vec());
        }
        walk_store(child, store);
    };
    match node.kind() {
        NodeKind::Extension { child, .. } => visit(child),
        NodeKind::Branch { children, .. } => children.iter().flatten().for_each(visit),
        _ => {}
    }
}

fn audit_node(node: &NodeRef) -> Result<(), TrieError> {
    match node.kind() {
        NodeKind::Leaf { value, .. } if value.is_empty() => {
            Err(TrieError::Structure("leaf with empty value".into()))
        }
        NodeKind::Leaf { .. } | NodeKind::Hash(_) => Ok(()),
        NodeKind::Extension { path, child } => {
            if path.is_empty() {
                return Err(TrieError::Structure("extension with empty path".into()));
            }
            if !matches!(child.kind(), NodeKind::Branch { .. } | NodeKind::Hash(_)) {
                return Err(TrieError::Structure(
                    "extension child is not a branch".into(),
                ));
            }
            audit_node(child)
        }
        NodeKind::Branch { children, value } => {
            let occupied = children.iter().flatten().count() + usize::from(value.is_some());
            if occupied < 2 {
                return Err(TrieError::Structure(format!(
                    "branch with {occupied} occupied slots"
                )));
            }
            children.iter().flatten().try_for_each(audit_node)
        }
    }
}

fn collect(
    node: &NodeRef,
    prefix: &mut Vec<u8>,
    out: &mut Vec<(Vec<u8>, Vec<u8>)>,
) -> Result<(), TrieError> {
    let pack = |p: &[u8]| {
        Nibbles::from_nibbles(p)
            .to_bytes()
            .ok_or_else(|| TrieError::Structure("odd-length key".into()))
    };
    match node.kind() {
        NodeKind::Leaf { path, value } => {
            let len = prefix.len();
            prefix.extend_from_slice(path.as_slice());
            out.push((pack(prefix)?, value.clone()));
            prefix.truncate(len);
        }
        NodeKind::Extension { path, child } => {
            let len = prefix.len();
            prefix.extend_from_slice(path.as_slice());
            collect(child, prefix, out)?;
            prefix.truncate(len);
        }
        NodeKind::Branch { children, value } => {
            if let Some(v) = value {
                out.push((pack(prefix)?, v.clone()));
            }
            for (i, child) in children.iter().enumerate() {
                if let Some(c) = child {
                    prefix.push(i as u8);
                    collect(c, prefix, out)?;
                    prefix.pop();
                }
            }
        }
        NodeKind::Hash(h) => return Err(TrieError::CorruptNode(*h)),
    }
    Ok(())
}

fn place(children: &mut Children, branch_value: &mut Option<Vec<u8>>, rest: &[u8], value: Vec<u8>) {
    match rest.split_first() {
        None => *branch_value = Some(value),
        Some((n, tail)) => children[*n as usize] = Some(TrieNode::leaf(Nibbles::from(tail), value)),
    }
}

fn wrap_extension(prefix: &[u8], node: NodeRef) -> NodeRef {
    if prefix.is_empty() {
        node
    } else {
        TrieNode::extension(Nibbles::from(prefix), node)
    }
}

fn insert_at(node: Option<&NodeRef>, path: &[u8], value: &[u8]) -> Result<NodeRef, TrieError> {
    let Some(node) = node else {
        return Ok(TrieNode::leaf(Nibbles::from(path), value.to_vec()));
    };
    match node.kind() {
        NodeKind::Leaf { path: p, value: v } => {
            if p.as_slice() == path {
                if v.as_slice() == value {
                    return Ok(node.clone());
                }
                return Ok(TrieNode::leaf(p.clone(), value.to_vec()));
            }
            let c = common_prefix_len(p.as_slice(), path);
            let mut children: Children = Default::default();
            let mut bvalue = None;
            place(&mut children, &mut bvalue, &p.as_slice()[c..], v.clone());
            place(&mut children, &mut bvalue, &path[c..], value.to_vec());
            Ok(wrap_extension(
                &path[..c],
                TrieNode::branch(children, bvalue),
            ))
        }
        NodeKind::Extension { path: p, child } => {
            let p = p.as_slice();
            let c = common_prefix_len(p, path);
            if c == p.len() {
                let new_child = insert_at(Some(child), &path[c..], value)?;
                if Arc::ptr_eq(&new_child, child) {
                    return Ok(node.clone());
                }
                return Ok(TrieNode::extension(Nibbles::from(p), new_child));
            }
            let mut children: Children = Default::default();
            let mut bvalue = None;
            children[p[c] as usize] = Some(wrap_extension(&p[c + 1..], child.clone()));
            place(&mut children, &mut bvalue, &path[c..], value.to_vec());
            Ok(wrap_extension(
                &path[..c],
                TrieNode::branch(children, bvalue),
            ))
        }
        NodeKind::Branch {
            children,
            value: bvalue,
        } => match path.split_first() {
            None => {
                if bvalue.as_deref() == Some(value) {
                    return Ok(node.clone());
                }
                Ok(TrieNode::branch((**children).clone(), Some(value.to_vec())))
            }
            Some((n, rest)) => {
                let slot = &children[*n as usize];
                let new_child = insert_at(slot.as_ref(), rest, value)?;
                if slot.as_ref().is_some_and(|s| Arc::ptr_eq(s, &new_child)) {
                    return Ok(node.clone());
                }
                let mut out = (**children).clone();
                out[*n as usize] = Some(new_child);
                Ok(TrieNode::branch(out, bvalue.clone()))
            }
        },
        NodeKind::Hash(h) => Err(TrieError::CorruptNode(*h)),
    }
}

/// Prepends `prefix` to `node`'s path, merging with leaf and extension paths.
fn with_prefix(prefix: &[u8], node: &NodeRef) -> Result<NodeRef, TrieError> {
    match node.kind() {
        NodeKind::Leaf { path, value } => {
            Ok(TrieNode::leaf(path.prepended(prefix, None), value.clone()))
        }
        NodeKind::Extension { path, child } => Ok(TrieNode::extension(
            path.prepended(prefix, None),
            child.clone(),
        )),
        NodeKind::Branch { .. } => Ok(wrap_extension(prefix, node.clone())),
        NodeKind::Hash(h) => Err(TrieError::CorruptNode(*h)),
    }
}

fn normalize_branch(
    children: Children,
    value: Option<Vec<u8>>,
) -> Result<Option<NodeRef>, TrieError> {
    let occupied: Vec<usize> = (0..16).filter(|i| children[*i].is_some()).collect();
    match (occupied.len(), value) {
        (0, None) => Ok(None),
        (0, Some(v)) => Ok(Some(TrieNode::leaf(Nibbles::default(), v))),
        (1, None) => {
            let i = occupied[0];
            let child = children[i].as_ref().expect("occupied");
            with_prefix(&[i as u8], child).map(Some)
        }
        (_, value) => Ok(Some(TrieNode::branch(children, value))),
    }
}

fn delete_at(node: &NodeRef, path: &[u8]) -> Result<Deleted, TrieError> {
    match node.kind() {
        NodeKind::Leaf { path: p, .. } => Ok(if p.as_slice() == path {
            Deleted::Replaced(None)
        } else {
            Deleted::Unchanged
        }),
        NodeKind::Extension { path: p, child } => {
            if !path.starts_with(p.as_slice()) {
                return Ok(Deleted::Unchanged);
            }
            match delete_at(child, &path[p.len()..])? {
                Deleted::Unchanged => Ok(Deleted::Unchanged),
                Deleted::Replaced(None) => Ok(Deleted::Replaced(None)),
                Deleted::Replaced(Some(n)) => {
                    Ok(Deleted::Replaced(Some(with_prefix(p.as_slice(), &n)?)))
                }
            }
        }
        NodeKind::Branch { children, value } => match path.split_first() {
            None => {
                if value.is_none() {
                    return Ok(Deleted::Unchanged);
                }
                normalize_branch((**children).clone(), None).map(Deleted::Replaced)
            }
            Some((n, rest)) => {
                let Some(child) = &children[*n as usize] else {
                    return Ok(Deleted::Unchanged);
                };
                match delete_at(child, rest)? {
                    Deleted::Unchanged => Ok(Deleted::Unchanged),
                    Deleted::Replaced(new_child) => {
                        let mut out = (**children).clone();
                        out[*n as usize] = new_child;
                        normalize_branch(out, value.clone()).map(Deleted::Replaced)
                    }
                }
            }
        },
        NodeKind::Hash(h) => Err(TrieError::CorruptNode(*h)),
    }
}
