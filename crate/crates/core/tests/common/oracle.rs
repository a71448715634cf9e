//! Deliberately naive reference: a flat sorted map, a full recursive build
//! of the trie per instance, and proofs assembled from per-key path walks. Shares no
//! code with the library beyond the hash primitive from `sha2`.

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

pub type Key = [u8; 32];

fn sha(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

fn varint(out: &mut Vec<u8>, mut n: u64) {
    loop {
        let b = (n & 0x7f) as u8;
        n >>= 7;
        if n == 0 {
            out.push(b);
            return;
        }
        out.push(b | 0x80);
    }
}

fn bstr(out: &mut Vec<u8>, b: &[u8]) {
    varint(out, b.len() as u64);
    out.extend_from_slice(b);
}

fn list(out: &mut Vec<u8>, n: usize) {
    out.push(0xC0);
    varint(out, n as u64);
}

fn hex_prefix(path: &[u8], leaf: bool) -> Vec<u8> {
    let mut flag = if leaf { 2u8 } else { 0 };
    let mut nibbles = Vec::new();
    if path.len() % 2 == 1 {
        flag += 1;
        nibbles.push(flag);
    } else {
        nibbles.push(flag);
        nibbles.push(0);
    }
    nibbles.extend_from_slice(path);
    nibbles.chunks(2).map(|p| p[0] * 16 + p[1]).collect()
}

fn nibbles(key: &Key) -> Vec<u8> {
    key.iter().flat_map(|b| [b >> 4, b & 15]).collect()
}

enum Kind {
    Leaf(Vec<u8>, Vec<u8>),
    Ext(Vec<u8>, Box<Node>),
    Branch(Vec<Option<Node>>),
}

struct Node {
    kind: Kind,
    enc: Vec<u8>,
}

impl Node {
    fn new(kind: Kind) -> Self {
        let enc = encode(&kind);
        Node { kind, enc }
    }
}

fn build(items: &[(Vec<u8>, Vec<u8>)], depth: usize) -> Node {
    if items.len() == 1 {
        return Node::new(Kind::Leaf(items[0].0[depth..].to_vec(), items[0].1.clone()));
    }
    let first = &items[0].0;
    let mut shared = 0;
    while items
        .iter()
        .all(|(p, _)| p[depth + shared] == first[depth + shared])
    {
        shared += 1;
    }
    if shared > 0 {
        return Node::new(Kind::Ext(
            first[depth..depth + shared].to_vec(),
            Box::new(build(items, depth + shared)),
        ));
    }
    let mut children = Vec::new();
    for n in 0..16u8 {
        let group: Vec<_> = items
            .iter()
            .filter(|(p, _)| p[depth] == n)
            .cloned()
            .collect();
        children.push((!group.is_empty()).then(|| build(&group, depth + 1)));
    }
    Node::new(Kind::Branch(children))
}

fn encode(kind: &Kind) -> Vec<u8> {
    let mut out = Vec::new();
    match kind {
        Kind::Leaf(path, value) => {
            list(&mut out, 3);
            bstr(&mut out, &[0]);
            bstr(&mut out, &hex_prefix(path, true));
            bstr(&mut out, value);
        }
        Kind::Ext(path, child) => {
            list(&mut out, 3);
            bstr(&mut out, &[1]);
            bstr(&mut out, &hex_prefix(path, false));
            child_ref(&mut out, child);
        }
        Kind::Branch(children) => {
            list(&mut out, 18);
            bstr(&mut out, &[2]);
            for c in children {
                match c {
                    Some(c) => child_ref(&mut out, c),
                    None => bstr(&mut out, &[]),
                }
            }
            bstr(&mut out, &[]);
        }
    }
    out
}

fn child_ref(out: &mut Vec<u8>, child: &Node) {
    if child.enc.len() < 32 {
        out.extend_from_slice(&child.enc);
    } else {
        bstr(out, &sha(&child.enc));
    }
}

fn hashed(node: &Node) -> bool {
    node.enc.len() >= 32
}

pub fn empty_root() -> [u8; 32] {
    sha(&[0xC0, 0x00])
}

/// Flat key-value map with a from-scratch trie built at construction.
pub struct Oracle {
    pub map: BTreeMap<Key, Vec<u8>>,
    tree: Option<Node>,
}

impl Oracle {
    pub fn new(map: BTreeMap<Key, Vec<u8>>) -> Self {
        let items: Vec<(Vec<u8>, Vec<u8>)> =
            map.iter().map(|(k, v)| (nibbles(k), v.clone())).collect();
        let tree = (!items.is_empty()).then(|| build(&items, 0));
        Oracle { map, tree }
    }

    pub fn root(&self) -> [u8; 32] {
        self.tree
            .as_ref()
            .map(|t| sha(&t.enc))
            .unwrap_or_else(empty_root)
    }

    /// Hash-referenced node encodings on the key's path (root first), and
    /// the nibble positions of every node visited.
    fn walk(root: &Node, key: &Key) -> (Vec<Vec<u8>>, Vec<Vec<u8>>) {
        let path = nibbles(key);
        let mut nodes = vec![root.enc.clone()];
        let mut positions = vec![Vec::new()];
        let mut node = root;
        let mut depth = 0;
        loop {
            let next = match &node.kind {
                Kind::Leaf(..) => None,
                Kind::Ext(p, child) => path[depth..].starts_with(p).then(|| {
                    depth += p.len();
                    child.as_ref()
                }),
                Kind::Branch(children) => {
                    let c = children[path[depth] as usize].as_ref();
                    depth += 1;
                    c
                }
            };
            let Some(n) = next else { break };
            if hashed(n) {
                nodes.push(n.enc.clone());
            }
            positions.push(path[..depth].to_vec());
            node = n;
        }
        (nodes, positions)
    }

    pub fn single_proof_nodes(&self, key: &Key) -> Vec<Vec<u8>> {
        self.tree
            .as_ref()
            .map(|t| Self::walk(t, key).0)
            .unwrap_or_default()
    }

    /// Byte image of a storage proof for `key`.
    pub fn single_proof_bytes(&self, key: &Key) -> Vec<u8> {
        let mut out = vec![0x53];
        out.extend_from_slice(key);
        match self.map.get(key) {
            None => out.push(0),
            Some(v) => {
                out.push(1);
                bstr(&mut out, v);
            }
        }
        let nodes = self.single_proof_nodes(key);
        varint(&mut out, nodes.len() as u64);
        nodes.iter().for_each(|n| out.extend_from_slice(n));
        out
    }

    /// Byte image of a multi proof: the union of the keys' single-proof
    /// paths plus the lone untouched sibling of every branch on them,
    /// emitted in pre-order with everything else replaced by its hash.
    pub fn multi_proof_bytes(&self, keys: &[Key]) -> Vec<u8> {
        let keys: BTreeSet<Key> = keys.iter().copied().collect();
        let mut out = vec![0x4D];
        varint(&mut out, keys.len() as u64);
        keys.iter().for_each(|k| out.extend_from_slice(k));
        let Some(tree) = self.tree.as_ref() else {
            varint(&mut out, 0);
            return out;
        };
        let on_path: BTreeSet<Vec<u8>> = keys.iter().flat_map(|k| Self::walk(tree, k).1).collect();
        let mut items = Vec::new();
        emit(tree, &mut Vec::new(), &on_path, false, &mut items);
        varint(&mut out, items.len() as u64);
        items.iter().for_each(|i| out.extend_from_slice(i));
        out
    }

    /// Multi-proof node count made of path nodes only (no siblings).
    pub fn union_path_nodes(&self, keys: &[Key]) -> usize {
        let all: BTreeSet<Vec<u8>> = keys
            .iter()
            .flat_map(|k| self.single_proof_nodes(k))
            .collect();
        all.len()
    }
}

fn emit(
    node: &Node,
    pos: &mut Vec<u8>,
    on_path: &BTreeSet<Vec<u8>>,
    shallow: bool,
    items: &mut Vec<Vec<u8>>,
) {
    items.push(node.enc.clone());
    let visit = |child: &Node, pos: &mut Vec<u8>, sibling: bool, items: &mut Vec<Vec<u8>>| {
        if !hashed(child) {
            return;
        }
        if !shallow && (on_path.contains(pos.as_slice()) || sibling) {
            emit(child, pos, on_path, sibling, items);
        } else {
            let mut p = vec![0xFE];
            p.extend_from_slice(&sha(&child.enc));
            items.push(p);
        }
    };
    match &node.kind {
        Kind::Leaf(..) => {}
        Kind::Ext(p, child) => {
            let len = pos.len();
            pos.extend_from_slice(p);
            visit(child, pos, false, items);
            pos.truncate(len);
        }
        Kind::Branch(children) => {
            let occupied: Vec<u8> = (0..16u8)
                .filter(|n| children[*n as usize].is_some())
                .collect();
            let untouched: Vec<u8> = occupied
                .iter()
                .copied()
                .filter(|n| {
                    let mut p = pos.clone();
                    p.push(*n);
                    !on_path.contains(&p)
                })
                .collect();
            let branch_on_path = on_path.contains(pos.as_slice());
            for n in occupied {
                pos.push(n);
                let sibling = branch_on_path && untouched.len() == 1 && untouched[0] == n;
                visit(
                    children[n as usize].as_ref().expect("occupied"),
                    pos,
                    sibling,
                    items,
                );
                pos.pop();
            }
        }
    }
}
