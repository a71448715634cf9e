pub mod bench;
pub mod chainsim;
pub mod codec;
pub mod hash;
pub mod nibbles;
pub mod node;
pub mod proofs;
pub mod proxy;
pub mod relay;
pub mod syncclient;
pub mod trie;
