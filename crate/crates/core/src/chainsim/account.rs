use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec::{
    put_bytes, put_list_header, put_varint, uint_bytes, uint_from_bytes, DecodeError, Reader,
};
use crate::hash::{hash, H256};
use crate::node::read_node;
use crate::proofs::{verify_path, PathOutcome, ProofError};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn from_low_u64(v: u64) -> Self {
        let mut a = [0u8; 20];
        a[12..].copy_from_slice(&v.to_be_bytes());
        Address(a)
    }
}

impl AsRef<[u8]> for Address {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl FromStr for Address {
    type Err = hex::FromHexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 20];
        hex::decode_to_slice(s.strip_prefix("0x").unwrap_or(s), &mut out)?;
        Ok(Address(out))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// An entry of the global state trie, keyed there by `address`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AccountTuple {
    pub address: Address,
    pub nonce: u64,
    pub balance: u128,
    pub storage_root: H256,
    pub code_hash: H256,
}

impl AccountTuple {
    /// Trie value: `list[nonce, balance, storageRoot, codeHash]`.
    pub fn encode_value(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(80);
        put_list_header(&mut out, 4);
        put_bytes(&mut out, &uint_bytes(u128::from(self.nonce)));
        put_bytes(&mut out, &uint_bytes(self.balance));
        put_bytes(&mut out, self.storage_root.as_bytes());
        put_bytes(&mut out, self.code_hash.as_bytes());
        out
    }

    pub fn decode_value(address: Address, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        if r.list_header()? != 4 {
            return Err(DecodeError::InvalidNode("account tuple arity"));
        }
        let nonce = uint_from_bytes(r.bytes()?)?;
        let nonce =
            u64::try_from(nonce).map_err(|_| DecodeError::NonCanonical("nonce too wide"))?;
        let balance = uint_from_bytes(r.bytes()?)?;
        let storage_root =
            H256::from_slice(r.bytes()?).ok_or(DecodeError::InvalidNode("storage root size"))?;
        let code_hash =
            H256::from_slice(r.bytes()?).ok_or(DecodeError::InvalidNode("code hash size"))?;
        r.finish()?;
        Ok(AccountTuple {
            address,
            nonce,
            balance,
            storage_root,
            code_hash,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockHeader {
    pub number: u64,
    pub parent_hash: H256,
    pub global_state_root: H256,
    pub timestamp: u64,
}

impl BlockHeader {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(80);
        put_list_header(&mut out, 4);
        put_bytes(&mut out, &uint_bytes(u128::from(self.number)));
        put_bytes(&mut out, self.parent_hash.as_bytes());
        put_bytes(&mut out, self.global_state_root.as_bytes());
        put_bytes(&mut out, &uint_bytes(u128::from(self.timestamp)));
        out
    }

    pub fn hash(&self) -> H256 {
        hash(&self.encode())
    }
}

/// Inclusion (or non-inclusion) of an account in a block's global state trie.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountProof {
    pub block_number: u64,
    pub address: Address,
    pub account: Option<AccountTuple>,
    pub nodes: Vec<Vec<u8>>,
}

pub(crate) const ACCOUNT_PROOF_TAG: u8 = 0x41;

impl AccountProof {
    /// Checks the proof against `global_root` and returns the proven account.
    pub fn verify(&self, global_root: H256) -> Result<Option<&AccountTuple>, ProofError> {
        let outcome = verify_path(global_root, self.address.as_ref(), &self.nodes)?;
        match (&outcome, &self.account) {
            (PathOutcome::Found(v), Some(acc)) => {
                if acc.address != self.address || *v != acc.encode_value() {
                    return Err(ProofError::ValueMismatch);
                }
                Ok(Some(acc))
            }
            (PathOutcome::Absent | PathOutcome::OtherLeaf, None) => Ok(None),
            (PathOutcome::OtherLeaf, Some(_)) => Err(ProofError::PathMismatch),
            _ => Err(ProofError::ValueMismatch),
        }
    }

    /// `0x41 ‖ varint block ‖ address ‖ (0x00 | 0x01 ‖ bytes(account)) ‖ varint n ‖ nodes`
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out);
        out
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>) {
        out.push(ACCOUNT_PROOF_TAG);
        put_varint(out, self.block_number);
        out.extend_from_slice(&self.address.0);
        match &self.account {
            None => out.push(0),
            Some(acc) => {
                out.push(1);
                put_bytes(out, &acc.encode_value());
            }
        }
        put_varint(out, self.nodes.len() as u64);
        for n in &self.nodes {
            out.extend_from_slice(n);
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProofError> {
        let mut r = Reader::new(bytes);
        let p = Self::read(&mut r)?;
        r.finish()?;
        Ok(p)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, ProofError> {
        if r.byte()? != ACCOUNT_PROOF_TAG {
            return Err(ProofError::MalformedSubtree("not an account proof"));
        }
        let block_number = r.varint()?;
        let address = Address(r.array()?);
        let account = match r.byte()? {
            0 => None,
            1 => Some(AccountTuple::decode_value(address, r.bytes()?)?),
            _ => return Err(ProofError::MalformedSubtree("bad account flag")),
        };
        let count = r.length()?;
        let mut nodes = Vec::new();
        for _ in 0..count {
            let start = r.position();
            read_node(r)?;
            nodes.push(r.consumed_since(start).to_vec());
        }
        Ok(AccountProof {
            block_number,
            address,
            account,
            nodes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn account_value_round_trip() {
        let acc = AccountTuple {
            address: Address::from_low_u64(7),
            nonce: 3,
            balance: 10u128.pow(20),
            storage_root: hash(b"s"),
            code_hash: hash(b"c"),
        };
        let enc = acc.encode_value();
        assert_eq!(AccountTuple::decode_value(acc.address, &enc).unwrap(), acc);
        let mut bad = enc.clone();
        bad.push(0);
        assert!(AccountTuple::decode_value(acc.address, &bad).is_err());
    }

    #[test]
    fn header_hash_covers_every_field() {
        let h = BlockHeader {
            number: 1,
            parent_hash: H256::ZERO,
            global_state_root: hash(b"r"),
            timestamp: 12,
        };
        let mut other = h.clone();
        other.timestamp = 13;
        assert_ne!(h.hash(), other.hash());
        let mut other = h.clone();
        other.parent_hash = hash(b"p");
        assert_ne!(h.hash(), other.hash());
    }

    #[test]
    fn address_hex() {
        let a: Address = "0x00000000000000000000000000000000000000ff"
            .parse()
            .unwrap();
        assert_eq!(a, Address::from_low_u64(255));
        assert_eq!(a.to_string(), "0x00000000000000000000000000000000000000ff");
    }
}
