//! Target-side store of source-chain headers. Headers are accepted on
//! lineage and monotonicity alone; consensus validation is not modelled.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chainsim::BlockHeader;
use crate::hash::H256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelayError {
    #[error("header {number} is not above the highest finalized block {highest}")]
    StaleHeader { number: u64, highest: u64 },
    #[error("header {0} does not extend the stored predecessor")]
    BrokenLineage(u64),
    #[error("no header stored for block {0}")]
    HeaderUnavailable(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RelayEntry {
    pub global_state_root: H256,
    pub header_hash: H256,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RelayStore {
    entries: BTreeMap<u64, RelayEntry>,
    highest_finalized: Option<u64>,
}

pub type SharedRelay = Arc<RwLock<RelayStore>>;

impl RelayStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shared(self) -> SharedRelay {
        Arc::new(RwLock::new(self))
    }

    pub fn highest_finalized(&self) -> Option<u64> {
        self.highest_finalized
    }

    /// Gaps are allowed; the parent hash is only checked when block `number - 1` is stored.
    pub fn submit_header(&mut self, header: &BlockHeader) -> Result<(), RelayError> {
        if let Some(highest) = self.highest_finalized {
            if header.number <= highest {
                return Err(RelayError::StaleHeader {
                    number: header.number,
                    highest,
                });
            }
        }
        if let Some(parent) = header
            .number
            .checked_sub(1)
            .and_then(|n| self.entries.get(&n))
        {
            if parent.header_hash != header.parent_hash {
                return Err(RelayError::BrokenLineage(header.number));
            }
        }
        self.entries.insert(
            header.number,
            RelayEntry {
                global_state_root: header.global_state_root,
                header_hash: header.hash(),
            },
        );
        self.highest_finalized = Some(header.number);
        Ok(())
    }

    pub fn get_state_root(&self, number: u64) -> Result<H256, RelayError> {
        self.entry(number).map(|e| e.global_state_root)
    }

    pub fn entry(&self, number: u64) -> Result<RelayEntry, RelayError> {
        self.entries
            .get(&number)
            .copied()
            .ok_or(RelayError::HeaderUnavailable(number))
    }

    pub fn contains(&self, number: u64) -> bool {
        self.entries.contains_key(&number)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
