use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::trie::{StateKey, StateValue, Trie, TrieError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Create,
    Update,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub key: StateKey,
    pub old: Option<StateValue>,
    pub new: Option<StateValue>,
}

impl DiffEntry {
    pub fn kind(&self) -> ChangeKind {
        match (&self.old, &self.new) {
            (None, _) => ChangeKind::Create,
            (_, None) => ChangeKind::Delete,
            _ => ChangeKind::Update,
        }
    }
}

/// Net effect of a state transition, sorted by key. Entries never have
/// `old == new`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDiff {
    entries: Vec<DiffEntry>,
}

impl StateDiff {
    /// Keeps only real changes; later duplicates of a key are composed onto
    /// the first (first old, last new).
    pub fn from_changes<I>(changes: I) -> Self
    where
        I: IntoIterator<Item = (StateKey, Option<StateValue>, Option<StateValue>)>,
    {
        let mut net: BTreeMap<StateKey, (Option<StateValue>, Option<StateValue>)> = BTreeMap::new();
        for (key, old, new) in changes {
            net.entry(key)
                .and_modify(|e| e.1 = new.clone())
                .or_insert((old, new));
        }
        let entries = net
            .into_iter()
            .filter(|(_, (old, new))| old != new)
            .map(|(key, (old, new))| DiffEntry { key, old, new })
            .collect();
        StateDiff { entries }
    }

    pub fn between(
        old: &BTreeMap<StateKey, StateValue>,
        new: &BTreeMap<StateKey, StateValue>,
    ) -> Self {
        let keys: std::collections::BTreeSet<&StateKey> = old.keys().chain(new.keys()).collect();
        Self::from_changes(
            keys.into_iter()
                .map(|k| (*k, old.get(k).cloned(), new.get(k).cloned())),
        )
    }

    /// Diffs two tries by iterating both.
    pub fn between_tries(old: &Trie, new: &Trie) -> Result<Self, TrieError> {
        Ok(Self::between(
            &old.storage_entries()?,
            &new.storage_entries()?,
        ))
    }

    /// `self` followed by `later`.
    pub fn compose(&self, later: &StateDiff) -> StateDiff {
        Self::from_changes(
            self.entries
                .iter()
                .chain(&later.entries)
                .map(|e| (e.key, e.old.clone(), e.new.clone())),
        )
    }

    pub fn entries(&self) -> &[DiffEntry] {
        &self.entries
    }

    pub fn keys(&self) -> Vec<StateKey> {
        self.entries.iter().map(|e| e.key).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, kind: ChangeKind) -> usize {
        self.entries.iter().filter(|e| e.kind() == kind).count()
    }

    pub fn apply_to(&self, trie: &mut Trie) -> Result<(), TrieError> {
        for e in &self.entries {
            trie.set(e.key, e.new.as_ref().map(StateValue::as_bytes))?;
        }
        Ok(())
    }
}
