//! Versioned key-value world state and read-write sets.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::hash::Hash;

/// Position of the write that produced a value: (block height, offset of
/// the transaction inside that block).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Version {
    pub block_height: u64,
    pub tx_offset: u32,
}

impl Version {
    pub const fn new(block_height: u64, tx_offset: u32) -> Self {
        Version { block_height, tx_offset }
    }
}

impl Canonical for Version {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u64(self.block_height).put_u32(self.tx_offset);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Version { block_height: dec.get_u64()?, tx_offset: dec.get_u32()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionedValue {
    #[serde(with = "crate::codec::base64_bytes")]
    pub value: Vec<u8>,
    pub version: Version,
}

/// Read access to an immutable snapshot of the world state.
pub trait StateView {
    fn read(&self, key: &str) -> Option<&VersionedValue>;

    /// All entries whose key starts with `prefix`, in key order.
    fn range_read(&self, prefix: &str) -> Vec<(&str, &VersionedValue)>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldState {
    entries: BTreeMap<String, VersionedValue>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn version_of(&self, key: &str) -> Option<Version> {
        self.entries.get(key).map(|v| v.version)
    }

    /// Applies one write. `None` deletes the key.
    pub fn apply(&mut self, key: &str, value: Option<&[u8]>, version: Version) {
        debug_assert!(
            self.version_of(key).is_none_or(|old| old < version),
            "versions must be monotone per key"
        );
        match value {
            Some(bytes) => {
                self.entries.insert(String::from(key), VersionedValue { value: bytes.to_vec(), version });
            }
            None => {
                self.entries.remove(key);
            }
        }
    }

    pub fn apply_rwset(&mut self, rwset: &ReadWriteSet, version: Version) {
        for write in &rwset.writes {
            self.apply(&write.key, write.value.as_deref(), version);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &VersionedValue)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// SHA-256 over the key-sorted sequence of (key, value, version), each
    /// entry canonically encoded. The empty state hashes the empty input.
    pub fn state_hash(&self) -> Hash {
        let mut enc = Encoder::new();
        for (key, entry) in &self.entries {
            enc.put_str(key).put_bytes(&entry.value).put(&entry.version);
        }
        Hash::of(&enc.into_bytes())
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, VersionedValue)>) -> Self {
        WorldState { entries: entries.into_iter().collect() }
    }
}

impl StateView for WorldState {
    fn read(&self, key: &str) -> Option<&VersionedValue> {
        self.entries.get(key)
    }

    fn range_read(&self, prefix: &str) -> Vec<(&str, &VersionedValue)> {
        self.entries
            .range::<str, _>((core::ops::Bound::Included(prefix), core::ops::Bound::Unbounded))
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.as_str(), v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvRead {
    pub key: String,
    /// `None` when the key was absent.
    pub version: Option<Version>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvWrite {
    pub key: String,
    /// `None` marks a deletion.
    #[serde(with = "crate::codec::base64_bytes::option")]
    pub value: Option<Vec<u8>>,
}

/// Keys and versions observed plus writes produced by one simulated
/// execution. Both lists are sorted by key and duplicate-free.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadWriteSet {
    pub reads: Vec<KvRead>,
    pub writes: Vec<KvWrite>,
}

impl ReadWriteSet {
    pub fn writes_key(&self, key: &str) -> bool {
        self.writes.iter().any(|w| w.key == key)
    }
}

impl Canonical for ReadWriteSet {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_seq(&self.reads, |enc, r| {
            enc.put_str(&r.key).put_option(r.version.as_ref(), |enc, v| {
                enc.put(v);
            });
        });
        enc.put_seq(&self.writes, |enc, w| {
            enc.put_str(&w.key).put_option(w.value.as_ref(), |enc, v| {
                enc.put_bytes(v);
            });
        });
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let reads = dec.get_seq(|d| Ok(KvRead { key: d.get_string()?, version: d.get_option(|d| d.get())? }))?;
        let writes = dec.get_seq(|d| {
            Ok(KvWrite { key: d.get_string()?, value: d.get_option(|d| d.get_bytes().map(<[u8]>::to_vec))? })
        })?;
        Ok(ReadWriteSet { reads, writes })
    }
}

/// A snapshot wrapper that records every key read and buffers writes.
pub struct RecordingView<'a, V: StateView + ?Sized> {
    inner: &'a V,
    reads: BTreeMap<String, Option<Version>>,
    writes: BTreeMap<String, Option<Vec<u8>>>,
}

impl<'a, V: StateView + ?Sized> RecordingView<'a, V> {
    pub fn new(inner: &'a V) -> Self {
        RecordingView { inner, reads: BTreeMap::new(), writes: BTreeMap::new() }
    }

    /// Reads through pending writes first; only snapshot reads are recorded.
    pub fn get(&mut self, key: &str) -> Option<(Vec<u8>, Option<Version>)> {
        if let Some(pending) = self.writes.get(key) {
            return pending.clone().map(|v| (v, None));
        }
        let found = self.inner.read(key);
        self.reads.entry(String::from(key)).or_insert(found.map(|v| v.version));
        found.map(|v| (v.value.clone(), Some(v.version)))
    }

    pub fn put(&mut self, key: String, value: Vec<u8>) {
        self.writes.insert(key, Some(value));
    }

    pub fn delete(&mut self, key: String) {
        self.writes.insert(key, None);
    }

    pub fn discard_writes(&mut self) {
        self.writes.clear();
    }

    pub fn into_rwset(self) -> ReadWriteSet {
        ReadWriteSet {
            reads: self.reads.into_iter().map(|(key, version)| KvRead { key, version }).collect(),
            writes: self.writes.into_iter().map(|(key, value)| KvWrite { key, value }).collect(),
        }
    }
}
