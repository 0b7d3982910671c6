//! Durable ledger storage: an append-only block file plus periodic state
//! snapshots. On restart the block file is replayed and checked against
//! the latest snapshot.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use doorchain_core::endorsement::validate_block;
use doorchain_core::ledger::{decode_block_file, encode_block_record};
use doorchain_core::state::VersionedValue;
use doorchain_core::{Block, Hash, Ledger};
use serde::{Deserialize, Serialize};

pub const BLOCK_FILE: &str = "blocks.dat";
pub const SNAPSHOT_FILE: &str = "state.snapshot.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateSnapshot {
    pub height: u64,
    pub state_hash: Hash,
    pub entries: Vec<(String, VersionedValue)>,
}

impl StateSnapshot {
    pub fn of(ledger: &Ledger) -> Self {
        StateSnapshot {
            height: ledger.height(),
            state_hash: ledger.state_hash(),
            entries: ledger.state().iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }
}

#[derive(Debug)]
pub struct BlockStore {
    dir: PathBuf,
    file: File,
    snapshot_interval: u64,
}

impl BlockStore {
    /// Opens (creating if needed) the store in `dir`. Returns the store and
    /// any blocks already on disk.
    pub fn open(dir: &Path, snapshot_interval: u64) -> anyhow::Result<(Self, Vec<Block>)> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(BLOCK_FILE);
        let blocks = match std::fs::read(&path) {
            Ok(bytes) => decode_block_file(&bytes).with_context(|| format!("reading {}", path.display()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
        };
        let file = OpenOptions::new().create(true).append(true).open(&path).with_context(|| format!("opening {}", path.display()))?;
        Ok((BlockStore { dir: dir.to_path_buf(), file, snapshot_interval }, blocks))
    }

    pub fn block_file(&self) -> PathBuf {
        self.dir.join(BLOCK_FILE)
    }

    pub fn append(&mut self, block: &Block) -> anyhow::Result<()> {
        self.file.write_all(&encode_block_record(block))?;
        self.file.sync_data()?;
        Ok(())
    }

    /// Appends a committed block and snapshots the state when due.
    pub fn record_commit(&mut self, ledger: &Ledger) -> anyhow::Result<()> {
        self.append(ledger.tip())?;
        if self.snapshot_interval > 0 && ledger.height().is_multiple_of(self.snapshot_interval) {
            self.write_snapshot(&StateSnapshot::of(ledger))?;
        }
        Ok(())
    }

    pub fn write_snapshot(&self, snapshot: &StateSnapshot) -> anyhow::Result<()> {
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec(snapshot)?)?;
        std::fs::rename(&tmp, self.dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }

    pub fn read_snapshot(&self) -> anyhow::Result<Option<StateSnapshot>> {
        match std::fs::read(self.dir.join(SNAPSHOT_FILE)) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes).context("parsing state snapshot")?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

/// Rebuilds a ledger from stored blocks, re-validating each block and
/// checking the state against `snapshot` when its height is reached.
pub fn restore(blocks: Vec<Block>, snapshot: Option<&StateSnapshot>) -> anyhow::Result<Ledger> {
    let mut iter = blocks.into_iter();
    let genesis = iter.next().context("block file is empty")?;
    let mut ledger = Ledger::from_genesis(genesis)?;
    let check = |ledger: &Ledger| -> anyhow::Result<()> {
        if let Some(s) = snapshot.filter(|s| s.height == ledger.height()) {
            if s.state_hash != ledger.state_hash() {
                bail!("state at height {} does not match the snapshot", s.height);
            }
        }
        Ok(())
    };
    check(&ledger)?;
    for block in iter {
        let height = block.header.height;
        let recorded = block.commit_hash;
        if validate_block(&ledger, &block) != block.validity {
            bail!("block {height}: recorded validity flags differ from re-validation");
        }
        ledger.append_block(block)?;
        if ledger.tip().commit_hash != recorded {
            bail!("block {height}: commit hash mismatch");
        }
        check(&ledger)?;
    }
    if let Some(s) = snapshot {
        if s.height > ledger.height() {
            bail!("snapshot at height {} is ahead of the block file (height {})", s.height, ledger.height());
        }
    }
    Ok(ledger)
}
