//! The transaction log (hash-chained blocks) and the world state and
//! historian derived from it.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::acl::Decision;
use crate::chaincode::{self, ChainEvent, EventKind, TransactionPayload, TxContext, TxResponse};
use crate::codec::{to_canonical_json, Canonical, DecodeError, Decoder, Encoder};
use crate::config::GenesisConfig;
use crate::crypto::Signature;
use crate::domain::{verify_card, HolderCard, IdentityCard, ParticipantId};
use crate::endorsement::{EndorserSignature, Proposal};
use crate::hash::Hash;
use crate::state::{ReadWriteSet, Version, WorldState};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    InvalidMvcc,
    InvalidEndorsement,
    /// The transaction id was already committed as valid.
    DuplicateTxId,
}

impl Validity {
    pub fn is_valid(self) -> bool {
        self == Validity::Valid
    }

    fn code(self) -> u8 {
        match self {
            Validity::Valid => 0,
            Validity::InvalidMvcc => 1,
            Validity::InvalidEndorsement => 2,
            Validity::DuplicateTxId => 3,
        }
    }

    fn from_code(code: u8) -> Result<Self, DecodeError> {
        match code {
            0 => Ok(Validity::Valid),
            1 => Ok(Validity::InvalidMvcc),
            2 => Ok(Validity::InvalidEndorsement),
            3 => Ok(Validity::DuplicateTxId),
            other => Err(DecodeError::InvalidTag(other)),
        }
    }
}

/// An ordered, endorsed transaction as carried in a block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransactionEnvelope {
    pub tx_id: Hash,
    pub submitter: IdentityCard,
    pub nonce: u64,
    pub submitted_at: Timestamp,
    pub payload: TransactionPayload,
    pub client_signature: Signature,
    pub endorsements: Vec<EndorserSignature>,
    pub rwset: ReadWriteSet,
    pub events: Vec<ChainEvent>,
    pub response: TxResponse,
}

impl TransactionEnvelope {
    pub fn proposal(&self) -> Proposal {
        Proposal {
            submitter: self.submitter.clone(),
            nonce: self.nonce,
            proposed_at: self.submitted_at,
            payload: self.payload.clone(),
            client_signature: self.client_signature,
        }
    }
}

fn decode_json<T: serde::de::DeserializeOwned>(bytes: &[u8], what: &str) -> Result<T, DecodeError> {
    serde_json::from_slice(bytes).map_err(|e| DecodeError::Invalid(format!("{what}: {e}")))
}

impl Canonical for TransactionEnvelope {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.tx_id)
            .put(&self.submitter)
            .put_u64(self.nonce)
            .put(&self.submitted_at)
            .put_bytes(&to_canonical_json(&self.payload))
            .put(&self.client_signature)
            .put_seq(&self.endorsements, |enc, e| {
                enc.put(e);
            })
            .put(&self.rwset)
            .put_bytes(&to_canonical_json(&self.events))
            .put_bytes(&to_canonical_json(&self.response));
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(TransactionEnvelope {
            tx_id: dec.get()?,
            submitter: dec.get()?,
            nonce: dec.get_u64()?,
            submitted_at: dec.get()?,
            payload: decode_json(dec.get_bytes()?, "payload")?,
            client_signature: dec.get()?,
            endorsements: dec.get_seq(|d| d.get())?,
            rwset: dec.get()?,
            events: decode_json(dec.get_bytes()?, "events")?,
            response: decode_json(dec.get_bytes()?, "response")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Hash,
    pub data_hash: Hash,
    pub timestamp: Timestamp,
    pub block_hash: Hash,
}

/// SHA-256 over (height, prevHash, dataHash, timestamp) in canonical form.
pub fn compute_block_hash(height: u64, prev_hash: &Hash, data_hash: &Hash, timestamp: Timestamp) -> Hash {
    let mut enc = Encoder::new();
    enc.put_u64(height).put(prev_hash).put(data_hash).put(&timestamp);
    Hash::of(&enc.into_bytes())
}

/// Canonical encoding of a transaction list: a count followed by each
/// length-prefixed envelope.
pub fn encode_transactions(transactions: &[TransactionEnvelope]) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_seq(transactions, |enc, tx| {
        enc.put_bytes(&tx.to_canonical_bytes());
    });
    enc.into_bytes()
}

pub fn compute_data_hash(transactions: &[TransactionEnvelope]) -> Hash {
    Hash::of(&encode_transactions(transactions))
}

/// Chains validation results: H(prevCommitHash || blockHash || flags).
pub fn compute_commit_hash(prev_commit_hash: &Hash, block_hash: &Hash, validity: &[Validity]) -> Hash {
    let mut enc = Encoder::new();
    enc.put(prev_commit_hash).put(block_hash).put_seq(validity, |enc, v| {
        enc.put_u8(v.code());
    });
    Hash::of(&enc.into_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<TransactionEnvelope>,
    /// Per-transaction validation flags; empty until validated.
    pub validity: Vec<Validity>,
    /// Links this block's validation flags to the previous block's, so the
    /// flags are tamper-evident too. Zero until committed.
    pub commit_hash: Hash,
}

impl Block {
    /// Builds an unvalidated block with its data and block hashes filled in.
    pub fn new(height: u64, prev_hash: Hash, timestamp: Timestamp, transactions: Vec<TransactionEnvelope>) -> Self {
        let data_hash = compute_data_hash(&transactions);
        let block_hash = compute_block_hash(height, &prev_hash, &data_hash, timestamp);
        Block {
            header: BlockHeader { height, prev_hash, data_hash, timestamp, block_hash },
            transactions,
            validity: Vec::new(),
            commit_hash: Hash::ZERO,
        }
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }
}

impl Canonical for Block {
    fn encode(&self, enc: &mut Encoder) {
        let h = &self.header;
        enc.put_u64(h.height).put(&h.prev_hash).put(&h.data_hash).put(&h.timestamp).put(&h.block_hash);
        enc.put_raw(&encode_transactions(&self.transactions));
        enc.put_seq(&self.validity, |enc, v| {
            enc.put_u8(v.code());
        });
        enc.put(&self.commit_hash);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let header = BlockHeader {
            height: dec.get_u64()?,
            prev_hash: dec.get()?,
            data_hash: dec.get()?,
            timestamp: dec.get()?,
            block_hash: dec.get()?,
        };
        let transactions = dec.get_seq(|d| TransactionEnvelope::from_canonical_bytes(d.get_bytes()?))?;
        let validity = dec.get_seq(|d| Validity::from_code(d.get_u8()?))?;
        let commit_hash = dec.get()?;
        Ok(Block { header, transactions, validity, commit_hash })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerificationReport {
    pub ok: bool,
    /// Height of the last block that verified, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub height: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_bad_height: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl VerificationReport {
    fn failure(verified: u64, bad_height: u64, reason: String) -> Self {
        VerificationReport {
            ok: false,
            height: verified.checked_sub(1),
            first_bad_height: Some(bad_height),
            reason: Some(reason),
        }
    }
}

/// Verifies a sequence of canonically serialized blocks from genesis:
/// structure, data hashes, block hashes, height sequence, previous-hash
/// links and the validation-flag chain. Stops at the first inconsistency.
pub fn verify_serialized<'a>(blocks: impl IntoIterator<Item = &'a [u8]>) -> VerificationReport {
    let mut prev_hash = Hash::ZERO;
    let mut prev_commit = Hash::ZERO;
    let mut count = 0u64;
    for raw in blocks {
        let expected = count;
        if let Err(reason) = verify_one(raw, expected, &mut prev_hash, &mut prev_commit) {
            return VerificationReport::failure(count, expected, reason);
        }
        count += 1;
    }
    VerificationReport { ok: true, height: count.checked_sub(1), first_bad_height: None, reason: None }
}

fn verify_one(raw: &[u8], expected_height: u64, prev_hash: &mut Hash, prev_commit: &mut Hash) -> Result<(), String> {
    let mut dec = Decoder::new(raw);
    let err = |e: DecodeError| format!("malformed block: {e}");
    let height = dec.get_u64().map_err(err)?;
    let prev: Hash = dec.get().map_err(err)?;
    let data_hash: Hash = dec.get().map_err(err)?;
    let timestamp: Timestamp = dec.get().map_err(err)?;
    let block_hash: Hash = dec.get().map_err(err)?;
    if height != expected_height {
        return Err(format!("height {height} found where {expected_height} was expected"));
    }
    if prev != *prev_hash {
        return Err("previous-hash link broken".to_string());
    }
    if compute_block_hash(height, &prev, &data_hash, timestamp) != block_hash {
        return Err("block hash does not match header".to_string());
    }
    let tx_start = dec.position();
    let tx_count = dec.get_u32().map_err(err)?;
    for _ in 0..tx_count {
        let bytes = dec.get_bytes().map_err(err)?;
        TransactionEnvelope::from_canonical_bytes(bytes).map_err(|e| format!("malformed transaction: {e}"))?;
    }
    let tx_section = &raw[tx_start..dec.position()];
    if Hash::of(tx_section) != data_hash {
        return Err("data hash does not match transactions".to_string());
    }
    let flags = dec.get_seq(|d| Validity::from_code(d.get_u8()?)).map_err(err)?;
    if flags.len() != tx_count as usize {
        return Err("validity flag count differs from transaction count".to_string());
    }
    let commit_hash: Hash = dec.get().map_err(err)?;
    dec.finish().map_err(err)?;
    if compute_commit_hash(prev_commit, &block_hash, &flags) != commit_hash {
        return Err("commit hash does not match validity flags".to_string());
    }
    *prev_hash = block_hash;
    *prev_commit = commit_hash;
    Ok(())
}

pub fn verify_chain(blocks: &[Block]) -> VerificationReport {
    let encoded: Vec<Vec<u8>> = blocks.iter().map(Canonical::to_canonical_bytes).collect();
    verify_serialized(encoded.iter().map(Vec::as_slice))
}

/// Block file framing: each block is a `u32` big-endian length followed by
/// its canonical bytes.
pub fn encode_block_record(block: &Block) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_bytes(&block.to_canonical_bytes());
    enc.into_bytes()
}

/// Splits a block file into per-block byte slices. On a framing error the
/// slices read so far are returned along with the error.
pub fn split_block_records(file: &[u8]) -> (Vec<&[u8]>, Option<DecodeError>) {
    let mut dec = Decoder::new(file);
    let mut out = Vec::new();
    while dec.remaining() > 0 {
        match dec.get_bytes() {
            Ok(raw) => out.push(raw),
            Err(e) => return (out, Some(e)),
        }
    }
    (out, None)
}

pub fn verify_block_file(file: &[u8]) -> VerificationReport {
    let (records, framing) = split_block_records(file);
    let report = verify_serialized(records.iter().copied());
    match framing {
        Some(e) if report.ok => {
            let n = records.len() as u64;
            VerificationReport::failure(n, n, format!("truncated block record: {e}"))
        }
        _ => report,
    }
}

pub fn decode_block_file(file: &[u8]) -> Result<Vec<Block>, LedgerError> {
    let (records, framing) = split_block_records(file);
    if let Some(e) = framing {
        return Err(LedgerError::Decode { height: records.len() as u64, error: e });
    }
    records
        .into_iter()
        .enumerate()
        .map(|(i, raw)| Block::from_canonical_bytes(raw).map_err(|error| LedgerError::Decode { height: i as u64, error }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistorianRecord {
    pub tx_id: Hash,
    pub transaction_type: String,
    pub participant_id: ParticipantId,
    pub timestamp: Timestamp,
    pub valid: Validity,
    pub block_height: u64,
    pub tx_offset: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    pub events: Vec<EventKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistorianFilter {
    pub participant: Option<ParticipantId>,
    pub transaction_type: Option<String>,
    pub from: Option<Timestamp>,
    pub to: Option<Timestamp>,
    /// Keep only the newest `limit` matches (still in commit order).
    pub limit: Option<usize>,
}

impl HistorianFilter {
    pub fn matches(&self, record: &HistorianRecord) -> bool {
        self.participant.as_ref().is_none_or(|p| *p == record.participant_id)
            && self.transaction_type.as_ref().is_none_or(|t| *t == record.transaction_type)
            && self.from.is_none_or(|from| record.timestamp >= from)
            && self.to.is_none_or(|to| record.timestamp <= to)
    }
}

/// Coordinates of a committed event: (block height, tx offset, event index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EventId {
    pub block_height: u64,
    pub tx_offset: u32,
    pub event_index: u32,
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.block_height, self.tx_offset, self.event_index)
    }
}

impl core::str::FromStr for EventId {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, '-');
        let mut next = || parts.next().ok_or(());
        let block_height = next()?.parse().map_err(|_| ())?;
        let tx_offset = next()?.parse().map_err(|_| ())?;
        let event_index = next()?.parse().map_err(|_| ())?;
        Ok(EventId { block_height, tx_offset, event_index })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LedgerError {
    BrokenLink { height: u64 },
    BadHeight { expected: u64, found: u64 },
    BadDataHash { height: u64 },
    BadBlockHash { height: u64 },
    BadValidity { height: u64 },
    InvalidBootstrap(String),
    /// Replayed validation disagreed with the recorded flags.
    FlagMismatch { height: u64 },
    Decode { height: u64, error: DecodeError },
}

impl fmt::Display for LedgerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LedgerError::BrokenLink { height } => write!(f, "block {height}: previous hash does not link to the tip"),
            LedgerError::BadHeight { expected, found } => write!(f, "expected block {expected}, got {found}"),
            LedgerError::BadDataHash { height } => write!(f, "block {height}: data hash mismatch"),
            LedgerError::BadBlockHash { height } => write!(f, "block {height}: block hash mismatch"),
            LedgerError::BadValidity { height } => write!(f, "block {height}: validity flags do not match transactions"),
            LedgerError::InvalidBootstrap(why) => write!(f, "invalid bootstrap: {why}"),
            LedgerError::FlagMismatch { height } => write!(f, "block {height}: recorded validity flags differ from re-validation"),
            LedgerError::Decode { height, error } => write!(f, "block {height}: {error}"),
        }
    }
}

impl core::error::Error for LedgerError {}

/// Builds the height-0 block: a single Bootstrap transaction signed by the
/// first admin's card. Deterministic for a given config and card.
pub fn genesis_block(config: &GenesisConfig, bootstrap_card: &HolderCard) -> Result<Block, LedgerError> {
    config.check().map_err(LedgerError::InvalidBootstrap)?;
    let admin = &config.admins[0];
    if bootstrap_card.card.participant_id != admin.participant_id {
        return Err(LedgerError::InvalidBootstrap("bootstrap card must belong to the first admin".into()));
    }
    if !verify_card(&bootstrap_card.card, &config.issuer_public_key) {
        return Err(LedgerError::InvalidBootstrap("bootstrap card is not certified by the issuer".into()));
    }
    let payload = TransactionPayload::Bootstrap { genesis: config.clone() };
    let proposal = Proposal::sign(bootstrap_card, 0, config.timestamp, payload);
    let tx_id = proposal.tx_id();
    let empty = WorldState::new();
    let ctx = TxContext { tx_id, submitter: &proposal.submitter, timestamp: config.timestamp, is_genesis: true };
    let result = chaincode::execute(&ctx, &proposal.payload, &empty, &config.chain);
    if let Some(error) = result.response.error() {
        return Err(LedgerError::InvalidBootstrap(error.to_string()));
    }
    let envelope = TransactionEnvelope {
        tx_id,
        submitter: proposal.submitter,
        nonce: proposal.nonce,
        submitted_at: proposal.proposed_at,
        payload: proposal.payload,
        client_signature: proposal.client_signature,
        endorsements: Vec::new(),
        rwset: result.rwset,
        events: result.events,
        response: result.response,
    };
    let mut block = Block::new(0, Hash::ZERO, config.timestamp, alloc::vec![envelope]);
    block.validity = alloc::vec![Validity::Valid];
    block.commit_hash = compute_commit_hash(&Hash::ZERO, &block.header.block_hash, &block.validity);
    Ok(block)
}

/// Summary of one committed block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitSummary {
    pub height: u64,
    pub block_hash: Hash,
    pub validity: Vec<Validity>,
    /// Events of valid transactions, in commit order.
    pub events: Vec<(EventId, ChainEvent)>,
}

/// One peer's copy of the ledger: the chain, the world state derived from
/// its valid transactions, and the historian.
#[derive(Debug, Clone)]
pub struct Ledger {
    blocks: Vec<Block>,
    state: WorldState,
    historian: Vec<HistorianRecord>,
    genesis: GenesisConfig,
    committed: BTreeSet<Hash>,
}

impl Ledger {
    /// Starts a ledger from a genesis block, checking its structure and
    /// re-deriving the bootstrap writes.
    pub fn from_genesis(block: Block) -> Result<Self, LedgerError> {
        let bad = |why: &str| LedgerError::InvalidBootstrap(why.into());
        if block.header.height != 0 {
            return Err(LedgerError::BadHeight { expected: 0, found: block.header.height });
        }
        if block.header.prev_hash != Hash::ZERO {
            return Err(LedgerError::BrokenLink { height: 0 });
        }
        check_hashes(&block)?;
        let [tx] = block.transactions.as_slice() else {
            return Err(bad("genesis block must hold exactly one transaction"));
        };
        let TransactionPayload::Bootstrap { genesis } = &tx.payload else {
            return Err(bad("genesis transaction must be a Bootstrap"));
        };
        if !verify_card(&tx.submitter, &genesis.issuer_public_key) || !tx.proposal().verify_signature() {
            return Err(bad("genesis transaction is not signed by a certified admin card"));
        }
        if tx.proposal().tx_id() != tx.tx_id {
            return Err(bad("genesis transaction id mismatch"));
        }
        let ctx = TxContext { tx_id: tx.tx_id, submitter: &tx.submitter, timestamp: tx.submitted_at, is_genesis: true };
        let result = chaincode::execute(&ctx, &tx.payload, &WorldState::new(), &genesis.chain);
        if result.rwset != tx.rwset || result.response != tx.response {
            return Err(bad("genesis read-write set does not match its configuration"));
        }
        if block.validity != [Validity::Valid] {
            return Err(LedgerError::BadValidity { height: 0 });
        }
        if compute_commit_hash(&Hash::ZERO, &block.header.block_hash, &block.validity) != block.commit_hash {
            return Err(LedgerError::BadValidity { height: 0 });
        }
        let mut ledger = Ledger {
            blocks: Vec::new(),
            state: WorldState::new(),
            historian: Vec::new(),
            genesis: genesis.clone(),
            committed: BTreeSet::new(),
        };
        ledger.commit(block);
        Ok(ledger)
    }

    pub fn genesis(&self) -> &GenesisConfig {
        &self.genesis
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        usize::try_from(height).ok().and_then(|h| self.blocks.get(h))
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("a ledger always holds its genesis block")
    }

    pub fn height(&self) -> u64 {
        self.tip().header.height
    }

    pub fn state_hash(&self) -> Hash {
        self.state.state_hash()
    }

    pub fn is_committed_valid(&self, tx_id: &Hash) -> bool {
        self.committed.contains(tx_id)
    }

    pub fn historian(&self) -> &[HistorianRecord] {
        &self.historian
    }

    pub fn query_historian(&self, filter: &HistorianFilter) -> Vec<HistorianRecord> {
        let matching: Vec<&HistorianRecord> = self.historian.iter().filter(|r| filter.matches(r)).collect();
        let skip = filter.limit.map_or(0, |limit| matching.len().saturating_sub(limit));
        matching.into_iter().skip(skip).cloned().collect()
    }

    pub fn verify(&self) -> VerificationReport {
        verify_chain(&self.blocks)
    }

    /// Appends a validated successor block and commits it: writes of valid
    /// transactions are applied at version (height, offset), one historian
    /// record is added per transaction, and the valid transactions' events
    /// are returned for publication.
    pub fn append_block(&mut self, mut block: Block) -> Result<CommitSummary, LedgerError> {
        let expected = self.height() + 1;
        let height = block.header.height;
        if height != expected {
            return Err(LedgerError::BadHeight { expected, found: height });
        }
        if block.header.prev_hash != self.tip().header.block_hash {
            return Err(LedgerError::BrokenLink { height });
        }
        check_hashes(&block)?;
        if block.validity.len() != block.transactions.len() {
            return Err(LedgerError::BadValidity { height });
        }
        block.commit_hash = compute_commit_hash(&self.tip().commit_hash, &block.header.block_hash, &block.validity);
        Ok(self.commit(block))
    }

    fn commit(&mut self, block: Block) -> CommitSummary {
        let height = block.header.height;
        let mut events = Vec::new();
        for (offset, (tx, flag)) in block.transactions.iter().zip(&block.validity).enumerate() {
            let offset = offset as u32;
            if flag.is_valid() {
                self.state.apply_rwset(&tx.rwset, Version::new(height, offset));
                self.committed.insert(tx.tx_id);
                for (index, event) in tx.events.iter().enumerate() {
                    let id = EventId { block_height: height, tx_offset: offset, event_index: index as u32 };
                    events.push((id, event.clone()));
                }
            }
            self.historian.push(HistorianRecord {
                tx_id: tx.tx_id,
                transaction_type: tx.payload.type_name().into(),
                participant_id: tx.submitter.participant_id.clone(),
                timestamp: tx.submitted_at,
                valid: *flag,
                block_height: height,
                tx_offset: offset,
                decision: tx.response.decision().cloned(),
                events: if flag.is_valid() { tx.events.iter().map(|e| e.kind).collect() } else { Vec::new() },
            });
        }
        let summary = CommitSummary { height, block_hash: block.header.block_hash, validity: block.validity.clone(), events };
        self.blocks.push(block);
        summary
    }

    /// Rebuilds a ledger from its transaction log alone, re-validating every
    /// block and requiring the recorded flags to agree.
    pub fn replay(blocks: impl IntoIterator<Item = Block>) -> Result<Self, LedgerError> {
        let mut iter = blocks.into_iter();
        let genesis = iter.next().ok_or_else(|| LedgerError::InvalidBootstrap("empty chain".into()))?;
        let mut ledger = Ledger::from_genesis(genesis)?;
        for block in iter {
            let height = block.header.height;
            let recorded_commit = block.commit_hash;
            let flags = crate::endorsement::validate_block(&ledger, &block);
            if flags != block.validity {
                return Err(LedgerError::FlagMismatch { height });
            }
            ledger.append_block(block)?;
            if ledger.tip().commit_hash != recorded_commit {
                return Err(LedgerError::BadValidity { height });
            }
        }
        Ok(ledger)
    }

    /// All committed events of valid transactions, in commit order.
    pub fn committed_events(&self) -> Vec<(EventId, ChainEvent)> {
        let mut out = Vec::new();
        for block in &self.blocks {
            for (offset, (tx, flag)) in block.transactions.iter().zip(&block.validity).enumerate() {
                if !flag.is_valid() {
                    continue;
                }
                for (index, event) in tx.events.iter().enumerate() {
                    let id = EventId { block_height: block.header.height, tx_offset: offset as u32, event_index: index as u32 };
                    out.push((id, event.clone()));
                }
            }
        }
        out
    }
}

fn check_hashes(block: &Block) -> Result<(), LedgerError> {
    let height = block.header.height;
    if compute_data_hash(&block.transactions) != block.header.data_hash {
        return Err(LedgerError::BadDataHash { height });
    }
    let h = &block.header;
    if compute_block_hash(h.height, &h.prev_hash, &h.data_hash, h.timestamp) != h.block_hash {
        return Err(LedgerError::BadBlockHash { height });
    }
    Ok(())
}
