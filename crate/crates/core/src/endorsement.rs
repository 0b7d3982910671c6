//! Execute-order-validate: signed proposals, peer endorsements, envelope
//! assembly and block validation (endorsement policy plus MVCC).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::chaincode::{ExecutionResult, TransactionPayload};
use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::config::{EndorsementPolicy, GenesisConfig};
use crate::crypto::{SecretKey, Signature};
use crate::domain::{verify_card, HolderCard, IdentityCard};
use crate::hash::Hash;
use crate::ledger::{Block, Ledger, TransactionEnvelope, Validity};
use crate::state::{ReadWriteSet, Version};
use crate::time::Timestamp;

const PROPOSAL_DOMAIN: &str = "doorchain-proposal-v1";
const ENDORSEMENT_DOMAIN: &str = "doorchain-endorsement-v1";

/// A client-signed transaction proposal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Proposal {
    pub submitter: IdentityCard,
    /// Client-chosen; makes otherwise identical proposals distinct.
    pub nonce: u64,
    pub proposed_at: Timestamp,
    pub payload: TransactionPayload,
    pub client_signature: Signature,
}

impl Proposal {
    /// The bytes a client signs.
    pub fn signing_bytes(card: &IdentityCard, nonce: u64, proposed_at: Timestamp, payload: &TransactionPayload) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_str(PROPOSAL_DOMAIN)
            .put(card)
            .put_u64(nonce)
            .put(&proposed_at)
            .put_bytes(&payload.canonical_json());
        enc.into_bytes()
    }

    pub fn sign(holder: &HolderCard, nonce: u64, proposed_at: Timestamp, payload: TransactionPayload) -> Self {
        let client_signature = holder.private_key.sign(&Self::signing_bytes(&holder.card, nonce, proposed_at, &payload));
        Proposal { submitter: holder.card.clone(), nonce, proposed_at, payload, client_signature }
    }

    pub fn verify_signature(&self) -> bool {
        let bytes = Self::signing_bytes(&self.submitter, self.nonce, self.proposed_at, &self.payload);
        self.submitter.public_key.verify(&bytes, &self.client_signature)
    }

    /// Hash of the signed proposal.
    pub fn tx_id(&self) -> Hash {
        let bytes = Self::signing_bytes(&self.submitter, self.nonce, self.proposed_at, &self.payload);
        Hash::of_parts(&[&bytes, &self.client_signature.0])
    }
}

/// The compact endorsement kept in an envelope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EndorserSignature {
    pub peer_id: String,
    pub org_id: String,
    pub signature: Signature,
}

impl Canonical for EndorserSignature {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str(&self.peer_id).put_str(&self.org_id).put(&self.signature);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(EndorserSignature { peer_id: dec.get_string()?, org_id: dec.get_string()?, signature: dec.get()? })
    }
}

/// A peer's signed simulation result for one proposal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Endorsement {
    pub peer_id: String,
    pub org_id: String,
    pub tx_id: Hash,
    pub result: ExecutionResult,
    pub signature: Signature,
}

pub fn endorsement_signing_bytes(tx_id: &Hash, rwset: &ReadWriteSet, response_hash: &Hash) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_str(ENDORSEMENT_DOMAIN).put(tx_id).put_bytes(&rwset.to_canonical_bytes()).put(response_hash);
    enc.into_bytes()
}

impl Endorsement {
    pub fn sign(peer_id: &str, org_id: &str, key: &SecretKey, tx_id: Hash, result: ExecutionResult) -> Self {
        let signature = key.sign(&endorsement_signing_bytes(&tx_id, &result.rwset, &result.response_hash()));
        Endorsement { peer_id: peer_id.into(), org_id: org_id.into(), tx_id, result, signature }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssembleError {
    /// Some organisation required by the policy did not endorse.
    PolicyUnsatisfied { missing: Vec<String> },
    /// Endorsers disagree on the simulation result.
    EndorsementMismatch,
}

impl fmt::Display for AssembleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssembleError::PolicyUnsatisfied { missing } => write!(f, "endorsement policy unsatisfied; missing orgs {missing:?}"),
            AssembleError::EndorsementMismatch => f.write_str("endorsements carry different read-write sets or responses"),
        }
    }
}

impl core::error::Error for AssembleError {}

/// Combines a proposal with endorsements that agree byte-for-byte and
/// together cover every organisation the policy requires.
pub fn assemble(proposal: &Proposal, endorsements: &[Endorsement], policy: &EndorsementPolicy) -> Result<TransactionEnvelope, AssembleError> {
    let tx_id = proposal.tx_id();
    let Some(first) = endorsements.first() else {
        return Err(AssembleError::PolicyUnsatisfied { missing: policy.required_orgs.iter().cloned().collect() });
    };
    let rwset_bytes = first.result.rwset.to_canonical_bytes();
    let response_hash = first.result.response_hash();
    for e in endorsements {
        if e.tx_id != tx_id || e.result.rwset.to_canonical_bytes() != rwset_bytes || e.result.response_hash() != response_hash {
            return Err(AssembleError::EndorsementMismatch);
        }
    }
    let covered: BTreeSet<&str> = endorsements.iter().map(|e| e.org_id.as_str()).collect();
    let missing: Vec<String> = policy.required_orgs.iter().filter(|org| !covered.contains(org.as_str())).cloned().collect();
    if !missing.is_empty() {
        return Err(AssembleError::PolicyUnsatisfied { missing });
    }
    Ok(TransactionEnvelope {
        tx_id,
        submitter: proposal.submitter.clone(),
        nonce: proposal.nonce,
        submitted_at: proposal.proposed_at,
        payload: proposal.payload.clone(),
        client_signature: proposal.client_signature,
        endorsements: endorsements
            .iter()
            .map(|e| EndorserSignature { peer_id: e.peer_id.clone(), org_id: e.org_id.clone(), signature: e.signature })
            .collect(),
        rwset: first.result.rwset.clone(),
        events: first.result.events.clone(),
        response: first.result.response.clone(),
    })
}

/// Checks the client side (card certificate, client signature, tx id) and
/// that every required organisation has a valid endorsement from a roster
/// peer of that organisation.
pub fn endorsement_valid(envelope: &TransactionEnvelope, genesis: &GenesisConfig) -> bool {
    if !verify_card(&envelope.submitter, &genesis.issuer_public_key) {
        return false;
    }
    let proposal = envelope.proposal();
    if !proposal.verify_signature() || proposal.tx_id() != envelope.tx_id {
        return false;
    }
    let response_hash = crate::chaincode::response_hash(&envelope.response, &envelope.events);
    let signed = endorsement_signing_bytes(&envelope.tx_id, &envelope.rwset, &response_hash);
    let mut satisfied = BTreeSet::new();
    for e in &envelope.endorsements {
        let Some(peer) = genesis.peer(&e.peer_id) else { continue };
        if peer.org_id == e.org_id && peer.public_key.verify(&signed, &e.signature) {
            satisfied.insert(peer.org_id.as_str());
        }
    }
    genesis.policy.required_orgs.iter().all(|org| satisfied.contains(org.as_str()))
}

/// Assigns validity flags to a block's transactions against `ledger`'s
/// committed state, in block order. A transaction's reads are compared
/// with the state as updated by the earlier valid transactions of the
/// same block.
pub fn validate_block(ledger: &Ledger, block: &Block) -> Vec<Validity> {
    let height = block.header.height;
    let genesis = ledger.genesis();
    let mut pending: BTreeMap<&str, Option<Version>> = BTreeMap::new();
    let mut seen: BTreeSet<Hash> = BTreeSet::new();
    let mut flags = Vec::with_capacity(block.transactions.len());
    for (offset, tx) in block.transactions.iter().enumerate() {
        let flag = if !endorsement_valid(tx, genesis) {
            Validity::InvalidEndorsement
        } else if ledger.is_committed_valid(&tx.tx_id) || seen.contains(&tx.tx_id) {
            Validity::DuplicateTxId
        } else if tx.rwset.reads.iter().any(|read| {
            let current = match pending.get(read.key.as_str()) {
                Some(v) => *v,
                None => ledger.state().version_of(&read.key),
            };
            current != read.version
        }) {
            Validity::InvalidMvcc
        } else {
            let version = Version::new(height, offset as u32);
            for write in &tx.rwset.writes {
                pending.insert(write.key.as_str(), write.value.as_ref().map(|_| version));
            }
            seen.insert(tx.tx_id);
            Validity::Valid
        };
        flags.push(flag);
    }
    flags
}
