use alloc::vec::Vec;
use core::fmt;

use crate::chaincode::{self, TxContext};
use crate::config::PeerInfo;
use crate::crypto::SecretKey;
use crate::domain::verify_card;
use crate::endorsement::{validate_block, Endorsement, Proposal};
use crate::ledger::{Block, CommitSummary, Ledger, LedgerError, Validity};
use crate::state::StateView;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EndorseError {
    /// The card is not certified by the network issuer.
    UnknownCard,
    BadSignature,
    RevokedCard,
}

impl fmt::Display for EndorseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EndorseError::UnknownCard => f.write_str("card is not certified by the network issuer"),
            EndorseError::BadSignature => f.write_str("client signature does not verify"),
            EndorseError::RevokedCard => f.write_str("card has been revoked"),
        }
    }
}

impl core::error::Error for EndorseError {}

/// A peer: its roster identity, endorsement key and ledger copy.
#[derive(Debug, Clone)]
pub struct Peer {
    info: PeerInfo,
    key: SecretKey,
    ledger: Ledger,
}

impl Peer {
    pub fn new(peer_id: &str, key: SecretKey, genesis: Block) -> Result<Self, LedgerError> {
        Self::from_ledger(peer_id, key, Ledger::from_genesis(genesis)?)
    }

    pub fn from_ledger(peer_id: &str, key: SecretKey, ledger: Ledger) -> Result<Self, LedgerError> {
        let info = ledger
            .genesis()
            .peer(peer_id)
            .cloned()
            .ok_or_else(|| LedgerError::InvalidBootstrap(alloc::format!("peer {peer_id} is not in the roster")))?;
        if info.public_key != key.public_key() {
            return Err(LedgerError::InvalidBootstrap(alloc::format!("key for {peer_id} does not match the roster")));
        }
        Ok(Peer { info, key, ledger })
    }

    pub fn info(&self) -> &PeerInfo {
        &self.info
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// Simulates the proposal against the committed state and signs the
    /// result. The peer's state is not modified.
    pub fn endorse(&self, proposal: &Proposal) -> Result<Endorsement, EndorseError> {
        let genesis = self.ledger.genesis();
        if !verify_card(&proposal.submitter, &genesis.issuer_public_key) {
            return Err(EndorseError::UnknownCard);
        }
        if !proposal.verify_signature() {
            return Err(EndorseError::BadSignature);
        }
        let revoked_key = chaincode::keys::revoked_card(proposal.submitter.card_id.as_str());
        if self.ledger.state().read(&revoked_key).is_some() {
            return Err(EndorseError::RevokedCard);
        }
        let tx_id = proposal.tx_id();
        let ctx = TxContext { tx_id, submitter: &proposal.submitter, timestamp: proposal.proposed_at, is_genesis: false };
        let result = chaincode::execute(&ctx, &proposal.payload, self.ledger.state(), &genesis.chain);
        Ok(Endorsement::sign(&self.info.peer_id, &self.info.org_id, &self.key, tx_id, result))
    }

    /// Flags for a delivered successor block, without committing it.
    pub fn validate(&self, block: &Block) -> Vec<Validity> {
        validate_block(&self.ledger, block)
    }

    /// Commits a block whose `validity` was produced by [`Peer::validate`]
    /// against the current tip.
    pub fn append_validated(&mut self, block: Block) -> Result<CommitSummary, LedgerError> {
        self.ledger.append_block(block)
    }

    /// Validates a delivered block, then appends and commits it.
    pub fn validate_and_commit(&mut self, mut block: Block) -> Result<CommitSummary, LedgerError> {
        let expected = self.ledger.height() + 1;
        if block.header.height != expected {
            return Err(LedgerError::BadHeight { expected, found: block.header.height });
        }
        block.validity = validate_block(&self.ledger, &block);
        self.ledger.append_block(block)
    }
}
