//! Core of the doorchain access control ledger.
//!
//! Everything in this crate is deterministic and free of IO: the canonical
//! codec, identity cards, the ACL engine, the transaction processors, the
//! hash-chained ledger with its world state and historian, and the
//! endorsement / MVCC validation logic a peer runs. The `doorchain` crate
//! wires these pieces into a running network.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod acl;
pub mod chaincode;
pub mod codec;
pub mod config;
pub mod crypto;
pub mod domain;
pub mod endorsement;
pub mod hash;
pub mod ledger;
pub mod peer;
pub mod state;
pub mod time;

pub use acl::{AccessRequest, AclRule, Action, Condition, Decision, DecisionSource, DynamicEntry, Effect, Operation, ResourcePattern};
pub use chaincode::{AppError, ChainEvent, EventKind, ExecutionResult, TransactionPayload, TxResponse};
pub use config::{ChainConfig, EndorsementPolicy, GenesisConfig, PeerInfo};
pub use crypto::{PublicKey, SecretKey, Signature};
pub use domain::{CardId, DepartmentId, Department, HolderCard, IdentityCard, Participant, ParticipantId, PhysicalPlace, PlaceId, Role};
pub use hash::Hash;
pub use ledger::{Block, BlockHeader, HistorianFilter, HistorianRecord, Ledger, LedgerError, TransactionEnvelope, Validity, VerificationReport};
pub use peer::Peer;
pub use state::{ReadWriteSet, StateView, Version, WorldState};
pub use time::Timestamp;
