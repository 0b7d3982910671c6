//! Transaction processors. Each handler simulates one transaction against a
//! state snapshot and returns its read-write set, events and response;
//! nothing here mutates committed state.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::acl::{decide_effective, AccessRequest, Action, Decision, DynamicEntry, Effect};
use crate::codec::to_canonical_json;
use crate::config::{ChainConfig, GenesisConfig};
use crate::domain::{CardId, Department, DepartmentId, IdentityCard, Participant, ParticipantId, PhysicalPlace, PlaceId, Role};
use crate::hash::Hash;
use crate::state::{ReadWriteSet, RecordingView, StateView, Version};
use crate::time::Timestamp;

/// World-state key scheme.
pub mod keys {
    use alloc::format;
    use alloc::string::String;

    pub const GENESIS: &str = "config/genesis";
    pub const PARTICIPANT_PREFIX: &str = "participant/";
    pub const PLACE_PREFIX: &str = "place/";
    pub const DEPARTMENT_PREFIX: &str = "dept/";
    pub const DYNAMIC_PREFIX: &str = "dyn/";
    pub const DELEGATION_PREFIX: &str = "deleg/";
    pub const DENIALS_PREFIX: &str = "denials/";
    pub const REVOKED_CARD_PREFIX: &str = "revokedCard/";

    pub fn participant(id: &str) -> String {
        format!("{PARTICIPANT_PREFIX}{id}")
    }

    pub fn place(id: &str) -> String {
        format!("{PLACE_PREFIX}{id}")
    }

    pub fn department(id: &str) -> String {
        format!("{DEPARTMENT_PREFIX}{id}")
    }

    pub fn dynamic(participant: &str, place: &str) -> String {
        format!("{DYNAMIC_PREFIX}{participant}/{place}")
    }

    pub fn delegation(participant: &str, department: &str) -> String {
        format!("{DELEGATION_PREFIX}{participant}/{department}")
    }

    pub fn denials(participant: &str, place: &str) -> String {
        format!("{DENIALS_PREFIX}{participant}/{place}")
    }

    pub fn revoked_card(card: &str) -> String {
        format!("{REVOKED_CARD_PREFIX}{card}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all_fields = "camelCase")]
pub enum TransactionPayload {
    RegisterParticipant { participant: Participant },
    RegisterPlace { place: PhysicalPlace },
    RegisterDepartment { department: Department },
    GrantAccess { target_participant_id: ParticipantId, place_id: PlaceId },
    RevokeAccess { target_participant_id: ParticipantId, place_id: PlaceId },
    DelegateAuthority { delegate_participant_id: ParticipantId, department_id: DepartmentId },
    RevokeDelegation { delegate_participant_id: ParticipantId, department_id: DepartmentId },
    CheckAccess { place_id: PlaceId },
    RevokeCard { card_id: CardId },
    /// Genesis-only: installs the network configuration and first admins.
    Bootstrap { genesis: GenesisConfig },
}

impl TransactionPayload {
    pub const TYPE_NAMES: [&'static str; 10] = [
        "RegisterParticipant",
        "RegisterPlace",
        "RegisterDepartment",
        "GrantAccess",
        "RevokeAccess",
        "DelegateAuthority",
        "RevokeDelegation",
        "CheckAccess",
        "RevokeCard",
        "Bootstrap",
    ];

    pub fn type_name(&self) -> &'static str {
        match self {
            Self::RegisterParticipant { .. } => "RegisterParticipant",
            Self::RegisterPlace { .. } => "RegisterPlace",
            Self::RegisterDepartment { .. } => "RegisterDepartment",
            Self::GrantAccess { .. } => "GrantAccess",
            Self::RevokeAccess { .. } => "RevokeAccess",
            Self::DelegateAuthority { .. } => "DelegateAuthority",
            Self::RevokeDelegation { .. } => "RevokeDelegation",
            Self::CheckAccess { .. } => "CheckAccess",
            Self::RevokeCard { .. } => "RevokeCard",
            Self::Bootstrap { .. } => "Bootstrap",
        }
    }

    /// Parses a JSON payload, distinguishing an unknown `type` tag from a
    /// malformed body.
    pub fn from_json(bytes: &[u8]) -> Result<Self, AppError> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| AppError::InvalidArgument(format!("malformed payload: {e}")))?;
        let type_name = value.get("type").and_then(|t| t.as_str()).unwrap_or("").to_owned();
        if !Self::TYPE_NAMES.contains(&type_name.as_str()) {
            return Err(AppError::UnknownTransactionType(type_name));
        }
        serde_json::from_value(value).map_err(|e| AppError::InvalidArgument(format!("malformed {type_name}: {e}")))
    }

    pub fn canonical_json(&self) -> Vec<u8> {
        to_canonical_json(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "message")]
pub enum AppError {
    Unauthorized(String),
    NotFound(String),
    AlreadyExists(String),
    InvalidArgument(String),
    RevokedCard(String),
    UnknownTransactionType(String),
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Unauthorized(m) => write!(f, "unauthorized: {m}"),
            AppError::NotFound(m) => write!(f, "not found: {m}"),
            AppError::AlreadyExists(m) => write!(f, "already exists: {m}"),
            AppError::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            AppError::RevokedCard(m) => write!(f, "revoked card: {m}"),
            AppError::UnknownTransactionType(t) => write!(f, "unknown transaction type {t:?}"),
        }
    }
}

impl core::error::Error for AppError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    AccessGranted,
    AccessDenied,
    AccessGrantChanged,
    DelegationChanged,
    IntrusionAlert,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::AccessGranted,
        EventKind::AccessDenied,
        EventKind::AccessGrantChanged,
        EventKind::DelegationChanged,
        EventKind::IntrusionAlert,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::AccessGranted => "AccessGranted",
            EventKind::AccessDenied => "AccessDenied",
            EventKind::AccessGrantChanged => "AccessGrantChanged",
            EventKind::DelegationChanged => "DelegationChanged",
            EventKind::IntrusionAlert => "IntrusionAlert",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        EventKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainEvent {
    pub kind: EventKind,
    pub participant_id: ParticipantId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place_id: Option<PlaceId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub department_id: Option<DepartmentId>,
    pub detail: String,
    pub tx_id: Hash,
    /// Consecutive denials that triggered an intrusion alert.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum TxResponse {
    Success {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        decision: Option<Decision>,
    },
    Error {
        error: AppError,
    },
}

impl TxResponse {
    pub fn is_success(&self) -> bool {
        matches!(self, TxResponse::Success { .. })
    }

    pub fn decision(&self) -> Option<&Decision> {
        match self {
            TxResponse::Success { decision } => decision.as_ref(),
            TxResponse::Error { .. } => None,
        }
    }

    pub fn error(&self) -> Option<&AppError> {
        match self {
            TxResponse::Error { error } => Some(error),
            TxResponse::Success { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub rwset: ReadWriteSet,
    pub events: Vec<ChainEvent>,
    pub response: TxResponse,
}

impl ExecutionResult {
    pub fn decision(&self) -> Option<&Decision> {
        self.response.decision()
    }

    /// Hash binding the response and events, signed by endorsers.
    pub fn response_hash(&self) -> Hash {
        response_hash(&self.response, &self.events)
    }
}

pub fn response_hash(response: &TxResponse, events: &[ChainEvent]) -> Hash {
    Hash::of_parts(&[&to_canonical_json(response), b"\n", &to_canonical_json(events)])
}

/// Stored value of a `dyn/` key. The sequence number is not stored: it is
/// derived from the version of the write, i.e. the commit position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DynamicRecord {
    pub participant_id: ParticipantId,
    pub place_id: PlaceId,
    pub effect: Effect,
    pub granted_by: ParticipantId,
}

impl DynamicRecord {
    pub fn into_entry(self, version: Version, max_block_size: u32) -> DynamicEntry {
        DynamicEntry {
            participant_id: self.participant_id,
            place_id: self.place_id,
            effect: self.effect,
            seq: commit_seq(version, max_block_size),
            granted_by: self.granted_by,
        }
    }
}

/// Global commit index: block height times block size plus offset.
pub fn commit_seq(version: Version, max_block_size: u32) -> u64 {
    version.block_height * u64::from(max_block_size) + u64::from(version.tx_offset)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Delegation {
    pub delegate_participant_id: ParticipantId,
    pub department_id: DepartmentId,
    pub granted_by: ParticipantId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RevokedCardRecord {
    pub card_id: CardId,
    pub revoked_by: ParticipantId,
}

/// Per-transaction inputs besides payload and state.
#[derive(Debug, Clone, Copy)]
pub struct TxContext<'a> {
    pub tx_id: Hash,
    pub submitter: &'a IdentityCard,
    /// Proposal time; the clock used for time-window conditions.
    pub timestamp: Timestamp,
    pub is_genesis: bool,
}

type HandlerResult = Result<Option<Decision>, AppError>;

struct Exec<'v, 'c, V: StateView + ?Sized> {
    view: RecordingView<'v, V>,
    events: Vec<ChainEvent>,
    ctx: &'c TxContext<'c>,
    config: &'c ChainConfig,
}

pub fn execute<V: StateView + ?Sized>(
    ctx: &TxContext<'_>,
    payload: &TransactionPayload,
    view: &V,
    config: &ChainConfig,
) -> ExecutionResult {
    let mut exec = Exec { view: RecordingView::new(view), events: Vec::new(), ctx, config };
    let outcome = exec.dispatch(payload);
    let Exec { mut view, mut events, .. } = exec;
    let response = match outcome {
        Ok(decision) => TxResponse::Success { decision },
        Err(error) => {
            view.discard_writes();
            events.clear();
            TxResponse::Error { error }
        }
    };
    ExecutionResult { rwset: view.into_rwset(), events, response }
}

fn check_id(kind: &str, id: &str) -> Result<(), AppError> {
    if id.is_empty() || id.contains('/') {
        return Err(AppError::InvalidArgument(format!("{kind} id must be non-empty and must not contain '/'")));
    }
    Ok(())
}

impl<V: StateView + ?Sized> Exec<'_, '_, V> {
    fn dispatch(&mut self, payload: &TransactionPayload) -> HandlerResult {
        if let TransactionPayload::Bootstrap { genesis } = payload {
            return self.bootstrap(genesis);
        }
        let card_key = keys::revoked_card(self.ctx.submitter.card_id.as_str());
        if self.view.get(&card_key).is_some() {
            return Err(AppError::RevokedCard(self.ctx.submitter.card_id.to_string()));
        }
        let submitter_id = &self.ctx.submitter.participant_id;
        let submitter: Participant = self
            .load(&keys::participant(submitter_id.as_str()))?
            .ok_or_else(|| AppError::Unauthorized(format!("submitter {submitter_id} is not a registered participant")))?;

        match payload {
            TransactionPayload::RegisterParticipant { participant } => self.register_participant(&submitter, participant),
            TransactionPayload::RegisterPlace { place } => self.register_place(&submitter, place),
            TransactionPayload::RegisterDepartment { department } => self.register_department(&submitter, department),
            TransactionPayload::GrantAccess { target_participant_id, place_id } => {
                self.change_access(&submitter, target_participant_id, place_id, Effect::Grant)
            }
            TransactionPayload::RevokeAccess { target_participant_id, place_id } => {
                self.change_access(&submitter, target_participant_id, place_id, Effect::Revoke)
            }
            TransactionPayload::DelegateAuthority { delegate_participant_id, department_id } => {
                self.change_delegation(&submitter, delegate_participant_id, department_id, true)
            }
            TransactionPayload::RevokeDelegation { delegate_participant_id, department_id } => {
                self.change_delegation(&submitter, delegate_participant_id, department_id, false)
            }
            TransactionPayload::CheckAccess { place_id } => self.check_access(&submitter, place_id),
            TransactionPayload::RevokeCard { card_id } => self.revoke_card(&submitter, card_id),
            TransactionPayload::Bootstrap { .. } => unreachable!("handled above"),
        }
    }

    fn load<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>, AppError> {
        self.load_versioned(key).map(|o| o.map(|(v, _)| v))
    }

    fn load_versioned<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<(T, Option<Version>)>, AppError> {
        match self.view.get(key) {
            None => Ok(None),
            Some((bytes, version)) => serde_json::from_slice(&bytes)
                .map(|v| Some((v, version)))
                .map_err(|e| AppError::InvalidArgument(format!("corrupt state value at {key}: {e}"))),
        }
    }

    fn store<T: Serialize>(&mut self, key: String, value: &T) {
        self.view.put(key, to_canonical_json(value));
    }

    fn emit(&mut self, kind: EventKind, participant: &ParticipantId, place: Option<&PlaceId>, department: Option<&DepartmentId>, detail: String, count: Option<u32>) {
        self.events.push(ChainEvent {
            kind,
            participant_id: participant.clone(),
            place_id: place.cloned(),
            department_id: department.cloned(),
            detail,
            tx_id: self.ctx.tx_id,
            count,
        });
    }

    fn require_admin(&self, submitter: &Participant, what: &str) -> Result<(), AppError> {
        if submitter.role == Role::Admin {
            Ok(())
        } else {
            Err(AppError::Unauthorized(format!("{what} requires the Admin role")))
        }
    }

    fn is_ceo_of(&mut self, submitter: &Participant, department: &Department) -> bool {
        submitter.role == Role::Ceo && department.ceo_participant_id == submitter.participant_id
    }

    fn has_delegation(&mut self, submitter: &Participant, department: &DepartmentId) -> bool {
        self.view.get(&keys::delegation(submitter.participant_id.as_str(), department.as_str())).is_some()
    }

    fn load_place(&mut self, place_id: &PlaceId) -> Result<PhysicalPlace, AppError> {
        self.load(&keys::place(place_id.as_str()))?
            .ok_or_else(|| AppError::NotFound(format!("place {place_id}")))
    }

    fn load_department(&mut self, department_id: &DepartmentId) -> Result<Department, AppError> {
        self.load(&keys::department(department_id.as_str()))?
            .ok_or_else(|| AppError::NotFound(format!("department {department_id}")))
    }

    fn load_participant(&mut self, participant_id: &ParticipantId) -> Result<Participant, AppError> {
        self.load(&keys::participant(participant_id.as_str()))?
            .ok_or_else(|| AppError::NotFound(format!("participant {participant_id}")))
    }

    fn bootstrap(&mut self, genesis: &GenesisConfig) -> HandlerResult {
        if !self.ctx.is_genesis {
            return Err(AppError::Unauthorized("Bootstrap is only valid in the genesis block".into()));
        }
        genesis.check().map_err(AppError::InvalidArgument)?;
        self.store(keys::GENESIS.into(), genesis);
        for admin in &genesis.admins {
            self.store(keys::participant(admin.participant_id.as_str()), admin);
        }
        Ok(None)
    }

    fn register_participant(&mut self, submitter: &Participant, participant: &Participant) -> HandlerResult {
        self.require_admin(submitter, "registering a participant")?;
        check_id("participant", participant.participant_id.as_str())?;
        participant.check().map_err(|e| AppError::InvalidArgument(e.into()))?;
        let key = keys::participant(participant.participant_id.as_str());
        if self.view.get(&key).is_some() {
            return Err(AppError::AlreadyExists(format!("participant {}", participant.participant_id)));
        }
        self.store(key, participant);
        Ok(None)
    }

    fn register_place(&mut self, submitter: &Participant, place: &PhysicalPlace) -> HandlerResult {
        self.require_admin(submitter, "registering a place")?;
        check_id("place", place.place_id.as_str())?;
        let key = keys::place(place.place_id.as_str());
        if self.view.get(&key).is_some() {
            return Err(AppError::AlreadyExists(format!("place {}", place.place_id)));
        }
        self.load_department(&place.department_id)?;
        self.store(key, place);
        Ok(None)
    }

    fn register_department(&mut self, submitter: &Participant, department: &Department) -> HandlerResult {
        self.require_admin(submitter, "registering a department")?;
        check_id("department", department.department_id.as_str())?;
        let key = keys::department(department.department_id.as_str());
        if self.view.get(&key).is_some() {
            return Err(AppError::AlreadyExists(format!("department {}", department.department_id)));
        }
        let ceo = self.load_participant(&department.ceo_participant_id)?;
        if ceo.role != Role::Ceo {
            return Err(AppError::InvalidArgument(format!("{} does not have the CEO role", ceo.participant_id)));
        }
        self.store(key, department);
        Ok(None)
    }

    fn change_access(&mut self, submitter: &Participant, target: &ParticipantId, place_id: &PlaceId, effect: Effect) -> HandlerResult {
        let place = self.load_place(place_id)?;
        let authorized = submitter.role == Role::Admin || {
            let department = self.load_department(&place.department_id)?;
            self.is_ceo_of(submitter, &department) || self.has_delegation(submitter, &place.department_id)
        };
        if !authorized {
            return Err(AppError::Unauthorized(format!(
                "{} may not change access in department {}",
                submitter.participant_id, place.department_id
            )));
        }
        self.load_participant(target)?;
        let record = DynamicRecord {
            participant_id: target.clone(),
            place_id: place_id.clone(),
            effect,
            granted_by: submitter.participant_id.clone(),
        };
        self.store(keys::dynamic(target.as_str(), place_id.as_str()), &record);
        let detail = match effect {
            Effect::Grant => "Grant",
            Effect::Revoke => "Revoke",
        };
        self.emit(EventKind::AccessGrantChanged, target, Some(place_id), Some(&place.department_id), detail.into(), None);
        Ok(None)
    }

    fn change_delegation(&mut self, submitter: &Participant, delegate: &ParticipantId, department_id: &DepartmentId, grant: bool) -> HandlerResult {
        let department = self.load_department(department_id)?;
        if submitter.role != Role::Admin && !self.is_ceo_of(submitter, &department) {
            return Err(AppError::Unauthorized(format!(
                "{} may not manage delegations for department {department_id}",
                submitter.participant_id
            )));
        }
        self.load_participant(delegate)?;
        let key = keys::delegation(delegate.as_str(), department_id.as_str());
        if grant {
            let record = Delegation {
                delegate_participant_id: delegate.clone(),
                department_id: department_id.clone(),
                granted_by: submitter.participant_id.clone(),
            };
            self.store(key, &record);
        } else {
            if self.view.get(&key).is_none() {
                return Err(AppError::NotFound(format!("delegation of {department_id} to {delegate}")));
            }
            self.view.delete(key);
        }
        let detail = if grant { "Delegate" } else { "RevokeDelegation" };
        self.emit(EventKind::DelegationChanged, delegate, None, Some(department_id), detail.into(), None);
        Ok(None)
    }

    fn check_access(&mut self, submitter: &Participant, place_id: &PlaceId) -> HandlerResult {
        let place = self.load_place(place_id)?;
        let who = submitter.participant_id.as_str();
        let overlay: Vec<DynamicEntry> = self
            .load_versioned::<DynamicRecord>(&keys::dynamic(who, place_id.as_str()))?
            .and_then(|(record, version)| version.map(|v| record.into_entry(v, self.config.max_block_size)))
            .into_iter()
            .collect();
        let request = AccessRequest { participant: submitter, place: &place, action: Action::Read, at: self.ctx.timestamp };
        let decision = decide_effective(&self.config.rules, &overlay, &request);

        let counter_key = keys::denials(who, place_id.as_str());
        let previous: u32 = self.load(&counter_key)?.unwrap_or(0);
        let dept = Some(&place.department_id);
        if decision.is_allow() {
            self.store(counter_key, &0u32);
            self.emit(EventKind::AccessGranted, &submitter.participant_id, Some(place_id), dept, source_detail(&decision), None);
        } else {
            let count = previous.saturating_add(1);
            self.emit(EventKind::AccessDenied, &submitter.participant_id, Some(place_id), dept, source_detail(&decision), Some(count));
            if count >= self.config.intrusion_threshold {
                self.emit(
                    EventKind::IntrusionAlert,
                    &submitter.participant_id,
                    Some(place_id),
                    dept,
                    format!("{count} consecutive denied attempts"),
                    Some(count),
                );
                self.store(counter_key, &0u32);
            } else {
                self.store(counter_key, &count);
            }
        }
        Ok(Some(decision))
    }

    fn revoke_card(&mut self, submitter: &Participant, card_id: &CardId) -> HandlerResult {
        self.require_admin(submitter, "revoking a card")?;
        check_id("card", card_id.as_str())?;
        let key = keys::revoked_card(card_id.as_str());
        if self.view.get(&key).is_some() {
            return Err(AppError::AlreadyExists(format!("revocation of card {card_id}")));
        }
        self.store(key, &RevokedCardRecord { card_id: card_id.clone(), revoked_by: submitter.participant_id.clone() });
        Ok(None)
    }
}

fn source_detail(decision: &Decision) -> String {
    use crate::acl::DecisionSource;
    match &decision.source {
        DecisionSource::Static { rule_id } => format!("rule {rule_id}"),
        DecisionSource::Dynamic { seq } => format!("dynamic entry {seq}"),
        DecisionSource::DefaultDeny => "default deny".into(),
    }
}
