//! HTTP gateway: card sessions, transaction submission through the
//! network, state and historian queries, chain inspection and the
//! server-sent event stream.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::convert::Infallible;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use doorchain_core::chaincode::{keys, AppError, Delegation, DynamicRecord, EventKind, TransactionPayload};
use doorchain_core::codec::to_canonical_json;
use doorchain_core::domain::{issue_card, verify_card, CardId, Department, IdentityCard, Participant, PhysicalPlace, Role};
use doorchain_core::endorsement::Proposal;
use doorchain_core::ledger::{EventId, HistorianFilter};
use doorchain_core::peer::EndorseError;
use doorchain_core::state::StateView;
use doorchain_core::{Ledger, PublicKey, SecretKey, Signature, Timestamp, Validity};
use futures::Stream;
use parking_lot::Mutex;
use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::events::{EventFilter, SubscriptionId};
use crate::network::{Network, SubmitError, TxOutcome};
use crate::now;

pub const SESSION_DOMAIN: &[u8] = b"doorchain-session-v1\0";
pub const HEADER_NONCE: &str = "x-proposal-nonce";
pub const HEADER_TIME: &str = "x-proposal-time";
pub const HEADER_SIGNATURE: &str = "x-proposal-signature";
const CHALLENGE_TTL: Duration = Duration::from_secs(60);

/// Bytes a card holder signs to answer a login challenge.
pub fn session_signing_bytes(challenge: &[u8]) -> Vec<u8> {
    [SESSION_DOMAIN, challenge].concat()
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub max_clock_skew: Duration,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        GatewayOptions { max_clock_skew: Duration::from_secs(300) }
    }
}

pub struct AppState {
    network: Network,
    issuer: SecretKey,
    options: GatewayOptions,
    challenges: Mutex<HashMap<Vec<u8>, (CardId, Instant)>>,
    sessions: Mutex<HashMap<String, IdentityCard>>,
}

impl AppState {
    pub fn new(network: Network, issuer: SecretKey, options: GatewayOptions) -> Arc<Self> {
        Arc::new(AppState { network, issuer, options, challenges: Mutex::default(), sessions: Mutex::default() })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/session", post(session).get(whoami))
        .route("/api/cards", post(issue))
        .route("/api/tx/grant", post(tx_grant))
        .route("/api/tx/revoke", post(tx_revoke))
        .route("/api/tx/delegate", post(tx_delegate))
        .route("/api/tx/revoke-delegation", post(tx_revoke_delegation))
        .route("/api/tx/register/participant", post(tx_register_participant))
        .route("/api/tx/register/place", post(tx_register_place))
        .route("/api/tx/register/department", post(tx_register_department))
        .route("/api/tx/revoke-card", post(tx_revoke_card))
        .route("/api/access/check", post(access_check))
        .route("/api/historian", get(historian))
        .route("/api/state/places", get(state_places))
        .route("/api/state/participants", get(state_participants))
        .route("/api/state/departments", get(state_departments))
        .route("/api/state/grants", get(state_grants))
        .route("/api/state/delegations", get(state_delegations))
        .route("/api/config", get(chain_config))
        .route("/api/blocks", get(blocks))
        .route("/api/blocks/{height}", get(block))
        .route("/api/chain/verify", get(verify))
        .route("/api/events/stream", get(events_stream))
        .with_state(state)
}

/// Serves the gateway on `listener` until the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into() }
    }

    fn unauthenticated(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "Unauthenticated", message)
    }

    fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "MalformedRequest", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, canonical(&body)).into_response()
    }
}

impl From<AppError> for ApiError {
    fn from(error: AppError) -> Self {
        let status = match error {
            AppError::Unauthorized(_) => StatusCode::FORBIDDEN,
            AppError::NotFound(_) => StatusCode::NOT_FOUND,
            AppError::AlreadyExists(_) => StatusCode::CONFLICT,
            AppError::InvalidArgument(_) | AppError::UnknownTransactionType(_) => StatusCode::UNPROCESSABLE_ENTITY,
            AppError::RevokedCard(_) => StatusCode::UNAUTHORIZED,
        };
        let value = serde_json::to_value(&error).unwrap_or(Value::Null);
        let code = value["code"].as_str().unwrap_or("Error");
        ApiError::new(status, code, error.to_string())
    }
}

impl From<SubmitError> for ApiError {
    fn from(error: SubmitError) -> Self {
        let message = error.to_string();
        match error {
            SubmitError::Rejected { error, .. } => {
                let code = match error {
                    EndorseError::UnknownCard => "UnknownCard",
                    EndorseError::BadSignature => "BadSignature",
                    EndorseError::RevokedCard => "RevokedCard",
                };
                ApiError::new(StatusCode::UNAUTHORIZED, code, message)
            }
            SubmitError::Application(error) => error.into(),
            SubmitError::MvccExhausted { .. } => ApiError::new(StatusCode::CONFLICT, "MvccConflict", message),
            SubmitError::Invalid(outcome) if outcome.validity == Validity::DuplicateTxId => {
                ApiError::new(StatusCode::CONFLICT, "DuplicateTransaction", message)
            }
            SubmitError::Invalid(_) | SubmitError::Assemble(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "EndorsementFailure", message),
            SubmitError::Timeout => ApiError::new(StatusCode::GATEWAY_TIMEOUT, "CommitTimeout", message),
            SubmitError::NoEndorser(_) | SubmitError::Stopped => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "Unavailable", message),
        }
    }
}

type ApiResult = Result<Response, ApiError>;

/// Canonical JSON response body.
fn canonical<T: Serialize>(value: &T) -> Response {
    ([("content-type", "application/json")], to_canonical_json(value)).into_response()
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(e.to_string()))
}

/// An authenticated caller. Role and registration are read from the
/// current world state on every request.
struct Caller {
    card: IdentityCard,
    participant: Participant,
}

impl Caller {
    fn sees_everything(&self) -> bool {
        matches!(self.participant.role, Role::Admin | Role::Ceo)
    }
}

fn bearer_token(headers: &HeaderMap, query_token: Option<&str>) -> Option<String> {
    headers
        .get("authorization")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::to_string)
        .or_else(|| query_token.map(str::to_string))
}

fn authenticate(state: &AppState, headers: &HeaderMap, query_token: Option<&str>) -> Result<Caller, ApiError> {
    let token = bearer_token(headers, query_token).ok_or_else(|| ApiError::unauthenticated("missing bearer token"))?;
    let card = state.sessions.lock().get(&token).cloned().ok_or_else(|| ApiError::unauthenticated("unknown or expired session"))?;
    let participant = state.network.read(|ledger| -> Result<Participant, ApiError> {
        let s = ledger.state();
        if s.read(&keys::revoked_card(card.card_id.as_str())).is_some() {
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "RevokedCard", "card has been revoked"));
        }
        let entry = s
            .read(&keys::participant(card.participant_id.as_str()))
            .ok_or_else(|| ApiError::unauthenticated("participant is not registered"))?;
        serde_json::from_slice(&entry.value).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))
    });
    match participant {
        Ok(participant) => Ok(Caller { card, participant }),
        Err(e) => {
            if e.code == "RevokedCard" {
                state.sessions.lock().remove(&token);
            }
            Err(e)
        }
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SessionRequest {
    card: IdentityCard,
    #[serde(default)]
    challenge: Option<String>,
    #[serde(default)]
    signature: Option<Signature>,
}

/// Two-step login: a card alone yields a challenge; the card with the
/// challenge and its signature yields a session token.
async fn session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let request: SessionRequest = parse_body(&body)?;
    let card = request.card;
    if !verify_card(&card, &state.network.genesis().issuer_public_key) {
        return Err(ApiError::new(StatusCode::UNAUTHORIZED, "UnknownCard", "card is not certified by the network issuer"));
    }
    let known = state.network.read(|ledger| {
        let s = ledger.state();
        let revoked = s.read(&keys::revoked_card(card.card_id.as_str())).is_some();
        let registered = s.read(&keys::participant(card.participant_id.as_str())).is_some();
        (revoked, registered)
    });
    match known {
        (true, _) => return Err(ApiError::new(StatusCode::UNAUTHORIZED, "RevokedCard", "card has been revoked")),
        (_, false) => return Err(ApiError::unauthenticated("participant is not registered")),
        _ => {}
    }
    let (Some(challenge), Some(signature)) = (request.challenge, request.signature) else {
        let mut nonce = vec![0u8; 32];
        rand::thread_rng().fill_bytes(&mut nonce);
        let encoded = B64.encode(&nonce);
        let mut challenges = state.challenges.lock();
        challenges.retain(|_, (_, at)| at.elapsed() < CHALLENGE_TTL);
        challenges.insert(nonce, (card.card_id.clone(), Instant::now()));
        return Ok(canonical(&json!({ "challenge": encoded })));
    };
    let challenge = B64.decode(challenge).map_err(|e| ApiError::malformed(e.to_string()))?;
    let issued = state.challenges.lock().remove(&challenge);
    match issued {
        Some((card_id, at)) if card_id == card.card_id && at.elapsed() < CHALLENGE_TTL => {}
        _ => return Err(ApiError::unauthenticated("unknown or expired challenge")),
    }
    if !card.public_key.verify(&session_signing_bytes(&challenge), &signature) {
        return Err(ApiError::unauthenticated("challenge signature does not verify"));
    }
    let mut token = [0u8; 32];
    rand::thread_rng().fill_bytes(&mut token);
    let token = hex::encode(token);
    state.sessions.lock().insert(token.clone(), card.clone());
    let caller = authenticate(&state, &bearer_headers(&token), None)?;
    Ok(canonical(&json!({
        "token": token,
        "cardId": card.card_id,
        "participantId": card.participant_id,
        "role": caller.participant.role,
    })))
}

fn bearer_headers(token: &str) -> HeaderMap {
    let mut headers = HeaderMap::new();
    if let Ok(value) = format!("Bearer {token}").parse() {
        headers.insert("authorization", value);
    }
    headers
}

async fn whoami(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult {
    let caller = authenticate(&state, &headers, None)?;
    Ok(canonical(&json!({
        "cardId": caller.card.card_id,
        "participant": caller.participant,
    })))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct IssueRequest {
    participant_id: String,
    public_key: PublicKey,
}

/// Certifies a holder-generated public key for a registered participant.
async fn issue(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let caller = authenticate(&state, &headers, None)?;
    let request: IssueRequest = parse_body(&body)?;
    if caller.participant.role != Role::Admin {
        return Err(AppError::Unauthorized("only an Admin may issue cards".into()).into());
    }
    let card = state.network.read(|ledger| {
        let directory = |id: &doorchain_core::ParticipantId| ledger.state().read(&keys::participant(id.as_str())).is_some();
        issue_card(&directory, &request.participant_id.as_str().into(), request.public_key, &state.issuer, now(), &mut rand::thread_rng())
    });
    let card = card.map_err(|e| ApiError::from(AppError::NotFound(e.to_string())))?;
    Ok(canonical(&card))
}

/// Rebuilds the caller's signed proposal from the request headers and
/// the payload implied by the endpoint.
fn signed_proposal(state: &AppState, caller: &Caller, headers: &HeaderMap, payload: TransactionPayload) -> Result<Proposal, ApiError> {
    let header = |name: &str| -> Result<&str, ApiError> {
        headers
            .get(name)
            .and_then(|v| v.to_str().ok())
            .ok_or_else(|| ApiError::unauthenticated(format!("missing {name} header")))
    };
    let nonce: u64 = header(HEADER_NONCE)?.parse().map_err(|_| ApiError::malformed(format!("bad {HEADER_NONCE}")))?;
    let millis: i64 = header(HEADER_TIME)?.parse().map_err(|_| ApiError::malformed(format!("bad {HEADER_TIME}")))?;
    let signature = B64
        .decode(header(HEADER_SIGNATURE)?)
        .ok()
        .and_then(|b| <[u8; 64]>::try_from(b).ok())
        .map(Signature)
        .ok_or_else(|| ApiError::malformed(format!("bad {HEADER_SIGNATURE}")))?;
    let proposed_at = Timestamp::from_millis(millis);
    let skew = (now().as_millis() - millis).unsigned_abs();
    if skew > state.options.max_clock_skew.as_millis() as u64 {
        return Err(ApiError::unauthenticated("proposal timestamp is too far from the gateway clock"));
    }
    let proposal = Proposal { submitter: caller.card.clone(), nonce, proposed_at, payload, client_signature: signature };
    if !proposal.verify_signature() {
        return Err(ApiError::new(StatusCode::UNAUTHORIZED, "BadSignature", "proposal signature does not verify"));
    }
    Ok(proposal)
}

fn outcome_body(outcome: &TxOutcome) -> Value {
    json!({
        "txId": outcome.tx_id,
        "valid": outcome.validity.is_valid(),
        "blockHeight": outcome.block_height,
        "txOffset": outcome.tx_offset,
        "events": outcome.events,
    })
}

async fn submit(state: Arc<AppState>, headers: HeaderMap, payload: impl FnOnce() -> Result<TransactionPayload, ApiError>) -> Result<TxOutcome, ApiError> {
    let caller = authenticate(&state, &headers, None)?;
    let payload = payload()?;
    let proposal = signed_proposal(&state, &caller, &headers, payload)?;
    Ok(state.network.submit(&proposal).await?)
}

async fn submit_tx(state: Arc<AppState>, headers: HeaderMap, payload: impl FnOnce() -> Result<TransactionPayload, ApiError>) -> ApiResult {
    let outcome = submit(state, headers, payload).await?;
    Ok(canonical(&outcome_body(&outcome)))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct AccessBody {
    target_participant_id: String,
    place_id: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct DelegationBody {
    delegate_participant_id: String,
    department_id: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RevokeCardBody {
    card_id: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CheckBody {
    place_id: String,
}

async fn tx_grant(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    submit_tx(state, headers, || {
        let b: AccessBody = parse_body(&body)?;
        Ok(TransactionPayload::GrantAccess { target_participant_id: b.target_participant_id.into(), place_id: b.place_id.into() })
    })
    .await
}

async fn tx_revoke(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    submit_tx(state, headers, || {
        let b: AccessBody = parse_body(&body)?;
        Ok(TransactionPayload::RevokeAccess { target_participant_id: b.target_participant_id.into(), place_id: b.place_id.into() })
    })
    .await
}

async fn tx_delegate(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    submit_tx(state, headers, || {
        let b: DelegationBody = parse_body(&body)?;
        Ok(TransactionPayload::DelegateAuthority { delegate_participant_id: b.delegate_participant_id.into(), department_id: b.department_id.into() })
    })
    .await
}

async fn tx_revoke_delegation(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    submit_tx(state, headers, || {
        let b: DelegationBody = parse_body(&body)?;
        Ok(TransactionPayload::RevokeDelegation { delegate_participant_id: b.delegate_participant_id.into(), department_id: b.department_id.into() })
    })
    .await
}

async fn tx_register_participant(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    submit_tx(state, headers, || Ok(TransactionPayload::RegisterParticipant { participant: parse_body(&body)? })).await
}

async fn tx_register_place(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    submit_tx(state, headers, || Ok(TransactionPayload::RegisterPlace { place: parse_body(&body)? })).await
}

async fn tx_register_department(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    submit_tx(state, headers, || Ok(TransactionPayload::RegisterDepartment { department: parse_body(&body)? })).await
}

async fn tx_revoke_card(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    submit_tx(state, headers, || {
        let b: RevokeCardBody = parse_body(&body)?;
        Ok(TransactionPayload::RevokeCard { card_id: b.card_id.into() })
    })
    .await
}

/// Door-reader endpoint: commits a CheckAccess and returns the decision.
async fn access_check(State(state): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let outcome = submit(state, headers, || {
        let b: CheckBody = parse_body(&body)?;
        Ok(TransactionPayload::CheckAccess { place_id: b.place_id.into() })
    })
    .await?;
    let decision = outcome.response.decision().cloned();
    let mut body = outcome_body(&outcome);
    body["decision"] = json!(decision.as_ref().map(|d| d.outcome));
    body["source"] = json!(decision.map(|d| d.source));
    Ok(canonical(&body))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct HistorianQuery {
    participant: Option<String>,
    #[serde(rename = "type")]
    transaction_type: Option<String>,
    from: Option<String>,
    to: Option<String>,
    limit: Option<usize>,
}

fn parse_time(value: Option<String>, name: &str) -> Result<Option<Timestamp>, ApiError> {
    value
        .map(|v| Timestamp::parse_rfc3339(&v).ok_or_else(|| ApiError::malformed(format!("{name} must be an RFC 3339 timestamp"))))
        .transpose()
}

/// Admins and CEOs see every record; everyone else only their own.
async fn historian(State(state): State<Arc<AppState>>, headers: HeaderMap, query: Result<Query<HistorianQuery>, axum::extract::rejection::QueryRejection>) -> ApiResult {
    let caller = authenticate(&state, &headers, None)?;
    let Query(query) = query.map_err(|e| ApiError::malformed(e.body_text()))?;
    let own = caller.card.participant_id.clone();
    let participant = match query.participant {
        _ if !caller.sees_everything() => Some(own),
        p => p.map(Into::into),
    };
    let filter = HistorianFilter {
        participant,
        transaction_type: query.transaction_type,
        from: parse_time(query.from, "from")?,
        to: parse_time(query.to, "to")?,
        limit: query.limit,
    };
    let records = state.network.read(|ledger| ledger.query_historian(&filter));
    Ok(canonical(&records))
}

fn values<T: DeserializeOwned>(ledger: &Ledger, prefix: &str) -> Vec<T> {
    ledger
        .state()
        .range_read(prefix)
        .into_iter()
        .filter_map(|(_, v)| serde_json::from_slice(&v.value).ok())
        .collect()
}

async fn state_places(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult {
    authenticate(&state, &headers, None)?;
    Ok(canonical(&state.network.read(|l| values::<PhysicalPlace>(l, keys::PLACE_PREFIX))))
}

async fn state_participants(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult {
    authenticate(&state, &headers, None)?;
    Ok(canonical(&state.network.read(|l| values::<Participant>(l, keys::PARTICIPANT_PREFIX))))
}

async fn state_departments(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult {
    authenticate(&state, &headers, None)?;
    Ok(canonical(&state.network.read(|l| values::<Department>(l, keys::DEPARTMENT_PREFIX))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GrantsQuery {
    participant: Option<String>,
}

/// Dynamic overlay entries with their commit sequence numbers.
async fn state_grants(State(state): State<Arc<AppState>>, headers: HeaderMap, query: Result<Query<GrantsQuery>, axum::extract::rejection::QueryRejection>) -> ApiResult {
    authenticate(&state, &headers, None)?;
    let Query(query) = query.map_err(|e| ApiError::malformed(e.body_text()))?;
    let prefix = match &query.participant {
        Some(p) => format!("{}{p}/", keys::DYNAMIC_PREFIX),
        None => keys::DYNAMIC_PREFIX.to_string(),
    };
    let entries = state.network.read(|ledger| {
        let stride = ledger.genesis().chain.max_block_size;
        ledger
            .state()
            .range_read(&prefix)
            .into_iter()
            .filter_map(|(_, v)| serde_json::from_slice::<DynamicRecord>(&v.value).ok().map(|r| r.into_entry(v.version, stride)))
            .collect::<Vec<_>>()
    });
    Ok(canonical(&entries))
}

async fn state_delegations(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult {
    authenticate(&state, &headers, None)?;
    Ok(canonical(&state.network.read(|l| values::<Delegation>(l, keys::DELEGATION_PREFIX))))
}

async fn chain_config(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult {
    authenticate(&state, &headers, None)?;
    Ok(canonical(state.network.genesis()))
}

async fn blocks(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult {
    authenticate(&state, &headers, None)?;
    let list = state.network.read(|ledger| {
        ledger
            .blocks()
            .iter()
            .map(|b| {
                json!({
                    "height": b.header.height,
                    "blockHash": b.header.block_hash,
                    "prevHash": b.header.prev_hash,
                    "timestamp": b.header.timestamp,
                    "transactions": b.transactions.len(),
                    "validity": b.validity,
                })
            })
            .collect::<Vec<_>>()
    });
    Ok(canonical(&list))
}

async fn block(State(state): State<Arc<AppState>>, headers: HeaderMap, Path(height): Path<String>) -> ApiResult {
    authenticate(&state, &headers, None)?;
    let height: u64 = height.parse().map_err(|_| ApiError::malformed("height must be a non-negative integer"))?;
    let block = state.network.read(|ledger| ledger.block(height).cloned());
    match block {
        Some(block) => Ok(canonical(&block)),
        None => Err(AppError::NotFound(format!("block {height}")).into()),
    }
}

async fn verify(State(state): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult {
    authenticate(&state, &headers, None)?;
    Ok(canonical(&state.network.read(Ledger::verify)))
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct StreamQuery {
    kinds: Option<String>,
    place: Option<String>,
    after: Option<String>,
    token: Option<String>,
}

struct SubscriptionGuard {
    network: Network,
    id: SubscriptionId,
}

impl Drop for SubscriptionGuard {
    fn drop(&mut self) {
        let _ = self.network.events().unsubscribe(self.id);
    }
}

/// Server-sent events of committed events. Resumes after `Last-Event-ID`
/// or `after` when given.
async fn events_stream(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    query: Result<Query<StreamQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::malformed(e.body_text()))?;
    authenticate(&state, &headers, query.token.as_deref())?;
    let kinds = match query.kinds.as_deref().filter(|k| !k.is_empty()) {
        None => None,
        Some(list) => Some(
            list.split(',')
                .map(|k| EventKind::parse(k.trim()).ok_or_else(|| ApiError::malformed(format!("unknown event kind {k}"))))
                .collect::<Result<BTreeSet<_>, _>>()?,
        ),
    };
    let resume = headers.get("last-event-id").and_then(|v| v.to_str().ok()).map(str::to_string).or(query.after);
    let after = resume
        .map(|id| id.parse::<EventId>().map_err(|_| ApiError::malformed("event id must look like height-offset-index")))
        .transpose()?;
    let filter = EventFilter { kinds, place: query.place.map(Into::into) };
    let network = state.network.clone();
    let id = network.events().subscribe_after(filter, after);
    let guard = SubscriptionGuard { network: network.clone(), id };
    let watch = network.events().watch();
    let stream = futures::stream::unfold((guard, watch, VecDeque::new()), |(guard, mut watch, mut queue)| async move {
        loop {
            if let Some(next) = queue.pop_front() {
                return Some((Ok(next), (guard, watch, queue)));
            }
            watch.borrow_and_update();
            let batch = guard.network.events().poll(guard.id, 64).ok()?;
            if batch.is_empty() {
                watch.changed().await.ok()?;
                continue;
            }
            for delivered in batch {
                let data = String::from_utf8(to_canonical_json(&delivered.event)).unwrap_or_default();
                queue.push_back(Event::default().id(delivered.id.to_string()).event(delivered.event.kind.as_str()).data(data));
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

/// Posts every IntrusionAlert to `url`, once, best effort.
pub fn spawn_webhook(network: Network, url: String) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let client = reqwest::Client::new();
        let events = network.events();
        let id = events.subscribe_after(EventFilter::kinds([EventKind::IntrusionAlert]), events.snapshot().last().map(|e| e.id));
        let mut watch = events.watch();
        loop {
            watch.borrow_and_update();
            let Ok(batch) = network.events().poll(id, 64) else { return };
            if batch.is_empty() {
                if watch.changed().await.is_err() {
                    return;
                }
                continue;
            }
            for delivered in batch {
                let body = json!({ "id": delivered.id.to_string(), "event": delivered.event });
                if let Err(error) = client.post(&url).json(&body).send().await {
                    tracing::warn!(%error, "intrusion webhook failed");
                }
            }
        }
    })
}
