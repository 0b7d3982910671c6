//! Async HTTP client for the gateway, signing proposals with a holder card.

use std::collections::VecDeque;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use doorchain_core::chaincode::{ChainEvent, EventKind, TransactionPayload};
use doorchain_core::domain::{HolderCard, IdentityCard};
use doorchain_core::endorsement::Proposal;
use doorchain_core::ledger::EventId;
use doorchain_core::{PublicKey, Timestamp};
use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::gateway::{session_signing_bytes, HEADER_NONCE, HEADER_SIGNATURE, HEADER_TIME};
use crate::now;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{status} {code}: {message}")]
    Api { status: u16, code: String, message: String },
    #[error("gateway unreachable: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }

    pub fn code(&self) -> &str {
        match self {
            ClientError::Api { code, .. } => code,
            ClientError::Transport(_) => "TargetUnreachable",
            ClientError::Decode(_) => "BadResponse",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxReceipt {
    pub tx_id: String,
    pub valid: bool,
    pub block_height: u64,
    pub tx_offset: u32,
    #[serde(default)]
    pub events: Vec<ChainEvent>,
    /// Present on access checks: "Allow" or "Deny".
    #[serde(default)]
    pub decision: Option<String>,
    #[serde(default)]
    pub source: Option<Value>,
}

/// A logged-in gateway session bound to one holder card.
#[derive(Clone)]
pub struct GatewayClient {
    http: reqwest::Client,
    base: String,
    holder: HolderCard,
    token: String,
}

async fn decode<T: DeserializeOwned>(response: reqwest::Response) -> Result<T, ClientError> {
    let status = response.status();
    let bytes = response.bytes().await?;
    if !status.is_success() {
        let body: Value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        let error = &body["error"];
        return Err(ClientError::Api {
            status: status.as_u16(),
            code: error["code"].as_str().unwrap_or("Error").to_string(),
            message: error["message"].as_str().map_or_else(|| String::from_utf8_lossy(&bytes).into_owned(), str::to_string),
        });
    }
    serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
}

/// Path and JSON body of the endpoint that carries `payload`.
pub fn endpoint(payload: &TransactionPayload) -> Option<(&'static str, Value)> {
    Some(match payload {
        TransactionPayload::GrantAccess { target_participant_id, place_id } => {
            ("/api/tx/grant", json!({ "targetParticipantId": target_participant_id, "placeId": place_id }))
        }
        TransactionPayload::RevokeAccess { target_participant_id, place_id } => {
            ("/api/tx/revoke", json!({ "targetParticipantId": target_participant_id, "placeId": place_id }))
        }
        TransactionPayload::DelegateAuthority { delegate_participant_id, department_id } => {
            ("/api/tx/delegate", json!({ "delegateParticipantId": delegate_participant_id, "departmentId": department_id }))
        }
        TransactionPayload::RevokeDelegation { delegate_participant_id, department_id } => {
            ("/api/tx/revoke-delegation", json!({ "delegateParticipantId": delegate_participant_id, "departmentId": department_id }))
        }
        TransactionPayload::RegisterParticipant { participant } => ("/api/tx/register/participant", json!(participant)),
        TransactionPayload::RegisterPlace { place } => ("/api/tx/register/place", json!(place)),
        TransactionPayload::RegisterDepartment { department } => ("/api/tx/register/department", json!(department)),
        TransactionPayload::CheckAccess { place_id } => ("/api/access/check", json!({ "placeId": place_id })),
        TransactionPayload::RevokeCard { card_id } => ("/api/tx/revoke-card", json!({ "cardId": card_id })),
        TransactionPayload::Bootstrap { .. } => return None,
    })
}

impl GatewayClient {
    /// Runs the challenge-response login for `holder`.
    pub async fn login(base: &str, holder: HolderCard) -> Result<Self, ClientError> {
        let http = reqwest::Client::new();
        let base = base.trim_end_matches('/').to_string();
        let url = format!("{base}/api/session");
        let challenge: Value = decode(http.post(&url).json(&json!({ "card": holder.card })).send().await?).await?;
        let encoded = challenge["challenge"].as_str().ok_or_else(|| ClientError::Decode("missing challenge".into()))?;
        let raw = B64.decode(encoded).map_err(|e| ClientError::Decode(e.to_string()))?;
        let signature = holder.private_key.sign(&session_signing_bytes(&raw));
        let body = json!({ "card": holder.card, "challenge": encoded, "signature": signature });
        let session: Value = decode(http.post(&url).json(&body).send().await?).await?;
        let token = session["token"].as_str().ok_or_else(|| ClientError::Decode("missing token".into()))?.to_string();
        Ok(GatewayClient { http, base, holder, token })
    }

    pub fn card(&self) -> &IdentityCard {
        &self.holder.card
    }

    pub fn token(&self) -> &str {
        &self.token
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub async fn get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, String)]) -> Result<T, ClientError> {
        let response = self.http.get(format!("{}{path}", self.base)).bearer_auth(&self.token).query(query).send().await?;
        decode(response).await
    }

    /// Signs `payload` and posts it to its endpoint; returns after commit.
    pub async fn submit(&self, payload: TransactionPayload) -> Result<TxReceipt, ClientError> {
        self.submit_at(payload, now()).await
    }

    pub async fn submit_at(&self, payload: TransactionPayload, proposed_at: Timestamp) -> Result<TxReceipt, ClientError> {
        let (path, body) = endpoint(&payload).ok_or_else(|| ClientError::Decode("payload has no endpoint".into()))?;
        let nonce = rand::thread_rng().next_u64();
        let proposal = Proposal::sign(&self.holder, nonce, proposed_at, payload);
        let response = self
            .http
            .post(format!("{}{path}", self.base))
            .bearer_auth(&self.token)
            .header(HEADER_NONCE, nonce.to_string())
            .header(HEADER_TIME, proposed_at.as_millis().to_string())
            .header(HEADER_SIGNATURE, B64.encode(proposal.client_signature.0))
            .json(&body)
            .send()
            .await?;
        decode(response).await
    }

    pub async fn issue_card(&self, participant_id: &str, public_key: PublicKey) -> Result<IdentityCard, ClientError> {
        let body = json!({ "participantId": participant_id, "publicKey": public_key });
        let response = self.http.post(format!("{}/api/cards", self.base)).bearer_auth(&self.token).json(&body).send().await?;
        decode(response).await
    }

    /// Opens the committed-event stream, optionally resuming after `after`.
    pub async fn events(&self, kinds: &[EventKind], after: Option<EventId>) -> Result<EventStream, ClientError> {
        let mut query = Vec::new();
        if !kinds.is_empty() {
            query.push(("kinds", kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",")));
        }
        if let Some(after) = after {
            query.push(("after", after.to_string()));
        }
        let response = self.http.get(format!("{}/api/events/stream", self.base)).bearer_auth(&self.token).query(&query).send().await?;
        if !response.status().is_success() {
            return Err(decode::<Value>(response).await.err().unwrap_or(ClientError::Decode("stream refused".into())));
        }
        Ok(EventStream { response, buffer: String::new(), ready: VecDeque::new() })
    }
}

/// Minimal server-sent-events reader yielding `(id, event)` pairs.
pub struct EventStream {
    response: reqwest::Response,
    buffer: String,
    ready: VecDeque<(EventId, ChainEvent)>,
}

impl EventStream {
    /// Next event, or `None` once the server closes the stream.
    pub async fn next(&mut self) -> Result<Option<(EventId, ChainEvent)>, ClientError> {
        loop {
            if let Some(next) = self.ready.pop_front() {
                return Ok(Some(next));
            }
            let Some(chunk) = self.response.chunk().await? else { return Ok(None) };
            self.buffer.push_str(&String::from_utf8_lossy(&chunk));
            while let Some(end) = self.buffer.find("\n\n") {
                let frame: String = self.buffer.drain(..end + 2).collect();
                let mut id = None;
                let mut data = String::new();
                for line in frame.lines() {
                    if let Some(v) = line.strip_prefix("id:") {
                        id = Some(v.trim().to_string());
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.strip_prefix(' ').unwrap_or(v));
                    }
                }
                let (Some(id), false) = (id, data.is_empty()) else { continue };
                let id = id.parse::<EventId>().map_err(|_| ClientError::Decode(format!("bad event id {id}")))?;
                let event = serde_json::from_str(&data).map_err(|e| ClientError::Decode(e.to_string()))?;
                self.ready.push_back((id, event));
            }
        }
    }
}
