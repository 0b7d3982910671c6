//! Network parameters fixed at genesis.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::acl::AclRule;
use crate::crypto::PublicKey;
use crate::domain::{Participant, Role};
use crate::time::Timestamp;

pub const DEFAULT_INTRUSION_THRESHOLD: u32 = 3;
pub const DEFAULT_MAX_BLOCK_SIZE: u32 = 10;

/// Parameters the transaction processors need, identical on every peer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainConfig {
    /// Consecutive denials at one place that raise an intrusion alert.
    pub intrusion_threshold: u32,
    /// Orderer block size; also the stride of dynamic-entry sequence numbers.
    pub max_block_size: u32,
    pub rules: Vec<AclRule>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            intrusion_threshold: DEFAULT_INTRUSION_THRESHOLD,
            max_block_size: DEFAULT_MAX_BLOCK_SIZE,
            rules: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PeerInfo {
    pub peer_id: String,
    pub org_id: String,
    pub public_key: PublicKey,
}

/// Organisations that must each contribute one endorsement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EndorsementPolicy {
    pub required_orgs: BTreeSet<String>,
}

impl EndorsementPolicy {
    pub fn all_of<'a>(orgs: impl IntoIterator<Item = &'a str>) -> Self {
        EndorsementPolicy { required_orgs: orgs.into_iter().map(String::from).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenesisConfig {
    pub network_name: String,
    pub timestamp: Timestamp,
    pub issuer_public_key: PublicKey,
    pub admins: Vec<Participant>,
    pub roster: Vec<PeerInfo>,
    pub policy: EndorsementPolicy,
    pub chain: ChainConfig,
}

impl GenesisConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.admins.is_empty() {
            return Err("at least one admin participant is required".into());
        }
        for admin in &self.admins {
            admin.check().map_err(String::from)?;
            if admin.role != Role::Admin {
                return Err(alloc::format!("bootstrap participant {} must have role Admin", admin.participant_id));
            }
        }
        let mut admin_ids = BTreeSet::new();
        if !self.admins.iter().all(|a| admin_ids.insert(&a.participant_id)) {
            return Err("duplicate admin participant id".into());
        }
        if self.chain.intrusion_threshold == 0 {
            return Err("intrusion threshold must be at least 1".into());
        }
        if self.chain.max_block_size == 0 {
            return Err("max block size must be at least 1".into());
        }
        let mut rule_ids = BTreeSet::new();
        for rule in &self.chain.rules {
            rule.check()?;
            if !rule_ids.insert(&rule.rule_id) {
                return Err(alloc::format!("duplicate rule id {}", rule.rule_id));
            }
        }
        if self.policy.required_orgs.is_empty() {
            return Err("endorsement policy must name at least one organisation".into());
        }
        let mut peer_ids = BTreeSet::new();
        if !self.roster.iter().all(|p| peer_ids.insert(&p.peer_id)) {
            return Err("duplicate peer id in roster".into());
        }
        for org in &self.policy.required_orgs {
            if !self.roster.iter().any(|p| &p.org_id == org) {
                return Err(alloc::format!("endorsement policy names org {org} with no peer in the roster"));
            }
        }
        Ok(())
    }

    pub fn peer(&self, peer_id: &str) -> Option<&PeerInfo> {
        self.roster.iter().find(|p| p.peer_id == peer_id)
    }
}
