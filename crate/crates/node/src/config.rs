//! Node configuration file (TOML).

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use doorchain_core::acl::AclRule;
use doorchain_core::config::{ChainConfig, EndorsementPolicy, GenesisConfig, PeerInfo};
use doorchain_core::domain::{certify, HolderCard, Participant, Role};
use doorchain_core::{SecretKey, Timestamp};
use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub network: NetworkSection,
    #[serde(default)]
    pub orderer: OrdererConfig,
    #[serde(default)]
    pub chain: ChainSection,
    pub peers: Vec<PeerEntry>,
    pub policy: PolicySection,
    pub admins: Vec<AdminEntry>,
    #[serde(default)]
    pub gateway: GatewaySection,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub name: String,
    /// Master secret from which the issuer, peer and bootstrap admin keys
    /// are derived.
    pub seed: String,
    pub genesis_timestamp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrdererConfig {
    pub max_block_size: u32,
    pub batch_timeout_ms: u64,
    /// Simulated block delivery delay per peer.
    pub delivery_delay_ms: u64,
    /// Extra random delay added per block and peer; may reorder delivery.
    pub delivery_jitter_ms: u64,
}

impl Default for OrdererConfig {
    fn default() -> Self {
        OrdererConfig { max_block_size: 10, batch_timeout_ms: 1000, delivery_delay_ms: 0, delivery_jitter_ms: 0 }
    }
}

impl OrdererConfig {
    pub fn batch_timeout(&self) -> Duration {
        Duration::from_millis(self.batch_timeout_ms)
    }

    pub fn check(&self) -> anyhow::Result<()> {
        if self.max_block_size == 0 {
            bail!("orderer.max_block_size must be at least 1");
        }
        if self.batch_timeout_ms == 0 {
            bail!("orderer.batch_timeout_ms must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub intrusion_threshold: u32,
    /// JSON file holding the ordered static rule list.
    pub rules: Option<PathBuf>,
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection { intrusion_threshold: 3, rules: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerEntry {
    pub peer_id: String,
    pub org_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub required_orgs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdminEntry {
    pub participant_id: String,
    pub display_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub listen: SocketAddr,
    /// Peer whose ledger answers queries and whose commits acknowledge writes.
    pub peer: Option<String>,
    pub data_dir: Option<PathBuf>,
    pub webhook_url: Option<String>,
    pub mvcc_retries: u32,
    /// Accepted distance between a proposal's timestamp and the gateway clock.
    pub max_clock_skew_ms: u64,
    pub commit_timeout_ms: u64,
    /// Write a state snapshot every this many blocks (0 disables).
    pub snapshot_interval: u64,
}

impl Default for GatewaySection {
    fn default() -> Self {
        GatewaySection {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            peer: None,
            data_dir: None,
            webhook_url: None,
            mvcc_retries: 3,
            max_clock_skew_ms: 300_000,
            commit_timeout_ms: 30_000,
            snapshot_interval: 50,
        }
    }
}

impl NodeConfig {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: NodeConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(rules) = &mut config.chain.rules {
            *rules = base.join(&*rules);
        }
        if let Some(dir) = &mut config.gateway.data_dir {
            *dir = base.join(&*dir);
        }
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> anyhow::Result<()> {
        self.orderer.check()?;
        if self.peers.is_empty() {
            bail!("at least one peer is required");
        }
        if let Some(peer) = &self.gateway.peer {
            if !self.peers.iter().any(|p| &p.peer_id == peer) {
                bail!("gateway.peer {peer} is not in the roster");
            }
        }
        if let Some(bench) = &self.bench {
            bench.check()?;
        }
        Ok(())
    }

    pub fn genesis_time(&self) -> anyhow::Result<Timestamp> {
        Timestamp::parse_rfc3339(&self.network.genesis_timestamp)
            .with_context(|| format!("network.genesis_timestamp {:?}", self.network.genesis_timestamp))
    }

    pub fn issuer_key(&self) -> SecretKey {
        SecretKey::derive(self.network.seed.as_bytes(), "issuer")
    }

    pub fn peer_key(&self, peer_id: &str) -> SecretKey {
        SecretKey::derive(self.network.seed.as_bytes(), &format!("peer:{peer_id}"))
    }

    pub fn rules(&self) -> anyhow::Result<Vec<AclRule>> {
        match &self.chain.rules {
            None => Ok(Vec::new()),
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing rules in {}", path.display()))
            }
        }
    }

    pub fn genesis_config(&self) -> anyhow::Result<GenesisConfig> {
        let config = GenesisConfig {
            network_name: self.network.name.clone(),
            timestamp: self.genesis_time()?,
            issuer_public_key: self.issuer_key().public_key(),
            admins: self.admins.iter().map(|a| Participant::new(&a.participant_id, &a.display_name, Role::Admin, None)).collect(),
            roster: self
                .peers
                .iter()
                .map(|p| PeerInfo { peer_id: p.peer_id.clone(), org_id: p.org_id.clone(), public_key: self.peer_key(&p.peer_id).public_key() })
                .collect(),
            policy: EndorsementPolicy::all_of(self.policy.required_orgs.iter().map(String::as_str)),
            chain: ChainConfig {
                intrusion_threshold: self.chain.intrusion_threshold,
                max_block_size: self.orderer.max_block_size,
                rules: self.rules()?,
            },
        };
        config.check().map_err(anyhow::Error::msg)?;
        Ok(config)
    }

    /// The card of the first admin, which signs the genesis transaction.
    pub fn bootstrap_card(&self) -> anyhow::Result<HolderCard> {
        let admin = self.admins.first().context("at least one admin is required")?;
        let private_key = SecretKey::derive(self.network.seed.as_bytes(), &format!("holder:{}", admin.participant_id));
        let card = certify(
            format!("card-{}", admin.participant_id).into(),
            admin.participant_id.as_str().into(),
            private_key.public_key(),
            &self.issuer_key(),
            self.genesis_time()?,
        );
        Ok(HolderCard { card, private_key })
    }

    pub fn gateway_peer_index(&self) -> usize {
        self.gateway
            .peer
            .as_ref()
            .and_then(|id| self.peers.iter().position(|p| &p.peer_id == id))
            .unwrap_or(0)
    }

    /// A two-org, one-admin network for tests and local experiments.
    pub fn sample(seed: &str) -> Self {
        NodeConfig {
            network: NetworkSection { name: "doorchain".into(), seed: seed.into(), genesis_timestamp: "2026-01-01T00:00:00Z".into() },
            orderer: OrdererConfig::default(),
            chain: ChainSection::default(),
            peers: vec![
                PeerEntry { peer_id: "peer0.org1".into(), org_id: "org1".into() },
                PeerEntry { peer_id: "peer0.org2".into(), org_id: "org2".into() },
            ],
            policy: PolicySection { required_orgs: vec!["org1".into(), "org2".into()] },
            admins: vec![AdminEntry { participant_id: "admin".into(), display_name: "Administrator".into() }],
            gateway: GatewaySection::default(),
            bench: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_round_trips_through_toml() {
        let config = NodeConfig::sample("s");
        let text = toml::to_string(&config).unwrap();
        let back: NodeConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.genesis_config().unwrap(), config.genesis_config().unwrap());
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let text = r#"
            [network]
            name = "n"
            seed = "x"
            genesis_timestamp = "2026-01-01T00:00:00Z"
            [[peers]]
            peer_id = "p1"
            org_id = "org1"
            [policy]
            required_orgs = ["org1"]
            [[admins]]
            participant_id = "admin"
            display_name = "A"
        "#;
        let config: NodeConfig = toml::from_str(text).unwrap();
        assert_eq!(config.orderer, OrdererConfig::default());
        assert_eq!(config.chain.intrusion_threshold, 3);
        assert_eq!(config.gateway.mvcc_retries, 3);
        let genesis = config.genesis_config().unwrap();
        assert_eq!(genesis.chain.max_block_size, 10);
    }

    #[test]
    fn rejects_zero_block_size() {
        let mut config = NodeConfig::sample("s");
        config.orderer.max_block_size = 0;
        assert!(config.check().is_err());
    }

    #[test]
    fn keys_depend_on_seed() {
        let a = NodeConfig::sample("a");
        let b = NodeConfig::sample("b");
        assert_ne!(a.issuer_key().public_key(), b.issuer_key().public_key());
        assert_eq!(a.peer_key("p").public_key(), NodeConfig::sample("a").peer_key("p").public_key());
    }
}
