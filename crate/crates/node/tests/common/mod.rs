#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use doorchain::config::NodeConfig;
use doorchain::gateway::{self, AppState, GatewayOptions};
use doorchain::network::{Network, SubmitError, TxOutcome};
use doorchain::now;
use doorchain_core::acl::{AclRule, Action, Condition, Operation};
use doorchain_core::chaincode::TransactionPayload;
use doorchain_core::domain::{certify, HolderCard};
use doorchain_core::endorsement::Proposal;
use doorchain_core::{Department, Participant, PhysicalPlace, Role, SecretKey};
use rand::RngCore;

/// Managers and CEOs may enter any place of their own department.
pub fn default_rules() -> Vec<AclRule> {
    vec![AclRule {
        rule_id: "managers-own-dept".into(),
        roles: [Role::Manager, Role::Ceo].into_iter().collect(),
        resource_pattern: "*".parse().unwrap(),
        actions: [Action::Read].into_iter().collect(),
        operation: Operation::Allow,
        condition: Condition::DepartmentMatch,
    }]
}

/// Two-org config with a short batch timeout and the default rules
/// written next to it in `dir`.
pub fn config(dir: &Path, seed: &str) -> NodeConfig {
    let mut config = NodeConfig::sample(seed);
    let rules = dir.join("rules.json");
    std::fs::write(&rules, serde_json::to_vec(&default_rules()).unwrap()).unwrap();
    config.chain.rules = Some(rules);
    config.orderer.batch_timeout_ms = 50;
    config.gateway.max_clock_skew_ms = 300_000;
    config
}

pub fn holder(config: &NodeConfig, participant: &str) -> HolderCard {
    let private_key = SecretKey::derive(config.network.seed.as_bytes(), &format!("holder:{participant}"));
    let card = certify(
        format!("card-{participant}").into(),
        participant.into(),
        private_key.public_key(),
        &config.issuer_key(),
        now(),
    );
    HolderCard { card, private_key }
}

pub struct Harness {
    pub config: NodeConfig,
    pub network: Network,
    pub admin: HolderCard,
    _dir: Option<tempfile::TempDir>,
}

impl Harness {
    pub fn start(config: NodeConfig) -> Self {
        let network = Network::from_config(&config).expect("network");
        let admin = config.bootstrap_card().unwrap();
        Harness { config, network, admin, _dir: None }
    }

    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut h = Self::start(config(dir.path(), "harness-seed"));
        h._dir = Some(dir);
        h
    }

    pub fn card(&self, participant: &str) -> HolderCard {
        holder(&self.config, participant)
    }

    pub async fn submit(&self, who: &HolderCard, payload: TransactionPayload) -> Result<TxOutcome, SubmitError> {
        let proposal = Proposal::sign(who, rand::thread_rng().next_u64(), now(), payload);
        self.network.submit(&proposal).await
    }

    pub async fn admin_ok(&self, payload: TransactionPayload) -> TxOutcome {
        self.submit(&self.admin, payload).await.expect("admin transaction")
    }

    /// dept-x (CEO carol) with door-1, door-2; dept-y (CEO dave) with
    /// door-y1; employees alice, bob; manager mike (dept-x).
    pub async fn with_org(self) -> Self {
        let people = [
            Participant::new("carol", "Carol", Role::Ceo, Some("dept-x")),
            Participant::new("dave", "Dave", Role::Ceo, Some("dept-y")),
            Participant::new("alice", "Alice", Role::Employee, Some("dept-x")),
            Participant::new("bob", "Bob", Role::Employee, Some("dept-x")),
            Participant::new("mike", "Mike", Role::Manager, Some("dept-x")),
        ];
        let admin = self.admin.clone();
        let registrations = people.into_iter().map(|participant| self.submit(&admin, TransactionPayload::RegisterParticipant { participant }));
        for r in futures::future::join_all(registrations).await {
            r.expect("register participant");
        }
        let departments = [("dept-x", "carol"), ("dept-y", "dave")].map(|(dept, ceo)| {
            let department = Department { department_id: dept.into(), name: dept.to_uppercase(), ceo_participant_id: ceo.into() };
            self.submit(&admin, TransactionPayload::RegisterDepartment { department })
        });
        for r in futures::future::join_all(departments).await {
            r.expect("register department");
        }
        let places = [("door-1", "dept-x"), ("door-2", "dept-x"), ("door-y1", "dept-y")]
            .map(|(place, dept)| self.submit(&admin, TransactionPayload::RegisterPlace { place: PhysicalPlace::new(place, place, dept) }));
        for r in futures::future::join_all(places).await {
            r.expect("register place");
        }
        self
    }

    /// Serves the gateway on an ephemeral port and returns its base URL.
    pub async fn serve(&self) -> String {
        let state: Arc<AppState> = AppState::new(self.network.clone(), self.config.issuer_key(), GatewayOptions::default());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(gateway::serve(listener, state));
        format!("http://{addr}")
    }
}

pub fn grant(target: &str, place: &str) -> TransactionPayload {
    TransactionPayload::GrantAccess { target_participant_id: target.into(), place_id: place.into() }
}

pub fn revoke(target: &str, place: &str) -> TransactionPayload {
    TransactionPayload::RevokeAccess { target_participant_id: target.into(), place_id: place.into() }
}

pub fn check(place: &str) -> TransactionPayload {
    TransactionPayload::CheckAccess { place_id: place.into() }
}

pub fn delegate(who: &str, dept: &str) -> TransactionPayload {
    TransactionPayload::DelegateAuthority { delegate_participant_id: who.into(), department_id: dept.into() }
}
