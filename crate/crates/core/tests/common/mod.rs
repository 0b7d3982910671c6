#![allow(dead_code)]

use doorchain_core::acl::{AclRule, Action, Condition, Operation};
use doorchain_core::chaincode::TransactionPayload;
use doorchain_core::config::{ChainConfig, EndorsementPolicy, GenesisConfig, PeerInfo};
use doorchain_core::domain::{certify, Department, HolderCard, Participant, PhysicalPlace, Role};
use doorchain_core::endorsement::{assemble, Proposal};
use doorchain_core::ledger::{genesis_block, Block, CommitSummary};
use doorchain_core::{Peer, SecretKey, Timestamp, TransactionEnvelope, TxResponse, Validity};

pub const SEED: &[u8] = b"test-network-seed";
/// 2026-01-01T10:00:00Z
pub const START: i64 = 1_767_261_600_000;

pub fn rule(id: &str, roles: &[Role], pattern: &str, actions: &[Action], op: Operation, cond: Condition) -> AclRule {
    AclRule {
        rule_id: id.into(),
        roles: roles.iter().copied().collect(),
        resource_pattern: pattern.parse().unwrap(),
        actions: actions.iter().copied().collect(),
        operation: op,
        condition: cond,
    }
}

/// Managers may enter any place of their own department.
pub fn default_rules() -> Vec<AclRule> {
    vec![rule("managers-own-dept", &[Role::Manager, Role::Ceo], "*", &[Action::Read], Operation::Allow, Condition::DepartmentMatch)]
}

pub struct Fixture {
    pub issuer: SecretKey,
    pub genesis_config: GenesisConfig,
    pub genesis: Block,
    pub peers: Vec<Peer>,
    pub admin: HolderCard,
    nonce: u64,
    pub clock: Timestamp,
}

impl Fixture {
    pub fn new(rules: Vec<AclRule>, intrusion_threshold: u32) -> Self {
        let issuer = SecretKey::derive(SEED, "issuer");
        let peer_keys: Vec<(String, String, SecretKey)> = [("peer0.org1", "org1"), ("peer0.org2", "org2")]
            .into_iter()
            .map(|(p, o)| (p.to_string(), o.to_string(), SecretKey::derive(SEED, &format!("peer:{p}"))))
            .collect();
        let genesis_config = GenesisConfig {
            network_name: "test-net".into(),
            timestamp: Timestamp::from_millis(START - 3_600_000),
            issuer_public_key: issuer.public_key(),
            admins: vec![Participant::new("admin", "Administrator", Role::Admin, None)],
            roster: peer_keys
                .iter()
                .map(|(p, o, k)| PeerInfo { peer_id: p.clone(), org_id: o.clone(), public_key: k.public_key() })
                .collect(),
            policy: EndorsementPolicy::all_of(["org1", "org2"]),
            chain: ChainConfig { intrusion_threshold, max_block_size: 10, rules },
        };
        let admin = holder(&issuer, "admin");
        let genesis = genesis_block(&genesis_config, &admin).expect("genesis");
        let peers = peer_keys.into_iter().map(|(p, _, k)| Peer::new(&p, k, genesis.clone()).expect("peer")).collect();
        Fixture { issuer, genesis_config, genesis, peers, admin, nonce: 1, clock: Timestamp::from_millis(START) }
    }

    pub fn card(&self, participant: &str) -> HolderCard {
        holder(&self.issuer, participant)
    }

    pub fn propose(&mut self, who: &HolderCard, payload: TransactionPayload) -> Proposal {
        self.nonce += 1;
        self.clock = self.clock.plus_millis(1000);
        Proposal::sign(who, self.nonce, self.clock, payload)
    }

    pub fn propose_at(&mut self, who: &HolderCard, payload: TransactionPayload, at: Timestamp) -> Proposal {
        self.nonce += 1;
        Proposal::sign(who, self.nonce, at, payload)
    }

    /// Endorses on every peer against its current state and assembles.
    pub fn endorse(&self, proposal: &Proposal) -> TransactionEnvelope {
        let endorsements: Vec<_> = self.peers.iter().map(|p| p.endorse(proposal).expect("endorse")).collect();
        assemble(proposal, &endorsements, &self.genesis_config.policy).expect("assemble")
    }

    /// Cuts one block from `txs` and commits it on every peer.
    pub fn commit(&mut self, txs: Vec<TransactionEnvelope>) -> CommitSummary {
        let tip = self.peers[0].ledger().tip().header.clone();
        self.clock = self.clock.plus_millis(10);
        let block = Block::new(tip.height + 1, tip.block_hash, self.clock, txs);
        let mut summaries: Vec<CommitSummary> =
            self.peers.iter_mut().map(|p| p.validate_and_commit(block.clone()).expect("commit")).collect();
        let first = summaries.remove(0);
        for other in summaries {
            assert_eq!(other, first, "peers diverged");
        }
        first
    }

    /// Proposes, endorses and commits a single transaction in its own block.
    pub fn submit(&mut self, who: &HolderCard, payload: TransactionPayload) -> (Validity, TxResponse, CommitSummary) {
        let proposal = self.propose(who, payload);
        let env = self.endorse(&proposal);
        let response = env.response.clone();
        let summary = self.commit(vec![env]);
        (summary.validity[0], response, summary)
    }

    pub fn submit_ok(&mut self, who: &HolderCard, payload: TransactionPayload) -> CommitSummary {
        let (validity, response, summary) = self.submit(who, payload);
        assert_eq!(validity, Validity::Valid);
        assert!(response.is_success(), "unexpected response {response:?}");
        summary
    }

    pub fn register(&mut self, payload: TransactionPayload) {
        let admin = self.admin.clone();
        self.submit_ok(&admin, payload);
    }

    /// dept-x (CEO carol) with door-1, door-2; dept-y (CEO dave) with door-y1;
    /// employees alice, bob; manager mike (dept-x).
    pub fn with_org(mut self) -> Self {
        let people = [
            Participant::new("carol", "Carol", Role::Ceo, Some("dept-x")),
            Participant::new("dave", "Dave", Role::Ceo, Some("dept-y")),
            Participant::new("alice", "Alice", Role::Employee, Some("dept-x")),
            Participant::new("bob", "Bob", Role::Employee, Some("dept-x")),
            Participant::new("mike", "Mike", Role::Manager, Some("dept-x")),
        ];
        for participant in people {
            self.register(TransactionPayload::RegisterParticipant { participant });
        }
        for (dept, ceo) in [("dept-x", "carol"), ("dept-y", "dave")] {
            let department = Department { department_id: dept.into(), name: dept.to_uppercase(), ceo_participant_id: ceo.into() };
            self.register(TransactionPayload::RegisterDepartment { department });
        }
        for (place, dept) in [("door-1", "dept-x"), ("door-2", "dept-x"), ("door-y1", "dept-y")] {
            self.register(TransactionPayload::RegisterPlace { place: PhysicalPlace::new(place, place, dept) });
        }
        self
    }

    pub fn state_hashes(&self) -> Vec<doorchain_core::Hash> {
        self.peers.iter().map(|p| p.ledger().state_hash()).collect()
    }
}

pub fn holder(issuer: &SecretKey, participant: &str) -> HolderCard {
    let private_key = SecretKey::derive(SEED, &format!("holder:{participant}"));
    let card = certify(
        format!("card-{participant}").into(),
        participant.into(),
        private_key.public_key(),
        issuer,
        Timestamp::from_millis(START),
    );
    HolderCard { card, private_key }
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

pub fn revoke_delegation(who: &str, dept: &str) -> TransactionPayload {
    TransactionPayload::RevokeDelegation { delegate_participant_id: who.into(), department_id: dept.into() }
}
