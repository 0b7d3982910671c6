//! Load generator: fixed-rate submission through the full pipeline, with
//! init/run/end phases and a latency/throughput report.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Duration;

use doorchain_core::chaincode::TransactionPayload;
use doorchain_core::domain::{issue_holder_card, HolderCard};
use doorchain_core::endorsement::Proposal;
use doorchain_core::{Department, Participant, PhysicalPlace, Role, SecretKey};
use futures::future::join_all;
use parking_lot::Mutex;
use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use tokio::time::Instant;

use crate::client::GatewayClient;
use crate::network::Network;
use crate::now;

pub const MARKDOWN_HEADER: &str =
    "| Name | Succ | Fail | Send Rate | Max Latency | Min Latency | Avg Latency | 75%ile Latency | Throughput |";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadMix {
    pub check_access: f64,
    pub grant_access: f64,
    pub revoke_access: f64,
}

impl Default for WorkloadMix {
    fn default() -> Self {
        WorkloadMix { check_access: 0.7, grant_access: 0.2, revoke_access: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Every client works on its own department's keys.
    #[default]
    Sharded,
    /// All clients share one card and one place, so transactions collide.
    Conflict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub name: String,
    pub total_transactions: usize,
    /// Transactions per second.
    pub send_rate: f64,
    pub mix: WorkloadMix,
    pub client_count: usize,
    pub places_per_client: usize,
    pub workers_per_client: usize,
    pub seed: u64,
    pub preset: Preset,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            name: "access-control".into(),
            total_transactions: 500,
            send_rate: 10.0,
            mix: WorkloadMix::default(),
            client_count: 5,
            places_per_client: 4,
            workers_per_client: 4,
            seed: 1,
            preset: Preset::Sharded,
        }
    }
}

impl BenchConfig {
    pub fn check(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.send_rate.is_finite() && self.send_rate > 0.0, "send_rate must be positive");
        anyhow::ensure!(self.client_count > 0, "client_count must be positive");
        anyhow::ensure!(self.places_per_client > 0 && self.workers_per_client > 0, "each client needs places and workers");
        let m = self.mix;
        anyhow::ensure!(
            [m.check_access, m.grant_access, m.revoke_access].iter().all(|p| p.is_finite() && *p >= 0.0),
            "mix proportions must be non-negative"
        );
        let sum = m.check_access + m.grant_access + m.revoke_access;
        anyhow::ensure!((sum - 1.0).abs() < 1e-9, "mix proportions must sum to 1, got {sum}");
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxKind {
    CheckAccess,
    GrantAccess,
    RevokeAccess,
}

/// One submitted transaction. Times are seconds from the start of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Sample {
    pub index: usize,
    pub client: usize,
    pub kind: TxKind,
    pub send_time: f64,
    pub commit_time: f64,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Sample {
    pub fn latency(&self) -> f64 {
        self.commit_time - self.send_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub name: String,
    pub succ: usize,
    pub fail: usize,
    pub send_rate: f64,
    pub max_latency: Option<f64>,
    pub min_latency: Option<f64>,
    pub avg_latency: Option<f64>,
    pub p75_latency: Option<f64>,
    pub throughput: f64,
    pub samples: Vec<Sample>,
}

/// Nearest-rank percentile of an ascending slice; `p` in (0, 100].
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

impl BenchReport {
    /// Aggregates raw samples. Latency statistics cover successful
    /// transactions; throughput is successes over first send to last commit.
    pub fn from_samples(name: &str, send_rate: f64, mut samples: Vec<Sample>) -> Self {
        samples.sort_by_key(|s| s.index);
        let mut latencies: Vec<f64> = samples.iter().filter(|s| s.valid).map(Sample::latency).collect();
        latencies.sort_by(f64::total_cmp);
        let succ = latencies.len();
        let fail = samples.len() - succ;
        let first_send = samples.iter().map(|s| s.send_time).min_by(f64::total_cmp);
        let last_commit = samples.iter().map(|s| s.commit_time).max_by(f64::total_cmp);
        let throughput = match (first_send, last_commit) {
            (Some(a), Some(b)) if succ > 0 && b > a => succ as f64 / (b - a),
            _ => 0.0,
        };
        let avg = (succ > 0).then(|| latencies.iter().sum::<f64>() / succ as f64);
        BenchReport {
            name: name.into(),
            succ,
            fail,
            send_rate,
            max_latency: latencies.last().copied(),
            min_latency: latencies.first().copied(),
            avg_latency: avg,
            p75_latency: nearest_rank(&latencies, 75.0),
            throughput,
            samples,
        }
    }

    pub fn to_markdown(&self) -> String {
        let secs = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2} s"));
        let mut out = String::new();
        let _ = writeln!(out, "{MARKDOWN_HEADER}");
        let _ = writeln!(out, "|{}", "---|".repeat(9));
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.1} tps | {} | {} | {} | {} | {:.1} tps |",
            self.name,
            self.succ,
            self.fail,
            self.send_rate,
            secs(self.max_latency),
            secs(self.min_latency),
            secs(self.avg_latency),
            secs(self.p75_latency),
            self.throughput
        );
        out
    }
}

/// Where the load goes.
pub enum Target {
    /// Submits straight into an in-process network; cards are certified
    /// locally with the issuer key.
    InProcess { network: Network, admin: HolderCard, issuer: SecretKey },
    /// Submits through a running gateway.
    Gateway { url: String, admin: HolderCard },
}

#[derive(Clone)]
enum Submitter {
    InProcess { network: Network, holder: HolderCard },
    Http(GatewayClient),
}

impl Submitter {
    async fn submit(&self, payload: TransactionPayload) -> Result<(), String> {
        match self {
            Submitter::InProcess { network, holder } => {
                let proposal = Proposal::sign(holder, rand::thread_rng().next_u64(), now(), payload);
                network.submit(&proposal).await.map(drop).map_err(|e| e.to_string())
            }
            Submitter::Http(client) => match client.submit(payload).await {
                Ok(receipt) if receipt.valid => Ok(()),
                Ok(receipt) => Err(format!("transaction {} committed invalid", receipt.tx_id)),
                Err(e) => Err(e.to_string()),
            },
        }
    }
}

struct Fixture {
    clients: Vec<Submitter>,
    /// Per client: its place ids and worker ids.
    places: Vec<Vec<String>>,
    workers: Vec<Vec<String>>,
    ceos: Vec<String>,
}

async fn all_ok(admin: &Submitter, payloads: Vec<TransactionPayload>) -> anyhow::Result<()> {
    for result in join_all(payloads.into_iter().map(|p| admin.submit(p))).await {
        result.map_err(anyhow::Error::msg)?;
    }
    Ok(())
}

/// Registers departments, CEOs, workers and places, and opens one
/// session per client.
async fn init(config: &BenchConfig, target: &Target, run: &str) -> anyhow::Result<Fixture> {
    let admin = match target {
        Target::InProcess { network, admin, .. } => Submitter::InProcess { network: network.clone(), holder: admin.clone() },
        Target::Gateway { url, admin } => Submitter::Http(GatewayClient::login(url, admin.clone()).await?),
    };
    let departments = match config.preset {
        Preset::Sharded => config.client_count,
        Preset::Conflict => 1,
    };
    let mut people = Vec::new();
    let mut depts = Vec::new();
    let mut places = Vec::new();
    let mut ceos = Vec::new();
    let mut place_ids = Vec::new();
    let mut worker_ids = Vec::new();
    for d in 0..departments {
        let dept = format!("{run}-d{d}");
        let ceo = format!("{run}-ceo{d}");
        people.push(Participant::new(&ceo, "Bench CEO", Role::Ceo, Some(&dept)));
        depts.push(Department { department_id: dept.as_str().into(), name: format!("Bench {d}"), ceo_participant_id: ceo.as_str().into() });
        let mut ps = Vec::new();
        for j in 0..config.places_per_client {
            let id = format!("{dept}-p{j}");
            places.push(PhysicalPlace::new(&id, "Bench door", &dept));
            ps.push(id);
        }
        let mut ws = Vec::new();
        for k in 0..config.workers_per_client {
            let id = format!("{dept}-w{k}");
            people.push(Participant::new(&id, "Bench worker", Role::Employee, Some(&dept)));
            ws.push(id);
        }
        ceos.push(ceo);
        place_ids.push(ps);
        worker_ids.push(ws);
    }
    all_ok(&admin, people.into_iter().map(|participant| TransactionPayload::RegisterParticipant { participant }).collect()).await?;
    all_ok(&admin, depts.into_iter().map(|department| TransactionPayload::RegisterDepartment { department }).collect()).await?;
    all_ok(&admin, places.into_iter().map(|place| TransactionPayload::RegisterPlace { place }).collect()).await?;

    let mut clients = Vec::new();
    let mut cards: Vec<HolderCard> = Vec::new();
    for ceo in &ceos {
        let holder = match (target, &admin) {
            (Target::InProcess { issuer, .. }, _) => {
                let known = |_: &doorchain_core::ParticipantId| true;
                issue_holder_card(&known, &ceo.as_str().into(), issuer, now(), &mut rand::thread_rng())?
            }
            (Target::Gateway { .. }, Submitter::Http(client)) => {
                let key = SecretKey::generate(&mut rand::thread_rng());
                let card = client.issue_card(ceo, key.public_key()).await?;
                HolderCard { card, private_key: key }
            }
            _ => unreachable!("admin submitter matches the target"),
        };
        cards.push(holder);
    }
    for c in 0..config.client_count {
        let holder = cards[c % cards.len()].clone();
        clients.push(match target {
            Target::InProcess { network, .. } => Submitter::InProcess { network: network.clone(), holder },
            Target::Gateway { url, .. } => Submitter::Http(GatewayClient::login(url, holder).await?),
        });
    }
    Ok(Fixture { clients, places: place_ids, workers: worker_ids, ceos })
}

fn pick_kind(mix: &WorkloadMix, rng: &mut StdRng) -> TxKind {
    let x: f64 = rng.gen();
    if x < mix.check_access {
        TxKind::CheckAccess
    } else if x < mix.check_access + mix.grant_access {
        TxKind::GrantAccess
    } else {
        TxKind::RevokeAccess
    }
}

/// Runs one benchmark round against `target`.
pub async fn run_round(config: &BenchConfig, target: &Target) -> anyhow::Result<BenchReport> {
    config.check()?;
    if config.total_transactions == 0 {
        return Ok(BenchReport::from_samples(&config.name, config.send_rate, Vec::new()));
    }
    let run = format!("bench{}x{}", now().as_millis(), config.seed);
    let fixture = Arc::new(init(config, target, &run).await?);
    let samples = run_phase(config, fixture.clone()).await;
    drop(fixture);
    Ok(BenchReport::from_samples(&config.name, config.send_rate, samples))
}

async fn run_phase(config: &BenchConfig, fixture: Arc<Fixture>) -> Vec<Sample> {
    let mut rng = StdRng::seed_from_u64(config.seed);
    let busy: Arc<Mutex<HashSet<(usize, usize)>>> = Arc::default();
    let mut cursor = vec![0usize; fixture.places.len()];
    let shards = fixture.places.len();
    let start = Instant::now();
    let interval = Duration::from_secs_f64(1.0 / config.send_rate);
    let mut handles = Vec::with_capacity(config.total_transactions);
    for index in 0..config.total_transactions {
        let kind = pick_kind(&config.mix, &mut rng);
        let client = index % config.client_count;
        let shard = client % shards;
        let places = &fixture.places[shard];
        let payload = match kind {
            TxKind::CheckAccess => {
                let mut slot = cursor[shard] % places.len();
                {
                    let mut busy = busy.lock();
                    if let Some(free) = (0..places.len()).map(|k| (cursor[shard] + k) % places.len()).find(|j| !busy.contains(&(shard, *j))) {
                        slot = free;
                    }
                    busy.insert((shard, slot));
                }
                cursor[shard] = slot + 1;
                TransactionPayload::CheckAccess { place_id: places[slot].as_str().into() }
            }
            TxKind::GrantAccess | TxKind::RevokeAccess => {
                let target_participant_id = match config.preset {
                    Preset::Sharded => fixture.workers[shard][rng.gen_range(0..fixture.workers[shard].len())].as_str().into(),
                    Preset::Conflict => fixture.ceos[shard].as_str().into(),
                };
                let place_id = match config.preset {
                    Preset::Sharded => places[rng.gen_range(0..places.len())].as_str().into(),
                    Preset::Conflict => places[0].as_str().into(),
                };
                if kind == TxKind::GrantAccess {
                    TransactionPayload::GrantAccess { target_participant_id, place_id }
                } else {
                    TransactionPayload::RevokeAccess { target_participant_id, place_id }
                }
            }
        };
        let payload = match (config.preset, payload) {
            (Preset::Conflict, TransactionPayload::CheckAccess { .. }) => TransactionPayload::CheckAccess { place_id: places[0].as_str().into() },
            (_, p) => p,
        };
        let reserved = match &payload {
            TransactionPayload::CheckAccess { place_id } => places.iter().position(|p| p.as_str() == place_id.as_str()),
            _ => None,
        };
        tokio::time::sleep_until(start + interval.mul_f64(index as f64)).await;
        let submitter = fixture.clients[client].clone();
        let busy = busy.clone();
        handles.push(tokio::spawn(async move {
            let sent = Instant::now();
            let result = submitter.submit(payload).await;
            let committed = Instant::now();
            if let Some(slot) = reserved {
                busy.lock().remove(&(shard, slot));
            }
            Sample {
                index,
                client,
                kind,
                send_time: (sent - start).as_secs_f64(),
                commit_time: (committed - start).as_secs_f64(),
                valid: result.is_ok(),
                error: result.err(),
            }
        }));
    }
    let mut samples = Vec::with_capacity(handles.len());
    for handle in join_all(handles).await {
        match handle {
            Ok(sample) => samples.push(sample),
            Err(e) => tracing::error!(error = %e, "bench task panicked"),
        }
    }
    samples
}
