//! In-process execute-order-validate network: peers, a single orderer and
//! per-peer commit workers connected by channels with injectable delay.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Duration;

use doorchain_core::chaincode::{AppError, ChainEvent, TxResponse};
use doorchain_core::config::{GenesisConfig, PeerInfo};
use doorchain_core::endorsement::{assemble, AssembleError, Proposal};
use doorchain_core::peer::EndorseError;
use doorchain_core::{Block, Hash, Ledger, Peer, SecretKey, TransactionEnvelope, Validity};
use parking_lot::{Mutex, RwLock};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::time::Instant;

use crate::config::{NodeConfig, OrdererConfig};
use crate::events::EventBus;
use crate::store::{self, BlockStore};
use crate::now;

/// Re-endorsements after endorsers disagreed because a block landed
/// between their simulations.
const MISMATCH_RETRIES: u32 = 3;

#[derive(Debug, Clone)]
pub struct NetworkOptions {
    pub orderer: OrdererConfig,
    /// Re-endorsements after an MVCC invalidation before giving up.
    pub mvcc_retries: u32,
    pub commit_timeout: Duration,
    /// Peer whose commits acknowledge submissions and publish events.
    pub gateway_peer: usize,
    pub jitter_seed: u64,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions {
            orderer: OrdererConfig::default(),
            mvcc_retries: 3,
            commit_timeout: Duration::from_secs(30),
            gateway_peer: 0,
            jitter_seed: 0,
        }
    }
}

/// Result of a committed submission, as seen by the gateway peer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxOutcome {
    pub tx_id: Hash,
    pub validity: Validity,
    pub block_height: u64,
    pub tx_offset: u32,
    pub response: TxResponse,
    /// Events of the transaction if it committed valid.
    pub events: Vec<ChainEvent>,
    /// Endorse-order-commit rounds used.
    #[serde(default)]
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubmitError {
    #[error("{peer} rejected the proposal: {error}")]
    Rejected { peer: String, error: EndorseError },
    /// The simulation failed; the transaction was not submitted.
    #[error("{0}")]
    Application(AppError),
    #[error("{0}")]
    Assemble(AssembleError),
    #[error("transaction {tx_id} still conflicted after {attempts} attempts")]
    MvccExhausted { tx_id: Hash, attempts: u32 },
    #[error("transaction {} committed as {:?}", .0.tx_id, .0.validity)]
    Invalid(Box<TxOutcome>),
    #[error("no peer of org {0} is available")]
    NoEndorser(String),
    #[error("timed out waiting for commit")]
    Timeout,
    #[error("network is stopped")]
    Stopped,
}

struct PeerSlot {
    info: PeerInfo,
    peer: RwLock<Peer>,
    height: watch::Sender<u64>,
}

struct Shared {
    genesis: GenesisConfig,
    peers: Vec<PeerSlot>,
    gateway_peer: usize,
    waiters: Mutex<HashMap<Hash, Vec<oneshot::Sender<TxOutcome>>>>,
    bus: EventBus,
    store: Option<Mutex<BlockStore>>,
}

#[derive(Clone)]
pub struct Network {
    shared: Arc<Shared>,
    orderer: mpsc::UnboundedSender<TransactionEnvelope>,
    options: Arc<NetworkOptions>,
}

impl Network {
    /// Starts every peer from a copy of `ledger`. Must be called inside a
    /// Tokio runtime.
    pub fn start(
        ledger: Ledger,
        peer_keys: Vec<(String, SecretKey)>,
        options: NetworkOptions,
        store: Option<BlockStore>,
    ) -> anyhow::Result<Network> {
        options.orderer.check()?;
        let genesis = ledger.genesis().clone();
        anyhow::ensure!(
            genesis.chain.max_block_size == options.orderer.max_block_size,
            "orderer block size differs from the chain's"
        );
        anyhow::ensure!(options.gateway_peer < peer_keys.len(), "gateway peer index out of range");
        let mut peers = Vec::new();
        for (peer_id, key) in peer_keys {
            let peer = Peer::from_ledger(&peer_id, key, ledger.clone())?;
            peers.push(PeerSlot { info: peer.info().clone(), peer: RwLock::new(peer), height: watch::channel(ledger.height()).0 });
        }
        let bus = EventBus::new();
        bus.publish(ledger.committed_events());
        let shared = Arc::new(Shared {
            genesis,
            peers,
            gateway_peer: options.gateway_peer,
            waiters: Mutex::new(HashMap::new()),
            bus,
            store: store.map(Mutex::new),
        });

        let mut inboxes = Vec::new();
        for index in 0..shared.peers.len() {
            let (tx, rx) = mpsc::unbounded_channel();
            inboxes.push(tx);
            tokio::spawn(run_peer(shared.clone(), index, rx));
        }
        let (orderer, intake) = mpsc::unbounded_channel();
        let tip = ledger.tip().header.clone();
        let cutter = Cutter {
            next_height: tip.height + 1,
            prev_hash: tip.block_hash,
            config: options.orderer,
            inboxes,
            rng: StdRng::seed_from_u64(options.jitter_seed),
        };
        tokio::spawn(run_orderer(cutter, intake));
        Ok(Network { shared, orderer, options: Arc::new(options) })
    }

    /// Builds the network described by a node config, restoring from its
    /// data directory when one is configured.
    pub fn from_config(config: &NodeConfig) -> anyhow::Result<Network> {
        let genesis_config = config.genesis_config()?;
        let (ledger, store) = match &config.gateway.data_dir {
            Some(dir) => {
                let (mut store, blocks) = BlockStore::open(dir, config.gateway.snapshot_interval)?;
                if blocks.is_empty() {
                    let genesis = doorchain_core::ledger::genesis_block(&genesis_config, &config.bootstrap_card()?)?;
                    store.append(&genesis)?;
                    (Ledger::from_genesis(genesis)?, Some(store))
                } else {
                    let snapshot = store.read_snapshot()?;
                    let ledger = store::restore(blocks, snapshot.as_ref())?;
                    anyhow::ensure!(ledger.genesis() == &genesis_config, "stored chain belongs to a different network configuration");
                    (ledger, Some(store))
                }
            }
            None => {
                let genesis = doorchain_core::ledger::genesis_block(&genesis_config, &config.bootstrap_card()?)?;
                (Ledger::from_genesis(genesis)?, None)
            }
        };
        let keys = config.peers.iter().map(|p| (p.peer_id.clone(), config.peer_key(&p.peer_id))).collect();
        let options = NetworkOptions {
            orderer: config.orderer,
            mvcc_retries: config.gateway.mvcc_retries,
            commit_timeout: Duration::from_millis(config.gateway.commit_timeout_ms),
            gateway_peer: config.gateway_peer_index(),
            jitter_seed: 0,
        };
        Network::start(ledger, keys, options, store)
    }

    pub fn genesis(&self) -> &GenesisConfig {
        &self.shared.genesis
    }

    pub fn options(&self) -> &NetworkOptions {
        &self.options
    }

    pub fn events(&self) -> &EventBus {
        &self.shared.bus
    }

    pub fn peer_count(&self) -> usize {
        self.shared.peers.len()
    }

    pub fn peer_ids(&self) -> Vec<String> {
        self.shared.peers.iter().map(|p| p.info.peer_id.clone()).collect()
    }

    /// Runs `f` against a consistent view of a peer's ledger.
    pub fn with_ledger<R>(&self, peer: usize, f: impl FnOnce(&Ledger) -> R) -> R {
        f(self.shared.peers[peer].peer.read().ledger())
    }

    /// Runs `f` against the gateway peer's ledger.
    pub fn read<R>(&self, f: impl FnOnce(&Ledger) -> R) -> R {
        self.with_ledger(self.shared.gateway_peer, f)
    }

    pub fn heights(&self) -> Vec<u64> {
        self.shared.peers.iter().map(|p| *p.height.borrow()).collect()
    }

    pub fn state_hashes(&self) -> Vec<Hash> {
        (0..self.peer_count()).map(|i| self.with_ledger(i, Ledger::state_hash)).collect()
    }

    /// Waits until every peer has committed at least `height`.
    pub async fn wait_for_height(&self, height: u64) {
        for slot in &self.shared.peers {
            let mut rx = slot.height.subscribe();
            // The sender lives as long as `self`, so this cannot fail.
            let _ = rx.wait_for(|h| *h >= height).await;
        }
    }

    /// Waits until every peer has caught up with the gateway peer.
    pub async fn settle(&self) {
        let target = self.heights().into_iter().max().unwrap_or(0);
        self.wait_for_height(target).await;
    }

    /// Collects one endorsement per policy org and assembles the envelope.
    /// An application error in the simulated response is returned instead
    /// of an envelope.
    pub fn endorse(&self, proposal: &Proposal) -> Result<TransactionEnvelope, SubmitError> {
        let policy = &self.shared.genesis.policy;
        let mut endorsements = Vec::new();
        for org in &policy.required_orgs {
            let slot = self.shared.peers.iter().find(|p| &p.info.org_id == org).ok_or_else(|| SubmitError::NoEndorser(org.clone()))?;
            let endorsement = slot
                .peer
                .read()
                .endorse(proposal)
                .map_err(|error| SubmitError::Rejected { peer: slot.info.peer_id.clone(), error })?;
            endorsements.push(endorsement);
        }
        if let Some(error) = endorsements.first().and_then(|e| e.result.response.error()) {
            return Err(SubmitError::Application(error.clone()));
        }
        assemble(proposal, &endorsements, policy).map_err(SubmitError::Assemble)
    }

    /// Sends an envelope to the orderer and waits for the gateway peer to
    /// commit it.
    pub async fn order(&self, envelope: TransactionEnvelope) -> Result<TxOutcome, SubmitError> {
        let (tx, rx) = oneshot::channel();
        let tx_id = envelope.tx_id;
        self.shared.waiters.lock().entry(tx_id).or_default().push(tx);
        if self.orderer.send(envelope).is_err() {
            self.shared.waiters.lock().remove(&tx_id);
            return Err(SubmitError::Stopped);
        }
        match tokio::time::timeout(self.options.commit_timeout, rx).await {
            Ok(Ok(outcome)) => Ok(outcome),
            Ok(Err(_)) => Err(SubmitError::Stopped),
            Err(_) => Err(SubmitError::Timeout),
        }
    }

    /// Full client flow: endorse, assemble, order, await commit. The same
    /// signed proposal is re-endorsed after an MVCC invalidation.
    pub async fn submit(&self, proposal: &Proposal) -> Result<TxOutcome, SubmitError> {
        let mut attempts = 0;
        let mut mismatches = 0;
        loop {
            attempts += 1;
            // Endorsers lagging behind the gateway peer would simulate on
            // older state and disagree.
            self.wait_for_height(self.read(Ledger::height)).await;
            let envelope = match self.endorse(proposal) {
                Err(SubmitError::Assemble(AssembleError::EndorsementMismatch)) if mismatches < MISMATCH_RETRIES => {
                    mismatches += 1;
                    attempts -= 1;
                    self.settle().await;
                    continue;
                }
                other => other?,
            };
            let mut outcome = self.order(envelope).await?;
            outcome.attempts = attempts;
            match outcome.validity {
                Validity::Valid => return Ok(outcome),
                Validity::InvalidMvcc if attempts <= self.options.mvcc_retries => continue,
                Validity::InvalidMvcc => return Err(SubmitError::MvccExhausted { tx_id: outcome.tx_id, attempts }),
                _ => return Err(SubmitError::Invalid(Box::new(outcome))),
            }
        }
    }
}

struct Cutter {
    next_height: u64,
    prev_hash: Hash,
    config: OrdererConfig,
    inboxes: Vec<mpsc::UnboundedSender<Block>>,
    rng: StdRng,
}

impl Cutter {
    fn cut(&mut self, pending: &mut Vec<TransactionEnvelope>) {
        let block = Block::new(self.next_height, self.prev_hash, now(), std::mem::take(pending));
        self.next_height += 1;
        self.prev_hash = block.header.block_hash;
        for inbox in &self.inboxes {
            let base = self.config.delivery_delay_ms;
            let jitter = if self.config.delivery_jitter_ms > 0 { self.rng.gen_range(0..=self.config.delivery_jitter_ms) } else { 0 };
            let delay = Duration::from_millis(base + jitter);
            if delay.is_zero() {
                let _ = inbox.send(block.clone());
            } else {
                let inbox = inbox.clone();
                let block = block.clone();
                tokio::spawn(async move {
                    tokio::time::sleep(delay).await;
                    let _ = inbox.send(block);
                });
            }
        }
    }
}

/// Queues envelopes in arrival order and cuts a block when the queue
/// reaches the block size or the batch timeout expires.
async fn run_orderer(mut cutter: Cutter, mut intake: mpsc::UnboundedReceiver<TransactionEnvelope>) {
    let max = cutter.config.max_block_size as usize;
    let timeout = cutter.config.batch_timeout();
    let mut pending: Vec<TransactionEnvelope> = Vec::new();
    let mut deadline = Instant::now();
    loop {
        let received = if pending.is_empty() {
            intake.recv().await
        } else {
            tokio::select! {
                received = intake.recv() => received,
                _ = tokio::time::sleep_until(deadline) => {
                    cutter.cut(&mut pending);
                    continue;
                }
            }
        };
        match received {
            Some(envelope) => {
                if pending.is_empty() {
                    deadline = Instant::now() + timeout;
                }
                pending.push(envelope);
                if pending.len() >= max {
                    cutter.cut(&mut pending);
                }
            }
            None => {
                if !pending.is_empty() {
                    cutter.cut(&mut pending);
                }
                return;
            }
        }
    }
}

/// Commits delivered blocks strictly in height order, buffering early ones.
async fn run_peer(shared: Arc<Shared>, index: usize, mut inbox: mpsc::UnboundedReceiver<Block>) {
    let slot = &shared.peers[index];
    let mut buffer: BTreeMap<u64, Block> = BTreeMap::new();
    while let Some(block) = inbox.recv().await {
        buffer.insert(block.header.height, block);
        loop {
            let next = slot.peer.read().ledger().height() + 1;
            let Some(block) = buffer.remove(&next) else { break };
            buffer.retain(|h, _| *h > next);
            commit(&shared, index, block);
        }
    }
}

fn commit(shared: &Shared, index: usize, mut block: Block) {
    let slot = &shared.peers[index];
    block.validity = slot.peer.read().validate(&block);
    let summary = match slot.peer.write().append_validated(block) {
        Ok(summary) => summary,
        Err(error) => {
            tracing::error!(peer = %slot.info.peer_id, %error, "block rejected");
            return;
        }
    };
    slot.height.send_replace(summary.height);
    if index != shared.gateway_peer {
        return;
    }
    let peer = slot.peer.read();
    let ledger = peer.ledger();
    if let Some(store) = &shared.store {
        if let Err(error) = store.lock().record_commit(ledger) {
            tracing::error!(%error, "failed to persist block {}", summary.height);
        }
    }
    shared.bus.publish(summary.events.iter().cloned());
    let block = ledger.tip();
    let mut waiters = shared.waiters.lock();
    for (offset, (tx, validity)) in block.transactions.iter().zip(&block.validity).enumerate() {
        let Some(senders) = waiters.remove(&tx.tx_id) else { continue };
        let outcome = TxOutcome {
            tx_id: tx.tx_id,
            validity: *validity,
            block_height: summary.height,
            tx_offset: offset as u32,
            response: tx.response.clone(),
            events: if validity.is_valid() { tx.events.clone() } else { Vec::new() },
            attempts: 0,
        };
        for sender in senders {
            let _ = sender.send(outcome.clone());
        }
    }
}
