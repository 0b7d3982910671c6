mod common;

use std::time::{Duration, Instant};

use common::*;
use doorchain::config::NodeConfig;
use doorchain::network::{Network, SubmitError};
use doorchain::now;
use doorchain_core::endorsement::Proposal;
use doorchain_core::ledger::decode_block_file;
use doorchain_core::{Ledger, Validity};
use futures::future::join_all;
use rand::RngCore;

#[tokio::test]
async fn grant_then_check_allows() {
    let h = Harness::new().with_org().await;
    let alice = h.card("alice");
    let denied = h.submit(&alice, check("door-2")).await.unwrap();
    assert!(!denied.response.decision().unwrap().is_allow());
    let carol = h.card("carol");
    let out = h.submit(&carol, grant("alice", "door-2")).await.unwrap();
    assert_eq!(out.validity, Validity::Valid);
    let allowed = h.submit(&alice, check("door-2")).await.unwrap();
    assert!(allowed.response.decision().unwrap().is_allow());
    assert!(allowed.block_height > out.block_height);
}

#[tokio::test]
async fn application_errors_are_not_ordered() {
    let h = Harness::new().with_org().await;
    let height = h.network.read(Ledger::height);
    let bob = h.card("bob");
    let err = h.submit(&bob, grant("alice", "door-1")).await.unwrap_err();
    assert!(matches!(err, SubmitError::Application(doorchain_core::AppError::Unauthorized(_))), "{err:?}");
    assert_eq!(h.network.read(Ledger::height), height);
}

#[tokio::test]
async fn unknown_card_is_rejected_by_endorsers() {
    let h = Harness::new().with_org().await;
    let mut forged = h.card("alice");
    forged.card.certificate.0[0] ^= 1;
    let err = h.submit(&forged, check("door-1")).await.unwrap_err();
    assert!(matches!(err, SubmitError::Rejected { .. }), "{err:?}");
}

#[tokio::test]
async fn full_blocks_are_cut_at_max_size() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config(dir.path(), "cut-size");
    config.orderer.batch_timeout_ms = 2_000;
    let h = Harness::start(config).with_org().await;
    let before = h.network.read(Ledger::height);
    let started = Instant::now();
    let places = ["door-1", "door-2", "door-y1"];
    let people = ["alice", "bob", "mike", "carol", "dave"];
    let mut txs = Vec::new();
    for i in 0..10 {
        txs.push(h.submit(&h.admin, grant(people[i % 5], places[i / 5])));
    }
    let outcomes: Vec<_> = join_all(txs).await.into_iter().map(Result::unwrap).collect();
    assert!(started.elapsed() < Duration::from_millis(1_500), "block waited for the timeout");
    assert!(outcomes.iter().all(|o| o.block_height == before + 1));
    let offsets: std::collections::BTreeSet<u32> = outcomes.iter().map(|o| o.tx_offset).collect();
    assert_eq!(offsets.len(), 10);
}

#[tokio::test]
async fn partial_block_is_cut_by_timeout() {
    let h = Harness::new().with_org().await;
    let started = Instant::now();
    let out = h.admin_ok(grant("alice", "door-1")).await;
    let elapsed = started.elapsed();
    assert!(elapsed >= Duration::from_millis(50), "{elapsed:?}");
    assert!(elapsed < Duration::from_millis(1000), "{elapsed:?}");
    let size = h.network.read(|l| l.block(out.block_height).unwrap().transactions.len());
    assert_eq!(size, 1);
}

#[tokio::test]
async fn conflicting_checks_are_retried() {
    let h = Harness::new().with_org().await;
    let bob = h.card("bob");
    let results = join_all((0..6).map(|_| h.submit(&bob, check("door-2")))).await;
    let mut retried = 0;
    for r in &results {
        match r {
            Ok(o) => {
                assert_eq!(o.validity, Validity::Valid);
                if o.attempts > 1 {
                    retried += 1;
                }
            }
            Err(SubmitError::MvccExhausted { attempts, .. }) => assert_eq!(*attempts, 4),
            Err(e) => panic!("unexpected {e}"),
        }
    }
    assert!(retried > 0, "concurrent checks on one counter never conflicted");
    let invalid = h.network.read(|l| l.historian().iter().filter(|r| r.valid == Validity::InvalidMvcc).count());
    assert!(invalid >= retried);
}

#[tokio::test]
async fn exhausted_retries_surface() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config(dir.path(), "no-retry");
    config.gateway.mvcc_retries = 0;
    let h = Harness::start(config).with_org().await;
    let bob = h.card("bob");
    let results = join_all((0..4).map(|_| h.submit(&bob, check("door-2")))).await;
    let exhausted = results.iter().filter(|r| matches!(r, Err(SubmitError::MvccExhausted { attempts: 1, .. }))).count();
    assert_eq!(exhausted, 3, "{results:?}");
}

#[tokio::test]
async fn jittered_delivery_converges() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config(dir.path(), "jitter");
    config.orderer.delivery_jitter_ms = 40;
    config.orderer.batch_timeout_ms = 10;
    let h = Harness::start(config).with_org().await;
    let people = ["alice", "bob", "mike"];
    let places = ["door-1", "door-2", "door-y1"];
    let mut futures = Vec::new();
    for i in 0..30 {
        let who = h.card(people[i % 3]);
        futures.push(async move {
            tokio::time::sleep(Duration::from_millis(i as u64 * 7)).await;
            who
        });
    }
    let cards = join_all(futures).await;
    let submits = cards.iter().enumerate().map(|(i, who)| h.submit(who, check(places[i % 3])));
    for r in join_all(submits).await {
        assert!(matches!(r, Ok(_) | Err(SubmitError::MvccExhausted { .. })));
    }
    h.network.settle().await;
    let hashes = h.network.state_hashes();
    assert_eq!(hashes[0], hashes[1]);
    assert_eq!(h.network.heights()[0], h.network.heights()[1]);
}

#[tokio::test]
async fn duplicate_submission_is_flagged() {
    let h = Harness::new().with_org().await;
    let alice = h.card("alice");
    let proposal = Proposal::sign(&alice, rand::thread_rng().next_u64(), now(), check("door-1"));
    let first = h.network.submit(&proposal).await.unwrap();
    assert_eq!(first.validity, Validity::Valid);
    match h.network.submit(&proposal).await {
        Err(SubmitError::Invalid(outcome)) => assert_eq!(outcome.validity, Validity::DuplicateTxId),
        other => panic!("expected duplicate, got {other:?}"),
    }
}

#[tokio::test]
async fn restart_restores_from_block_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut config: NodeConfig = config(dir.path(), "restart");
    config.gateway.data_dir = Some(dir.path().join("data"));
    config.gateway.snapshot_interval = 3;
    let (hash, height, records) = {
        let h = Harness::start(config.clone()).with_org().await;
        h.admin_ok(grant("alice", "door-1")).await;
        let alice = h.card("alice");
        h.submit(&alice, check("door-1")).await.unwrap();
        h.network.settle().await;
        (h.network.read(Ledger::state_hash), h.network.read(Ledger::height), h.network.read(|l| l.historian().to_vec()))
    };
    let bytes = std::fs::read(dir.path().join("data").join("blocks.dat")).unwrap();
    let blocks = decode_block_file(&bytes).unwrap();
    assert_eq!(blocks.len() as u64, height + 1);
    let replayed = Ledger::replay(blocks).unwrap();
    assert_eq!(replayed.state_hash(), hash);

    let network = Network::from_config(&config).unwrap();
    assert_eq!(network.read(Ledger::state_hash), hash);
    assert_eq!(network.read(|l| l.historian().to_vec()), records);
    assert_eq!(network.heights(), vec![height, height]);
    let alice = holder(&config, "alice");
    let proposal = Proposal::sign(&alice, 7, now(), check("door-1"));
    let out = network.submit(&proposal).await.unwrap();
    assert_eq!(out.block_height, height + 1);
    assert!(out.response.decision().unwrap().is_allow());
}

#[tokio::test]
async fn restart_rejects_a_foreign_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = config(dir.path(), "mine");
    config.gateway.data_dir = Some(dir.path().join("data"));
    drop(Harness::start(config.clone()));
    config.network.seed = "someone-else".into();
    let err = Network::from_config(&config).err().expect("must refuse");
    assert!(err.to_string().contains("different network"), "{err:#}");
}

#[tokio::test]
async fn events_are_published_in_commit_order() {
    let h = Harness::new().with_org().await;
    let alice = h.card("alice");
    for _ in 0..4 {
        h.submit(&alice, check("door-1")).await.unwrap();
    }
    let events = h.network.events().snapshot();
    assert!(events.windows(2).all(|w| w[0].id < w[1].id));
    let committed: Vec<_> = h.network.read(|l| l.committed_events()).into_iter().map(|(id, _)| id).collect();
    assert_eq!(events.iter().map(|e| e.id).collect::<Vec<_>>(), committed);
    let alerts = events.iter().filter(|e| e.event.kind == doorchain_core::EventKind::IntrusionAlert).count();
    assert_eq!(alerts, 1);
}
