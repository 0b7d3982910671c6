mod common;

use common::*;
use doorchain::bench::{run_round, BenchConfig, BenchReport, Preset, Sample, Target, TxKind, MARKDOWN_HEADER};
use doorchain_core::Validity;
use proptest::prelude::*;

fn in_process(h: &Harness) -> Target {
    Target::InProcess { network: h.network.clone(), admin: h.admin.clone(), issuer: h.config.issuer_key() }
}

fn assert_consistent(r: &BenchReport, total: usize) {
    assert_eq!(r.succ + r.fail, total);
    assert_eq!(r.samples.len(), total);
    assert!(r.samples.iter().all(|s| s.commit_time >= s.send_time));
    if r.succ > 0 {
        let (min, avg, p75, max) = (r.min_latency.unwrap(), r.avg_latency.unwrap(), r.p75_latency.unwrap(), r.max_latency.unwrap());
        assert!(min <= avg && avg <= max && min <= p75 && p75 <= max, "{min} {avg} {p75} {max}");
    }
}

#[tokio::test]
async fn sharded_round_succeeds_at_the_configured_rate() {
    let h = Harness::new();
    let config = BenchConfig { total_transactions: 60, send_rate: 20.0, client_count: 3, ..BenchConfig::default() };
    let report = run_round(&config, &in_process(&h)).await.unwrap();
    assert_consistent(&report, 60);
    assert_eq!(report.fail, 0, "{:?}", report.samples.iter().find(|s| !s.valid));
    assert!(report.throughput > 0.0 && report.throughput <= 20.0 * 1.05, "{}", report.throughput);
    for s in &report.samples {
        let ideal = s.index as f64 / 20.0;
        assert!((s.send_time - ideal).abs() < 0.05, "tx {} sent at {} instead of {ideal}", s.index, s.send_time);
    }
    let kinds = |k: TxKind| report.samples.iter().filter(|s| s.kind == k).count();
    assert!(kinds(TxKind::CheckAccess) > kinds(TxKind::GrantAccess));
    h.network.settle().await;
    let hashes = h.network.state_hashes();
    assert_eq!(hashes[0], hashes[1]);
}

#[tokio::test]
async fn round_through_the_gateway() {
    let h = Harness::new();
    let url = h.serve().await;
    let config = BenchConfig { total_transactions: 20, send_rate: 20.0, client_count: 2, ..BenchConfig::default() };
    let report = run_round(&config, &Target::Gateway { url, admin: h.admin.clone() }).await.unwrap();
    assert_consistent(&report, 20);
    assert_eq!(report.succ, 20);
}

#[tokio::test]
async fn conflict_preset_exercises_mvcc() {
    let h = Harness::new();
    let config = BenchConfig {
        total_transactions: 40,
        send_rate: 40.0,
        client_count: 4,
        preset: Preset::Conflict,
        mix: doorchain::bench::WorkloadMix { check_access: 0.6, grant_access: 0.3, revoke_access: 0.1 },
        ..BenchConfig::default()
    };
    let report = run_round(&config, &in_process(&h)).await.unwrap();
    assert_consistent(&report, 40);
    let invalidated = h.network.read(|l| l.historian().iter().filter(|r| r.valid == Validity::InvalidMvcc).count());
    assert!(invalidated > 0, "conflict preset produced no MVCC invalidations");
}

#[tokio::test]
async fn empty_round() {
    let h = Harness::new();
    let config = BenchConfig { total_transactions: 0, ..BenchConfig::default() };
    let report = run_round(&config, &in_process(&h)).await.unwrap();
    assert_eq!((report.succ, report.fail, report.throughput), (0, 0, 0.0));
    assert!(report.avg_latency.is_none());
    assert_eq!(h.network.read(|l| l.height()), 0, "an empty round registers nothing");
}

#[test]
fn markdown_has_the_eight_columns() {
    let report = BenchReport::from_samples("r", 10.0, vec![sample(0, 0.0, 1.5, true)]);
    let md = report.to_markdown();
    let mut lines = md.lines();
    assert_eq!(lines.next(), Some(MARKDOWN_HEADER));
    assert_eq!(MARKDOWN_HEADER.matches('|').count(), 10);
    let row = lines.nth(1).unwrap();
    assert_eq!(row.matches('|').count(), 10);
    assert!(row.contains("| 1.50 s |"), "{row}");
}

#[test]
fn json_round_trip() {
    let samples = vec![sample(0, 0.0, 1.0, true), sample(1, 0.1, 0.4, false)];
    let report = BenchReport::from_samples("r", 10.0, samples);
    let text = serde_json::to_string(&report).unwrap();
    assert_eq!(serde_json::from_str::<BenchReport>(&text).unwrap(), report);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["name", "succ", "fail", "sendRate", "maxLatency", "minLatency", "avgLatency", "p75Latency", "throughput", "samples"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn cli_bench_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = common::config(dir.path(), "cli-bench");
    config.bench = Some(BenchConfig { name: "smoke".into(), total_transactions: 10, send_rate: 20.0, client_count: 2, ..BenchConfig::default() });
    let path = dir.path().join("bench.toml");
    std::fs::write(&path, toml::to_string(&config).unwrap()).unwrap();
    let out_path = dir.path().join("report.json");
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_doorchain"))
        .args(["bench", "run", "--config", path.to_str().unwrap(), "--out", out_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().next(), Some(MARKDOWN_HEADER));
    assert!(stdout.contains("| smoke | 10 | 0 |"), "{stdout}");
    let report: BenchReport = serde_json::from_slice(&std::fs::read(out_path).unwrap()).unwrap();
    assert_eq!(report.succ, 10);
}

fn sample(index: usize, send: f64, commit: f64, valid: bool) -> Sample {
    Sample { index, client: 0, kind: TxKind::CheckAccess, send_time: send, commit_time: commit, valid, error: None }
}

/// Nearest rank by counting: the smallest sample with at least 75% of
/// the samples at or below it.
fn p75_oracle(latencies: &[f64]) -> f64 {
    let n = latencies.len() as f64;
    *latencies
        .iter()
        .filter(|x| latencies.iter().filter(|y| *y <= *x).count() as f64 >= 0.75 * n)
        .min_by(|a, b| a.total_cmp(b))
        .unwrap()
}

proptest! {
    #[test]
    fn aggregation_invariants(raw in proptest::collection::vec((0u32..100_000, 1u32..50_000, any::<bool>()), 0..80), rotate in 0usize..80) {
        let samples: Vec<Sample> = raw
            .iter()
            .enumerate()
            .map(|(i, &(send, lat, ok))| sample(i, send as f64 / 1000.0, (send + lat) as f64 / 1000.0, ok))
            .collect();
        let report = BenchReport::from_samples("p", 10.0, samples.clone());
        prop_assert_eq!(report.succ + report.fail, samples.len());
        let latencies: Vec<f64> = samples.iter().filter(|s| s.valid).map(Sample::latency).collect();
        if latencies.is_empty() {
            prop_assert!(report.p75_latency.is_none());
            prop_assert_eq!(report.throughput, 0.0);
        } else {
            let (min, avg, p75, max) = (report.min_latency.unwrap(), report.avg_latency.unwrap(), report.p75_latency.unwrap(), report.max_latency.unwrap());
            prop_assert!(min <= avg + 1e-9 && avg <= max + 1e-9 && min <= p75 && p75 <= max);
            prop_assert_eq!(p75, p75_oracle(&latencies));
            let first = samples.iter().map(|s| s.send_time).fold(f64::INFINITY, f64::min);
            let last = samples.iter().map(|s| s.commit_time).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((report.throughput - latencies.len() as f64 / (last - first)).abs() < 1e-9);
        }
        let mut shuffled = samples;
        if !shuffled.is_empty() {
            let k = rotate % shuffled.len();
            shuffled.rotate_left(k);
        }
        prop_assert_eq!(BenchReport::from_samples("p", 10.0, shuffled), report);
    }
}
