//! Acceptance suite: one test per headline property. Every test writes a
//! single `PASS`/`FAIL` line straight to stdout (bypassing the harness
//! capture) and then asserts, so the lines show up in normal test output.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xrflux_cli::Cli;
use xrflux_core::cache::{Access, CachePolicy, LruCache, PolicyKind};
use xrflux_core::delay::DelayModelConfig;
use xrflux_core::geometry::Vec3;
use xrflux_core::motion::Role;
use xrflux_core::node::{EdgeNode, RemoteStore};
use xrflux_core::replay::{replay_on_node, sweep, user_rows, Decision, LabeledTrace, SweepCell};
use xrflux_core::scenario::{run_simulation, ScenarioConfig, Simulation};
use xrflux_core::trace::{derive_requests, generate_irm, write_trace_file, RequestKind, RequestRecord, RequestTrace, Strategy};
use xrflux_core::{ObjectId, Timestamp, UserId};
use xrflux_edge::{spawn, EdgeClient, ServiceConfig};

const SEED: u64 = 42;
const TREND_CAPACITIES: [usize; 6] = [2, 4, 6, 8, 12, 16];
const USER_CAPACITY: usize = 5;

fn verdict(name: &str, ok: bool, detail: impl AsRef<str>) {
    let line = format!("{} {name}: {}\n", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "{name}: {}", detail.as_ref());
}

struct Baseline {
    traces: Vec<LabeledTrace>,
    cells: Vec<SweepCell>,
    sim_seconds: f64,
}

impl Baseline {
    fn trace(&self, label: &str) -> &RequestTrace {
        &self.traces.iter().find(|t| t.label == label).unwrap().trace
    }

    fn hit_rate(&self, label: &str, capacity: usize) -> f64 {
        self.cells
            .iter()
            .find(|c| c.label == label && c.report.capacity == capacity)
            .unwrap()
            .report
            .hit_rate
    }
}

/// Default scenario at seed 42, its three strategy traces plus IRM, swept
/// over the trend capacities and the per-user capacity.
fn baseline() -> &'static Baseline {
    static CELL: OnceLock<Baseline> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = ScenarioConfig {
            seed: SEED,
            ..ScenarioConfig::default()
        };
        let t0 = Instant::now();
        let log = run_simulation(&cfg).unwrap();
        let sim_seconds = t0.elapsed().as_secs_f64();
        let mut traces: Vec<LabeledTrace> = Strategy::ALL
            .iter()
            .map(|&s| LabeledTrace {
                label: s.as_str().into(),
                trace: derive_requests(&log, s).unwrap(),
            })
            .collect();
        let irm = generate_irm(&traces[0].trace, SEED).unwrap();
        traces.push(LabeledTrace {
            label: "irm".into(),
            trace: irm,
        });
        let mut caps = TREND_CAPACITIES.to_vec();
        caps.push(USER_CAPACITY);
        let cells = sweep(&traces, &caps, PolicyKind::Lru, &DelayModelConfig::default()).unwrap();
        Baseline {
            traces,
            cells,
            sim_seconds,
        }
    })
}

/// Independent LRU: a recency list scanned linearly, most recent last.
struct ListLru {
    capacity: usize,
    keys: Vec<ObjectId>,
}

impl ListLru {
    fn access(&mut self, key: ObjectId) -> Access {
        if let Some(i) = self.keys.iter().position(|&k| k == key) {
            self.keys.remove(i);
            self.keys.push(key);
            Access::Hit
        } else {
            if self.keys.len() == self.capacity {
                self.keys.remove(0);
            }
            self.keys.push(key);
            Access::Miss
        }
    }
}

fn random_keys(n: usize, keys: u32, seed: u64) -> Vec<ObjectId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..keys)).collect()
}

#[test]
fn lru_oracle_equivalence() {
    let t0 = Instant::now();
    let mut mismatches = 0usize;
    let mut size_violations = 0usize;
    let mut compared = 0usize;
    for seed in 0..100u64 {
        let keys = random_keys(10_000, 50, seed);
        for capacity in 1..=16 {
            let mut fast = LruCache::new(capacity);
            let mut oracle = ListLru {
                capacity,
                keys: Vec::new(),
            };
            for &k in &keys {
                if fast.access(k) != oracle.access(k) {
                    mismatches += 1;
                }
                if fast.len() > capacity {
                    size_violations += 1;
                }
                compared += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        "LRU oracle equivalence",
        mismatches == 0 && size_violations == 0 && secs < 30.0,
        format!("{compared} decisions, {mismatches} mismatches, {size_violations} over-capacity states, {secs:.2} s (limit 30 s)"),
    );
}

/// Hit flags per access at one capacity.
fn hit_flags(keys: &[ObjectId], capacity: usize) -> Vec<bool> {
    let mut c = LruCache::new(capacity);
    keys.iter().map(|&k| c.access(k).is_hit()).collect()
}

#[test]
fn lru_inclusion_property() {
    let mut traces: Vec<(String, Vec<ObjectId>)> = (0..100u64)
        .map(|s| (format!("random#{s}"), random_keys(10_000, 50, 1000 + s)))
        .collect();
    for t in &baseline().traces {
        let keys = t
            .trace
            .records
            .iter()
            .filter(|r| r.kind == RequestKind::Demand)
            .map(|r| r.object_id)
            .collect();
        traces.push((t.label.clone(), keys));
    }
    let mut violations = 0usize;
    let mut checked = 0usize;
    for (_, keys) in &traces {
        let mut prev = hit_flags(keys, 1);
        for capacity in 2..=16 {
            let cur = hit_flags(keys, capacity);
            // Hit sets nest, so counts cannot drop.
            violations += prev.iter().zip(&cur).filter(|(p, c)| **p && !**c).count();
            if prev.iter().filter(|h| **h).count() > cur.iter().filter(|h| **h).count() {
                violations += 1;
            }
            prev = cur;
            checked += 1;
        }
    }
    // Prefetch traces: demand hits must still be monotone in capacity.
    let prefetch = baseline().trace("prefetch");
    let mut last = 0;
    for capacity in 1..=16 {
        let mut node = EdgeNode::new(PolicyKind::Lru, capacity, &DelayModelConfig::default(), RemoteStore { payload_bytes: 0 }).unwrap();
        let hits = replay_on_node(prefetch, &mut node, |_, _| {}).unwrap().demand_hits;
        if hits < last {
            violations += 1;
        }
        last = hits;
        checked += 1;
    }
    verdict(
        "LRU inclusion property",
        violations == 0,
        format!("{} traces, {checked} capacity steps, {violations} violations", traces.len() + 1),
    );
}

/// Kolmogorov-Smirnov distance between a sample and Exp(rate).
fn ks_exponential(sample: &mut [f64], rate: f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-rate * x).exp();
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn counts<K: Ord>(trace: &RequestTrace, key: impl Fn(&RequestRecord) -> K) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for r in &trace.records {
        *m.entry(key(r)).or_insert(0) += 1;
    }
    m
}

#[test]
fn irm_conservation() {
    let b = baseline();
    let standard = b.trace("standard");
    let irm = b.trace("irm");
    let objects_ok = counts(standard, |r| r.object_id) == counts(irm, |r| r.object_id);
    let users_ok = counts(standard, |r| r.user_id) == counts(irm, |r| r.user_id);
    let pairs_ok = counts(standard, |r| (r.user_id, r.object_id)) == counts(irm, |r| (r.user_id, r.object_id));

    let n = 10_000;
    let sample = RequestTrace {
        provenance: standard.provenance.clone(),
        records: standard.records[..n].to_vec(),
    };
    let horizon = sample.records.iter().map(|r| r.time).max().unwrap().as_secs_f64();
    let shuffled = generate_irm(&sample, 7).unwrap();
    let mut gaps: Vec<f64> = shuffled
        .records
        .windows(2)
        .map(|w| w[1].time.as_secs_f64() - w[0].time.as_secs_f64())
        .collect();
    let d = ks_exponential(&mut gaps, n as f64 / horizon);
    let critical = 1.628 / (gaps.len() as f64).sqrt();
    verdict(
        "IRM conservation",
        objects_ok && users_ok && pairs_ok && d < critical,
        format!(
            "per-object counts equal: {objects_ok}, per-user: {users_ok}, per-pair: {pairs_ok}; \
             inter-arrival KS D = {d:.5} vs 1% critical {critical:.5} (n = {n})"
        ),
    );
}

#[test]
fn depth_trend() {
    let depths = [5.0, 10.0, 20.0, 40.0];
    let rates: Vec<f64> = depths
        .iter()
        .map(|&s| {
            let mut cfg = ScenarioConfig {
                seed: SEED,
                ..ScenarioConfig::default()
            };
            cfg.immediate_fov.depth = s;
            cfg.predicted_fov.depth = cfg.predicted_fov.depth.max(2.0 * s);
            let log = run_simulation(&cfg).unwrap();
            let trace = derive_requests(&log, Strategy::Standard).unwrap();
            xrflux_core::replay::replay(&trace, PolicyKind::Lru, USER_CAPACITY, &DelayModelConfig::default())
                .unwrap()
                .hit_rate
        })
        .collect();
    let rises: Vec<f64> = rates.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    let ok = rises.is_empty() || (rises.len() == 1 && rises[0] <= 0.02);
    let table: Vec<String> = depths.iter().zip(&rates).map(|(s, r)| format!("S={s}: {r:.4}")).collect();
    verdict(
        "Depth trend (hit rate vs immediate depth, capacity 5)",
        ok,
        format!("{}; inversions {:?} (allowed: one <= 0.02)", table.join(", "), rises),
    );
}

#[test]
fn capacity_trend() {
    let b = baseline();
    let mut worst = f64::INFINITY;
    let mut irm_far = 0;
    let mut rows = Vec::new();
    for c in TREND_CAPACITIES {
        let std = b.hit_rate("standard", c);
        let pf = b.hit_rate("prefetch", c);
        let irm = b.hit_rate("irm", c);
        worst = worst.min(pf - std);
        if (irm - std).abs() >= 0.02 {
            irm_far += 1;
        }
        rows.push(format!("c{c}: std {std:.3} pf {pf:.3} irm {irm:.3}"));
    }
    let ok = worst >= -0.005 && irm_far * 2 >= TREND_CAPACITIES.len();
    verdict(
        "Capacity trend (prefetch >= standard, IRM differs)",
        ok,
        format!(
            "min(prefetch - standard) = {worst:.4} (>= -0.005); |irm - standard| >= 0.02 at {irm_far}/{} capacities; {}",
            TREND_CAPACITIES.len(),
            rows.join("; ")
        ),
    );
}

#[test]
fn per_user_structure() {
    let b = baseline();
    let cells: Vec<SweepCell> = b.cells.iter().filter(|c| c.label != "irm").cloned().collect();
    let rows = user_rows(&cells, USER_CAPACITY);
    let cfg = ScenarioConfig::default();
    let mut missing = Vec::new();
    for u in 0..cfg.n_users() {
        for s in Strategy::ALL {
            if !rows.iter().any(|r| r.user_id == u && r.strategy == s.as_str()) {
                missing.push(format!("{u}/{s}"));
            }
        }
    }
    let rate = |u: UserId, s: &str| rows.iter().find(|r| r.user_id == u && r.strategy == s).map(|r| r.hit_rate);
    let mut principal_ok = true;
    let mut detail = Vec::new();
    for u in 0..cfg.n_principals {
        let (std, pf) = (rate(u, "standard").unwrap_or(f64::NAN), rate(u, "prefetch").unwrap_or(f64::NAN));
        principal_ok &= std <= pf;
        detail.push(format!("user {u}: standard {std:.3} <= prefetch {pf:.3}"));
    }
    verdict(
        "Per-user table at capacity 5",
        missing.is_empty() && rows.len() == cfg.n_users() as usize * 3 && principal_ok,
        format!("{} rows, missing {:?}; {}", rows.len(), missing, detail.join(", ")),
    );
}

#[test]
fn motion_invariants() {
    let steps = 1_000_000u64;
    let seeds = [SEED, 7, 0xDEC0DE];
    let mut out_of_bounds = 0u64;
    let mut worst_speed_err = 0f64;
    let mut over_cap = 0u64;
    let t0 = Instant::now();
    for (i, &seed) in seeds.iter().enumerate() {
        let cfg = ScenarioConfig {
            seed,
            ..ScenarioConfig::default()
        };
        let m = &cfg.motion;
        let u = m.universe_half_extent;
        let mut sim = Simulation::new(&cfg).unwrap();
        // The first seed runs the full million steps; the others spot-check.
        let n = if i == 0 { steps } else { steps / 10 };
        for _ in 0..n {
            sim.tick();
            for s in &sim.world().users {
                let p: Vec3 = s.position;
                if p.to_array().iter().any(|c| c.abs() > u) {
                    out_of_bounds += 1;
                }
                let speed = s.velocity.norm();
                match s.role {
                    Role::Principal => worst_speed_err = worst_speed_err.max((speed - m.principal_speed).abs()),
                    Role::Groupie => over_cap += (speed > m.groupie_max_speed * (1.0 + 1e-12)) as u64,
                }
            }
        }
    }
    verdict(
        "Motion invariants",
        out_of_bounds == 0 && worst_speed_err <= 1e-9 && over_cap == 0,
        format!(
            "{} steps over seeds {seeds:?} in {:.1} s: {out_of_bounds} positions outside the cube, \
             max principal speed error {worst_speed_err:.2e} (<= 1e-9), {over_cap} groupie speeds over cap",
            steps + 2 * steps / 10,
            t0.elapsed().as_secs_f64()
        ),
    );
}

fn cli(args: &[&str]) -> Vec<PathBuf> {
    let mut argv = vec!["xrflux"];
    argv.extend_from_slice(args);
    xrflux_cli::run(Cli::try_parse_from(argv).unwrap()).unwrap()
}

fn pipeline(dir: &Path) {
    let d = dir.to_str().unwrap();
    let log = format!("{d}/visibility.log");
    cli(&["simulate", "--seed", "42", "--out", d]);
    cli(&["derive", "--log", &log, "--out", d]);
    cli(&["irm", "--trace", &format!("{d}/standard.trace"), "--seed", "42", "--out", d]);
    let run = format!("{d}/run");
    let traces: Vec<String> = ["standard", "extended", "prefetch", "irm"]
        .iter()
        .map(|s| format!("{d}/{s}.trace"))
        .collect();
    let mut args = vec!["replay", "--seed", "42", "--capacities", "1..16", "--depth", "10", "--out", &run, "--trace"];
    args.extend(traces.iter().map(String::as_str));
    cli(&args);
    cli(&["report", "--in", &run, "--out", &format!("{d}/report")]);
}

/// Every file below `dir` except manifests, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn pipeline_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    let differing: Vec<_> = sa.iter().filter(|(k, v)| sb.get(*k) != Some(v)).map(|(k, _)| k.clone()).collect();
    let ok = !sa.is_empty() && sa.keys().eq(sb.keys()) && differing.is_empty();
    verdict(
        "Pipeline determinism",
        ok,
        format!(
            "{} files ({} bytes) compared across two seed-42 runs, {} differ {:?}",
            sa.len(),
            sa.values().map(Vec::len).sum::<usize>(),
            differing.len(),
            differing
        ),
    );
}

#[test]
fn service_equivalence() {
    let b = baseline();
    let trace = RequestTrace {
        provenance: b.trace("prefetch").provenance.clone(),
        records: b.trace("prefetch").records[..10_000].to_vec(),
    };
    let cfg = ServiceConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        capacity: USER_CAPACITY,
        delays: DelayModelConfig::default().with_seed(SEED),
        ..ServiceConfig::default()
    };
    let mut node = EdgeNode::new(cfg.policy, cfg.capacity, &cfg.delays, RemoteStore { payload_bytes: 0 }).unwrap();
    let mut local: Vec<Decision> = Vec::new();
    replay_on_node(&trace, &mut node, |_, d| local.push(d)).unwrap();

    let rt = tokio::runtime::Runtime::new().unwrap();
    let (remote, torn, snapshots, final_count, cli_match) = rt.block_on(async {
        let server = spawn(&cfg).await.unwrap();
        let client = EdgeClient::new(&server.url());
        let mut remote: Vec<Decision> = Vec::new();
        client
            .replay(&trace, cfg.capacity, cfg.delays.deadline_ms, |_, d| remote.push(d))
            .await
            .unwrap();

        // The CLI path must produce the same tables as in-process replay.
        let dir = tempfile::tempdir().unwrap();
        let trace_path = dir.path().join("prefetch.trace");
        write_trace_file(&trace, &trace_path).unwrap();
        let (tp, url) = (trace_path.to_str().unwrap().to_string(), server.url());
        let (local_out, http_out) = (dir.path().join("local"), dir.path().join("http"));
        let (lo, ho) = (local_out.to_str().unwrap().to_string(), http_out.to_str().unwrap().to_string());
        tokio::task::spawn_blocking(move || {
            cli(&["replay", "--seed", "42", "--capacities", "1..8", "--trace", &tp, "--out", &lo]);
            cli(&["replay-http", "--seed", "42", "--endpoint", &url, "--capacities", "1..8", "--trace", &tp, "--out", &ho]);
        })
        .await
        .unwrap();
        let cli_match = ["sweep.csv", "users.csv", "qoe.csv"]
            .iter()
            .all(|f| std::fs::read(local_out.join(f)).unwrap() == std::fs::read(http_out.join(f)).unwrap());

        // Concurrent clients while a poller checks every snapshot.
        client.reset(Some(16)).await.unwrap();
        let done = Arc::new(AtomicBool::new(false));
        let poller = {
            let (client, done) = (client.clone(), done.clone());
            tokio::spawn(async move {
                let (mut torn, mut n) = (0u64, 0u64);
                while !done.load(Ordering::Relaxed) {
                    let s = client.stats().await.unwrap();
                    torn += (s.hits + s.misses != s.demand_requests) as u64;
                    n += 1;
                }
                (torn, n)
            })
        };
        let workers: Vec<_> = (0..8u32)
            .map(|user| {
                let client = client.clone();
                tokio::spawn(async move {
                    for k in random_keys(1000, 64, u64::from(user)) {
                        client.get_object(user, k).await.unwrap();
                    }
                })
            })
            .collect();
        for w in workers {
            w.await.unwrap();
        }
        done.store(true, Ordering::Relaxed);
        let (torn, snapshots) = poller.await.unwrap();
        let final_count = client.stats().await.unwrap().demand_requests;
        server.shutdown().await.unwrap();
        (remote, torn, snapshots, final_count, cli_match)
    });
    let mismatches = local.iter().zip(&remote).filter(|(l, r)| l != r).count() + local.len().abs_diff(remote.len());
    verdict(
        "Service equivalence",
        mismatches == 0 && cli_match && torn == 0 && snapshots > 0 && final_count == 8000,
        format!(
            "{} records over HTTP, {mismatches} decision mismatches; replay-http tables identical: {cli_match}; \
             8x1000 concurrent requests counted {final_count}, {torn} inconsistent of {snapshots} snapshots",
            trace.records.len()
        ),
    );
}

#[test]
fn performance_budget() {
    let b = baseline();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1_000_000u64;
    let mut records: Vec<RequestRecord> = (0..n)
        .map(|i| RequestRecord {
            time: Timestamp::from_micros(i * 600),
            user_id: rng.random_range(0..10),
            object_id: rng.random_range(0..200),
            kind: RequestKind::Demand,
            distance: 1.0,
        })
        .collect();
    records.sort_by_key(|r| r.sort_key());
    let traces = [LabeledTrace {
        label: "synthetic".into(),
        trace: RequestTrace {
            provenance: Default::default(),
            records,
        },
    }];
    let caps: Vec<usize> = (1..=16).collect();
    let t0 = Instant::now();
    let cells = sweep(&traces, &caps, PolicyKind::Lru, &DelayModelConfig::default()).unwrap();
    let sweep_secs = t0.elapsed().as_secs_f64();
    let demands: HashMap<usize, u64> = cells.iter().map(|c| (c.report.capacity, c.report.demand_requests)).collect();
    let complete = demands.len() == 16 && demands.values().all(|&d| d == n);
    verdict(
        "Performance budget",
        b.sim_seconds < 60.0 && sweep_secs < 30.0 && complete,
        format!(
            "default scenario simulated in {:.2} s (limit 60 s); {n}-access sweep over 16 capacities in {sweep_secs:.2} s (limit 30 s)",
            b.sim_seconds
        ),
    );
}
