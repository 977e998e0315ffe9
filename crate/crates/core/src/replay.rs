//! Trace replay through an [`EdgeNode`], capacity sweeps, and the report
//! tables.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{Access, PolicyKind};
use crate::delay::DelayModelConfig;
use crate::error::{Error, Result};
use crate::motion::UserId;
use crate::node::{EdgeNode, PrefetchOutcome, RemoteStore};
use crate::trace::{RequestKind, RequestRecord, RequestTrace};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UserMetrics {
    pub requests: u64,
    pub hits: u64,
    pub hit_rate: f64,
    pub mean_delay_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DelaySummary {
    pub count: u64,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl DelaySummary {
    /// Nearest-rank percentiles; all zero for an empty sample.
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |p: f64| {
            let r = (p * sorted.len() as f64).ceil() as usize;
            sorted[r.clamp(1, sorted.len()) - 1]
        };
        Self {
            count: samples.len() as u64,
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
            p50: rank(0.50),
            p95: rank(0.95),
            p99: rank(0.99),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub capacity: usize,
    pub demand_requests: u64,
    pub demand_hits: u64,
    /// Demand-only; 0 when there were no demand requests.
    pub hit_rate: f64,
    pub no_requests: bool,
    pub prefetch_requests: u64,
    pub prefetch_fetches: u64,
    pub deadline_ms: f64,
    pub deadline_miss_fraction: f64,
    pub delay: DelaySummary,
    pub users: BTreeMap<UserId, UserMetrics>,
}

/// One replayed record as seen by the client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Demand { access: Access, delay_ms: f64 },
    Prefetch(PrefetchOutcome),
}

#[derive(Debug, Default)]
struct UserTally {
    requests: u64,
    hits: u64,
    delay_sum: f64,
}

/// Accumulates decisions into a [`ReplayReport`]; usable with any transport.
#[derive(Debug)]
pub struct ReportBuilder {
    capacity: usize,
    deadline_ms: f64,
    demand_hits: u64,
    prefetch_requests: u64,
    prefetch_fetches: u64,
    delays: Vec<f64>,
    users: BTreeMap<UserId, UserTally>,
}

impl ReportBuilder {
    pub fn new(capacity: usize, deadline_ms: f64) -> Self {
        Self {
            capacity,
            deadline_ms,
            demand_hits: 0,
            prefetch_requests: 0,
            prefetch_fetches: 0,
            delays: Vec::new(),
            users: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, rec: &RequestRecord, decision: Decision) {
        match decision {
            Decision::Demand { access, delay_ms } => {
                let hit = access.is_hit();
                let t = self.users.entry(rec.user_id).or_default();
                t.requests += 1;
                t.hits += hit as u64;
                t.delay_sum += delay_ms;
                self.demand_hits += hit as u64;
                self.delays.push(delay_ms);
            }
            Decision::Prefetch(outcome) => {
                self.prefetch_requests += 1;
                self.prefetch_fetches += (outcome == PrefetchOutcome::Fetched) as u64;
            }
        }
    }

    pub fn finish(self) -> ReplayReport {
        let demand_requests = self.delays.len() as u64;
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let late = self.delays.iter().filter(|&&d| d > self.deadline_ms).count() as u64;
        ReplayReport {
            capacity: self.capacity,
            demand_requests,
            demand_hits: self.demand_hits,
            hit_rate: ratio(self.demand_hits, demand_requests),
            no_requests: demand_requests == 0,
            prefetch_requests: self.prefetch_requests,
            prefetch_fetches: self.prefetch_fetches,
            deadline_ms: self.deadline_ms,
            deadline_miss_fraction: ratio(late, demand_requests),
            delay: DelaySummary::from_samples(&self.delays),
            users: self
                .users
                .into_iter()
                .map(|(u, t)| {
                    (
                        u,
                        UserMetrics {
                            requests: t.requests,
                            hits: t.hits,
                            hit_rate: ratio(t.hits, t.requests),
                            mean_delay_ms: if t.requests == 0 { 0.0 } else { t.delay_sum / t.requests as f64 },
                        },
                    )
                })
                .collect(),
        }
    }
}

fn check_sorted(trace: &RequestTrace) -> Result<()> {
    match trace
        .records
        .windows(2)
        .position(|w| w[0].sort_key() > w[1].sort_key())
    {
        Some(i) => Err(Error::Unsorted { line: i + 3 }),
        None => Ok(()),
    }
}

/// Replays `trace` in order against `node`, reporting every decision to
/// `observe`.
pub fn replay_on_node(
    trace: &RequestTrace,
    node: &mut EdgeNode,
    mut observe: impl FnMut(&RequestRecord, Decision),
) -> Result<ReplayReport> {
    check_sorted(trace)?;
    let mut report = ReportBuilder::new(node.capacity(), node.deadline_ms());
    for rec in &trace.records {
        let decision = match rec.kind {
            RequestKind::Demand => {
                let o = node.demand(rec.object_id);
                Decision::Demand {
                    access: o.access,
                    delay_ms: o.delay_ms,
                }
            }
            RequestKind::Prefetch => Decision::Prefetch(node.prefetch(rec.object_id)),
        };
        observe(rec, decision);
        report.record(rec, decision);
    }
    Ok(report.finish())
}

/// Replays `trace` through a fresh cache of the given policy and capacity.
pub fn replay(
    trace: &RequestTrace,
    policy: PolicyKind,
    capacity: usize,
    delays: &DelayModelConfig,
) -> Result<ReplayReport> {
    let mut node = EdgeNode::new(policy, capacity, delays, RemoteStore { payload_bytes: 0 })?;
    replay_on_node(trace, &mut node, |_, _| {})
}

/// A trace with the label its rows carry in the report tables.
#[derive(Debug, Clone)]
pub struct LabeledTrace {
    pub label: String,
    pub trace: RequestTrace,
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub label: String,
    pub report: ReplayReport,
}

/// Replays every trace at every capacity. Cells are independent and run in
/// parallel, each with its own cache and a delay stream started from the
/// configured seed. Output is ordered by capacity, then by input trace order.
pub fn sweep(
    traces: &[LabeledTrace],
    capacities: &[usize],
    policy: PolicyKind,
    delays: &DelayModelConfig,
) -> Result<Vec<SweepCell>> {
    if capacities.is_empty() {
        return Err(Error::InvalidInput("capacity list is empty".into()));
    }
    delays.validate()?;
    let cells: Vec<(usize, &LabeledTrace)> = capacities
        .iter()
        .flat_map(|&c| traces.iter().map(move |t| (c, t)))
        .collect();
    cells
        .par_iter()
        .map(|&(capacity, t)| {
            replay(&t.trace, policy, capacity, delays).map(|report| SweepCell {
                label: t.label.clone(),
                report,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "capacity,strategy,requests,hits,hit_rate";
pub const USERS_HEADER: &str = "user_id,strategy,requests,hits,hit_rate,mean_delay_ms";
pub const DEPTH_HEADER: &str = "S,capacity,hit_rate";
pub const QOE_HEADER: &str =
    "capacity,strategy,prefetch_fetches,mean_delay_ms,p50_delay_ms,p95_delay_ms,p99_delay_ms,deadline_miss_fraction";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub capacity: usize,
    pub strategy: String,
    pub requests: u64,
    pub hits: u64,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRow {
    pub user_id: UserId,
    pub strategy: String,
    pub requests: u64,
    pub hits: u64,
    pub hit_rate: f64,
    pub mean_delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthRow {
    pub depth: f64,
    pub capacity: usize,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QoeRow {
    pub capacity: usize,
    pub strategy: String,
    pub prefetch_fetches: u64,
    pub delay: DelaySummary,
    pub deadline_miss_fraction: f64,
}

pub fn sweep_rows(cells: &[SweepCell]) -> Vec<SweepRow> {
    cells
        .iter()
        .map(|c| SweepRow {
            capacity: c.report.capacity,
            strategy: c.label.clone(),
            requests: c.report.demand_requests,
            hits: c.report.demand_hits,
            hit_rate: c.report.hit_rate,
        })
        .collect()
}

pub fn qoe_rows(cells: &[SweepCell]) -> Vec<QoeRow> {
    cells
        .iter()
        .map(|c| QoeRow {
            capacity: c.report.capacity,
            strategy: c.label.clone(),
            prefetch_fetches: c.report.prefetch_fetches,
            delay: c.report.delay,
            deadline_miss_fraction: c.report.deadline_miss_fraction,
        })
        .collect()
}

/// Per-user rows for the cells at `capacity`. Every user seen in any of those
/// cells gets a row for every label, zero-filled where it made no requests.
pub fn user_rows(cells: &[SweepCell], capacity: usize) -> Vec<UserRow> {
    let at_cap: Vec<&SweepCell> = cells.iter().filter(|c| c.report.capacity == capacity).collect();
    let users: BTreeSet<UserId> = at_cap.iter().flat_map(|c| c.report.users.keys().copied()).collect();
    let mut rows = Vec::new();
    for &u in &users {
        for c in &at_cap {
            let m = c.report.users.get(&u).copied().unwrap_or_default();
            rows.push(UserRow {
                user_id: u,
                strategy: c.label.clone(),
                requests: m.requests,
                hits: m.hits,
                hit_rate: m.hit_rate,
                mean_delay_ms: m.mean_delay_ms,
            });
        }
    }
    rows
}

pub fn depth_rows(depth: f64, cells: &[SweepCell]) -> Vec<DepthRow> {
    cells
        .iter()
        .map(|c| DepthRow {
            depth,
            capacity: c.report.capacity,
            hit_rate: c.report.hit_rate,
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{:.6}", r.capacity, r.strategy, r.requests, r.hits, r.hit_rate)?;
    }
    w.flush()
}

pub fn write_users_csv<W: Write>(rows: &[UserRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{USERS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.6},{:.6}",
            r.user_id, r.strategy, r.requests, r.hits, r.hit_rate, r.mean_delay_ms
        )?;
    }
    w.flush()
}

pub fn write_depth_csv<W: Write>(rows: &[DepthRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{DEPTH_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{:.6}", r.depth, r.capacity, r.hit_rate)?;
    }
    w.flush()
}

pub fn write_qoe_csv<W: Write>(rows: &[QoeRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{QOE_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.capacity,
            r.strategy,
            r.prefetch_fetches,
            r.delay.mean,
            r.delay.p50,
            r.delay.p95,
            r.delay.p99,
            r.deadline_miss_fraction
        )?;
    }
    w.flush()
}

/// Splits a CSV table after checking its header. Returns `(line_no, fields)`.
fn read_table<R: BufRead>(r: R, header: &str, origin: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let perr = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| perr(n, e.to_string()))?;
        if n == 1 {
            if line != header {
                return Err(perr(1, format!("expected header `{header}`")));
            }
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != width {
            return Err(perr(n, format!("expected {width} fields, found {}", fields.len())));
        }
        out.push((n, fields));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(origin: &Path, line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message: format!("field `{name}`: cannot parse {raw:?}"),
    })
}

pub fn read_sweep_csv<R: BufRead>(r: R, origin: &Path) -> Result<Vec<SweepRow>> {
    read_table(r, SWEEP_HEADER, origin)?
        .into_iter()
        .map(|(n, f)| {
            Ok(SweepRow {
                capacity: field(origin, n, "capacity", &f[0])?,
                strategy: f[1].clone(),
                requests: field(origin, n, "requests", &f[2])?,
                hits: field(origin, n, "hits", &f[3])?,
                hit_rate: field(origin, n, "hit_rate", &f[4])?,
            })
        })
        .collect()
}

pub fn read_users_csv<R: BufRead>(r: R, origin: &Path) -> Result<Vec<UserRow>> {
    read_table(r, USERS_HEADER, origin)?
        .into_iter()
        .map(|(n, f)| {
            Ok(UserRow {
                user_id: field(origin, n, "user_id", &f[0])?,
                strategy: f[1].clone(),
                requests: field(origin, n, "requests", &f[2])?,
                hits: field(origin, n, "hits", &f[3])?,
                hit_rate: field(origin, n, "hit_rate", &f[4])?,
                mean_delay_ms: field(origin, n, "mean_delay_ms", &f[5])?,
            })
        })
        .collect()
}

pub fn read_depth_csv<R: BufRead>(r: R, origin: &Path) -> Result<Vec<DepthRow>> {
    read_table(r, DEPTH_HEADER, origin)?
        .into_iter()
        .map(|(n, f)| {
            Ok(DepthRow {
                depth: field(origin, n, "S", &f[0])?,
                capacity: field(origin, n, "capacity", &f[1])?,
                hit_rate: field(origin, n, "hit_rate", &f[2])?,
            })
        })
        .collect()
}

pub fn read_qoe_csv<R: BufRead>(r: R, origin: &Path) -> Result<Vec<QoeRow>> {
    read_table(r, QOE_HEADER, origin)?
        .into_iter()
        .map(|(n, f)| {
            Ok(QoeRow {
                capacity: field(origin, n, "capacity", &f[0])?,
                strategy: f[1].clone(),
                prefetch_fetches: field(origin, n, "prefetch_fetches", &f[2])?,
                delay: DelaySummary {
                    count: 0,
                    mean: field(origin, n, "mean_delay_ms", &f[3])?,
                    p50: field(origin, n, "p50_delay_ms", &f[4])?,
                    p95: field(origin, n, "p95_delay_ms", &f[5])?,
                    p99: field(origin, n, "p99_delay_ms", &f[6])?,
                },
                deadline_miss_fraction: field(origin, n, "deadline_miss_fraction", &f[7])?,
            })
        })
        .collect()
}
