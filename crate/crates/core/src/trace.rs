//! Request workloads derived from visibility logs, the IRM baseline, and the
//! trace file format.
//!
//! Trace file layout:
//!
//! ```text
//! #xrflux-trace v1 seed=<u64> config=<hex>
//! <time_s>,<user_id>,<object_id>,<D|P>,<distance>
//! ```
//!
//! Records are ordered by time, user and object; a prefetch comes before the
//! demand for the same object at the same instant.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FovKind;
use crate::motion::UserId;
use crate::scenario::{format_header, parse_header, ObjectId, Provenance, Transition, VisibilityLog};
use crate::time::Timestamp;

const TRACE_MAGIC: &str = "#xrflux-trace v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RequestKind {
    /// Cache-side warm-up; ordered before a same-instant demand.
    Prefetch,
    Demand,
}

impl RequestKind {
    pub fn code(self) -> char {
        match self {
            RequestKind::Demand => 'D',
            RequestKind::Prefetch => 'P',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestRecord {
    pub time: Timestamp,
    pub user_id: UserId,
    pub object_id: ObjectId,
    pub kind: RequestKind,
    pub distance: f64,
}

impl RequestRecord {
    pub fn sort_key(&self) -> (Timestamp, UserId, ObjectId, RequestKind) {
        (self.time, self.user_id, self.object_id, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RequestTrace {
    pub provenance: Provenance,
    pub records: Vec<RequestRecord>,
}

impl RequestTrace {
    pub fn is_sorted(&self) -> bool {
        first_unsorted(&self.records).is_none()
    }

    pub fn sort(&mut self) {
        self.records
            .sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then(a.distance.total_cmp(&b.distance)));
    }

    pub fn demand_count(&self) -> usize {
        self.records.iter().filter(|r| r.kind == RequestKind::Demand).count()
    }
}

/// Index of the first record that sorts before its predecessor.
fn first_unsorted(records: &[RequestRecord]) -> Option<usize> {
    records
        .windows(2)
        .position(|w| w[0].sort_key() > w[1].sort_key())
        .map(|i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Demand when an object enters the immediate FoV.
    Standard,
    /// Demand when an object enters the predicted FoV.
    Extended,
    /// Prefetch on predicted-FoV entry, demand on immediate-FoV entry.
    Prefetch,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Standard, Strategy::Extended, Strategy::Prefetch];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Standard => "standard",
            Strategy::Extended => "extended",
            Strategy::Prefetch => "prefetch",
        }
    }

    /// What the demand records of a trace built with this strategy mean.
    pub fn semantics(self) -> &'static str {
        match self {
            Strategy::Standard => "demand on immediate-FoV entry",
            Strategy::Extended => "demand on predicted-FoV entry",
            Strategy::Prefetch => "prefetch on predicted-FoV entry; demand on immediate-FoV entry",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Strategy::Standard),
            "extended" => Ok(Strategy::Extended),
            "prefetch" => Ok(Strategy::Prefetch),
            other => Err(Error::InvalidInput(format!(
                "unknown strategy `{other}` (expected standard|extended|prefetch)"
            ))),
        }
    }
}

/// Maps FoV enter events to cache requests. Exit events produce nothing.
pub fn derive_requests(log: &VisibilityLog, strategy: Strategy) -> Result<RequestTrace> {
    if let Some(i) = log.events.windows(2).position(|w| w[0].sort_key() >= w[1].sort_key()) {
        return Err(Error::Unsorted { line: i + 2 });
    }
    let mut records: Vec<RequestRecord> = log
        .events
        .iter()
        .filter(|e| e.transition == Transition::Enter)
        .filter_map(|e| {
            let kind = match (strategy, e.fov) {
                (Strategy::Standard, FovKind::Immediate) => RequestKind::Demand,
                (Strategy::Extended, FovKind::Predicted) => RequestKind::Demand,
                (Strategy::Prefetch, FovKind::Immediate) => RequestKind::Demand,
                (Strategy::Prefetch, FovKind::Predicted) => RequestKind::Prefetch,
                _ => return None,
            };
            Some(RequestRecord {
                time: e.time,
                user_id: e.user_id,
                object_id: e.object_id,
                kind,
                distance: e.distance,
            })
        })
        .collect();
    // the log puts immediate before predicted for the same object; the
    // prefetch must come first
    records.sort_by_key(|r| r.sort_key());
    Ok(RequestTrace {
        provenance: log.provenance.clone(),
        records,
    })
}

/// IRM baseline: keeps every `(user, object)` record but redraws its time
/// i.i.d. uniform on `(0, T)`, `T` being the latest input time.
///
/// Uniform times conditioned on the count are exactly a Poisson process
/// conditioned on that count, so each object's requests keep their logged
/// total while losing all temporal correlation.
pub fn generate_irm(trace: &RequestTrace, seed: u64) -> Result<RequestTrace> {
    if trace.records.iter().any(|r| r.kind == RequestKind::Prefetch) {
        return Err(Error::InvalidInput(
            "IRM input must contain only demand records".into(),
        ));
    }
    let horizon = trace.records.iter().map(|r| r.time).max().unwrap_or(Timestamp::ZERO);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = horizon.as_micros() as f64;
    let mut out = RequestTrace {
        provenance: Provenance {
            seed,
            config_hash: trace.provenance.config_hash.clone(),
        },
        records: trace
            .records
            .iter()
            .map(|r| {
                let u: f64 = rng.random();
                RequestRecord {
                    time: Timestamp::from_micros((u * span).round() as u64),
                    ..*r
                }
            })
            .collect(),
    };
    out.sort();
    Ok(out)
}

pub fn write_trace<W: Write>(trace: &RequestTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", format_header(TRACE_MAGIC, &trace.provenance))?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.time,
            r.user_id,
            r.object_id,
            r.kind.code(),
            r.distance
        )?;
    }
    w.flush()
}

pub fn write_trace_file(trace: &RequestTrace, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(trace, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn read_trace<R: BufRead>(r: R, origin: &Path) -> Result<RequestTrace> {
    let perr = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| perr(1, e.to_string()))?
        .ok_or_else(|| perr(1, "empty file, expected header".into()))?;
    let provenance = parse_header(TRACE_MAGIC, &header)
        .ok_or_else(|| perr(1, format!("expected `{TRACE_MAGIC} seed=<u64> config=<hex>`")))?;

    let mut records: Vec<RequestRecord> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let n = idx + 2;
        let line = line.map_err(|e| perr(n, e.to_string()))?;
        let mut fields = line.split(',');
        let mut field = |name: &str| {
            fields
                .next()
                .ok_or_else(|| perr(n, format!("missing field `{name}`")))
        };
        let time = field("time_s")?
            .parse::<Timestamp>()
            .map_err(|e| perr(n, format!("field `time_s`: {e}")))?;
        let user_id = field("user_id")?
            .parse()
            .map_err(|_| perr(n, "field `user_id`: not an unsigned integer".into()))?;
        let object_id = field("object_id")?
            .parse()
            .map_err(|_| perr(n, "field `object_id`: not an unsigned integer".into()))?;
        let kind = match field("kind")? {
            "D" => RequestKind::Demand,
            "P" => RequestKind::Prefetch,
            _ => return Err(perr(n, "field `kind`: expected D or P".into())),
        };
        let distance: f64 = field("distance")?
            .parse()
            .map_err(|_| perr(n, "field `distance`: not a number".into()))?;
        if fields.next().is_some() {
            return Err(perr(n, "too many fields".into()));
        }
        let rec = RequestRecord {
            time,
            user_id,
            object_id,
            kind,
            distance,
        };
        if records.last().is_some_and(|p| p.sort_key() > rec.sort_key()) {
            return Err(Error::Unsorted { line: n });
        }
        records.push(rec);
    }
    Ok(RequestTrace { provenance, records })
}

pub fn read_trace_file(path: &Path) -> Result<RequestTrace> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(BufReader::new(f), path)
}
