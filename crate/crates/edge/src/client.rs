use xrflux_core::cache::Access;
use xrflux_core::node::{NodeStats, PrefetchOutcome};
use xrflux_core::replay::{Decision, LabeledTrace, ReplayReport, ReportBuilder, SweepCell};
use xrflux_core::trace::{RequestKind, RequestRecord, RequestTrace};
use xrflux_core::{ObjectId, UserId};

use crate::api::{PrefetchRequest, PrefetchResponse, ResetRequest, ResetResponse, CACHE_HEADER, DELAY_HEADER};
use crate::error::EdgeError;

/// Upper bound on ids sent in one prefetch call during replay.
const PREFETCH_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectReply {
    pub access: Access,
    pub delay_ms: f64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct EdgeClient {
    base: String,
    http: reqwest::Client,
}

impl EdgeClient {
    /// `endpoint` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(endpoint: &str) -> Self {
        Self {
            base: endpoint.trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    async fn send(&self, req: reqwest::RequestBuilder, url: &str) -> Result<reqwest::Response, EdgeError> {
        let http_err = |source| EdgeError::Http {
            url: url.to_string(),
            source,
        };
        let resp = req.send().await.map_err(http_err)?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let body = resp.text().await.map_err(http_err)?;
        Err(EdgeError::Status {
            url: url.to_string(),
            status,
            body,
        })
    }

    async fn json<T: serde::de::DeserializeOwned>(resp: reqwest::Response, url: &str) -> Result<T, EdgeError> {
        resp.json().await.map_err(|source| EdgeError::Http {
            url: url.to_string(),
            source,
        })
    }

    pub async fn get_object(&self, user: UserId, object: ObjectId) -> Result<ObjectReply, EdgeError> {
        let url = format!("{}/v1/objects/{object}?user={user}", self.base);
        let resp = self.send(self.http.get(&url), &url).await?;
        let protocol = |message: String| EdgeError::Protocol {
            url: url.clone(),
            message,
        };
        let header = |name: &str| {
            resp.headers()
                .get(name)
                .and_then(|v| v.to_str().ok())
                .map(str::to_string)
                .ok_or_else(|| protocol(format!("missing or non-text {name} header")))
        };
        let access = match header(CACHE_HEADER)?.as_str() {
            "HIT" => Access::Hit,
            "MISS" => Access::Miss,
            other => return Err(protocol(format!("unexpected {CACHE_HEADER} value `{other}`"))),
        };
        let delay = header(DELAY_HEADER)?;
        let delay_ms = delay
            .parse::<f64>()
            .map_err(|_| protocol(format!("unparsable {DELAY_HEADER} value `{delay}`")))?;
        let payload = resp
            .bytes()
            .await
            .map_err(|source| EdgeError::Http {
                url: url.clone(),
                source,
            })?
            .to_vec();
        Ok(ObjectReply {
            access,
            delay_ms,
            payload,
        })
    }

    pub async fn prefetch(&self, user: UserId, objects: &[ObjectId]) -> Result<Vec<PrefetchOutcome>, EdgeError> {
        let url = format!("{}/v1/prefetch", self.base);
        let body = PrefetchRequest {
            user_id: user,
            object_ids: objects.to_vec(),
        };
        let resp = self.send(self.http.post(&url).json(&body), &url).await?;
        let parsed: PrefetchResponse = Self::json(resp, &url).await?;
        let echoed: Vec<ObjectId> = parsed.results.iter().map(|r| r.object_id).collect();
        if echoed != objects {
            return Err(EdgeError::Protocol {
                url,
                message: "prefetch results do not match the request".into(),
            });
        }
        Ok(parsed.results.into_iter().map(|r| r.outcome).collect())
    }

    pub async fn stats(&self) -> Result<NodeStats, EdgeError> {
        let url = format!("{}/v1/stats", self.base);
        let resp = self.send(self.http.get(&url), &url).await?;
        Self::json(resp, &url).await
    }

    /// Empties the cache, zeroes counters and restarts the delay stream.
    pub async fn reset(&self, capacity: Option<usize>) -> Result<usize, EdgeError> {
        let url = format!("{}/v1/admin/reset", self.base);
        let resp = self
            .send(self.http.post(&url).json(&ResetRequest { capacity }), &url)
            .await?;
        let parsed: ResetResponse = Self::json(resp, &url).await?;
        Ok(parsed.capacity)
    }

    /// Resets the service to `capacity` and replays `trace` one request at a
    /// time. Runs of prefetches from the same user travel in one call; the
    /// service applies them in order, so decisions match record-by-record
    /// replay.
    pub async fn replay(
        &self,
        trace: &RequestTrace,
        capacity: usize,
        deadline_ms: f64,
        mut observe: impl FnMut(&RequestRecord, Decision),
    ) -> Result<ReplayReport, EdgeError> {
        if !trace.is_sorted() {
            return Err(xrflux_core::Error::InvalidInput("trace is not sorted".into()).into());
        }
        self.reset(Some(capacity)).await?;
        let mut report = ReportBuilder::new(capacity, deadline_ms);
        let records = &trace.records;
        let mut i = 0;
        while i < records.len() {
            let rec = &records[i];
            match rec.kind {
                RequestKind::Demand => {
                    let reply = self.get_object(rec.user_id, rec.object_id).await?;
                    let decision = Decision::Demand {
                        access: reply.access,
                        delay_ms: reply.delay_ms,
                    };
                    observe(rec, decision);
                    report.record(rec, decision);
                    i += 1;
                }
                RequestKind::Prefetch => {
                    let run = records[i..]
                        .iter()
                        .take(PREFETCH_BATCH)
                        .take_while(|r| r.kind == RequestKind::Prefetch && r.user_id == rec.user_id)
                        .count();
                    let batch = &records[i..i + run];
                    let ids: Vec<ObjectId> = batch.iter().map(|r| r.object_id).collect();
                    let outcomes = self.prefetch(rec.user_id, &ids).await?;
                    for (r, outcome) in batch.iter().zip(outcomes) {
                        observe(r, Decision::Prefetch(outcome));
                        report.record(r, Decision::Prefetch(outcome));
                    }
                    i += run;
                }
            }
        }
        Ok(report.finish())
    }

    /// Over-the-wire counterpart of [`xrflux_core::replay::sweep`], with the
    /// same cell order. Cells run one after another since they share the
    /// service.
    pub async fn sweep(
        &self,
        traces: &[LabeledTrace],
        capacities: &[usize],
        deadline_ms: f64,
    ) -> Result<Vec<SweepCell>, EdgeError> {
        if capacities.is_empty() {
            return Err(xrflux_core::Error::InvalidInput("capacity list is empty".into()).into());
        }
        let mut cells = Vec::with_capacity(capacities.len() * traces.len());
        for &capacity in capacities {
            for t in traces {
                let report = self.replay(&t.trace, capacity, deadline_ms, |_, _| {}).await?;
                cells.push(SweepCell {
                    label: t.label.clone(),
                    report,
                });
            }
        }
        Ok(cells)
    }
}
