//! The edge cache node: a policy, a remote store and the delay model behind
//! one serialized mutation path.
//!
//! In-process replay and the HTTP service both drive an [`EdgeNode`], so for
//! the same request order they make the same decisions and draw the same
//! delays.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{Access, CachePolicy, PolicyKind};
use crate::delay::{DelayModel, DelayModelConfig};
use crate::error::{ConfigError, Result};
use crate::scenario::ObjectId;

/// Authoritative object store reached on edge misses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteStore {
    pub payload_bytes: usize,
}

impl RemoteStore {
    /// Deterministic content for `object_id`.
    pub fn payload(&self, object_id: ObjectId) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(object_id));
        let mut buf = vec![0u8; self.payload_bytes];
        rng.fill_bytes(&mut buf);
        buf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeStats {
    pub demand_requests: u64,
    pub hits: u64,
    pub misses: u64,
    pub prefetch_requests: u64,
    pub prefetch_fetches: u64,
    pub resident_count: u64,
    pub capacity: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandOutcome {
    pub access: Access,
    /// User-visible delay: wireless, plus the cloud round trip on a miss.
    pub delay_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefetchOutcome {
    AlreadyCached,
    Fetched,
}

pub struct EdgeNode {
    policy_kind: PolicyKind,
    policy: Box<dyn CachePolicy>,
    delays: DelayModel,
    store: RemoteStore,
    stats: NodeStats,
    /// Cloud time spent on prefetch fetches; never charged to users.
    prefetch_fetch_ms: f64,
}

impl EdgeNode {
    pub fn new(
        policy_kind: PolicyKind,
        capacity: usize,
        delays: &DelayModelConfig,
        store: RemoteStore,
    ) -> Result<Self, ConfigError> {
        if capacity < 1 {
            return Err(ConfigError::new("capacity", "must be >= 1"));
        }
        Ok(Self {
            policy_kind,
            policy: policy_kind.build(capacity),
            delays: DelayModel::new(delays)?,
            store,
            stats: NodeStats {
                capacity: capacity as u64,
                ..NodeStats::default()
            },
            prefetch_fetch_ms: 0.0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.policy.capacity()
    }

    pub fn policy_kind(&self) -> PolicyKind {
        self.policy_kind
    }

    pub fn store(&self) -> RemoteStore {
        self.store
    }

    pub fn stats(&self) -> NodeStats {
        NodeStats {
            resident_count: self.policy.len() as u64,
            ..self.stats
        }
    }

    pub fn prefetch_fetch_ms(&self) -> f64 {
        self.prefetch_fetch_ms
    }

    pub fn resident(&self) -> Vec<ObjectId> {
        self.policy.resident()
    }

    pub fn deadline_ms(&self) -> f64 {
        self.delays.deadline_ms()
    }

    /// User request: a hit costs the wireless hop; a miss adds the cloud
    /// round trip and admits the object.
    pub fn demand(&mut self, object_id: ObjectId) -> DemandOutcome {
        let access = self.policy.access(object_id);
        self.stats.demand_requests += 1;
        let mut delay_ms = self.delays.wireless();
        match access {
            Access::Hit => self.stats.hits += 1,
            Access::Miss => {
                self.stats.misses += 1;
                delay_ms += self.delays.cloud_rtt();
            }
        }
        DemandOutcome { access, delay_ms }
    }

    /// Cache-side warm-up. A miss fetches from the store and admits; a hit
    /// only refreshes replacement state.
    pub fn prefetch(&mut self, object_id: ObjectId) -> PrefetchOutcome {
        self.stats.prefetch_requests += 1;
        match self.policy.access(object_id) {
            Access::Hit => PrefetchOutcome::AlreadyCached,
            Access::Miss => {
                self.stats.prefetch_fetches += 1;
                self.prefetch_fetch_ms += self.delays.cloud_rtt();
                PrefetchOutcome::Fetched
            }
        }
    }

    /// Back to the freshly constructed state, optionally with a new capacity.
    pub fn reset(&mut self, capacity: Option<usize>) -> Result<(), ConfigError> {
        let capacity = capacity.unwrap_or(self.policy.capacity());
        if capacity < 1 {
            return Err(ConfigError::new("capacity", "must be >= 1"));
        }
        self.policy = self.policy_kind.build(capacity);
        self.delays.reset();
        self.stats = NodeStats {
            capacity: capacity as u64,
            ..NodeStats::default()
        };
        self.prefetch_fetch_ms = 0.0;
        Ok(())
    }
}
