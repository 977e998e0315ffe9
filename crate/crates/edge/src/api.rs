//! Wire types shared by the server and the client.

use serde::{Deserialize, Serialize};
use xrflux_core::node::PrefetchOutcome;
use xrflux_core::{ObjectId, UserId};

pub const CACHE_HEADER: &str = "x-cache";
pub const DELAY_HEADER: &str = "x-delay-ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefetchRequest {
    pub user_id: UserId,
    pub object_ids: Vec<ObjectId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrefetchResult {
    pub object_id: ObjectId,
    pub outcome: PrefetchOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefetchResponse {
    pub user_id: UserId,
    pub results: Vec<PrefetchResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetRequest {
    /// Keep the current capacity when absent.
    pub capacity: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetResponse {
    pub ok: bool,
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
