//! The `--config` file: a TOML document with one table per stage.
//!
//! ```toml
//! [scenario]
//! duration = 600.0
//! n_groupies = 8
//! [scenario.immediate_fov]
//! angle_deg = 110.0
//! depth = 10.0
//! [scenario.motion]
//! principal_speed = 5.0
//!
//! [delays]
//! deadline_ms = 100.0
//! wireless_ms = { kind = "constant", ms = 10.0 }
//!
//! [replay]
//! capacities = [2, 4, 6, 8, 12, 16]
//!
//! [service]
//! listen = "127.0.0.1:8080"
//! ```
//!
//! Every key is optional and falls back to [`PipelineConfig::default`].

use std::net::SocketAddr;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use xrflux_core::cache::PolicyKind;
use xrflux_core::delay::DelayModelConfig;
use xrflux_core::scenario::ScenarioConfig;
use xrflux_edge::{DelayMode, ServiceConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySettings {
    pub capacities: Vec<usize>,
    pub policy: PolicyKind,
    /// Capacity at which the per-user table is reported.
    pub user_capacity: usize,
}

impl Default for ReplaySettings {
    fn default() -> Self {
        Self {
            capacities: (1..=16).collect(),
            policy: PolicyKind::Lru,
            user_capacity: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub listen: SocketAddr,
    pub capacity: usize,
    pub payload_bytes: usize,
    pub catalog_size: u32,
    pub mode: DelayMode,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        let d = ServiceConfig::default();
        Self {
            listen: d.listen,
            capacity: d.capacity,
            payload_bytes: d.payload_bytes,
            catalog_size: d.catalog_size,
            mode: d.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scenario: ScenarioConfig,
    pub delays: DelayModelConfig,
    pub replay: ReplaySettings,
    pub service: ServiceSettings,
}

impl PipelineConfig {
    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("config {}", p.display()))?
            }
        };
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.delays.validate()?;
        validate_capacities("replay.capacities", &self.replay.capacities)?;
        if self.replay.user_capacity < 1 {
            bail!("replay.user_capacity must be >= 1");
        }
        self.service_config().validate()?;
        Ok(())
    }

    pub fn service_config(&self) -> ServiceConfig {
        ServiceConfig {
            listen: self.service.listen,
            capacity: self.service.capacity,
            policy: self.replay.policy,
            delays: self.delays.clone(),
            payload_bytes: self.service.payload_bytes,
            catalog_size: self.service.catalog_size,
            mode: self.service.mode,
        }
    }
}

pub fn validate_capacities(field: &str, caps: &[usize]) -> Result<()> {
    if caps.is_empty() {
        bail!("{field} must not be empty");
    }
    if caps.contains(&0) {
        bail!("{field} entries must be >= 1");
    }
    Ok(())
}

/// Parses capacity lists such as `5`, `2,4,8` or `1..16` (inclusive).
pub fn parse_capacities(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: usize = lo.trim().parse().with_context(|| format!("bad range start in `{part}`"))?;
            let hi: usize = hi
                .trim()
                .trim_start_matches('=')
                .parse()
                .with_context(|| format!("bad range end in `{part}`"))?;
            if lo > hi {
                bail!("empty range `{part}`");
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().with_context(|| format!("bad capacity `{part}`"))?);
        }
    }
    validate_capacities("--capacities", &out)?;
    Ok(out)
}
