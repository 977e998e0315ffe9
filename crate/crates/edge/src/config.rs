use std::fmt;
use std::net::SocketAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use xrflux_core::cache::PolicyKind;
use xrflux_core::delay::DelayModelConfig;
use xrflux_core::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayMode {
    /// Report the sampled delay in a header and answer at once.
    #[default]
    LogicalDelay,
    /// Hold the response for the sampled delay.
    RealSleep,
}

impl DelayMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DelayMode::LogicalDelay => "logical-delay",
            DelayMode::RealSleep => "real-sleep",
        }
    }
}

impl fmt::Display for DelayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DelayMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "logical-delay" => Ok(DelayMode::LogicalDelay),
            "real-sleep" => Ok(DelayMode::RealSleep),
            other => Err(ConfigError::new(
                "mode",
                format!("unknown mode `{other}` (expected logical-delay|real-sleep)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub capacity: usize,
    pub policy: PolicyKind,
    pub delays: DelayModelConfig,
    pub payload_bytes: usize,
    /// Valid object ids are `0..catalog_size`.
    pub catalog_size: u32,
    pub mode: DelayMode,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            capacity: 5,
            policy: PolicyKind::Lru,
            delays: DelayModelConfig::default(),
            payload_bytes: 1024,
            catalog_size: 1024,
            mode: DelayMode::LogicalDelay,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.capacity < 1 {
            return Err(ConfigError::new("capacity", "must be >= 1"));
        }
        if self.catalog_size < 1 {
            return Err(ConfigError::new("catalog_size", "must be >= 1"));
        }
        self.delays.validate()
    }
}
