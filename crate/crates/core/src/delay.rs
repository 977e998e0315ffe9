//! Access-delay model: wireless hop to the edge plus a cloud round trip on
//! misses.
//!
//! The shipped defaults are placeholders, not measurements. Override them per
//! experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DelaySpec {
    Constant { ms: f64 },
    Empirical { values: Vec<f64>, weights: Vec<f64> },
    /// `exp(N(mu, sigma^2))`, in milliseconds.
    Lognormal { mu: f64, sigma: f64 },
}

impl DelaySpec {
    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        match self {
            DelaySpec::Constant { ms } if !(*ms >= 0.0 && ms.is_finite()) => {
                Err(ConfigError::new(field, "constant delay must be finite and >= 0"))
            }
            DelaySpec::Empirical { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return Err(ConfigError::new(field, "values and weights must be non-empty and equally long"));
                }
                if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(ConfigError::new(field, "values must be finite and >= 0"));
                }
                if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || weights.iter().sum::<f64>() <= 0.0 {
                    return Err(ConfigError::new(field, "weights must be >= 0 with a positive sum"));
                }
                Ok(())
            }
            DelaySpec::Lognormal { mu, sigma } if !(mu.is_finite() && *sigma >= 0.0 && sigma.is_finite()) => {
                Err(ConfigError::new(field, "lognormal needs finite mu and sigma >= 0"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayModelConfig {
    pub wireless_ms: DelaySpec,
    pub cloud_rtt_ms: DelaySpec,
    pub seed: u64,
    /// Demand requests slower than this count as deadline misses.
    pub deadline_ms: f64,
}

impl Default for DelayModelConfig {
    fn default() -> Self {
        Self {
            wireless_ms: DelaySpec::Lognormal {
                mu: 10f64.ln(),
                sigma: 0.5,
            },
            cloud_rtt_ms: DelaySpec::Empirical {
                values: vec![30.0, 40.0, 60.0],
                weights: vec![0.5, 0.3, 0.2],
            },
            seed: 0,
            deadline_ms: 100.0,
        }
    }
}

impl DelayModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.wireless_ms.validate("delays.wireless_ms")?;
        self.cloud_rtt_ms.validate("delays.cloud_rtt_ms")?;
        if !(self.deadline_ms >= 0.0 && self.deadline_ms.is_finite()) {
            return Err(ConfigError::new("delays.deadline_ms", "must be >= 0"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone)]
enum Sampler {
    Constant(f64),
    Empirical(Vec<f64>, WeightedIndex<f64>),
    Lognormal(LogNormal<f64>),
}

impl Sampler {
    fn new(spec: &DelaySpec) -> Self {
        match spec {
            DelaySpec::Constant { ms } => Sampler::Constant(*ms),
            DelaySpec::Empirical { values, weights } => Sampler::Empirical(
                values.clone(),
                WeightedIndex::new(weights).expect("validated weights"),
            ),
            DelaySpec::Lognormal { mu, sigma } => {
                Sampler::Lognormal(LogNormal::new(*mu, *sigma).expect("validated lognormal"))
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Constant(v) => *v,
            Sampler::Empirical(values, index) => values[index.sample(rng)],
            Sampler::Lognormal(d) => d.sample(rng),
        }
    }
}

/// Seeded delay stream. Two models built from equal configs produce the same
/// sequence for the same sequence of calls.
#[derive(Debug, Clone)]
pub struct DelayModel {
    config: DelayModelConfig,
    wireless: Sampler,
    cloud: Sampler,
    rng: ChaCha8Rng,
}

impl DelayModel {
    pub fn new(config: &DelayModelConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            wireless: Sampler::new(&config.wireless_ms),
            cloud: Sampler::new(&config.cloud_rtt_ms),
            rng: Self::stream(config.seed),
        })
    }

    fn stream(seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        rng
    }

    pub fn config(&self) -> &DelayModelConfig {
        &self.config
    }

    pub fn deadline_ms(&self) -> f64 {
        self.config.deadline_ms
    }

    pub fn wireless(&mut self) -> f64 {
        self.wireless.sample(&mut self.rng)
    }

    pub fn cloud_rtt(&mut self) -> f64 {
        self.cloud.sample(&mut self.rng)
    }

    /// Rewinds to the start of the stream.
    pub fn reset(&mut self) {
        self.rng = Self::stream(self.config.seed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_reset() {
        let cfg = DelayModelConfig {
            wireless_ms: DelaySpec::Constant { ms: 10.0 },
            cloud_rtt_ms: DelaySpec::Constant { ms: 40.0 },
            ..DelayModelConfig::default()
        };
        let mut m = DelayModel::new(&cfg).unwrap();
        assert_eq!(m.wireless() + m.cloud_rtt(), 50.0);

        let mut m = DelayModel::new(&DelayModelConfig::default()).unwrap();
        let a: Vec<f64> = (0..20).map(|_| m.wireless()).collect();
        m.reset();
        let b: Vec<f64> = (0..20).map(|_| m.wireless()).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn empirical_draws_only_listed_values() {
        let mut m = DelayModel::new(&DelayModelConfig::default()).unwrap();
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            let v = m.cloud_rtt();
            let i = [30.0, 40.0, 60.0].iter().position(|&x| x == v).expect("listed value");
            counts[i] += 1;
        }
        // weights 0.5 / 0.3 / 0.2
        assert!((counts[0] as f64 / 10_000.0 - 0.5).abs() < 0.03);
        assert!((counts[2] as f64 / 10_000.0 - 0.2).abs() < 0.03);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = DelayModelConfig {
            cloud_rtt_ms: DelaySpec::Empirical { values: vec![1.0], weights: vec![] },
            ..DelayModelConfig::default()
        };
        assert!(DelayModel::new(&bad).is_err());
        let bad = DelayModelConfig {
            wireless_ms: DelaySpec::Constant { ms: -1.0 },
            ..DelayModelConfig::default()
        };
        assert!(DelayModel::new(&bad).unwrap_err().to_string().contains("wireless_ms"));
    }
}
