use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Uniform};
use serde::{Deserialize, Serialize};

/// Planner response-time model, in seconds.
///
/// Every draw uses its own ChaCha stream keyed by `(seed, draw)`, so a value
/// depends only on those two numbers and not on how many draws came before.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyModel {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::Fixed(3.2)
    }
}

impl LatencyModel {
    /// Describes why the parameters are unusable, if they are.
    pub fn check(&self) -> Result<(), String> {
        match *self {
            LatencyModel::Fixed(l) if !(l.is_finite() && l >= 0.0) => {
                Err(format!("fixed latency must be finite and >= 0, got {l}"))
            }
            LatencyModel::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) => {
                Err(format!("uniform latency needs 0 <= lo <= hi, got [{lo}, {hi}]"))
            }
            LatencyModel::LogNormal { mu, sigma } if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) => {
                Err(format!("lognormal latency needs finite mu and sigma >= 0, got ({mu}, {sigma})"))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, seed: u64, draw: u64) -> f64 {
        sample_latency(self, seed, draw)
    }
}

pub fn sample_latency(model: &LatencyModel, seed: u64, draw: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let value = match *model {
        LatencyModel::Fixed(l) => l,
        LatencyModel::Uniform { lo, hi } if lo == hi => lo,
        LatencyModel::Uniform { lo, hi } => Uniform::new_inclusive(lo, hi)
            .map(|d| d.sample(&mut rng))
            .unwrap_or(lo),
        LatencyModel::LogNormal { mu, sigma } => LogNormal::new(mu, sigma)
            .map(|d| d.sample(&mut rng))
            .unwrap_or_else(|_| mu.exp()),
    };
    value.max(0.0)
}
