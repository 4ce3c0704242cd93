use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::canonical::sha256_hex;

/// Integer-valued distributions, all in ticks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum Distribution {
    Constant {
        value: u64,
    },
    /// Uniform on `[low, high]`, both inclusive.
    UniformInt { low: u64, high: u64 },
    /// `max(min, ceil(Exp(mean)))`; `min` defaults to 1.
    ExponentialInt {
        mean: u64,
        #[serde(default = "one")]
        min: u64,
    },
}

fn one() -> u64 {
    1
}

impl Distribution {
    pub fn check(&self) -> Result<(), String> {
        match self {
            Distribution::UniformInt { low, high } if low > high => {
                Err(format!("uniform-int low {low} is above high {high}"))
            }
            Distribution::ExponentialInt { mean: 0, .. } => {
                Err("exponential-int mean must be positive".into())
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut impl RngCore) -> u64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::UniformInt { low, high } => match (high - low).checked_add(1) {
                Some(span) => low + bounded(rng, span),
                None => rng.next_u64(),
            },
            Distribution::ExponentialInt { mean, min } => {
                let u = unit(rng);
                let x = (-(mean as f64) * (1.0 - u).ln()).ceil();
                (x as u64).max(min)
            }
        }
    }
}

/// Uniform integer in `[0, span)` without modulo bias (Lemire's method).
fn bounded(rng: &mut impl RngCore, span: u64) -> u64 {
    let mut m = u128::from(rng.next_u64()) * u128::from(span);
    if (m as u64) < span {
        let threshold = span.wrapping_neg() % span;
        while (m as u64) < threshold {
            m = u128::from(rng.next_u64()) * u128::from(span);
        }
    }
    (m >> 64) as u64
}

/// Uniform in `[0, 1)` with 53 bits of precision.
fn unit(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The generator behind one stream, keyed by (run seed, scenario, label):
/// streams never share state, so adding one does not shift another.
pub fn stream_rng(run_seed: u64, scenario: &str, label: &str) -> ChaCha8Rng {
    let digest = sha256_hex(format!("{run_seed}\u{1f}{scenario}\u{1f}{label}"));
    let mut seed = [0u8; 32];
    hex::decode_to_slice(&digest, &mut seed).expect("sha256 is 32 bytes");
    ChaCha8Rng::from_seed(seed)
}

/// A declared distribution as written in a scenario document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub name: String,
    #[serde(flatten)]
    pub distribution: Distribution,
    /// Stream label; the name unless given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<String>,
}

impl DistributionSpec {
    pub fn stream_label(&self) -> &str {
        self.stream.as_deref().unwrap_or(&self.name)
    }
}
