use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

/// Additive ACK-path delay, as fractions of a flow's base RTT.
///
/// Samples are exponential with mean `mean_fraction * base_rtt`, truncated
/// (clamped) at `max_fraction * base_rtt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub mean_fraction: f64,
    pub max_fraction: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            mean_fraction: 0.01,
            max_fraction: 0.10,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            mean_fraction: 0.0,
            max_fraction: 0.0,
            seed,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.mean_fraction >= 0.0
            && self.mean_fraction <= self.max_fraction
            && self.max_fraction.is_finite()
    }

    /// Mean of the truncated distribution: `m (1 - exp(-cap / m))`.
    pub fn truncated_mean(&self, base_rtt: f64) -> f64 {
        let mean = self.mean_fraction * base_rtt;
        if mean == 0.0 {
            return 0.0;
        }
        let cap = self.max_fraction * base_rtt;
        mean * (1.0 - (-cap / mean).exp())
    }
}

/// Per-flow stream: ChaCha8 seeded from the run seed, one stream per flow.
pub fn flow_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sample_ack_noise<R: Rng + ?Sized>(noise: &NoiseSpec, base_rtt: f64, rng: &mut R) -> f64 {
    let mean = noise.mean_fraction * base_rtt;
    if !(mean > 0.0) {
        return 0.0;
    }
    let cap = noise.max_fraction * base_rtt;
    let exp = Exp::new(1.0 / mean).expect("positive rate");
    exp.sample(rng).min(cap)
}
