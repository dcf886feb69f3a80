//! Monte Carlo estimate of the mutual information, independent of the
//! quadrature stack except for the closed-form kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::ln_mixture;
use crate::distribution::AmplitudeDistribution;
use crate::error::{Error, Result};
use crate::special::{ln_kernel, sample_output_power, ChannelModel, ChannelSpec};

/// Batches used both as parallel shards and for the standard error.
pub const BATCHES: usize = 100;
pub const MIN_SAMPLES: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    /// Nats.
    pub value: f64,
    pub std_err: f64,
    pub n_samples: u64,
    pub seed: u64,
}

fn batch_sum(
    dist: &AmplitudeDistribution,
    channel: &ChannelSpec,
    samples: u64,
    seed: u64,
    batch: usize,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    let amps = dist.locations();
    let probs = dist.probabilities();
    let ln_probs: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
    let k = channel.rician_k;
    let pn = channel.model == ChannelModel::PhaseNoiseRician;
    let mut sum = 0.0;
    for _ in 0..samples {
        let u: f64 = rng.random();
        let mut i = 0;
        let mut acc = probs[0];
        while u >= acc && i + 1 < probs.len() {
            i += 1;
            acc += probs[i];
        }
        let r = amps[i];
        let power = sample_output_power(r, k, &mut rng);
        let ln_f = ln_mixture(power, &amps, &ln_probs, k);
        sum += if pn {
            ln_kernel(power, r, k) - ln_f
        } else {
            -ln_f
        };
    }
    sum
}

/// Classical model: `-mean ln f_R(R) - sum p_i ln(1 + r_i^2) - 1`.
/// Phase-noise model: mean of `ln g(R, r) - ln f_R(R)`.
/// The standard error comes from the spread of [`BATCHES`] equal batch means.
pub fn mc_mutual_information(
    dist: &AmplitudeDistribution,
    channel: &ChannelSpec,
    n_samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::Domain(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    let base = n_samples / BATCHES as u64;
    let extra = (n_samples % BATCHES as u64) as usize;
    let sums: Vec<(f64, u64)> = (0..BATCHES)
        .into_par_iter()
        .map(|b| {
            let m = base + u64::from(b < extra);
            (batch_sum(dist, channel, m, seed, b), m)
        })
        .collect();
    let total: f64 = sums.iter().map(|s| s.0).sum();
    let mean = total / n_samples as f64;
    let means: Vec<f64> = sums.iter().map(|(s, m)| s / *m as f64).collect();
    let avg = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    let std_err = (var / BATCHES as f64).sqrt();
    let value = match channel.model {
        ChannelModel::PhaseNoiseRician => mean,
        ChannelModel::ClassicalRician => {
            let offset: f64 = dist
                .points()
                .iter()
                .map(|m| m.probability * (m.location * m.location).ln_1p())
                .sum();
            mean - offset - 1.0
        }
    };
    Ok(MCEstimate {
        value,
        std_err,
        n_samples,
        seed,
    })
}
