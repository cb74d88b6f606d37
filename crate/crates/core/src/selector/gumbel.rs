//! Gumbel(0, 1) noise by inverse transform of open-interval uniforms.

use ndarray::Array2;
use rand::distr::Open01;
use rand::Rng;

use crate::embedstore::PromptBank;
use crate::seeding::{mix, stream, TAG_GUMBEL};

#[derive(Debug, Clone, PartialEq)]
pub struct GumbelNoise {
    pub values: Vec<f64>,
    pub seed: u64,
}

/// `-ln(-ln(u))` for `u` in (0, 1).
pub fn gumbel_from_uniform(u: f64) -> f64 {
    -(-u.ln()).ln()
}

pub fn sample_gumbel(len: usize, seed: u64) -> GumbelNoise {
    let mut rng = stream(&[TAG_GUMBEL, seed]);
    let values = (0..len)
        .map(|_| gumbel_from_uniform(rng.sample::<f64, _>(Open01)))
        .collect();
    GumbelNoise { values, seed }
}

/// Noise for a training batch, one independent stream per (image, class)
/// keyed by `(seed, step, image_id, class)`. Shape `batch x prompts`.
pub fn batch_noise(bank: &PromptBank, image_ids: &[usize], seed: u64, step: u64) -> Array2<f64> {
    let mut out = Array2::zeros((image_ids.len(), bank.total()));
    for (b, &id) in image_ids.iter().enumerate() {
        for c in 0..bank.num_classes() {
            let g = sample_gumbel(bank.count(c), mix(&[seed, step, id as u64, c as u64]));
            for (j, v) in bank.range(c).zip(g.values) {
                out[[b, j]] = v;
            }
        }
    }
    out
}
