#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rplkg::embedstore::PromptBank;
use rplkg::selector::{backward, forward_loss, Batch, DropoutMasks, SelectionMode, SelectorParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rplkg::seeding::stream(&[0xC0FFEE, seed])
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

pub fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = gaussian(rng, rows, cols, 1.0);
    for mut r in m.rows_mut() {
        let n = r.dot(&r).sqrt();
        r /= n;
    }
    m
}

/// A random small instance for gradient checks.
pub struct GradInstance {
    pub params: SelectorParams,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub bank: PromptBank,
    pub noise: Array2<f64>,
    pub masks: Option<DropoutMasks>,
    pub zeroshot: Option<Array2<f64>>,
    pub alpha: f64,
}

impl GradInstance {
    pub fn random(seed: u64) -> Self {
        let mut r = rng(seed);
        let d = r.random_range(2..=16);
        let c = r.random_range(2..=4);
        let b = r.random_range(1..=6);
        let counts: Vec<usize> = (0..c).map(|_| r.random_range(1..=5)).collect();
        let blocks: Vec<Array2<f64>> = counts.iter().map(|&m| unit_rows(&mut r, m, d)).collect();
        let bank = PromptBank::from_blocks(&blocks).unwrap();
        let tau = r.random_range(0.5..2.0);
        let logit_scale = r.random_range(1.0..10.0);
        let mut params = SelectorParams::identity(d, tau, 0.0, logit_scale).unwrap();
        params.w_q += &gaussian(&mut r, d, d, 0.3);
        params.w_k += &gaussian(&mut r, d, d, 0.3);
        params.w_v += &gaussian(&mut r, d, d, 0.3);
        let features = unit_rows(&mut r, b, d);
        let labels = (0..b).map(|_| r.random_range(0..c)).collect();
        let noise = gaussian(&mut r, b, bank.total(), 0.5);
        let masks = if r.random_bool(0.5) {
            params.dropout_rate = 0.3;
            DropoutMasks::sample(0.3, b, bank.total(), d, seed, 0)
        } else {
            None
        };
        let (alpha, zeroshot) = if r.random_bool(0.5) {
            (r.random_range(0.1..1.0), Some(gaussian(&mut r, b, c, 0.3)))
        } else {
            (1.0, None)
        };
        GradInstance {
            params,
            features,
            labels,
            bank,
            noise,
            masks,
            zeroshot,
            alpha,
        }
    }

    pub fn loss(&self, params: &SelectorParams) -> f64 {
        let batch = Batch {
            features: self.features.view(),
            labels: &self.labels,
        };
        forward_loss(
            params,
            batch,
            &self.bank,
            self.noise.view(),
            self.masks.as_ref(),
            self.alpha,
            self.zeroshot.as_ref().map(|z| z.view()),
            SelectionMode::Soft,
        )
        .unwrap()
        .loss
    }

    /// Max over all parameters of `|analytic - numeric| / max(|analytic|,
    /// |numeric|, floor)` with central differences of step `h`.
    pub fn max_relative_error(&self, h: f64, floor: f64) -> f64 {
        let batch = Batch {
            features: self.features.view(),
            labels: &self.labels,
        };
        let pass = forward_loss(
            &self.params,
            batch,
            &self.bank,
            self.noise.view(),
            self.masks.as_ref(),
            self.alpha,
            self.zeroshot.as_ref().map(|z| z.view()),
            SelectionMode::Soft,
        )
        .unwrap();
        let grads = backward(&self.params, batch, &self.bank, self.masks.as_ref(), &pass);
        let mut worst = 0.0f64;
        for (which, analytic) in [&grads.w_q, &grads.w_k, &grads.w_v].into_iter().enumerate() {
            for ((a, b), &g) in analytic.indexed_iter() {
                let mut plus = self.params.clone();
                let mut minus = self.params.clone();
                matrix_mut(&mut plus, which)[[a, b]] += h;
                matrix_mut(&mut minus, which)[[a, b]] -= h;
                let numeric = (self.loss(&plus) - self.loss(&minus)) / (2.0 * h);
                let err = (g - numeric).abs() / g.abs().max(numeric.abs()).max(floor);
                worst = worst.max(err);
            }
        }
        worst
    }
}

fn matrix_mut(p: &mut SelectorParams, which: usize) -> &mut Array2<f64> {
    match which {
        0 => &mut p.w_q,
        1 => &mut p.w_k,
        _ => &mut p.w_v,
    }
}

pub fn argmax_rows(scores: ArrayView2<f64>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|r| rplkg::selector::predict(&r.to_vec()))
        .collect()
}
