use std::time::Instant;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedstore::PromptBank;
use crate::error::{Error, Result};
use crate::seeding::{stream, TAG_SYNTH};
use crate::selector::SelectorParams;
use crate::trainloop::{train_step, StepInput, TrainConfig};

const BENCH_STREAM: u64 = 0x6265_6e63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub dim: usize,
    pub classes: usize,
    pub prompts: usize,
    pub batch: usize,
    pub reps: usize,
    pub iter_seconds: f64,
    pub param_count: usize,
}

fn unit_rows(rows: usize, dim: usize, seed: u64, which: u64) -> Array2<f64> {
    let mut rng = stream(&[TAG_SYNTH, seed, BENCH_STREAM, which]);
    let mut m: Array2<f64> =
        Array2::from_shape_simple_fn((rows, dim), || StandardNormal.sample(&mut rng));
    for mut r in m.rows_mut() {
        let n = r.dot(&r).sqrt();
        r /= n;
    }
    m
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median wall-clock seconds of one training iteration (noise, dropout,
/// forward, backward, update) on random unit embeddings.
pub fn bench_iteration(
    params: &SelectorParams,
    batch: usize,
    classes: usize,
    prompts: usize,
    reps: usize,
    seed: u64,
) -> Result<BenchRecord> {
    if batch == 0 || classes == 0 || prompts == 0 || reps == 0 {
        return Err(Error::validation("bench sizes and reps must be positive"));
    }
    let dim = params.dim();
    let all = unit_rows(classes * prompts, dim, seed, 0);
    let blocks: Vec<Array2<f64>> = (0..classes)
        .map(|c| {
            all.slice(ndarray::s![c * prompts..(c + 1) * prompts, ..])
                .to_owned()
        })
        .collect();
    let bank = PromptBank::from_blocks(&blocks)?;
    let features = unit_rows(batch, dim, seed, 1);
    let labels: Vec<usize> = (0..batch).map(|i| i % classes).collect();
    let ids: Vec<usize> = (0..batch).collect();
    let config = TrainConfig {
        seed,
        tau: params.tau,
        dropout: params.dropout_rate,
        logit_scale: params.logit_scale,
        ..TrainConfig::default()
    };
    let mut p = params.clone();
    let mut times = Vec::with_capacity(reps);
    for step in 0..reps {
        let input = StepInput {
            features: features.view(),
            labels: &labels,
            image_ids: &ids,
            zeroshot: None,
        };
        let t0 = Instant::now();
        train_step(&mut p, input, &bank, &config, config.learning_rate, step)?;
        times.push(t0.elapsed().as_secs_f64());
    }
    Ok(BenchRecord {
        dim,
        classes,
        prompts,
        batch,
        reps,
        iter_seconds: median(times),
        param_count: params.param_count(),
    })
}
