use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{HyperGrid, TrainConfig};
use super::train::{selector_accuracy, train};
use crate::embedstore::{ImageSet, PromptBank};
use crate::error::{Error, Result};
use crate::evalharness::FewShotTask;
use crate::seeding::{stream, TAG_SPLIT};

/// Share of each class's k-shot pool held out for validation when k >= 4.
pub const VALIDATION_FRACTION: f64 = 0.2;
const HOLDOUT_STREAM: u64 = 0x0076_616c;

/// Images used to fit and to validate during grid search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationPlan {
    pub fit: Vec<usize>,
    pub val: Vec<usize>,
}

/// For k >= 4, a seeded 20% per-class holdout of the training pool; for
/// smaller k the pool is too small to split and doubles as validation.
pub fn validation_plan(task: &FewShotTask, images: &ImageSet) -> ValidationPlan {
    if task.k < 4 {
        return ValidationPlan {
            fit: task.train_indices.clone(),
            val: task.train_indices.clone(),
        };
    }
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for c in 0..images.num_classes {
        let mut pool: Vec<usize> = task
            .train_indices
            .iter()
            .copied()
            .filter(|&i| images.labels[i] == c)
            .collect();
        let mut n_val = (pool.len() as f64 * VALIDATION_FRACTION).round() as usize;
        if pool.len() >= 2 {
            n_val = n_val.max(1);
        }
        pool.shuffle(&mut stream(&[
            TAG_SPLIT,
            task.seed,
            HOLDOUT_STREAM,
            c as u64,
        ]));
        val.extend_from_slice(&pool[..n_val]);
        fit.extend_from_slice(&pool[n_val..]);
    }
    fit.sort_unstable();
    val.sort_unstable();
    ValidationPlan { fit, val }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridEntry {
    pub config: TrainConfig,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    /// Best first: validation accuracy descending, then lower weight decay,
    /// then lower tau, then grid order.
    pub leaderboard: Vec<GridEntry>,
}

impl GridResult {
    pub fn best(&self) -> &GridEntry {
        &self.leaderboard[0]
    }

    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "learning_rate",
            "weight_decay",
            "tau",
            "dropout",
            "alpha_blend",
            "epochs",
            "batch_size",
            "seed",
            "val_accuracy",
            "seconds",
        ])?;
        for e in &self.leaderboard {
            let c = &e.config;
            w.write_record([
                c.learning_rate.to_string(),
                c.weight_decay.to_string(),
                c.tau.to_string(),
                c.dropout.to_string(),
                c.alpha_blend.to_string(),
                c.epochs.to_string(),
                c.batch_size.to_string(),
                c.seed.to_string(),
                e.val_accuracy.to_string(),
                format!("{:.6}", e.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains every grid cell (concurrently) on the fit split and ranks the
/// cells by validation accuracy.
pub fn grid_search(
    base: &TrainConfig,
    grid: &HyperGrid,
    task: &FewShotTask,
    images: &ImageSet,
    bank: &PromptBank,
    templates: Option<&PromptBank>,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::validation(
            "every grid axis needs at least one value",
        ));
    }
    let plan = validation_plan(task, images);
    let fit_task = FewShotTask {
        train_indices: plan.fit.clone(),
        val_indices: Vec::new(),
        ..task.clone()
    };
    let val_set = images.subset(&plan.val);

    let entries: Vec<Result<GridEntry>> = grid
        .configs(base)
        .into_par_iter()
        .map(|config| {
            let t0 = Instant::now();
            let result = train(&config, &fit_task, images, bank, templates)?;
            let val_accuracy = selector_accuracy(
                &result.params,
                &val_set,
                bank,
                templates,
                config.alpha_blend,
            )?;
            Ok(GridEntry {
                config,
                val_accuracy,
                seconds: t0.elapsed().as_secs_f64(),
            })
        })
        .collect();
    let mut leaderboard = entries.into_iter().collect::<Result<Vec<_>>>()?;
    leaderboard.sort_by(|a, b| {
        b.val_accuracy
            .total_cmp(&a.val_accuracy)
            .then(a.config.weight_decay.total_cmp(&b.config.weight_decay))
            .then(a.config.tau.total_cmp(&b.config.tau))
    });
    Ok(GridResult { leaderboard })
}
