//! Selector optimization on k-shot tasks and hyperparameter search.

mod config;
mod grid;
mod train;

pub use config::{HyperGrid, TrainConfig};
pub use grid::{
    grid_search, validation_plan, GridEntry, GridResult, ValidationPlan, VALIDATION_FRACTION,
};
pub use train::{
    cosine_lr, selector_accuracy, train, train_step, EpochStats, StepInput, TrainResult,
};
