//! Knowledge-graph prompt construction and a Gumbel-Softmax prompt selector
//! trained on cached vision-language embeddings.

pub mod baselines;
pub mod cli;
pub mod embedstore;
pub mod error;
pub mod evalharness;
pub mod kgprompt;
pub mod seeding;
pub mod selector;
pub mod trainloop;

pub use error::{Error, Result};
