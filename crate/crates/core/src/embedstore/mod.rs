//! Cached image and prompt embeddings.

mod cache;
mod synth;
mod views;

pub use cache::{
    read_cache, write_cache, CacheKind, EmbeddingCache, HEADER_LEN, IMAGE_SENTINEL, MAGIC, MAX_DIM,
    NORM_TOLERANCE, VERSION,
};
pub use synth::{synth_encode, SynthCaches, SyntheticWorld};
pub use views::{ImageSet, PromptBank};

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::Result;

pub fn load_cache(path: impl AsRef<Path>) -> Result<EmbeddingCache> {
    read_cache(BufReader::new(File::open(path)?))
}

pub fn save_cache(cache: &EmbeddingCache, path: impl AsRef<Path>) -> Result<u64> {
    write_cache(cache, BufWriter::new(File::create(path)?))
}
