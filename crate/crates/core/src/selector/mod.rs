//! The prompt selector: query/key/value projections, Gumbel-Softmax
//! selection of one prompt per (image, class), and class scoring.

mod gumbel;
mod model;
mod ops;
mod params;

pub use gumbel::{batch_noise, gumbel_from_uniform, sample_gumbel, GumbelNoise};
pub(crate) use model::zip_params;
pub use model::{
    backward, forward_loss, infer, Batch, DropoutMasks, ForwardPass, Gradients, Inference,
    SelectionTrace,
};
pub(crate) use ops::tempered_softmax as ops_softmax;
pub use ops::{
    argmax, attention_weights, class_scores, compose, predict, project, Attention, Projection,
    SelectionMode,
};
pub use params::{
    param_count, read_checkpoint, write_checkpoint, CheckpointHeader, SelectorParams,
    DEFAULT_LOGIT_SCALE, INIT_JITTER,
};
