//! Single-instance building blocks: one image against one class's prompts.
//! The batched model in `model.rs` computes the same quantities with matrix
//! products.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::params::SelectorParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Tempered softmax forward and backward.
    Soft,
    /// One-hot forward, softmax backward (straight-through).
    #[default]
    Hard,
}

impl std::str::FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(SelectionMode::Soft),
            "hard" => Ok(SelectionMode::Hard),
            other => Err(Error::validation(format!(
                "unknown selection mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub q: Array1<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
}

/// Projects one image and one class's prompts. `masks`, when given, are the
/// already-scaled dropout multipliers for `q` and `k`.
pub fn project(
    params: &SelectorParams,
    image: ArrayView1<f64>,
    prompts: ArrayView2<f64>,
    masks: Option<(ArrayView1<f64>, ArrayView2<f64>)>,
) -> Result<Projection> {
    let d = params.dim();
    if image.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: image.len(),
            context: "image vector",
        });
    }
    if prompts.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: prompts.ncols(),
            context: "prompt matrix",
        });
    }
    let mut q = image.dot(&params.w_q);
    let mut k = prompts.dot(&params.w_k);
    let v = prompts.dot(&params.w_v);
    if let Some((mq, mk)) = masks {
        if mq.len() != d || mk.dim() != k.dim() {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: mq.len(),
                context: "dropout mask",
            });
        }
        q *= &mq;
        k *= &mk;
    }
    Ok(Projection { q, k, v })
}

/// Selection weights over one class's prompts.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// Forward value: the softmax in soft mode, a one-hot in hard mode.
    pub weights: Vec<f64>,
    /// The tempered softmax, through which gradients flow in both modes.
    pub soft: Vec<f64>,
    pub chosen: usize,
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Softmax of `(logits + noise) / tau` with max subtraction. Returns the
/// weights and the index of the largest perturbed logit.
pub(crate) fn tempered_softmax(logits: &[f64], noise: &[f64], tau: f64, out: &mut [f64]) -> usize {
    let mut chosen = 0;
    let mut best = f64::NEG_INFINITY;
    for (j, (l, g)) in logits.iter().zip(noise).enumerate() {
        if l + g > best {
            best = l + g;
            chosen = j;
        }
    }
    let mut total = 0.0;
    for ((o, l), g) in out.iter_mut().zip(logits).zip(noise) {
        *o = ((l + g - best) / tau).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
    chosen
}

pub fn attention_weights(
    q: ArrayView1<f64>,
    k: ArrayView2<f64>,
    noise: &[f64],
    tau: f64,
    mode: SelectionMode,
) -> Result<Attention> {
    if noise.len() != k.nrows() {
        return Err(Error::DimensionMismatch {
            expected: k.nrows(),
            actual: noise.len(),
            context: "gumbel noise",
        });
    }
    if k.nrows() == 0 {
        return Err(Error::validation("class has no prompts"));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::validation(format!("tau must be > 0, got {tau}")));
    }
    let logits = k.dot(&q).to_vec();
    if logits.iter().zip(noise).any(|(l, g)| !(l + g).is_finite()) {
        return Err(Error::NonFinite("selection logits"));
    }
    let mut soft = vec![0.0; logits.len()];
    let chosen = tempered_softmax(&logits, noise, tau, &mut soft);
    let weights = match mode {
        SelectionMode::Soft => soft.clone(),
        SelectionMode::Hard => {
            let mut one_hot = vec![0.0; soft.len()];
            one_hot[chosen] = 1.0;
            one_hot
        }
    };
    Ok(Attention {
        weights,
        soft,
        chosen,
    })
}

/// `sum_j weights[j] * v[j]`. Zero weights contribute nothing, so a one-hot
/// selects its row exactly.
pub fn compose(weights: &[f64], v: ArrayView2<f64>) -> Result<Array1<f64>> {
    if weights.len() != v.nrows() {
        return Err(Error::DimensionMismatch {
            expected: v.nrows(),
            actual: weights.len(),
            context: "composition weights",
        });
    }
    let mut out = Array1::zeros(v.ncols());
    for (&w, row) in weights.iter().zip(v.rows()) {
        if w != 0.0 {
            out.scaled_add(w, &row);
        }
    }
    Ok(out)
}

/// `logit_scale * (image . composed[c])` for each class row of `composed`.
pub fn class_scores(
    image: ArrayView1<f64>,
    composed: ArrayView2<f64>,
    logit_scale: f64,
) -> Result<Vec<f64>> {
    if composed.ncols() != image.len() {
        return Err(Error::DimensionMismatch {
            expected: image.len(),
            actual: composed.ncols(),
            context: "composed prompts",
        });
    }
    Ok(composed
        .dot(&image)
        .iter()
        .map(|s| logit_scale * s)
        .collect())
}

/// Highest-scoring class; ties go to the lowest index.
pub fn predict(scores: &[f64]) -> usize {
    argmax(scores)
}
