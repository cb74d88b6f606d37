//! Batched forward pass, loss, and analytic gradients.
//!
//! For a batch `X` (`B x d`) and the stacked prompt bank `T` (`P x d`):
//!
//! ```text
//! Q = (X W_q) * mask_q      K = (T W_k) * mask_k      V = T W_v
//! S = Q K^T + G             alpha = segment-softmax(S / tau) per class
//! r[i, c] = sum_{j in c} alpha[i, j] (X_i . V_j)
//! score = logit_scale * (a r + (1 - a) zeroshot)      loss = mean CE(score, y)
//! ```
//!
//! `X_i . V_j` is evaluated as `(X W_v^T) T^T`, so `V` is never formed.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use rand::Rng;
use rayon::prelude::*;

use super::ops::{self, SelectionMode};
use super::params::SelectorParams;
use crate::embedstore::PromptBank;
use crate::error::{Error, Result};
use crate::seeding::{stream, TAG_DROPOUT};

/// Pre-scaled dropout multipliers (`0` or `1 / (1 - p)`).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub q: Array2<f64>,
    pub k: Array2<f64>,
}

impl DropoutMasks {
    /// Masks for one training step, or `None` when the rate is zero.
    pub fn sample(
        rate: f64,
        batch: usize,
        prompts: usize,
        dim: usize,
        seed: u64,
        step: u64,
    ) -> Option<Self> {
        if rate <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - rate);
        let mut rng = stream(&[TAG_DROPOUT, seed, step]);
        let mut draw = |shape: (usize, usize)| {
            Array2::from_shape_simple_fn(shape, || {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            })
        };
        let q = draw((batch, dim));
        let k = draw((prompts, dim));
        Some(DropoutMasks { q, k })
    }
}

/// A labelled batch of image embeddings.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub features: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub loss: f64,
    /// Final blended, scaled class scores (`B x C`).
    pub scores: Array2<f64>,
    /// Forward selection weights (`B x P`): one-hot in hard mode.
    pub weights: Array2<f64>,
    /// Tempered softmax weights (`B x P`).
    pub soft: Array2<f64>,
    /// Selected prompt per (image, class), as an index within the class.
    pub chosen: Array2<usize>,
    pub mode: SelectionMode,
    pub alpha_blend: f64,
    probs: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    image_value: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
}

/// Per (image, class) selection record.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub weights: Vec<f64>,
    pub chosen: usize,
    pub composed: Array1<f64>,
}

fn check_inputs(
    params: &SelectorParams,
    features: ArrayView2<f64>,
    bank: &PromptBank,
) -> Result<()> {
    let d = params.dim();
    if features.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: features.ncols(),
            context: "image features",
        });
    }
    if bank.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bank.dim(),
            context: "prompt bank",
        });
    }
    Ok(())
}

fn check_zeroshot(
    zeroshot: Option<ArrayView2<f64>>,
    alpha_blend: f64,
    rows: usize,
    classes: usize,
) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha_blend) {
        return Err(Error::validation(format!(
            "alpha_blend must be in [0, 1], got {alpha_blend}"
        )));
    }
    match zeroshot {
        Some(z) if z.dim() != (rows, classes) => Err(Error::DimensionMismatch {
            expected: classes,
            actual: z.ncols(),
            context: "zero-shot scores",
        }),
        None if alpha_blend < 1.0 => Err(Error::validation(
            "alpha_blend < 1 requires zero-shot scores",
        )),
        _ => Ok(()),
    }
}

/// Row-wise log-sum-exp cross-entropy. Returns (mean loss, probabilities).
fn cross_entropy(scores: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let mut probs = scores.clone();
    let mut total = 0.0;
    for (mut row, &y) in probs.rows_mut().into_iter().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let z = row.sum();
        total += z.ln() - (row[y].ln());
        row /= z;
    }
    (total / labels.len() as f64, probs)
}

/// Loss and selection traces for one batch. `noise` is `B x P` Gumbel noise
/// (zeros for deterministic selection); `masks` enables training dropout;
/// `zeroshot` holds raw per-class zero-shot similarities (`B x C`).
#[allow(clippy::too_many_arguments)]
pub fn forward_loss(
    params: &SelectorParams,
    batch: Batch<'_>,
    bank: &PromptBank,
    noise: ArrayView2<f64>,
    masks: Option<&DropoutMasks>,
    alpha_blend: f64,
    zeroshot: Option<ArrayView2<f64>>,
    mode: SelectionMode,
) -> Result<ForwardPass> {
    check_inputs(params, batch.features, bank)?;
    let (b, p, c_count) = (batch.features.nrows(), bank.total(), bank.num_classes());
    if batch.labels.len() != b || b == 0 {
        return Err(Error::validation(
            "batch labels must match a non-empty batch",
        ));
    }
    if let Some(&label) = batch.labels.iter().find(|&&y| y >= c_count) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: c_count,
        });
    }
    if noise.dim() != (b, p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: noise.ncols(),
            context: "gumbel noise",
        });
    }
    check_zeroshot(zeroshot, alpha_blend, b, c_count)?;

    let x = batch.features;
    let t = bank.matrix.view();
    let mut q = x.dot(&params.w_q);
    let mut k = t.dot(&params.w_k);
    if let Some(m) = masks {
        if m.q.dim() != q.dim() || m.k.dim() != k.dim() {
            return Err(Error::DimensionMismatch {
                expected: q.ncols(),
                actual: m.q.ncols(),
                context: "dropout masks",
            });
        }
        q *= &m.q;
        k *= &m.k;
    }
    let logits = q.dot(&k.t());
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("selection logits"));
    }
    let image_value = x.dot(&params.w_v.t()).dot(&t.t());

    let noise = noise.as_standard_layout();
    let mut soft = Array2::zeros((b, p));
    let mut weights = Array2::zeros((b, p));
    let mut chosen = Array2::zeros((b, c_count));
    let mut rplkg = Array2::zeros((b, c_count));
    for i in 0..b {
        let l_row = logits.row(i);
        let g_row = noise.row(i);
        for c in 0..c_count {
            let r = bank.range(c);
            let l = &l_row.as_slice().expect("standard layout")[r.clone()];
            let g = &g_row.as_slice().expect("standard layout")[r.clone()];
            let mut s = vec![0.0; r.len()];
            let j = ops::tempered_softmax(l, g, params.tau, &mut s);
            chosen[[i, c]] = j;
            let mut acc = 0.0;
            for (off, col) in r.enumerate() {
                let w = match mode {
                    SelectionMode::Soft => s[off],
                    SelectionMode::Hard => f64::from(u8::from(off == j)),
                };
                soft[[i, col]] = s[off];
                weights[[i, col]] = w;
                acc += w * image_value[[i, col]];
            }
            rplkg[[i, c]] = acc;
        }
    }

    let mut blended = rplkg * alpha_blend;
    if let Some(z) = zeroshot {
        blended.scaled_add(1.0 - alpha_blend, &z);
    }
    let scores = blended * params.logit_scale;
    let (loss, probs) = cross_entropy(&scores, batch.labels);
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok(ForwardPass {
        loss,
        scores,
        weights,
        soft,
        chosen,
        mode,
        alpha_blend,
        probs,
        q,
        k,
        image_value,
    })
}

/// Exact gradients of [`forward_loss`] for fixed noise and masks. In hard
/// mode the selection gradient flows through the soft weights.
pub fn backward(
    params: &SelectorParams,
    batch: Batch<'_>,
    bank: &PromptBank,
    masks: Option<&DropoutMasks>,
    pass: &ForwardPass,
) -> Gradients {
    let x = batch.features;
    let t = bank.matrix.view();
    let b = x.nrows();
    let scale = params.logit_scale * pass.alpha_blend;

    // d loss / d r  (B x C)
    let mut d_r = pass.probs.clone();
    for (i, &y) in batch.labels.iter().enumerate() {
        d_r[[i, y]] -= 1.0;
    }
    d_r *= scale / b as f64;

    // d loss / d S and d loss / d (X_i . V_j), both B x P.
    let mut d_logits = Array2::zeros(pass.soft.dim());
    let mut d_image_value = Array2::zeros(pass.soft.dim());
    for i in 0..b {
        for c in 0..bank.num_classes() {
            let g = d_r[[i, c]];
            let r = bank.range(c);
            let mut mean = 0.0;
            for col in r.clone() {
                mean += pass.soft[[i, col]] * g * pass.image_value[[i, col]];
            }
            for col in r {
                let d_alpha = g * pass.image_value[[i, col]];
                d_logits[[i, col]] = pass.soft[[i, col]] * (d_alpha - mean) / params.tau;
                d_image_value[[i, col]] = g * pass.weights[[i, col]];
            }
        }
    }

    let mut d_q = d_logits.dot(&pass.k);
    let mut d_k = d_logits.t().dot(&pass.q);
    if let Some(m) = masks {
        d_q *= &m.q;
        d_k *= &m.k;
    }
    Gradients {
        w_q: x.t().dot(&d_q),
        w_k: t.t().dot(&d_k),
        w_v: d_image_value.dot(&t).t().dot(&x),
    }
}

impl ForwardPass {
    /// Materializes the per (image, class) traces, including composed
    /// prompt vectors. Row-major over (image, class).
    pub fn traces(&self, params: &SelectorParams, bank: &PromptBank) -> Vec<SelectionTrace> {
        let v = bank.matrix.dot(&params.w_v);
        let mut out = Vec::with_capacity(self.chosen.len());
        for i in 0..self.chosen.nrows() {
            for c in 0..bank.num_classes() {
                let r = bank.range(c);
                let weights = self.weights.row(i).as_slice().unwrap()[r.clone()].to_vec();
                let composed =
                    ops::compose(&weights, v.slice(ndarray::s![r, ..])).expect("shapes agree");
                out.push(SelectionTrace {
                    weights,
                    chosen: self.chosen[[i, c]],
                    composed,
                });
            }
        }
        out
    }
}

/// Deterministic predictions: hard selection with zero noise and no dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    /// Blended, scaled scores (`N x C`).
    pub scores: Array2<f64>,
    /// Selected prompt per (image, class).
    pub chosen: Array2<usize>,
}

impl Inference {
    pub fn predictions(&self) -> Vec<usize> {
        self.scores
            .rows()
            .into_iter()
            .map(|r| ops::predict(r.as_slice().unwrap()))
            .collect()
    }
}

/// Row block for parallel inference. Fixed so results do not depend on the
/// thread count.
const INFER_CHUNK: usize = 64;

pub fn infer(
    params: &SelectorParams,
    features: ArrayView2<f64>,
    bank: &PromptBank,
    zeroshot: Option<ArrayView2<f64>>,
    alpha_blend: f64,
) -> Result<Inference> {
    check_inputs(params, features, bank)?;
    let (n, c_count) = (features.nrows(), bank.num_classes());
    check_zeroshot(zeroshot, alpha_blend, n, c_count)?;
    let k = bank.matrix.dot(&params.w_k);
    let v = bank.matrix.dot(&params.w_v);

    let starts: Vec<usize> = (0..n).step_by(INFER_CHUNK).collect();
    let blocks: Vec<Result<(Array2<f64>, Array2<usize>)>> = starts
        .par_iter()
        .map(|&start| {
            let x = features.slice(ndarray::s![start..(start + INFER_CHUNK).min(n), ..]);
            let logits = x.dot(&params.w_q).dot(&k.t());
            if logits.iter().any(|l| !l.is_finite()) {
                return Err(Error::NonFinite("selection logits"));
            }
            let mut scores = Array2::zeros((x.nrows(), c_count));
            let mut chosen = Array2::zeros((x.nrows(), c_count));
            for i in 0..x.nrows() {
                let row = logits.row(i);
                for c in 0..c_count {
                    let r = bank.range(c);
                    let j = ops::argmax(&row.as_slice().unwrap()[r.clone()]);
                    chosen[[i, c]] = j;
                    scores[[i, c]] = x.row(i).dot(&v.row(r.start + j));
                }
            }
            Ok((scores, chosen))
        })
        .collect();

    let mut scores = Array2::zeros((n, c_count));
    let mut chosen = Array2::zeros((n, c_count));
    for (start, block) in starts.into_iter().zip(blocks) {
        let (s, ch) = block?;
        let rows = start..start + s.nrows();
        scores.slice_mut(ndarray::s![rows.clone(), ..]).assign(&s);
        chosen.slice_mut(ndarray::s![rows, ..]).assign(&ch);
    }
    scores *= alpha_blend;
    if let Some(z) = zeroshot {
        scores.scaled_add(1.0 - alpha_blend, &z);
    }
    scores *= params.logit_scale;
    Ok(Inference { scores, chosen })
}

/// Applies `f` to each of the three matching matrices of params and grads.
pub(crate) fn zip_params(
    params: &mut SelectorParams,
    grads: &Gradients,
    mut f: impl FnMut(&mut f64, f64),
) {
    for (w, g) in [
        (&mut params.w_q, &grads.w_q),
        (&mut params.w_k, &grads.w_k),
        (&mut params.w_v, &grads.w_v),
    ] {
        Zip::from(w).and(g).for_each(|w, &g| f(w, g));
    }
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        [&self.w_q, &self.w_k, &self.w_v]
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, s: f64) -> Gradients {
        Gradients {
            w_q: &self.w_q * s,
            w_k: &self.w_k * s,
            w_v: &self.w_v * s,
        }
    }
}
