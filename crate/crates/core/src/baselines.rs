//! Parameter-free comparison methods. All return raw similarity scores,
//! `images x classes`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::embedstore::PromptBank;
use crate::error::{Error, Result};
use crate::seeding::{stream, TAG_RANDOM_PROMPT};
use crate::selector::ops_softmax;

pub const DEFAULT_ATTENTIVE_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Zeroshot,
    Random,
    Average,
    Attentive,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::Zeroshot,
        BaselineKind::Random,
        BaselineKind::Average,
        BaselineKind::Attentive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Zeroshot => "zeroshot",
            BaselineKind::Random => "random",
            BaselineKind::Average => "average",
            BaselineKind::Attentive => "attentive",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown baseline {s:?}")))
    }
}

fn check_dim(features: ArrayView2<f64>, bank: &PromptBank) -> Result<()> {
    if features.ncols() != bank.dim() {
        return Err(Error::DimensionMismatch {
            expected: bank.dim(),
            actual: features.ncols(),
            context: "image features vs prompts",
        });
    }
    Ok(())
}

/// `I_i . t_c` against one template embedding per class.
pub fn zeroshot_scores(features: ArrayView2<f64>, templates: &PromptBank) -> Result<Array2<f64>> {
    check_dim(features, templates)?;
    Ok(features.dot(&templates.single_rows()?.t()))
}

/// The prompt index drawn for each (image, class); image `i` uses its own
/// stream keyed by `(seed, i)`.
pub fn random_prompt_choices(images: usize, bank: &PromptBank, seed: u64) -> Array2<usize> {
    let mut out = Array2::zeros((images, bank.num_classes()));
    for i in 0..images {
        let mut rng = stream(&[TAG_RANDOM_PROMPT, seed, i as u64]);
        for c in 0..bank.num_classes() {
            out[[i, c]] = rng.random_range(0..bank.count(c));
        }
    }
    out
}

pub fn random_prompt_scores(
    features: ArrayView2<f64>,
    bank: &PromptBank,
    seed: u64,
) -> Result<Array2<f64>> {
    check_dim(features, bank)?;
    let choices = random_prompt_choices(features.nrows(), bank, seed);
    Ok(Array2::from_shape_fn(choices.dim(), |(i, c)| {
        features
            .row(i)
            .dot(&bank.matrix.row(bank.offsets[c] + choices[[i, c]]))
    }))
}

/// Per-class mean prompt embeddings. The means are not re-normalized.
pub fn average_prompts(bank: &PromptBank) -> Array2<f64> {
    let mut out = Array2::zeros((bank.num_classes(), bank.dim()));
    for c in 0..bank.num_classes() {
        out.row_mut(c).assign(
            &bank
                .class_rows(c)
                .mean_axis(ndarray::Axis(0))
                .expect("non-empty class"),
        );
    }
    out
}

pub fn average_prompt_scores(features: ArrayView2<f64>, bank: &PromptBank) -> Result<Array2<f64>> {
    check_dim(features, bank)?;
    Ok(features.dot(&average_prompts(bank).t()))
}

/// Similarity-weighted prompt average per (image, class), weights
/// `softmax_j(I_i . T_cj / temperature)`.
pub fn attentive_prompt_scores(
    features: ArrayView2<f64>,
    bank: &PromptBank,
    temperature: f64,
) -> Result<Array2<f64>> {
    check_dim(features, bank)?;
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::validation(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    let sims = features.dot(&bank.matrix.t());
    let zeros = vec![0.0; bank.total()];
    let mut out = Array2::zeros((features.nrows(), bank.num_classes()));
    for (i, row) in sims.rows().into_iter().enumerate() {
        let row = row.as_slice().expect("owned row");
        for c in 0..bank.num_classes() {
            let r = bank.range(c);
            let mut w = vec![0.0; r.len()];
            ops_softmax(&row[r.clone()], &zeros[r.clone()], temperature, &mut w);
            out[[i, c]] = w.iter().zip(&row[r]).map(|(w, s)| w * s).sum();
        }
    }
    Ok(out)
}

/// Dispatches to one baseline. `templates` is required for zero-shot.
pub fn baseline_scores(
    kind: BaselineKind,
    features: ArrayView2<f64>,
    bank: &PromptBank,
    templates: Option<&PromptBank>,
    seed: u64,
    temperature: f64,
) -> Result<Array2<f64>> {
    match kind {
        BaselineKind::Zeroshot => {
            let t = templates
                .ok_or_else(|| Error::validation("zero-shot baseline needs a template cache"))?;
            zeroshot_scores(features, t)
        }
        BaselineKind::Random => random_prompt_scores(features, bank, seed),
        BaselineKind::Average => average_prompt_scores(features, bank),
        BaselineKind::Attentive => attentive_prompt_scores(features, bank, temperature),
    }
}
