use std::io::Write;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, harmonic_mean};
use super::task::{BaseNewSplit, FewShotTask};
use crate::baselines::{baseline_scores, zeroshot_scores, BaselineKind};
use crate::embedstore::{ImageSet, PromptBank};
use crate::error::{Error, Result};
use crate::kgprompt::PromptSet;
use crate::selector::{infer, predict, Inference, SelectorParams};

pub const SELECTOR_METHOD: &str = "rplkg";

/// One evaluated run. Optional fields are omitted from JSON when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iter_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_count: Option<usize>,
    /// `histogram[c][j]`: test images of class `c` for which prompt `j` of
    /// class `c` was selected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_histogram: Option<Vec<Vec<usize>>>,
}

impl EvalReport {
    pub fn new(dataset: &str, method: &str, accuracy: f64) -> Self {
        EvalReport {
            dataset: dataset.to_string(),
            method: method.to_string(),
            k: None,
            seed: None,
            accuracy,
            base: None,
            new: None,
            h: None,
            iter_seconds: None,
            param_count: None,
            selection_histogram: None,
        }
    }

    /// Writes `{class_id, prompt_text, count}` lines, one per prompt.
    pub fn write_selection_jsonl<W: Write>(&self, prompts: &PromptSet, mut sink: W) -> Result<()> {
        let hist = self
            .selection_histogram
            .as_ref()
            .ok_or_else(|| Error::validation("report has no selection histogram"))?;
        for (c, row) in hist.iter().enumerate() {
            for (j, &count) in row.iter().enumerate() {
                let text = prompts.text(c, j).ok_or_else(|| {
                    Error::validation(format!("prompt set lacks prompt {j} of class {c}"))
                })?;
                let line =
                    serde_json::json!({ "class_id": c, "prompt_text": text, "count": count });
                serde_json::to_writer(&mut sink, &line)?;
                sink.write_all(b"\n")?;
            }
        }
        sink.flush()?;
        Ok(())
    }
}

fn predictions(scores: ArrayView2<f64>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|r| predict(&r.to_vec()))
        .collect()
}

fn histogram(chosen: ArrayView2<usize>, labels: &[usize], bank: &PromptBank) -> Vec<Vec<usize>> {
    let mut hist: Vec<Vec<usize>> = (0..bank.num_classes())
        .map(|c| vec![0; bank.count(c)])
        .collect();
    for (i, &l) in labels.iter().enumerate() {
        hist[l][chosen[[i, l]]] += 1;
    }
    hist
}

/// Scores `scores` (test images x classes) against `labels`. With a
/// selection, also records the per-class selected-prompt histogram.
pub fn evaluate(
    method: &str,
    task: &FewShotTask,
    labels: &[usize],
    scores: ArrayView2<f64>,
    selection: Option<(ArrayView2<usize>, &PromptBank)>,
) -> Result<EvalReport> {
    if scores.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: scores.nrows(),
            context: "score rows vs labels",
        });
    }
    let mut report = EvalReport::new(
        &task.dataset_id,
        method,
        accuracy(&predictions(scores), labels),
    );
    report.k = Some(task.k);
    report.seed = Some(task.seed);
    report.selection_histogram = selection.map(|(chosen, bank)| histogram(chosen, labels, bank));
    Ok(report)
}

fn zeroshot_if_needed(
    images: &ImageSet,
    templates: Option<&PromptBank>,
    alpha: f64,
) -> Result<Option<Array2<f64>>> {
    if alpha >= 1.0 {
        return Ok(None);
    }
    let t = templates.ok_or_else(|| Error::validation("alpha < 1 requires a template cache"))?;
    zeroshot_scores(images.features.view(), t).map(Some)
}

/// Deterministic selector inference over a whole image set.
pub fn selector_inference(
    params: &SelectorParams,
    images: &ImageSet,
    bank: &PromptBank,
    templates: Option<&PromptBank>,
    alpha_blend: f64,
) -> Result<Inference> {
    let zs = zeroshot_if_needed(images, templates, alpha_blend)?;
    infer(
        params,
        images.features.view(),
        bank,
        zs.as_ref().map(|z| z.view()),
        alpha_blend,
    )
}

/// Evaluates trained selector parameters on the task's test images.
pub fn evaluate_selector(
    params: &SelectorParams,
    task: &FewShotTask,
    images: &ImageSet,
    bank: &PromptBank,
    templates: Option<&PromptBank>,
    alpha_blend: f64,
) -> Result<EvalReport> {
    task.check_against(images)?;
    let test = images.subset(&task.test_indices);
    let out = selector_inference(params, &test, bank, templates, alpha_blend)?;
    let mut report = evaluate(
        SELECTOR_METHOD,
        task,
        &test.labels,
        out.scores.view(),
        Some((out.chosen.view(), bank)),
    )?;
    report.param_count = Some(params.param_count());
    Ok(report)
}

/// Evaluates a parameter-free baseline on the task's test images.
pub fn evaluate_baseline(
    kind: BaselineKind,
    task: &FewShotTask,
    images: &ImageSet,
    bank: &PromptBank,
    templates: Option<&PromptBank>,
    temperature: f64,
) -> Result<EvalReport> {
    task.check_against(images)?;
    let test = images.subset(&task.test_indices);
    let scores = baseline_scores(
        kind,
        test.features.view(),
        bank,
        templates,
        task.seed,
        temperature,
    )?;
    evaluate(kind.name(), task, &test.labels, scores.view(), None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseToNew {
    pub base: f64,
    pub new: f64,
    pub h: f64,
}

/// Base accuracy on the test images of `base_task` (sampled from the
/// base-class images, base label space) and new accuracy on every
/// new-class image (new label space), with one shared predictor.
/// `predict` maps (images, prompt bank, templates) to predicted labels.
pub fn base_to_new_with<F>(
    split: &BaseNewSplit,
    base_task: &FewShotTask,
    images: &ImageSet,
    bank: &PromptBank,
    templates: Option<&PromptBank>,
    predict: F,
) -> Result<BaseToNew>
where
    F: Fn(&ImageSet, &PromptBank, Option<&PromptBank>) -> Result<Vec<usize>>,
{
    if bank.num_classes() != images.num_classes {
        return Err(Error::validation(
            "prompt bank and images disagree on the class count",
        ));
    }
    let side = |ids: &[usize], subset: Option<&[usize]>| -> Result<f64> {
        let all = images.restrict_classes(ids);
        let set = match subset {
            Some(idx) => {
                base_task.check_against(&all)?;
                all.subset(idx)
            }
            None => all,
        };
        if set.is_empty() {
            return Err(Error::validation(
                "no images to evaluate in a base-to-new split",
            ));
        }
        let b = bank.restrict(ids)?;
        let t = templates.map(|t| t.restrict(ids)).transpose()?;
        let preds = predict(&set, &b, t.as_ref())?;
        Ok(accuracy(&preds, &set.labels))
    };
    let base = side(&split.base_class_ids, Some(&base_task.test_indices))?;
    let new = side(&split.new_class_ids, None)?;
    Ok(BaseToNew {
        base,
        new,
        h: harmonic_mean(base, new),
    })
}

/// Base-to-new evaluation of one selector parameter set.
pub fn eval_base_to_new(
    params: &SelectorParams,
    alpha_blend: f64,
    split: &BaseNewSplit,
    base_task: &FewShotTask,
    images: &ImageSet,
    bank: &PromptBank,
    templates: Option<&PromptBank>,
) -> Result<BaseToNew> {
    base_to_new_with(split, base_task, images, bank, templates, |set, b, t| {
        Ok(selector_inference(params, set, b, t, alpha_blend)?.predictions())
    })
}

/// Base-to-new evaluation of a baseline.
pub fn baseline_base_to_new(
    kind: BaselineKind,
    temperature: f64,
    split: &BaseNewSplit,
    base_task: &FewShotTask,
    images: &ImageSet,
    bank: &PromptBank,
    templates: Option<&PromptBank>,
) -> Result<BaseToNew> {
    base_to_new_with(split, base_task, images, bank, templates, |set, b, t| {
        let s = baseline_scores(kind, set.features.view(), b, t, base_task.seed, temperature)?;
        Ok(predictions(s.view()))
    })
}

/// A shifted evaluation set that must share the source class list.
#[derive(Debug, Clone)]
pub struct DomainTarget {
    pub name: String,
    pub class_names: Vec<String>,
    pub images: ImageSet,
}

/// Applies source-trained parameters and the source prompts to every
/// target image set. Returns `(target name, accuracy)` in input order.
pub fn eval_domain_shift(
    params: &SelectorParams,
    alpha_blend: f64,
    source_classes: &[String],
    bank: &PromptBank,
    templates: Option<&PromptBank>,
    targets: &[DomainTarget],
) -> Result<Vec<(String, f64)>> {
    targets
        .iter()
        .map(|t| {
            if t.class_names != source_classes {
                return Err(Error::ClassListMismatch {
                    target: t.name.clone(),
                });
            }
            let out = selector_inference(params, &t.images, bank, templates, alpha_blend)?;
            Ok((
                t.name.clone(),
                accuracy(&out.predictions(), &t.images.labels),
            ))
        })
        .collect()
}
