//! Deterministic synthetic encoder: a world where each class has one
//! "planted" prompt aligned with the class anchor and several unrelated
//! distractor prompts.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::cache::EmbeddingCache;
use crate::error::{Error, Result};
use crate::kgprompt::{verbalize, PromptRecord, PromptSet, Triplet};
use crate::seeding::{stream, TAG_SYNTH};

const STREAM_PLANTED: u64 = 0;
const STREAM_ANCHOR: u64 = 1;
const STREAM_PROMPT: u64 = 2;
const STREAM_TEMPLATE: u64 = 3;
const STREAM_IMAGE: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub num_classes: usize,
    pub dim: usize,
    pub prompts_per_class: Vec<usize>,
    /// Index of the planted prompt within each class.
    pub planted: Vec<usize>,
    pub images_per_class: usize,
    /// Per-coordinate standard deviation of image noise around the anchor.
    pub noise_scale: f64,
    /// Per-coordinate perturbation of the planted prompt around the anchor.
    pub planted_perturbation: f64,
    /// Per-coordinate perturbation of the manual-template prompt.
    pub template_perturbation: f64,
}

/// Everything the synthetic encoder emits for one world.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCaches {
    pub images: EmbeddingCache,
    pub prompts: EmbeddingCache,
    /// One manual-template embedding per class, for zero-shot scoring.
    pub templates: EmbeddingCache,
}

impl SyntheticWorld {
    pub const DEFAULT_PLANTED_PERTURBATION: f64 = 0.05;
    pub const DEFAULT_TEMPLATE_PERTURBATION: f64 = 0.15;

    /// A world with `prompts` prompts per class; planted indices are drawn
    /// from the seed.
    pub fn new(
        seed: u64,
        num_classes: usize,
        dim: usize,
        prompts: usize,
        images_per_class: usize,
        noise_scale: f64,
    ) -> Result<Self> {
        if prompts == 0 {
            return Err(Error::validation("each class needs at least one prompt"));
        }
        let mut rng = stream(&[TAG_SYNTH, seed, STREAM_PLANTED]);
        let planted = (0..num_classes)
            .map(|_| rng.random_range(0..prompts))
            .collect();
        let world = SyntheticWorld {
            seed,
            num_classes,
            dim,
            prompts_per_class: vec![prompts; num_classes],
            planted,
            images_per_class,
            noise_scale,
            planted_perturbation: Self::DEFAULT_PLANTED_PERTURBATION,
            template_perturbation: Self::DEFAULT_TEMPLATE_PERTURBATION,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.dim < 2 {
            return Err(Error::validation(format!(
                "synthetic world needs at least 2 classes and 2 dims, got {} and {}",
                self.num_classes, self.dim
            )));
        }
        if self.prompts_per_class.len() != self.num_classes
            || self.planted.len() != self.num_classes
        {
            return Err(Error::validation(
                "per-class arrays must have one entry per class",
            ));
        }
        for (c, (&m, &p)) in self.prompts_per_class.iter().zip(&self.planted).enumerate() {
            if m == 0 || p >= m {
                return Err(Error::validation(format!(
                    "class {c}: planted index {p} not in 0..{m}"
                )));
            }
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("planted_perturbation", self.planted_perturbation),
            ("template_perturbation", self.template_perturbation),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.num_classes)
            .map(|c| format!("class_{c}"))
            .collect()
    }

    /// Human-readable prompt texts matching the prompt cache layout.
    pub fn prompt_set(&self) -> PromptSet {
        let names = self.class_names();
        let prompts = (0..self.num_classes)
            .map(|c| {
                (0..self.prompts_per_class[c])
                    .map(|j| {
                        let cue = if j == self.planted[c] {
                            "planted"
                        } else {
                            "distractor"
                        };
                        let t = Triplet::new(
                            names[c].clone(),
                            "RelatedTo",
                            format!("{cue} cue {j}"),
                            1.0,
                        )
                        .expect("non-empty fields");
                        PromptRecord {
                            class_id: c,
                            text: verbalize(&t),
                            rule_level: 1,
                            source: Some(t),
                        }
                    })
                    .collect()
            })
            .collect();
        PromptSet {
            dataset_id: format!("synthetic_{}", self.seed),
            class_names: names,
            prompts,
        }
    }

    fn anchors(&self) -> Vec<Vec<f64>> {
        let mut rng = stream(&[TAG_SYNTH, self.seed, STREAM_ANCHOR]);
        (0..self.num_classes)
            .map(|_| normalized(gaussian(&mut rng, self.dim)))
            .collect()
    }

    /// Fresh images around the class anchors. `stream_seed` separates the
    /// noise draw from the base image set, e.g. for shifted domains.
    pub fn images_with(&self, noise_scale: f64, stream_seed: u64) -> Result<EmbeddingCache> {
        self.validate()?;
        let anchors = self.anchors();
        let mut rng = stream(&[TAG_SYNTH, self.seed, STREAM_IMAGE, stream_seed]);
        let mut raw = Vec::with_capacity(self.num_classes * self.images_per_class * self.dim);
        let mut labels = Vec::new();
        for (c, anchor) in anchors.iter().enumerate() {
            for _ in 0..self.images_per_class {
                raw.extend(perturbed(anchor, noise_scale, &mut rng));
                labels.push(c as u32);
            }
        }
        EmbeddingCache::images(self.dim, &raw, labels)
    }
}

fn gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn perturbed<R: Rng>(anchor: &[f64], scale: f64, rng: &mut R) -> Vec<f64> {
    let noise = gaussian(rng, anchor.len());
    anchor
        .iter()
        .zip(noise)
        .map(|(a, g)| a + scale * g)
        .collect()
}

/// Generates the image, prompt, and template caches for `world`.
pub fn synth_encode(world: &SyntheticWorld) -> Result<SynthCaches> {
    world.validate()?;
    let anchors = world.anchors();
    let d = world.dim;

    let mut prompt_rng = stream(&[TAG_SYNTH, world.seed, STREAM_PROMPT]);
    let mut raw = Vec::new();
    let mut labels = Vec::new();
    let mut js = Vec::new();
    for (c, anchor) in anchors.iter().enumerate() {
        for j in 0..world.prompts_per_class[c] {
            if j == world.planted[c] {
                raw.extend(perturbed(
                    anchor,
                    world.planted_perturbation,
                    &mut prompt_rng,
                ));
            } else {
                raw.extend(gaussian(&mut prompt_rng, d));
            }
            labels.push(c as u32);
            js.push(j as u32);
        }
    }
    let prompts = EmbeddingCache::prompts(d, &raw, labels, js)?;

    let mut template_rng = stream(&[TAG_SYNTH, world.seed, STREAM_TEMPLATE]);
    let mut raw = Vec::new();
    for anchor in &anchors {
        raw.extend(perturbed(
            anchor,
            world.template_perturbation,
            &mut template_rng,
        ));
    }
    let n = world.num_classes as u32;
    let templates = EmbeddingCache::prompts(d, &raw, (0..n).collect(), vec![0; n as usize])?;

    let images = world.images_with(world.noise_scale, 0)?;
    Ok(SynthCaches {
        images,
        prompts,
        templates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedstore::cache::write_cache;

    fn dot(a: &[f32], b: &[f32]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| f64::from(*x) * f64::from(*y))
            .sum()
    }

    #[test]
    fn noiseless_images_prefer_their_planted_prompt() {
        let world = SyntheticWorld::new(11, 5, 64, 8, 4, 0.0).unwrap();
        let caches = synth_encode(&world).unwrap();
        let p = &caches.prompts;
        for i in 0..caches.images.len() {
            let c = caches.images.labels[i] as usize;
            let img = caches.images.row(i);
            let planted_row = (0..p.len())
                .find(|&r| {
                    p.labels[r] as usize == c && p.prompt_index[r] as usize == world.planted[c]
                })
                .unwrap();
            let planted_sim = dot(img, p.row(planted_row));
            for r in 0..p.len() {
                if r != planted_row
                    && p.prompt_index[r] as usize != world.planted[p.labels[r] as usize]
                {
                    assert!(
                        planted_sim > dot(img, p.row(r)),
                        "image {i} prefers distractor {r}"
                    );
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let enc = |seed| {
            let w = SyntheticWorld::new(seed, 3, 8, 4, 5, 0.1).unwrap();
            let c = synth_encode(&w).unwrap();
            let mut buf = Vec::new();
            write_cache(&c.images, &mut buf).unwrap();
            write_cache(&c.prompts, &mut buf).unwrap();
            write_cache(&c.templates, &mut buf).unwrap();
            buf
        };
        assert_eq!(enc(5), enc(5));
        assert_ne!(enc(5), enc(6));
    }

    #[test]
    fn parameter_errors() {
        assert!(SyntheticWorld::new(0, 1, 8, 4, 5, 0.1).is_err());
        assert!(SyntheticWorld::new(0, 3, 1, 4, 5, 0.1).is_err());
        assert!(SyntheticWorld::new(0, 3, 8, 0, 5, 0.1).is_err());
        assert!(SyntheticWorld::new(0, 3, 8, 4, 5, -1.0).is_err());
        let mut w = SyntheticWorld::new(0, 3, 8, 4, 5, 0.1).unwrap();
        w.planted[0] = 4;
        assert!(synth_encode(&w).is_err());
    }

    #[test]
    fn prompt_set_matches_layout() {
        let w = SyntheticWorld::new(2, 3, 8, 4, 5, 0.1).unwrap();
        let set = w.prompt_set();
        set.validate().unwrap();
        assert_eq!(set.prompts_per_class(), [4, 4, 4]);
        assert!(set.text(1, w.planted[1]).unwrap().contains("planted"));
    }
}
