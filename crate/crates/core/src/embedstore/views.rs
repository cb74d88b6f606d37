//! In-memory, 64-bit views of caches used by the models.

use ndarray::{s, Array2, ArrayView1, ArrayView2};

use super::cache::{CacheKind, EmbeddingCache};
use crate::error::{Error, Result};

/// Image embeddings with their labels, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl ImageSet {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                actual: labels.len(),
                context: "image labels",
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(ImageSet {
            features,
            labels,
            num_classes,
        })
    }

    pub fn from_cache(cache: &EmbeddingCache, num_classes: usize) -> Result<Self> {
        if cache.kind != CacheKind::Image {
            return Err(Error::validation("expected an image cache"));
        }
        let features = Array2::from_shape_fn((cache.len(), cache.dim), |(i, k)| {
            f64::from(cache.vectors[i * cache.dim + k])
        });
        let labels = cache.labels.iter().map(|&l| l as usize).collect();
        Self::new(features, labels, num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn subset(&self, indices: &[usize]) -> ImageSet {
        ImageSet {
            features: self.features.select(ndarray::Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Keeps images whose label is in `class_ids` and relabels them by
    /// position in `class_ids`.
    pub fn restrict_classes(&self, class_ids: &[usize]) -> ImageSet {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| class_ids.contains(&self.labels[i]))
            .collect();
        let mut out = self.subset(&keep);
        for l in &mut out.labels {
            *l = class_ids.iter().position(|c| c == l).unwrap();
        }
        out.num_classes = class_ids.len();
        out
    }
}

/// All prompt embeddings of a dataset, stacked class by class. Class `c`
/// owns rows `offsets[c]..offsets[c + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    pub matrix: Array2<f64>,
    pub offsets: Vec<usize>,
}

impl PromptBank {
    /// Builds a bank from per-class blocks of row vectors.
    pub fn from_blocks(blocks: &[Array2<f64>]) -> Result<Self> {
        let dim = blocks.first().map(|b| b.ncols()).unwrap_or(0);
        if blocks.is_empty() || dim == 0 {
            return Err(Error::validation("prompt bank needs at least one class"));
        }
        let mut offsets = vec![0];
        for (c, b) in blocks.iter().enumerate() {
            if b.nrows() == 0 {
                return Err(Error::validation(format!("class {c} has no prompts")));
            }
            if b.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: b.ncols(),
                    context: "prompt block width",
                });
            }
            offsets.push(offsets[c] + b.nrows());
        }
        let views: Vec<ArrayView2<f64>> = blocks.iter().map(|b| b.view()).collect();
        let matrix = ndarray::concatenate(ndarray::Axis(0), &views).expect("widths checked");
        Ok(PromptBank { matrix, offsets })
    }

    /// Orders a prompt cache by `(class_id, prompt_j)`. Every class in
    /// `0..num_classes` must have at least one prompt.
    pub fn from_cache(cache: &EmbeddingCache, num_classes: usize) -> Result<Self> {
        if cache.kind != CacheKind::Prompt {
            return Err(Error::validation("expected a prompt cache"));
        }
        let mut order: Vec<usize> = (0..cache.len()).collect();
        order.sort_by_key(|&r| (cache.labels[r], cache.prompt_index[r]));
        let mut counts = vec![0usize; num_classes];
        for &l in &cache.labels {
            let l = l as usize;
            if l >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    num_classes,
                });
            }
            counts[l] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::validation(format!(
                "class {c} has no prompts in cache"
            )));
        }
        let mut offsets = vec![0];
        for n in counts {
            offsets.push(offsets.last().unwrap() + n);
        }
        let dim = cache.dim;
        let matrix = Array2::from_shape_fn((cache.len(), dim), |(i, k)| {
            f64::from(cache.vectors[order[i] * dim + k])
        });
        Ok(PromptBank { matrix, offsets })
    }

    pub fn num_classes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn total(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn range(&self, c: usize) -> std::ops::Range<usize> {
        self.offsets[c]..self.offsets[c + 1]
    }

    pub fn count(&self, c: usize) -> usize {
        self.offsets[c + 1] - self.offsets[c]
    }

    pub fn class_rows(&self, c: usize) -> ArrayView2<'_, f64> {
        self.matrix.slice(s![self.range(c), ..])
    }

    /// The sub-bank for `class_ids`, reindexed by position.
    pub fn restrict(&self, class_ids: &[usize]) -> Result<PromptBank> {
        let blocks: Vec<Array2<f64>> = class_ids
            .iter()
            .map(|&c| {
                if c >= self.num_classes() {
                    Err(Error::LabelOutOfRange {
                        label: c,
                        num_classes: self.num_classes(),
                    })
                } else {
                    Ok(self.class_rows(c).to_owned())
                }
            })
            .collect::<Result<_>>()?;
        Self::from_blocks(&blocks)
    }

    /// The single row of each class, for banks holding one template prompt
    /// per class.
    pub fn single_rows(&self) -> Result<ArrayView2<'_, f64>> {
        if self.total() != self.num_classes() {
            return Err(Error::validation(
                "template bank must hold exactly one prompt per class",
            ));
        }
        Ok(self.matrix.view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bank_from_shuffled_cache() {
        let raw = [0.0, 1.0, 1.0, 0.0, 0.6, 0.8];
        let cache = EmbeddingCache::prompts(2, &raw, vec![1, 0, 0], vec![0, 1, 0]).unwrap();
        let bank = PromptBank::from_cache(&cache, 2).unwrap();
        assert_eq!(bank.offsets, [0, 2, 3]);
        let expected = array![[0.6f32 as f64, 0.8f32 as f64], [1.0, 0.0], [0.0, 1.0]];
        assert_eq!(bank.matrix, expected);
        assert!(PromptBank::from_cache(&cache, 3).is_err());
        assert!(PromptBank::from_cache(&cache, 1).is_err());
    }

    #[test]
    fn restriction_relabels() {
        let set = ImageSet::new(array![[1.0], [2.0], [3.0], [4.0]], vec![0, 2, 1, 2], 3).unwrap();
        let r = set.restrict_classes(&[2, 0]);
        assert_eq!(r.labels, [1, 0, 0]);
        assert_eq!(r.features, array![[1.0], [2.0], [4.0]]);
        assert_eq!(r.num_classes, 2);
        assert!(ImageSet::new(array![[1.0]], vec![3], 3).is_err());

        let bank =
            PromptBank::from_blocks(&[array![[1.0]], array![[2.0], [3.0]], array![[4.0]]]).unwrap();
        let sub = bank.restrict(&[1, 2]).unwrap();
        assert_eq!(sub.offsets, [0, 2, 3]);
        assert_eq!(sub.matrix, array![[2.0], [3.0], [4.0]]);
        assert!(bank.single_rows().is_err());
    }
}
