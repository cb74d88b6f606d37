use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::embedstore::ImageSet;
use crate::error::{Error, Result};
use crate::seeding::{stream, TAG_SPLIT};

pub const SHOT_COUNTS: [usize; 5] = [1, 2, 4, 8, 16];

/// A seeded k-shot split over an image set. Indices refer to rows of the
/// image set the task was sampled from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotTask {
    pub dataset_id: String,
    pub k: usize,
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl FewShotTask {
    /// Checks that indices are in range for `images` and the splits are
    /// pairwise disjoint.
    pub fn check_against(&self, images: &ImageSet) -> Result<()> {
        let mut seen = vec![false; images.len()];
        for &i in self
            .train_indices
            .iter()
            .chain(&self.val_indices)
            .chain(&self.test_indices)
        {
            if i >= images.len() {
                return Err(Error::validation(format!(
                    "task index {i} out of range for {} images",
                    images.len()
                )));
            }
            if seen[i] {
                return Err(Error::validation(format!(
                    "image {i} appears in more than one split"
                )));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// Draws `min(k, available)` training images per class uniformly without
/// replacement; all other images become test images.
pub fn sample_k_shot(
    dataset_id: &str,
    images: &ImageSet,
    k: usize,
    seed: u64,
) -> Result<FewShotTask> {
    if !SHOT_COUNTS.contains(&k) {
        return Err(Error::validation(format!(
            "k must be one of {SHOT_COUNTS:?}, got {k}"
        )));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); images.num_classes];
    for (i, &l) in images.labels.iter().enumerate() {
        per_class[l].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut pool) in per_class.into_iter().enumerate() {
        pool.shuffle(&mut stream(&[TAG_SPLIT, seed, c as u64]));
        let take = k.min(pool.len());
        train.extend_from_slice(&pool[..take]);
        test.extend_from_slice(&pool[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(FewShotTask {
        dataset_id: dataset_id.to_string(),
        k,
        seed,
        train_indices: train,
        val_indices: Vec::new(),
        test_indices: test,
    })
}

/// Base classes are the first half (rounded up) in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseNewSplit {
    pub base_class_ids: Vec<usize>,
    pub new_class_ids: Vec<usize>,
}

impl BaseNewSplit {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::validation("base-to-new needs at least two classes"));
        }
        let nb = num_classes.div_ceil(2);
        Ok(BaseNewSplit {
            base_class_ids: (0..nb).collect(),
            new_class_ids: (nb..num_classes).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn images(counts: &[usize]) -> ImageSet {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| vec![c; n])
            .collect();
        ImageSet::new(Array2::zeros((labels.len(), 2)), labels, counts.len()).unwrap()
    }

    #[test]
    fn small_class_is_clamped() {
        let set = images(&[3, 20]);
        let t = sample_k_shot("x", &set, 16, 0).unwrap();
        let train0 = t
            .train_indices
            .iter()
            .filter(|&&i| set.labels[i] == 0)
            .count();
        assert_eq!(train0, 3);
        assert_eq!(t.train_indices.len(), 19);
        assert_eq!(t.test_indices.len(), 4);
        t.check_against(&set).unwrap();
    }

    #[test]
    fn one_shot_counts_and_determinism() {
        let set = images(&[5; 10]);
        let a = sample_k_shot("x", &set, 1, 9).unwrap();
        assert_eq!(a.train_indices.len(), 10);
        assert_eq!(a, sample_k_shot("x", &set, 1, 9).unwrap());
        assert_ne!(a, sample_k_shot("x", &set, 1, 10).unwrap());
    }

    #[test]
    fn rejects_unsupported_k() {
        assert!(sample_k_shot("x", &images(&[4, 4]), 3, 0).is_err());
    }

    #[test]
    fn base_new_split() {
        let s = BaseNewSplit::new(5).unwrap();
        assert_eq!(s.base_class_ids, vec![0, 1, 2]);
        assert_eq!(s.new_class_ids, vec![3, 4]);
        assert!(BaseNewSplit::new(1).is_err());
    }
}
