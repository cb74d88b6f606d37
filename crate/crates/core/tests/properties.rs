mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rplkg::embedstore::{read_cache, write_cache, EmbeddingCache, ImageSet};
use rplkg::evalharness::{harmonic_mean, sample_k_shot, SHOT_COUNTS};
use rplkg::kgprompt::{
    build_prompt_set, ladder_candidates, lookup, GraphIndex, LabelQuery, Triplet, MAX_LEVEL,
};

fn label() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9 /()_-]{0,24}"
}

fn dataset() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("dtd".to_string()),
        Just("fgvc_aircraft".to_string()),
        Just("stanford_cars".to_string()),
        Just("caltech101".to_string()),
    ]
}

fn triplets() -> impl Strategy<Value = Vec<Triplet>> {
    prop::collection::vec(
        (
            "[a-z]{1,6}( [a-z]{1,6})?",
            "(IsA|HasA|UsedFor|AtLocation)",
            "[a-z]{1,8}",
            0.0f64..10.0,
        ),
        0..12,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(h, r, t, w)| Triplet::new(h, r, t, w).unwrap())
            .collect()
    })
}

proptest! {
    #[test]
    fn ladder_is_deterministic_and_idempotent(raw in label(), ds in dataset(), level in 1u8..=MAX_LEVEL) {
        let q = LabelQuery::new(raw.clone(), ds.clone());
        let a = ladder_candidates(&q, level);
        prop_assert_eq!(&a, &ladder_candidates(&LabelQuery::new(raw, ds.clone()), level));
        for cand in &a {
            let again = ladder_candidates(&LabelQuery::new(cand.clone(), ds.clone()), level);
            prop_assert!(again.contains(cand), "{:?} not a fixed point at level {}: {:?}", cand, level, again);
        }
    }

    #[test]
    fn slash_exception_keeps_slashes(left in "[A-Za-z0-9]{1,8}", right in "[A-Za-z0-9]{1,8}", ds in prop_oneof![Just("fgvc_aircraft"), Just("stanford_cars"), Just("FGVC-Aircraft")], level in 1u8..=MAX_LEVEL) {
        let raw = format!("{left}/{right}");
        let q = LabelQuery::new(raw, ds);
        prop_assert!(!q.slash_is_synonym);
        for cand in ladder_candidates(&q, level) {
            prop_assert!(cand.contains('/'), "slash fragment {:?}", cand);
        }
    }

    #[test]
    fn lookup_level_is_minimal(raw in label(), ds in dataset(), ts in triplets()) {
        let graph = GraphIndex::new(ts);
        let q = LabelQuery::new(raw, ds);
        let hit = lookup(&q, &graph);
        for lower in 1..hit.level {
            prop_assert!(ladder_candidates(&q, lower).iter().all(|k| !graph.contains(k)));
        }
        if hit.level == 0 {
            prop_assert!(hit.keys.is_empty());
            for l in 1..=MAX_LEVEL {
                prop_assert!(ladder_candidates(&q, l).iter().all(|k| !graph.contains(k)));
            }
        } else {
            prop_assert!(hit.keys.iter().all(|k| graph.contains(k)));
        }
    }

    #[test]
    fn every_class_gets_a_prompt(classes in prop::collection::vec(label(), 1..6), ds in dataset(), ts in triplets(), cap in prop::option::of(1usize..4)) {
        let graph = GraphIndex::new(ts);
        let (set, stats) = build_prompt_set(&classes, &ds, &graph, cap).unwrap();
        set.validate().unwrap();
        prop_assert_eq!(stats.level_hits.iter().sum::<usize>(), classes.len());
        for prompts in &set.prompts {
            prop_assert!(!prompts.is_empty());
            if let Some(c) = cap {
                prop_assert!(prompts.len() <= c);
            }
            let mut texts: Vec<&str> = prompts.iter().map(|p| p.text.as_str()).collect();
            texts.sort_unstable();
            texts.dedup();
            prop_assert_eq!(texts.len(), prompts.len());
        }
        let mut buf = Vec::new();
        set.write_jsonl(&mut buf).unwrap();
        prop_assert_eq!(rplkg::kgprompt::PromptSet::read_jsonl(&buf[..]).unwrap(), set);
    }

    #[test]
    fn cache_round_trip(seed in any::<u64>(), dim in 1usize..12, rows in 1usize..10, prompt in any::<bool>()) {
        let mut r = common::rng(seed);
        let raw = common::gaussian(&mut r, rows, dim, 1.0);
        let raw: Vec<f64> = raw.iter().map(|x| x + 1e-3).collect();
        let labels: Vec<u32> = (0..rows as u32).map(|i| i % 3).collect();
        let cache = if prompt {
            let js = (0..rows as u32).map(|i| i / 3).collect();
            EmbeddingCache::prompts(dim, &raw, labels, js).unwrap()
        } else {
            EmbeddingCache::images(dim, &raw, labels).unwrap()
        };
        let mut buf = Vec::new();
        let n = write_cache(&cache, &mut buf).unwrap();
        prop_assert_eq!(n as usize, buf.len());
        let back = read_cache(&buf[..]).unwrap();
        prop_assert_eq!(&back, &cache);
        let mut again = Vec::new();
        write_cache(&back, &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn cache_detects_any_single_byte_corruption(seed in any::<u64>(), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let mut r = common::rng(seed);
        let raw: Vec<f64> = common::gaussian(&mut r, 4, 3, 1.0).iter().copied().collect();
        let cache = EmbeddingCache::images(3, &raw, vec![0, 1, 0, 1]).unwrap();
        let mut buf = Vec::new();
        write_cache(&cache, &mut buf).unwrap();
        let i = pos.index(buf.len());
        buf[i] ^= flip;
        prop_assert!(read_cache(&buf[..]).is_err());
    }

    #[test]
    fn harmonic_mean_symmetry_and_bounds(a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let h = harmonic_mean(a, b);
        prop_assert_eq!(h, harmonic_mean(b, a));
        prop_assert!(h <= (a + b) / 2.0 + 1e-9);
        prop_assert!(h >= a.min(b) - 1e-9);
    }

    #[test]
    fn k_shot_splits_are_deterministic_and_disjoint(counts in prop::collection::vec(1usize..25, 1..6), k_idx in 0usize..5, seed in any::<u64>()) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| vec![c; n]).collect();
        let images = ImageSet::new(Array2::zeros((labels.len(), 2)), labels.clone(), counts.len()).unwrap();
        let k = SHOT_COUNTS[k_idx];
        let task = sample_k_shot("x", &images, k, seed).unwrap();
        prop_assert_eq!(&task, &sample_k_shot("x", &images, k, seed).unwrap());
        task.check_against(&images).unwrap();
        prop_assert_eq!(task.train_indices.len() + task.test_indices.len(), labels.len());
        for (c, &n) in counts.iter().enumerate() {
            let got = task.train_indices.iter().filter(|&&i| labels[i] == c).count();
            prop_assert_eq!(got, n.min(k));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_gradients_match_finite_differences(seed in any::<u64>()) {
        let inst = common::GradInstance::random(seed);
        let err = inst.max_relative_error(1e-4, 1e-8);
        prop_assert!(err < 1e-4, "relative error {}", err);
    }
}
