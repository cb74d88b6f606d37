mod common;

use rplkg::baselines::BaselineKind;
use rplkg::embedstore::{synth_encode, ImageSet, PromptBank, SyntheticWorld};
use rplkg::evalharness::{
    base_to_new_with, baseline_base_to_new, bench_iteration, eval_base_to_new, eval_domain_shift,
    evaluate_baseline, evaluate_selector, harmonic_mean, sample_k_shot, selector_inference,
    BaseNewSplit, DomainTarget, FewShotTask,
};
use rplkg::selector::SelectorParams;
use rplkg::trainloop::{grid_search, selector_accuracy, train, HyperGrid, TrainConfig};
use rplkg::Error;

struct World {
    world: SyntheticWorld,
    images: ImageSet,
    bank: PromptBank,
    templates: PromptBank,
}

fn world(seed: u64) -> World {
    let world = SyntheticWorld::new(seed, 5, 64, 8, 50, 0.1).unwrap();
    let caches = synth_encode(&world).unwrap();
    World {
        images: ImageSet::from_cache(&caches.images, 5).unwrap(),
        bank: PromptBank::from_cache(&caches.prompts, 5).unwrap(),
        templates: PromptBank::from_cache(&caches.templates, 5).unwrap(),
        world,
    }
}

fn config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn training_lowers_the_loss() {
    let w = world(0);
    let task = sample_k_shot("s", &w.images, 16, 0).unwrap();
    let r = train(&config(0), &task, &w.images, &w.bank, Some(&w.templates)).unwrap();
    assert_eq!(r.epochs.len(), 50);
    assert_eq!(r.steps, 50 * 3);
    assert!(r.epochs.last().unwrap().loss < 0.7 * r.epochs[0].loss);
    let mut csv = Vec::new();
    r.write_epochs_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 51);
}

#[test]
fn evaluate_agrees_with_trainloop_accuracy() {
    let w = world(1);
    let task = sample_k_shot("s", &w.images, 16, 1).unwrap();
    let cfg = config(1);
    let r = train(&cfg, &task, &w.images, &w.bank, Some(&w.templates)).unwrap();
    let report = evaluate_selector(
        &r.params,
        &task,
        &w.images,
        &w.bank,
        Some(&w.templates),
        cfg.alpha_blend,
    )
    .unwrap();
    let test = w.images.subset(&task.test_indices);
    let direct = selector_accuracy(
        &r.params,
        &test,
        &w.bank,
        Some(&w.templates),
        cfg.alpha_blend,
    )
    .unwrap();
    assert!((report.accuracy - direct).abs() <= 0.02);
    assert_eq!(report.param_count, Some(3 * 64 * 64));
    let hist = report.selection_histogram.unwrap();
    for (c, row) in hist.iter().enumerate() {
        let n = test.labels.iter().filter(|&&l| l == c).count();
        assert_eq!(row.iter().sum::<usize>(), n);
        assert_eq!(row.len(), 8);
    }
}

#[test]
fn base_to_new_is_symmetric_on_mirrored_data() {
    // Two copies of the same 2-class world stacked as 4 classes: new is
    // base relabeled, so both sides see identical data.
    let w = world(2);
    let two = w.images.restrict_classes(&[0, 1]);
    let mut labels = two.labels.clone();
    labels.extend(two.labels.iter().map(|l| l + 2));
    let features = ndarray::concatenate(
        ndarray::Axis(0),
        &[two.features.view(), two.features.view()],
    )
    .unwrap();
    let images = ImageSet::new(features, labels, 4).unwrap();
    let blocks: Vec<_> = [0, 1, 0, 1]
        .iter()
        .map(|&c| w.bank.class_rows(c).to_owned())
        .collect();
    let bank = PromptBank::from_blocks(&blocks).unwrap();
    let split = BaseNewSplit::new(4).unwrap();
    let base_images = images.restrict_classes(&split.base_class_ids);
    let mut task = sample_k_shot("m", &base_images, 1, 0).unwrap();
    task.test_indices = (0..base_images.len()).collect();
    task.train_indices.clear();
    let params = SelectorParams::init(64, 0, 0.01, 0.0, 100.0).unwrap();
    let b2n = eval_base_to_new(&params, 1.0, &split, &task, &images, &bank, None).unwrap();
    assert_eq!(b2n.base, b2n.new);
    assert_eq!(b2n.h, harmonic_mean(b2n.base, b2n.new));
}

#[test]
fn base_to_new_keeps_parameters_and_tracks_zeroshot() {
    let w = world(3);
    let split = BaseNewSplit::new(5).unwrap();
    assert_eq!(split.base_class_ids.len(), 3);
    let base_images = w.images.restrict_classes(&split.base_class_ids);
    let base_bank = w.bank.restrict(&split.base_class_ids).unwrap();
    let task = sample_k_shot("s", &base_images, 16, 3).unwrap();
    let r = train(&config(3), &task, &base_images, &base_bank, None).unwrap();
    let before = r.params.checksum();
    let ours = eval_base_to_new(
        &r.params,
        1.0,
        &split,
        &task,
        &w.images,
        &w.bank,
        Some(&w.templates),
    )
    .unwrap();
    assert_eq!(r.params.checksum(), before);
    let zs = baseline_base_to_new(
        BaselineKind::Zeroshot,
        1.0,
        &split,
        &task,
        &w.images,
        &w.bank,
        Some(&w.templates),
    )
    .unwrap();
    assert!(
        ours.new >= zs.new - 0.05,
        "new {} vs zero-shot {}",
        ours.new,
        zs.new
    );
    assert!((ours.h - harmonic_mean(ours.base, ours.new)).abs() < 1e-15);
}

#[test]
fn base_to_new_sides_use_their_own_label_space() {
    let w = world(4);
    let split = BaseNewSplit::new(5).unwrap();
    let base_images = w.images.restrict_classes(&split.base_class_ids);
    let task = sample_k_shot("s", &base_images, 4, 0).unwrap();
    let seen = std::cell::RefCell::new(Vec::new());
    base_to_new_with(&split, &task, &w.images, &w.bank, None, |set, bank, _| {
        seen.borrow_mut()
            .push((set.num_classes, bank.num_classes(), set.len()));
        Ok(set.labels.clone())
    })
    .unwrap();
    assert_eq!(
        *seen.borrow(),
        vec![(3, 3, task.test_indices.len()), (2, 2, 100)]
    );
}

#[test]
fn domain_shift_examples() {
    let (mut ours, mut zs) = (0.0, 0.0);
    for seed in 0..5 {
        let w = world(seed);
        let task = sample_k_shot("s", &w.images, 16, seed).unwrap();
        let cfg = config(seed);
        let r = train(&cfg, &task, &w.images, &w.bank, Some(&w.templates)).unwrap();
        let names = w.world.class_names();
        let shifted = ImageSet::from_cache(&w.world.images_with(0.3, 1).unwrap(), 5).unwrap();
        let targets = vec![
            DomainTarget {
                name: "source".into(),
                class_names: names.clone(),
                images: w.images.subset(&task.test_indices),
            },
            DomainTarget {
                name: "shifted".into(),
                class_names: names.clone(),
                images: shifted.clone(),
            },
        ];
        let acc = eval_domain_shift(
            &r.params,
            1.0,
            &names,
            &w.bank,
            Some(&w.templates),
            &targets,
        )
        .unwrap();
        let source = evaluate_selector(
            &r.params,
            &task,
            &w.images,
            &w.bank,
            Some(&w.templates),
            1.0,
        )
        .unwrap();
        assert_eq!(acc[0].1, source.accuracy);
        ours += acc[1].1;
        let all = FewShotTask {
            train_indices: vec![],
            test_indices: (0..shifted.len()).collect(),
            ..task.clone()
        };
        zs += evaluate_baseline(
            BaselineKind::Zeroshot,
            &all,
            &shifted,
            &w.bank,
            Some(&w.templates),
            1.0,
        )
        .unwrap()
        .accuracy;

        let mut renamed = targets[1].clone();
        renamed.class_names[0] = "other".into();
        let err = eval_domain_shift(&r.params, 1.0, &names, &w.bank, None, &[renamed]).unwrap_err();
        assert!(matches!(err, Error::ClassListMismatch { .. }));
    }
    assert!(
        ours >= zs,
        "seed-mean shifted accuracy {} vs zero-shot {}",
        ours / 5.0,
        zs / 5.0
    );
}

#[test]
fn grid_search_ranks_and_breaks_ties() {
    let w = world(5);
    let task = sample_k_shot("s", &w.images, 4, 5).unwrap();
    let grid = HyperGrid {
        weight_decay: vec![0.1, 3e-3],
        tau: vec![0.1, 0.01],
        dropout: vec![0.1],
        alpha_blend: vec![1.0],
    };
    let base = TrainConfig {
        epochs: 3,
        ..config(5)
    };
    let g = grid_search(&base, &grid, &task, &w.images, &w.bank, Some(&w.templates)).unwrap();
    assert_eq!(g.leaderboard.len(), 4);
    for pair in g.leaderboard.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        assert!(a.val_accuracy >= b.val_accuracy);
        if a.val_accuracy == b.val_accuracy {
            assert!(
                (a.config.weight_decay, a.config.tau) <= (b.config.weight_decay, b.config.tau),
                "tie order"
            );
        }
    }
    let again = grid_search(&base, &grid, &task, &w.images, &w.bank, Some(&w.templates)).unwrap();
    let key = |g: &rplkg::trainloop::GridResult| -> Vec<_> {
        g.leaderboard
            .iter()
            .map(|e| (e.config.clone(), e.val_accuracy))
            .collect()
    };
    assert_eq!(key(&g), key(&again));
}

#[test]
fn training_rejects_inconsistent_inputs() {
    let w = world(6);
    let task = sample_k_shot("s", &w.images, 16, 0).unwrap();
    let half = w.bank.restrict(&[0, 1]).unwrap();
    assert!(train(&config(0), &task, &w.images, &half, None).is_err());
    let blended = TrainConfig {
        alpha_blend: 0.5,
        ..config(0)
    };
    assert!(train(&blended, &task, &w.images, &w.bank, None).is_err());
    let bad = TrainConfig {
        tau: 0.0,
        ..config(0)
    };
    assert!(train(&bad, &task, &w.images, &w.bank, None).is_err());
}

#[test]
fn divergence_is_reported() {
    let w = world(7);
    let task = sample_k_shot("s", &w.images, 16, 0).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e12,
        ..config(0)
    };
    let err = train(&cfg, &task, &w.images, &w.bank, None).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");
}

#[test]
fn inference_ignores_thread_count() {
    let w = world(8);
    let params = SelectorParams::init(64, 1, 0.01, 0.0, 100.0).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let a = selector_inference(&params, &w.images, &w.bank, None, 1.0).unwrap();
    let b = pool.install(|| selector_inference(&params, &w.images, &w.bank, None, 1.0).unwrap());
    assert_eq!(a, b);
}

#[test]
fn bench_reports_are_stable() {
    let params = SelectorParams::init(32, 0, 0.01, 0.1, 100.0).unwrap();
    let one = bench_iteration(&params, 16, 10, 4, 1, 0).unwrap();
    let many = bench_iteration(&params, 16, 10, 4, 101, 0).unwrap();
    assert_eq!(one.param_count, 3 * 32 * 32);
    let ratio = one.iter_seconds / many.iter_seconds;
    assert!(
        (0.5..=2.0).contains(&ratio),
        "reps=1 {} vs reps=101 {}",
        one.iter_seconds,
        many.iter_seconds
    );
}
