mod common;

use std::collections::HashSet;

use common::random_dataset;
use ppi_core::cv::{cv_lambda, make_folds, CvOptions};
use ppi_core::design::encode_design;
use ppi_core::selection::{
    draw_subsample, select_top_questions, selection_frequencies, SelectionConfig,
};
use ppi_core::synthetic::{generate, SyntheticConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quick(seed: u64, b: usize) -> SelectionConfig {
    SelectionConfig {
        n_bootstrap: b,
        inner_cv_k: 5,
        cv: CvOptions {
            n_lambda: 30,
            ..CvOptions::default()
        },
        ..SelectionConfig::new(seed)
    }
}

#[test]
fn subsamples_are_half_size_and_distinct() {
    let ds = random_dataset(1, 301, 2, &[3, 3]);
    let config = SelectionConfig::new(5);
    for b in 0..20 {
        let sub = draw_subsample(&ds, &config, b).unwrap();
        assert_eq!(sub.len(), 151);
        let ids: HashSet<&str> = sub.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids.len(), 151);
    }
}

#[test]
fn sampling_with_replacement_covers_about_63_percent() {
    let ds = random_dataset(2, 1000, 2, &[2]);
    let config = SelectionConfig {
        with_replacement: true,
        subsample_fraction: 1.0,
        ..SelectionConfig::new(9)
    };
    let reps = 10;
    let mean = (0..reps)
        .map(|b| {
            let sub = draw_subsample(&ds, &config, b).unwrap();
            sub.records
                .iter()
                .map(|r| r.id.as_str())
                .collect::<HashSet<_>>()
                .len() as f64
        })
        .sum::<f64>()
        / reps as f64;
    let expected = 1000.0 * (1.0 - (1.0 - 1e-3f64).powi(1000));
    // sd of one draw's distinct count is about 10
    assert!(
        (mean - expected).abs() <= 3.0 * 10.0 / (reps as f64).sqrt(),
        "{mean}"
    );
}

#[test]
fn tiny_subsamples_are_rejected() {
    let ds = random_dataset(3, 50, 2, &[2]);
    assert!(draw_subsample(&ds, &SelectionConfig::new(0), 0).is_err());
}

#[test]
fn selection_ignores_row_order() {
    let ds = random_dataset(4, 300, 3, &[3, 4, 2, 3, 5]);
    let mut shuffled = ds.clone();
    shuffled.records.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let config = quick(17, 6);
    let a = selection_frequencies(&ds, 1.0, &config).unwrap();
    let b = selection_frequencies(&shuffled, 1.0, &config).unwrap();
    assert_eq!(a.replicates, b.replicates);
    for (x, y) in a.questions.iter().zip(&b.questions) {
        assert_eq!((&x.id, x.selected_count), (&y.id, y.selected_count));
        assert!((x.mean_abs_std_coef - y.mean_abs_std_coef).abs() < 1e-9);
    }
}

#[test]
fn selection_does_not_depend_on_thread_count() {
    let ds = random_dataset(5, 300, 2, &[3, 3, 4, 2]);
    let config = quick(2, 8);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| selection_frequencies(&ds, 0.5, &config).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn forcing_lambda_max_selects_nothing() {
    let ds = random_dataset(6, 200, 2, &[3, 3, 3]);
    let config = SelectionConfig {
        forced_lambda_factor: Some(1.0 + 1e-9),
        ..quick(1, 10)
    };
    let table = selection_frequencies(&ds, 1.0, &config).unwrap();
    assert!(table.replicates.iter().all(|r| r.active.is_empty()));
    assert!(table.questions.iter().all(|q| q.selected_count == 0));
    let chosen = select_top_questions(&table, 2).unwrap();
    assert_eq!(chosen.questions.len(), 2);
    assert!(chosen.fill_note.is_some());
}

#[test]
fn a_single_replicate_is_enough() {
    let ds = random_dataset(7, 200, 2, &[3, 3]);
    let table = selection_frequencies(&ds, 1.0, &quick(4, 1)).unwrap();
    assert_eq!(table.replicates.len(), 1);
    assert_eq!(table.n_failed, 0);
    let active = &table.replicates[0].active;
    for q in &table.questions {
        assert_eq!(q.selected_count, usize::from(active.contains(&q.id)));
    }
}

#[test]
fn a_strong_question_is_selected_almost_always() {
    let mut cfg = SyntheticConfig::null_scenario(2000, 2, 8, 3);
    cfg.questions[2].coefficients =
        vec![0.0, 2.0, 2.0, 2.0][..cfg.questions[2].levels.len()].to_vec();
    let (ds, _) = generate(&cfg).unwrap();
    let table = selection_frequencies(&ds, 1.0, &quick(8, 20)).unwrap();
    assert!(table.count("q03").unwrap() >= 19);
    let top = select_top_questions(&table, 1).unwrap();
    assert_eq!(top.questions, ["q03"]);
}

#[test]
fn pure_noise_cross_validation_prefers_the_empty_model() {
    let mut at_top = 0;
    for seed in 0..20 {
        let (ds, _) = generate(&SyntheticConfig::null_scenario(400, 2, 8, seed)).unwrap();
        let design = encode_design(&ds, None).unwrap();
        let curve = cv_lambda(&design, 1.0, 10, seed, &CvOptions::default()).unwrap();
        assert!(curve.lambda_1se >= curve.lambda_min);
        if curve.index_1se == 0 {
            at_top += 1;
        }
    }
    assert!(at_top >= 16, "{at_top} of 20");
}

#[test]
fn folds_are_balanced_and_reproducible() {
    let f = make_folds(103, 10, 5).unwrap();
    let sizes = f.sizes();
    assert!(sizes.iter().all(|&s| s == 10 || s == 11));
    assert_eq!(f, make_folds(103, 10, 5).unwrap());
    assert_ne!(f, make_folds(103, 10, 6).unwrap());
    assert!(make_folds(5, 6, 0).is_err());
}

#[test]
fn cv_curve_is_reproducible() {
    let ds = random_dataset(9, 250, 3, &[3, 4, 2]);
    let design = encode_design(&ds, None).unwrap();
    let opts = CvOptions {
        early_stop: None,
        n_lambda: 25,
        ..CvOptions::default()
    };
    let a = cv_lambda(&design, 0.5, 5, 1, &opts).unwrap();
    assert_eq!(a, cv_lambda(&design, 0.5, 5, 1, &opts).unwrap());
    assert_eq!(a.lambdas.len(), 25);
    assert!(a.index_1se <= a.index_min);
    assert!(a.lambdas.windows(2).all(|w| w[1] < w[0]));
}
