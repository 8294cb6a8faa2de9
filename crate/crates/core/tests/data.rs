mod common;

use std::collections::HashSet;

use common::random_dataset;
use ppi_core::data::{read_dataset, split_indices, split_train_test, write_dataset};
use ppi_core::design::{encode_design, Column};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn encoding_is_one_hot_and_weights_keep_ratios(seed in 0u64..100_000, n in 20usize..150) {
        let ds = random_dataset(seed, n, 3, &[2, 4, 3]);
        let design = encode_design(&ds, None).unwrap();
        let w = design.weights();
        let mean = w.iter().sum::<f64>() / n as f64;
        prop_assert!((mean - 1.0).abs() < 1e-12);
        for i in 0..n {
            let ratio = w[i] / w[0];
            let raw = ds.records[i].weight / ds.records[0].weight;
            prop_assert!((ratio - raw).abs() <= 1e-12 * raw.max(1.0));
            let row = design.row(i);
            let regions = row.iter().filter(|&&j| (j as usize) < design.n_regions()).count();
            prop_assert_eq!(regions, 1);
            for q in design.questions() {
                let hits = row.iter().filter(|&&j| q.columns.contains(&(j as usize))).count();
                prop_assert!(hits <= 1);
            }
        }
    }

    #[test]
    fn rows_decode_back_to_their_responses(seed in 0u64..100_000) {
        let ds = random_dataset(seed, 60, 2, &[3, 2, 5]);
        let design = encode_design(&ds, None).unwrap();
        for i in 0..ds.len() {
            let (region, responses) = design.decode_row(i);
            let profile = ds.profile(i);
            prop_assert_eq!(region, profile.region);
            for (q, level) in responses {
                prop_assert_eq!(Some(&level), profile.responses.get(&q));
            }
        }
    }

    #[test]
    fn split_is_a_two_to_one_partition(n in 3usize..2000, seed in any::<u64>()) {
        let s = split_indices(n, seed).unwrap();
        prop_assert_eq!(s.train.len(), (2.0 * n as f64 / 3.0).round() as usize);
        prop_assert_eq!(s.train.len() + s.test.len(), n);
        let all: HashSet<usize> = s.train.iter().chain(&s.test).copied().collect();
        prop_assert_eq!(all.len(), n);
    }
}

#[test]
fn split_is_disjoint_by_id_over_many_seeds() {
    let ds = random_dataset(1, 300, 2, &[3]);
    for seed in 0..100 {
        let (train, test) = split_train_test(&ds, seed).unwrap();
        let ids: HashSet<&str> = train.records.iter().map(|r| r.id.as_str()).collect();
        assert!(test.records.iter().all(|r| !ids.contains(r.id.as_str())));
        assert_eq!(train.len() + test.len(), ds.len());
    }
}

#[test]
fn level_columns_follow_reference_coding() {
    let ds = random_dataset(4, 400, 4, &[2, 3, 6]);
    let design = encode_design(&ds, None).unwrap();
    assert_eq!(design.n_cols(), 4 + 1 + 2 + 5);
    for (j, c) in design.columns().iter().enumerate() {
        match c {
            Column::Region { .. } => assert!(!design.is_penalized(j)),
            Column::Level { level, question } => {
                assert!(design.is_penalized(j));
                let q = design
                    .questions()
                    .iter()
                    .find(|q| &q.id == question)
                    .unwrap();
                assert_ne!(&q.reference_level, level);
            }
        }
    }
}

#[test]
fn csv_round_trip_preserves_the_dataset() {
    let ds = random_dataset(9, 80, 3, &[2, 3]);
    let mut buf = Vec::new();
    let schema = write_dataset(&ds, &mut buf).unwrap();
    let back = read_dataset(buf.as_slice(), &schema).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn question_subset_restricts_columns() {
    let ds = random_dataset(2, 200, 2, &[3, 4, 2]);
    let design = encode_design(&ds, Some(&["q1".to_string()])).unwrap();
    assert_eq!(design.n_cols(), 2 + 3);
    assert!(encode_design(&ds, Some(&["nope".to_string()])).is_err());
}
