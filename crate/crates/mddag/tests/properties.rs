//! Randomized property tests for the serialization and episode
//! invariants that the unit suites only probe pointwise.

use proptest::prelude::*;

use mddag::boosting::{Stump, StrongSequence};
use mddag::dataset::LabeledDataset;
use mddag::mdp::{self, Action, LossKind, RewardSpec};

fn finite_feature() -> impl Strategy<Value = f64> {
    // Values with short decimal expansions and values with full mantissas.
    prop_oneof![
        (-100i32..100).prop_map(|v| v as f64 / 4.0),
        -1e6f64..1e6,
    ]
}

fn dataset_strategy() -> impl Strategy<Value = LabeledDataset> {
    (1usize..5, 1usize..20).prop_flat_map(|(d, n)| {
        (
            proptest::collection::vec(finite_feature(), n * d),
            proptest::collection::vec(1u32..4, n),
        )
            .prop_map(move |(features, labels)| {
                LabeledDataset::new(features, labels, d, None, None).unwrap()
            })
    })
}

fn sequence_strategy() -> impl Strategy<Value = StrongSequence> {
    (2usize..4, 1usize..3, 1usize..6).prop_flat_map(|(k, d, n)| {
        proptest::collection::vec(
            (
                0..d,
                -2.0f64..2.0,
                proptest::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], k),
                0.01f64..2.0,
            ),
            n,
        )
        .prop_map(move |raw| {
            let stumps: Vec<Stump> = raw
                .into_iter()
                .map(|(feature_index, threshold, votes, alpha)| Stump {
                    feature_index,
                    threshold,
                    votes,
                    alpha,
                })
                .collect();
            StrongSequence {
                k,
                d,
                alpha_sum: stumps.iter().map(|s| s.alpha).sum(),
                stumps,
            }
        })
    })
}

proptest! {
    /// CSV serialization is a bit-exact round trip for any dataset.
    #[test]
    fn csv_round_trip(ds in dataset_strategy()) {
        let back = LabeledDataset::from_reader(ds.to_csv().as_bytes()).unwrap();
        prop_assert_eq!(ds, back);
    }

    /// Any legal action script yields an episode whose return decomposes
    /// into -loss - beta per evaluation, and whose mask agrees with the
    /// recorded EVAL steps.
    #[test]
    fn episode_return_decomposes(
        h in sequence_strategy(),
        script in proptest::collection::vec(0usize..3, 0..8),
        x_raw in proptest::collection::vec(-3.0f64..3.0, 3),
        label_raw in 1u32..4,
        beta in 0.0f64..0.2,
    ) {
        let label = label_raw.min(h.k as u32);
        let spec = RewardSpec::new(LossKind::ZeroOne, beta);
        let mut i = 0;
        let trace = mdp::run_episode(0, &x_raw[..h.d], label, &h, &spec, |_| {
            let a = script.get(i).map_or(Action::Quit, |&c| Action::ALL[c]);
            i += 1;
            a
        }).unwrap();

        let evals = trace.steps.iter().filter(|s| s.action == Action::Eval).count();
        prop_assert_eq!(trace.eval_count(), evals);

        let loss = spec.loss_of(&trace.final_scores, h.alpha_sum, label);
        let expected = -loss - beta * evals as f64;
        prop_assert!((trace.reward_sum() - expected).abs() <= 1e-12);
        prop_assert!(trace.steps.last().unwrap().action == Action::Quit);
    }

    /// Model JSON round trips exactly.
    #[test]
    fn model_json_round_trip(h in sequence_strategy()) {
        let back = StrongSequence::from_json(&h.to_json()).unwrap();
        prop_assert_eq!(h, back);
    }
}
