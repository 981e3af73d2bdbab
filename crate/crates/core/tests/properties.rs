use fair_core::align::{predict_label, ScoreVector, Scorer};
use fair_core::linalg::softmax;
use fair_core::selftrain::adaptive_weight;
use fair_testkit::props::{self, Check};
use proptest::prelude::*;

fn run(check: Check) -> Result<(), TestCaseError> {
    check.map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_nonnegative_and_zero_on_ties(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let (s1, s2) = (a.max(b), a.min(b));
        prop_assert!(adaptive_weight(s1, s2) >= 0.0);
        prop_assert_eq!(adaptive_weight(s1, s1), 0.0);
        if s1 > s2 && s1 != 0.0 {
            prop_assert!(adaptive_weight(s1, s2) > 0.0);
        }
    }

    #[test]
    fn softmax_shift_invariant(x in prop::collection::vec(-1.0f64..1.0, 1..9), shift in -50.0f64..50.0) {
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let (p, q) = (softmax(&x), softmax(&shifted));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!(*a > 0.0);
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn label_invariant_under_positive_scaling(x in prop::collection::vec(-1.0f64..1.0, 1..9), a in 1e-3f64..1e3) {
        let sv = ScoreVector { values: x.clone(), scorer: Scorer::Las };
        let scaled = ScoreVector { values: x.iter().map(|v| a * v).collect(), scorer: Scorer::Las };
        prop_assert_eq!(predict_label(&sv), predict_label(&scaled));
    }

    #[test]
    fn gamma_tie_in_pseudo_labels(seed in any::<u64>()) { run(props::gamma_nonnegative_zero_on_tie(seed))?; }

    #[test]
    fn wca_weights_simplex(seed in any::<u64>()) { run(props::wca_weights_simplex(seed))?; }

    #[test]
    fn fair_weights_sum_and_permute(seed in any::<u64>()) { run(props::fair_weights_sum_and_permute(seed))?; }

    #[test]
    fn all_scorers_label_invariant_under_scaling(seed in any::<u64>()) { run(props::argmax_positive_scaling(seed))?; }

    #[test]
    fn las_full_selection(seed in any::<u64>()) { run(props::las_full_selection(seed))?; }

    #[test]
    fn cupl_single_description(seed in any::<u64>()) { run(props::cupl_single_description(seed))?; }

    #[test]
    fn fresh_adapter_identity(seed in any::<u64>()) { run(props::fresh_adapter_identity(seed))?; }

    #[test]
    fn adapter_rescale_invariance(seed in any::<u64>()) { run(props::adapter_rescale_invariance(seed))?; }

    #[test]
    fn init_cda_order_free(seed in any::<u64>()) { run(props::init_cda_order_free(seed))?; }

    #[test]
    fn fairness_minimized_at_uniform(seed in any::<u64>()) { run(props::fairness_minimized_at_uniform(seed))?; }

    #[test]
    fn unweighted_ablation(seed in any::<u64>()) { run(props::unweighted_ablation(seed))?; }

    #[test]
    fn pseudo_labels_cls_rescale(seed in any::<u64>()) { run(props::pseudo_labels_cls_rescale(seed))?; }

    #[test]
    fn fixed_classifier_stationary(seed in any::<u64>()) { run(props::fixed_classifier_stationary(seed))?; }

    #[test]
    fn dataset_round_trip(seed in any::<u64>()) { run(props::dataset_round_trip(seed))?; }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>()) { run(props::checkpoint_round_trip(seed))?; }

    #[test]
    fn synth_valid_and_pure(seed in any::<u64>()) { run(props::synth_valid_and_pure(seed))?; }

    #[test]
    fn metrics_consistent(seed in any::<u64>()) { run(props::metrics_consistent(seed))?; }

    #[test]
    fn evaluate_image_order(seed in any::<u64>()) { run(props::evaluate_image_order(seed))?; }

    #[test]
    fn clip_column_is_prompt_evaluate(seed in any::<u64>()) { run(props::clip_column_is_prompt_evaluate(seed))?; }

    #[test]
    fn gradients_match_fd(seed in any::<u64>()) { run(props::gradients_match_fd(seed))?; }

    #[test]
    fn scores_match_oracles(seed in any::<u64>()) { run(props::oracle_equivalence(seed))?; }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn training_deterministic(seed in any::<u64>()) { run(props::training_deterministic(seed))?; }
}
