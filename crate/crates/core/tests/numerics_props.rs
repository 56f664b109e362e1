//! Randomized properties of the linear-algebra kernel on matrices up to
//! 200 x 50 (and their transposes).

mod common;

use common::*;
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![
        3 => (1usize..=200, 1usize..=50),
        1 => (1usize..=50, 1usize..=200),
    ]
}

fn cfg() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn svd_reconstructs_and_matches_jacobi((n, m) in dims(), seed in any::<u64>()) {
        let h = random_matrix(n, m, seed);
        prop_assert_eq!(check_svd_reconstruction(&h), Ok(()));
    }

    #[test]
    fn svd_of_rank_deficient_input((n, m) in dims(), r in 1usize..=5, seed in any::<u64>()) {
        let h = random_low_rank(n, m, r, seed);
        prop_assert_eq!(check_svd_reconstruction(&h), Ok(()));
    }

    #[test]
    fn penrose_full_rank((n, m) in dims(), seed in any::<u64>()) {
        prop_assert_eq!(check_penrose(&random_matrix(n, m, seed)), Ok(()));
    }

    #[test]
    fn penrose_rank_deficient((n, m) in dims(), r in 1usize..=8, seed in any::<u64>()) {
        prop_assert_eq!(check_penrose(&random_low_rank(n, m, r, seed)), Ok(()));
    }

    #[test]
    fn tikhonov_matches_normal_equations(
        (n, m) in dims(),
        q in 1usize..=3,
        log_scale in -6.0f64..0.0,
        seed in any::<u64>(),
    ) {
        let h = random_matrix(n, m, seed);
        let t = random_matrix(n, q, seed.wrapping_add(1));
        prop_assert_eq!(check_tikhonov_oracle(&h, &t, log_scale), Ok(()));
    }

    #[test]
    fn filter_rises_then_falls_and_is_bounded(
        log_lambda in -14.0f64..2.0,
        sigmas in prop::collection::vec(0.0f64..1e3, 1..60),
    ) {
        let lambda = 10f64.powf(log_lambda);
        let mut s = sigmas;
        s.push(lambda.sqrt());
        prop_assert_eq!(check_filter_shape(lambda, &s), Ok(()));
    }

    #[test]
    fn output_weights_shrink_with_lambda((n, m) in dims(), seed in any::<u64>()) {
        let h = random_matrix(n, m, seed);
        let t = random_matrix(n, 2, !seed);
        prop_assert_eq!(check_shrinkage(&h, &t), Ok(()));
    }

    #[test]
    fn truncation_policies_agree((n, m) in dims(), r in 1usize..=50, seed in any::<u64>()) {
        let h = random_low_rank(n, m, r, seed);
        let t = random_matrix(n, 1, seed ^ 7);
        prop_assert_eq!(check_truncation_consistency(&h, &t), Ok(()));
    }
}

/// A rank-one triangle that a too-tight SVD tolerance used to mis-deflate.
#[test]
fn rank_one_regression() {
    let h = random_low_rank(14, 4, 1, 13808459979039879452);
    assert_eq!(check_svd_reconstruction(&h), Ok(()));
    assert_eq!(check_penrose(&h), Ok(()));
}
