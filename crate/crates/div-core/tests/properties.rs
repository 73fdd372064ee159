//! Property-based checks of the library's structural invariants.

use div_core::model::{fit_div, lower_quantile_sorted, DivModel, FitConfig, NoiseConfig};
use div_core::simlab::Scenario;
use div_core::{energy_distance, energy_loss_parts};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-50.0..50.0f64, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

/// A small fitted model shared across properties (fitting is the slow part).
fn tiny_model() -> &'static DivModel {
    static MODEL: OnceLock<DivModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let data = Scenario::ContLinearContZ.generate(80, 5).unwrap();
        let config = FitConfig {
            epochs: 50,
            hidden_layers: 2,
            hidden_width: 8,
            noise: NoiseConfig {
                dim_eps_x: 3,
                dim_eps_y: 3,
                dim_eps_h: 3,
            },
            seed: 5,
            ..FitConfig::default()
        };
        fit_div(&data.dataset, &config).unwrap().0
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_loss_decomposition_identity(
        obs in matrix(6, 2),
        a in matrix(6, 2),
        b in matrix(6, 2),
    ) {
        let parts = energy_loss_parts(obs.view(), a.view(), b.view()).unwrap();
        prop_assert_eq!(parts.loss, parts.s1 - 0.5 * parts.s2);
    }

    #[test]
    fn energy_distance_symmetric_and_nonnegative(
        a in matrix(5, 2),
        b in matrix(7, 2),
    ) {
        let dab = energy_distance(a.view(), b.view()).unwrap();
        let dba = energy_distance(b.view(), a.view()).unwrap();
        prop_assert!((dab - dba).abs() < 1e-10);
        prop_assert!(dab > -1e-12);
        let daa = energy_distance(a.view(), a.view()).unwrap();
        prop_assert!(daa.abs() < 1e-12);
    }

    #[test]
    fn sorted_quantile_is_monotone_and_hits_extremes(
        mut values in proptest::collection::vec(-1e6..1e6f64, 1..40),
        a1 in 0.0..1.0f64,
        a2 in 0.0..1.0f64,
    ) {
        values.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (lo, hi) = (a1.min(a2), a1.max(a2));
        prop_assert!(lower_quantile_sorted(&values, lo) <= lower_quantile_sorted(&values, hi));
        prop_assert_eq!(lower_quantile_sorted(&values, 0.0), values[0]);
        prop_assert_eq!(lower_quantile_sorted(&values, 1.0), *values.last().unwrap());
    }

    #[test]
    fn interventional_quantiles_monotone_in_alpha(
        x in -5.0..5.0f64,
        seed in 0u64..1000,
    ) {
        let model = tiny_model();
        let alphas = [0.05, 0.25, 0.5, 0.75, 0.95];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = model
            .interventional_quantile(ndarray::array![x].view(), None, &alphas, 200, &mut rng)
            .unwrap();
        for i in 1..alphas.len() {
            prop_assert!(q[[i, 0]] >= q[[i - 1, 0]]);
        }
    }

    #[test]
    fn interventional_sampling_deterministic_per_seed(
        x in -5.0..5.0f64,
        seed in 0u64..1000,
    ) {
        let model = tiny_model();
        let draw = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            model
                .sample_interventional(ndarray::array![x].view(), None, 16, &mut rng)
                .unwrap()
        };
        prop_assert_eq!(draw(seed), draw(seed));
    }

    #[test]
    fn qte_of_identical_arms_is_zero(
        x in -5.0..5.0f64,
        seed in 0u64..1000,
    ) {
        let model = tiny_model();
        let xv = ndarray::array![x];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qte = model
            .qte(xv.view(), xv.view(), None, &[0.1, 0.5, 0.9], 100, &mut rng)
            .unwrap();
        prop_assert!(qte.iter().all(|&v| v == 0.0));
    }
}
