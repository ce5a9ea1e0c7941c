mod common;

use gcorn::bounds::{matrix_norm, NormKind};
use gcorn::ortho::{bjorck_project, bjorck_trace, ortho_defect, spectral_norm, OrthoConfig};
use gcorn::rng::substream;
use proptest::prelude::*;
use rand::Rng as _;

use common::*;

fn no_prescale(order: usize, iterations: usize) -> OrthoConfig {
    OrthoConfig {
        order,
        iterations,
        prescale: false,
        ..OrthoConfig::default()
    }
}

#[test]
fn spectral_norm_matches_svd() {
    for case in 0..20u64 {
        let mut rng = substream(21, case, 0);
        let w = random_matrix(5, 4, 2.0, &mut rng);
        let svd = singular_values(&w)[0];
        assert!((spectral_norm(&w, 1000, 1e-14) - svd).abs() <= 1e-6);
        assert!((matrix_norm(&w, NormKind::Two) - svd).abs() <= 1e-6);
    }
}

#[test]
fn defect_matches_direct_formula() {
    let mut rng = substream(22, 0, 0);
    let w = random_matrix(6, 3, 1.0, &mut rng);
    let g = to_na(&w).transpose() * to_na(&w) - nalgebra::DMatrix::<f64>::identity(3, 3);
    assert!((ortho_defect(&w) - g.norm()).abs() <= 1e-12);
}

#[test]
fn converges_below_tolerance_when_precondition_holds() {
    for case in 0..50u64 {
        let mut rng = substream(23, case, 0);
        let n = rng.random_range(2..=6);
        let sv: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.35)).collect();
        let w = with_singular_values(n, n, &sv, &mut rng);
        let out = bjorck_project(&w, &no_prescale(1, 30)).unwrap();
        assert!(ortho_defect(&out) <= 1e-6);
        let top = singular_values(&out)[0];
        assert!((top - 1.0).abs() <= 1e-4, "spectral norm {top}");
    }
}

#[test]
fn higher_order_is_at_least_as_precise() {
    for case in 0..50u64 {
        let mut rng = substream(24, case, 0);
        let sv: Vec<f64> = (0..4).map(|_| rng.random_range(0.2..1.3)).collect();
        let w = with_singular_values(5, 4, &sv, &mut rng);
        for k in [1, 2, 3, 5] {
            let d1 = *bjorck_trace(&w, &no_prescale(1, k)).unwrap().defects.last().unwrap();
            let d2 = *bjorck_trace(&w, &no_prescale(2, k)).unwrap().defects.last().unwrap();
            assert!(d2 <= d1 + 1e-12, "k={k}: order 2 {d2:e} vs order 1 {d1:e}");
        }
    }
}

#[test]
fn prescaled_projection_matches_polar_factor_for_large_inputs() {
    for case in 0..20u64 {
        let mut rng = substream(25, case, 0);
        let sv: Vec<f64> = (0..3).map(|_| rng.random_range(1.0..6.0)).collect();
        let w = with_singular_values(3, 3, &sv, &mut rng);
        let cfg = OrthoConfig {
            iterations: 60,
            power_iters: 500,
            power_tol: 1e-14,
            ..OrthoConfig::default()
        };
        let out = bjorck_project(&w, &cfg).unwrap();
        assert!(out.sub(&polar_factor(&w)).unwrap().frobenius_norm() <= 1e-6);
    }
}

proptest! {
    #[test]
    fn projection_preserves_shape_and_input(rows in 1usize..7, cols in 1usize..7, seed in 0u64..1000) {
        let mut rng = substream(26, seed, 0);
        let w = random_matrix(rows, cols, 1.0, &mut rng);
        let before = w.clone();
        let out = bjorck_project(&w, &OrthoConfig::default()).unwrap();
        prop_assert_eq!(out.shape(), (rows, cols));
        prop_assert_eq!(w, before);
        prop_assert!(out.is_finite());
    }

    #[test]
    fn defect_never_increases_inside_the_convergence_region(seed in 0u64..1000) {
        let mut rng = substream(27, seed, 0);
        let sv: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.4)).collect();
        let w = with_singular_values(4, 3, &sv, &mut rng);
        let trace = bjorck_trace(&w, &no_prescale(1, 20)).unwrap();
        prop_assert!(trace.defects.windows(2).all(|d| d[1] <= d[0] + 1e-12));
    }
}
