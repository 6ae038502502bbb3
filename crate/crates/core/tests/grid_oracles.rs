mod common;

use std::f64::consts::TAU;

use approx::assert_relative_eq;
use common::{circulant, dft_opnorm};
use kernel_observer::grid::{
    apply_kernel, gaussian_kernel, geodesic_distance, hs_norm, l2_inner_product, l2_norm,
    operator_norm, outer_product, CircleGrid, FieldVector, KernelMatrix, PowerIteration,
};
use proptest::prelude::*;

fn field(values: Vec<f64>) -> FieldVector {
    FieldVector::new(values).unwrap()
}

fn small_fields() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..24).prop_flat_map(|n| {
        let v = proptest::collection::vec(-3.0f64..3.0, n);
        (Just(n), v.clone(), v.clone(), v)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn outer_product_hs_norm_is_product_of_norms((n, v, w, _) in small_fields()) {
        let g = CircleGrid::unit_circle(n).unwrap();
        let (v, w) = (field(v), field(w));
        let hs = hs_norm(&outer_product(&v, &w).unwrap(), &g).unwrap();
        let expected = l2_norm(&v, &g).unwrap() * l2_norm(&w, &g).unwrap();
        prop_assert!((hs - expected).abs() <= 1e-12 * expected.max(1.0));
    }

    #[test]
    fn applying_an_outer_product_projects_onto_its_right_factor((n, v, w, z) in small_fields()) {
        let g = CircleGrid::unit_circle(n).unwrap();
        let (v, w, z) = (field(v), field(w), field(z));
        let out = apply_kernel(&outer_product(&v, &w).unwrap(), &z, &g).unwrap();
        let ip = l2_inner_product(&w, &z, &g).unwrap();
        for (o, vi) in out.values().iter().zip(v.values()) {
            prop_assert!((o - vi * ip).abs() <= 1e-12 * (1.0 + (vi * ip).abs()));
        }
    }

    #[test]
    fn hs_norm_dominates_operator_norm(
        (n, entries) in (2usize..16).prop_flat_map(|n| (Just(n), proptest::collection::vec(-2.0f64..2.0, n * n)))
    ) {
        let g = CircleGrid::unit_circle(n).unwrap();
        let w = KernelMatrix::new(n, entries).unwrap();
        let hs = hs_norm(&w, &g).unwrap();
        let op = operator_norm(&w, &g, PowerIteration::default()).unwrap();
        prop_assert!(op <= hs * (1.0 + 1e-10), "op {op} > hs {hs}");
        prop_assert!((hs - hs_norm(&w.transpose(), &g).unwrap()).abs() <= 1e-14 * hs);
    }

    #[test]
    fn circulant_operator_norm_matches_dft(
        row in (2usize..=64).prop_flat_map(|n| proptest::collection::vec(-1.0f64..1.0, n))
    ) {
        let n = row.len();
        let g = CircleGrid::unit_circle(n).unwrap();
        let op = operator_norm(&circulant(&row), &g, PowerIteration::default()).unwrap();
        let oracle = dft_opnorm(&row, g.spacing());
        prop_assert!((op - oracle).abs() <= 1e-6 * oracle.max(1e-12), "n {n}: {op} vs {oracle}");
    }

    #[test]
    fn gaussian_operator_norm_matches_dft_even_for_flat_spectra(
        n in 2usize..=64, sigma in 0.01f64..500.0, omega in -3.0f64..3.0
    ) {
        let g = CircleGrid::unit_circle(n).unwrap();
        let w = gaussian_kernel(&g, sigma, omega).unwrap();
        let op = operator_norm(&w, &g, PowerIteration::default()).unwrap();
        let oracle = dft_opnorm(w.row(0), g.spacing());
        prop_assert!((op - oracle).abs() <= 1e-6 * oracle.max(1e-12), "n {n}: {op} vs {oracle}");
    }

    #[test]
    fn gaussian_kernel_is_normalized_symmetric_circulant(
        n in 2usize..80, sigma in 0.01f64..200.0, omega in -10.0f64..10.0
    ) {
        let g = CircleGrid::unit_circle(n).unwrap();
        let w = gaussian_kernel(&g, sigma, omega).unwrap();
        prop_assert!((hs_norm(&w, &g).unwrap() - omega.abs()).abs() <= 1e-12 * omega.abs().max(1.0));
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(w.get(i, j), w.get(j, i));
                prop_assert_eq!(w.get(i, j), w.get((i + 1) % n, (j + 1) % n));
            }
        }
    }

    #[test]
    fn geodesic_distance_is_a_symmetric_bounded_metric(
        a in 0.0f64..TAU, b in 0.0f64..TAU, c in 0.0f64..TAU
    ) {
        let d = |x, y| geodesic_distance(x, y, TAU).unwrap();
        prop_assert_eq!(d(a, b), d(b, a));
        prop_assert!(d(a, b) <= TAU / 2.0);
        prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
    }
}

#[test]
fn table1_kernel_norms_match_dft_oracle() {
    let g = CircleGrid::unit_circle(126).unwrap();
    for omega in [0.1, 2.0, -2.0] {
        let w = gaussian_kernel(&g, 60.0, omega).unwrap();
        let op = operator_norm(&w, &g, PowerIteration::default()).unwrap();
        let oracle = dft_opnorm(w.row(0), g.spacing());
        assert_relative_eq!(op, oracle, max_relative = 1e-7);
        assert!(op > 0.0 && op < 2.0);
    }
}

#[test]
fn random_gaussian_normalization_examples() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let g = CircleGrid::unit_circle(126).unwrap();
    for _ in 0..20 {
        let sigma = rng.random_range(0.1..100.0);
        let omega = rng.random_range(-5.0..5.0);
        let w = gaussian_kernel(&g, sigma, omega).unwrap();
        assert_relative_eq!(
            hs_norm(&w, &g).unwrap(),
            f64::abs(omega),
            max_relative = 1e-12
        );
    }
}

#[test]
fn operator_norm_non_convergence_reports_iterates() {
    let g = CircleGrid::unit_circle(32).unwrap();
    let w = gaussian_kernel(&g, 1.0, 1.0).unwrap();
    let err = operator_norm(
        &w,
        &g,
        PowerIteration {
            tol: 1e-300,
            max_iterations: 5,
        },
    )
    .unwrap_err();
    assert!(err.is_numeric(), "{err}");
}
