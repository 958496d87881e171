use grw_core::io::{decode_density, encode_density};
use grw_core::master::{self, DensityField};
use grw_core::model::GrwParams;
use grw_core::scenarios::two_gaussian_superposition;
use grw_core::{ComplexMatrix, GridSpec, C64};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6, Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE), Just(1e-300)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn snapshot_round_trip(n in 8usize..20, lo in -50.0..0.0f64, width in 0.5..40.0f64, time in 0.0..1e3f64,
                           entries in proptest::collection::vec((finite(), finite()), 400)) {
        let grid = GridSpec::new(n, lo, lo + width).unwrap();
        let rho = ComplexMatrix::from_fn(n, n, |(i, j)| {
            let (re, im) = entries[(i * n + j) % entries.len()];
            C64::new(re, im)
        });
        let f = DensityField::new(grid, rho, time).unwrap();
        let bytes = encode_density(&f);
        prop_assert_eq!(bytes.len(), 64 + 16 * n * n);
        let back = decode_density(&bytes).unwrap();
        prop_assert_eq!(encode_density(&back), bytes);
    }

    #[test]
    fn weight_validation_matches_eigenvalues(a11 in -0.2..1.0f64, a22 in -0.2..1.0f64, a12 in -1.0..1.0f64) {
        let grid = GridSpec::symmetric(64, 8.0).unwrap();
        let min_eig = 0.5 * (a11 + a22) - (0.25 * (a11 - a22).powi(2) + a12 * a12).sqrt();
        let built = two_gaussian_superposition(&grid, -3.0, 3.0, 0.6, [[a11, a12], [a12, a22]]);
        if min_eig < -1e-8 {
            prop_assert!(built.is_err());
        } else if a11 + a22 > 1e-3 {
            let f = built.unwrap();
            prop_assert!((f.trace() - 1.0).abs() < 1e-12);
            prop_assert!(f.min_eigenvalue().unwrap() > -1e-8);
        }
    }

    #[test]
    fn master_step_keeps_trace_and_hermiticity(lambda in 0.0..5.0f64, r_c in 0.3..3.0f64, mass in 0.5..5.0f64) {
        let grid = GridSpec::symmetric(40, 8.0).unwrap();
        let f = two_gaussian_superposition(&grid, -2.0, 2.0, 1.0, [[0.3, 0.2], [0.2, 0.7]]).unwrap();
        let params = GrwParams { lambda, r_c, mass, ..GrwParams::default() };
        let dt = 0.5 * master::stability_bound(&grid, &params);
        let g = master::step_rk4(&f, &params, dt).unwrap();
        prop_assert!((g.trace() - 1.0).abs() < 1e-12);
        prop_assert!(g.hermiticity_residue() < 1e-14);
        prop_assert!(g.purity() <= f.purity() + 1e-12);
    }
}
