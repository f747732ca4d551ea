//! Randomized invariants.

use proptest::prelude::*;

use ou_bridge::bridge_sim::TimeGrid;
use ou_bridge::oracle::DenseKernel;
use ou_bridge::quantizer::{lloyd, scalar, Codebook, QuantizerConfig};
use ou_bridge::{bridge_cov, bridge_mean, kl_basis, BridgeSpec, OuParams};

fn any_params() -> impl Strategy<Value = OuParams> {
    (-3.0..3.0f64, -2.0..2.0f64, 0.2..2.0f64, 0.0..1.5f64, -1.0..1.0f64, 0.3..4.0f64)
        .prop_map(|(theta, mu, sigma, sigma0, x0, big_t)| OuParams::new(theta, mu, sigma, sigma0, x0, big_t).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn covariance_is_symmetric_and_vanishes_at_horizon(p in any_params(), u in 0.0..1.0f64, v in 0.0..1.0f64) {
        let (s, t) = (u * p.horizon(), v * p.horizon());
        let a = bridge_cov(&p, s, t).unwrap();
        let b = bridge_cov(&p, t, s).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(bridge_cov(&p, s, p.horizon()).unwrap(), 0.0);
        prop_assert!(bridge_cov(&p, s, s).unwrap() >= 0.0);
        prop_assert!(a * a <= bridge_cov(&p, s, s).unwrap() * bridge_cov(&p, t, t).unwrap() * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn sampled_kernel_is_psd(p in any_params(), steps in 5usize..60) {
        let grid = TimeGrid::uniform(p.horizon(), steps).unwrap();
        let k = DenseKernel::from_fn(grid, |s, t| bridge_cov(&p, s, t)).unwrap();
        let (lo, hi) = k.eigenvalue_range();
        prop_assert!(lo >= -1e-9 * hi.max(1e-300));
    }

    #[test]
    fn mean_is_pinned(p in any_params(), z in -3.0..3.0f64) {
        let spec = BridgeSpec::new(p, z).unwrap();
        prop_assert_eq!(bridge_mean(&spec, p.horizon()).unwrap(), z);
    }

    #[test]
    fn frequencies_solve_the_equation(p in any_params()) {
        let basis = kl_basis(&p, 12).unwrap();
        let mut prev = 0.0;
        for mode in &basis.modes {
            prop_assert!(mode.omega > prev);
            prev = mode.omega;
            let r = ou_bridge::kl_solver::frequency_residual(&p, mode.omega);
            prop_assert!(r.abs() <= 1e-10 * ou_bridge::kl_solver::residual_scale(&p, mode.omega));
            prop_assert!(mode.boundary_residual(&p) < 1e-8);
        }
    }

    #[test]
    fn scalar_quantizer_scale_equivariance(c in 0.1..10.0f64, n in 2usize..12) {
        let cfg = QuantizerConfig::default();
        let base = lloyd(&[1.0], n, None, &cfg).unwrap().codebook;
        let scaled_init = Codebook::from_points(base.points.iter().map(|p| vec![c * p[0]]).collect()).unwrap();
        let scaled = lloyd(&[c * c], n, Some(&scaled_init), &cfg).unwrap().codebook;
        for (a, b) in base.points.iter().zip(&scaled.points) {
            prop_assert!((c * a[0] - b[0]).abs() < 1e-6 * c.max(1.0));
        }
        let d0 = scalar::distortion(&base.points.iter().map(|p| p[0]).collect::<Vec<_>>());
        let d1 = ou_bridge::quantizer::scalar_distortion(&scaled, c * c).unwrap();
        prop_assert!((d1 - c * c * d0).abs() < 1e-10 * c * c);
    }
}

#[test]
fn even_scalar_codebooks_are_symmetric() {
    for n in [2, 4, 6, 10, 20] {
        let x = scalar::optimal(n).unwrap();
        for i in 0..n {
            assert!((x[i] + x[n - 1 - i]).abs() < 1e-6);
        }
    }
}
