//! Closed forms against the brute-force oracle.

use ou_bridge::oracle::{conditioned_kernel, nystrom_eigen, DenseKernel};
use ou_bridge::{bridge_cov, bridge_mean, kl_basis, process_cov, BridgeSpec, OuParams, TimeGrid};

fn params(theta: f64, sigma0_sq: f64, big_t: f64) -> OuParams {
    OuParams::new(theta, 0.0, 1.0, sigma0_sq.sqrt(), 0.0, big_t).unwrap()
}

#[test]
fn conditioning_identity_on_50_point_grid() {
    for theta in [-1.0, 0.0, 1.0] {
        for sigma0_sq in [0.0, 0.5, 2.0] {
            let p = params(theta, sigma0_sq, 1.0);
            let grid = TimeGrid::uniform(1.0, 49).unwrap();
            let oracle = conditioned_kernel(&p, &grid).unwrap();
            let closed = DenseKernel::from_fn(grid.clone(), |s, t| bridge_cov(&p, s, t)).unwrap();
            let err = oracle.max_abs_diff(&closed.matrix);
            assert!(err < 1e-12, "theta={theta} sigma0^2={sigma0_sq}: {err:e}");
        }
    }
}

#[test]
fn kernels_are_positive_semidefinite() {
    for (theta, sigma0_sq, big_t) in [(1.0, 0.5, 1.0), (1.0, 2.0, 1.0), (-0.5, 1.0, 1.0), (0.0, 1.0, 1.0), (-0.5, 2.0, 2.0)] {
        let p = params(theta, sigma0_sq, big_t);
        let grid = TimeGrid::uniform(big_t, 120).unwrap();
        let k = DenseKernel::from_fn(grid, |s, t| bridge_cov(&p, s, t)).unwrap();
        assert_eq!(k.asymmetry(), 0.0);
        let (lo, hi) = k.eigenvalue_range();
        assert!(lo >= -1e-9 * hi, "{lo:e} {hi:e}");
    }
}

#[test]
fn bridge_mean_is_the_regression_on_the_endpoint() {
    let p = OuParams::new(0.7, -1.0, 1.3, 0.8, 0.4, 2.0).unwrap();
    let spec = BridgeSpec::new(p, 1.5).unwrap();
    let var_t = process_cov(&p, 2.0, 2.0).unwrap();
    for t in [0.0, 0.3, 1.0, 1.9, 2.0] {
        let mean_t = ou_bridge::process_mean(&p, t).unwrap();
        let mean_end = ou_bridge::process_mean(&p, 2.0).unwrap();
        let expected = mean_t + process_cov(&p, t, 2.0).unwrap() / var_t * (1.5 - mean_end);
        assert!((bridge_mean(&spec, t).unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn nystrom_converges_with_grid() {
    for (theta, sigma0_sq) in [(1.0, 0.5), (1.0, 2.0), (-0.5, 1.0), (0.0, 1.0)] {
        let p = params(theta, sigma0_sq, 1.0);
        let coarse = nystrom_eigen(&conditioned_kernel(&p, &TimeGrid::uniform(1.0, 499).unwrap()).unwrap(), 1).unwrap();
        let fine = nystrom_eigen(&conditioned_kernel(&p, &TimeGrid::uniform(1.0, 1999).unwrap()).unwrap(), 1).unwrap();
        let change = (coarse[0].lambda / fine[0].lambda - 1.0).abs();
        assert!(change < 2e-3, "theta={theta}: {change:e}");
    }
}

#[test]
fn nystrom_matches_analytic_spectrum_on_non_uniform_grid() {
    let p = params(-0.5, 2.0, 2.0);
    // denser near both ends
    let pts: Vec<f64> = (0..=800)
        .map(|i| {
            let u = i as f64 / 800.0;
            2.0 * (0.5 - 0.5 * (std::f64::consts::PI * u).cos())
        })
        .collect();
    let grid = TimeGrid::new(pts).unwrap();
    let pairs = nystrom_eigen(&conditioned_kernel(&p, &grid).unwrap(), 5).unwrap();
    let basis = kl_basis(&p, 5).unwrap();
    for (pair, mode) in pairs.iter().zip(&basis.modes) {
        assert!((pair.lambda / mode.lambda - 1.0).abs() < 5e-3);
    }
}

#[test]
fn nystrom_eigenvectors_match_eigenfunctions() {
    let p = params(1.0, 0.5, 1.0);
    let grid = TimeGrid::uniform(1.0, 999).unwrap();
    let pairs = nystrom_eigen(&conditioned_kernel(&p, &grid).unwrap(), 3).unwrap();
    let basis = kl_basis(&p, 3).unwrap();
    for (pair, mode) in pairs.iter().zip(&basis.modes) {
        let exact: Vec<f64> = grid.points().iter().map(|&t| mode.value(1.0, t)).collect();
        let dot: f64 = pair.vector.iter().zip(&exact).map(|(a, b)| a * b).sum();
        let sign = dot.signum();
        let worst = pair
            .vector
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - sign * b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-2, "mode {}: {worst:e}", mode.n);
    }
}
