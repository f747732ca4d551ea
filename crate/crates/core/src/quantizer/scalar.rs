//! Deterministic quadratic quantization of the standard normal.
//!
//! Cells are the Voronoi intervals `]a_i, b_i]` with midpoint boundaries; the
//! conditional mean of a cell is `(phi(a) - phi(b)) / (Phi(b) - Phi(a))`.
//! The stationarity system `x_i = E[Z | Z in cell_i]` is solved by Newton's
//! method on the gradient of the distortion, whose Hessian is tridiagonal,
//! with a plain Lloyd step whenever the Newton step fails to decrease the
//! distortion or breaks the ordering.

use crate::error::{Error, Result};
use crate::normal;

/// Target for `max_i |x_i - E[Z | cell_i]|`.
pub const STATIONARITY_TOL: f64 = 1e-12;

const MAX_ITER: usize = 1000;

struct Cells {
    lower: Vec<f64>,
    upper: Vec<f64>,
    mass: Vec<f64>,
    first_moment: Vec<f64>,
}

fn cells(x: &[f64]) -> Cells {
    let n = x.len();
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    for i in 0..n {
        lower.push(if i == 0 { f64::NEG_INFINITY } else { 0.5 * (x[i - 1] + x[i]) });
        upper.push(if i + 1 == n { f64::INFINITY } else { 0.5 * (x[i] + x[i + 1]) });
    }
    let mass = lower.iter().zip(&upper).map(|(&a, &b)| normal::mass(a, b)).collect();
    let first_moment = lower
        .iter()
        .zip(&upper)
        .map(|(&a, &b)| normal::pdf(a) - normal::pdf(b))
        .collect();
    Cells {
        lower,
        upper,
        mass,
        first_moment,
    }
}

fn x_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * normal::pdf(x)
    }
}

/// `E[min_i (Z - x_i)^2]` for sorted `x`.
pub fn distortion(x: &[f64]) -> f64 {
    let c = cells(x);
    (0..x.len())
        .map(|i| {
            let (p, m) = (c.mass[i], c.first_moment[i]);
            // int_a^b z^2 phi = P + a phi(a) - b phi(b)
            let second = p + x_pdf(c.lower[i]) - x_pdf(c.upper[i]);
            second - 2.0 * x[i] * m + x[i] * x[i] * p
        })
        .sum()
}

pub fn probabilities(x: &[f64]) -> Vec<f64> {
    cells(x).mass
}

pub fn centroids(x: &[f64]) -> Vec<f64> {
    let c = cells(x);
    c.first_moment.iter().zip(&c.mass).map(|(m, p)| m / p).collect()
}

fn stationarity_gap(x: &[f64]) -> f64 {
    centroids(x)
        .iter()
        .zip(x)
        .map(|(c, v)| (c - v).abs())
        .fold(0.0, f64::max)
}

/// Initial codebook at the normal quantiles of rank `(i - 1/2) / n`.
pub fn quantile_init(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| normal::quantile((i as f64 - 0.5) / n as f64))
        .collect()
}

fn newton_step(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let c = cells(x);
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        rhs[i] = -(x[i] * c.mass[i] - c.first_moment[i]);
        diag[i] = c.mass[i];
        if i + 1 < n {
            let w = normal::pdf(c.upper[i]) * (x[i + 1] - x[i]) / 4.0;
            diag[i] -= w;
            off[i] = -w;
        }
        if i > 0 {
            diag[i] -= normal::pdf(c.lower[i]) * (x[i] - x[i - 1]) / 4.0;
        }
    }
    let delta = solve_tridiagonal(&off, &diag, &off, &rhs);
    x.iter().zip(delta).map(|(v, d)| v + d).collect()
}

/// Thomas algorithm for `sub[i-1] y[i-1] + diag[i] y[i] + sup[i] y[i+1] = rhs[i]`.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let a = if i > 0 { sub[i - 1] } else { 0.0 };
        let denom = diag[i] - a * if i > 0 { c[i - 1] } else { 0.0 };
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - a * if i > 0 { d[i - 1] } else { 0.0 }) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Result of the deterministic solver.
#[derive(Debug, Clone)]
pub struct ScalarSolution {
    pub points: Vec<f64>,
    pub iterations: usize,
    pub distortion_history: Vec<f64>,
}

/// Solves the stationarity system starting from `init` (any order, distinct).
pub fn solve(init: &[f64]) -> Result<ScalarSolution> {
    if init.is_empty() {
        return Err(Error::Usage("codebook must have at least one point".into()));
    }
    let mut x = init.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    if x.windows(2).any(|w| w[0] == w[1]) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Usage("initial codebook points must be finite and distinct".into()));
    }
    let mut current = distortion(&x);
    let mut history = vec![current];
    for it in 0..MAX_ITER {
        if stationarity_gap(&x) <= STATIONARITY_TOL {
            return Ok(ScalarSolution {
                points: x,
                iterations: it,
                distortion_history: history,
            });
        }
        let candidate = newton_step(&x);
        let ordered = candidate.iter().all(|v| v.is_finite())
            && candidate.windows(2).all(|w| w[0] < w[1]);
        let next = if ordered && distortion(&candidate) <= current * (1.0 + 1e-14) {
            candidate
        } else {
            centroids(&x)
        };
        x = next;
        current = distortion(&x);
        history.push(current);
    }
    if stationarity_gap(&x) <= 1e3 * STATIONARITY_TOL {
        return Ok(ScalarSolution {
            points: x,
            iterations: MAX_ITER,
            distortion_history: history,
        });
    }
    Err(Error::Usage(format!(
        "1-D quantizer did not reach stationarity: gap {:e}",
        stationarity_gap(&x)
    )))
}

/// Plain Lloyd iterations (no Newton acceleration).
pub fn lloyd_steps(init: &[f64], steps: usize) -> Vec<f64> {
    let mut x = init.to_vec();
    x.sort_by(|a, b| a.total_cmp(b));
    for _ in 0..steps {
        x = centroids(&x);
    }
    x
}

/// Optimal standardized codebook of size `n`.
pub fn optimal(n: usize) -> Result<Vec<f64>> {
    Ok(solve(&quantile_init(n))?.points)
}
