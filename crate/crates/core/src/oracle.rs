//! Brute-force reference computations.
//!
//! Everything here is built from the unconditioned process covariance or from
//! raw samples, never from the closed-form bridge covariance, so agreement
//! with [`crate::ou_model`] and [`crate::kl_solver`] is an independent check.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bridge_sim::{BridgePath, TimeGrid};
use crate::error::{Error, Result};
use crate::noise::{domain, stream_rng};
use crate::ou_model::{process_cov, OuParams};

/// Largest grid accepted by [`conditioned_kernel`].
pub const MAX_KERNEL_POINTS: usize = 4000;

/// A covariance function sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseKernel {
    pub grid: TimeGrid,
    pub matrix: DMatrix<f64>,
}

impl DenseKernel {
    pub fn new(grid: TimeGrid, matrix: DMatrix<f64>) -> Result<Self> {
        let n = grid.len();
        if matrix.shape() != (n, n) {
            return Err(Error::Usage(format!(
                "kernel matrix is {:?}, grid has {n} points",
                matrix.shape()
            )));
        }
        Ok(Self { grid, matrix })
    }

    /// Samples `k(s, t)` at every pair of grid points.
    pub fn from_fn(grid: TimeGrid, mut k: impl FnMut(f64, f64) -> Result<f64>) -> Result<Self> {
        let pts = grid.points();
        let n = pts.len();
        let mut matrix = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = k(pts[i], pts[j])?;
                matrix[(i, j)] = v;
                matrix[(j, i)] = v;
            }
        }
        Self::new(grid, matrix)
    }

    pub fn max_abs_diff(&self, other: &DMatrix<f64>) -> f64 {
        (&self.matrix - other).amax()
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    /// `(smallest, largest)` eigenvalue of the raw matrix.
    pub fn eigenvalue_range(&self) -> (f64, f64) {
        let ev = self.matrix.clone().symmetric_eigenvalues();
        (ev.min(), ev.max())
    }

    /// Writes the matrix as CSV; the header row and first column hold the grid.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let pts = self.grid.points();
        write!(w, "t")?;
        for t in pts {
            write!(w, ",{t}")?;
        }
        writeln!(w)?;
        for (i, s) in pts.iter().enumerate() {
            write!(w, "{s}")?;
            for j in 0..pts.len() {
                write!(w, ",{}", self.matrix[(i, j)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Bridge covariance by Gaussian conditioning of the process kernel on `X_T`:
/// `C - c_T c_T^T / Var(X_T)`.
pub fn conditioned_kernel(params: &OuParams, grid: &TimeGrid) -> Result<DenseKernel> {
    if grid.len() > MAX_KERNEL_POINTS {
        return Err(Error::Usage(format!(
            "kernel grid limited to {MAX_KERNEL_POINTS} points, got {}",
            grid.len()
        )));
    }
    let big_t = params.horizon();
    if grid.horizon() > big_t {
        return Err(Error::Domain {
            t: grid.horizon(),
            horizon: big_t,
        });
    }
    let c_t: Vec<f64> = grid
        .points()
        .iter()
        .map(|&t| process_cov(params, t, big_t))
        .collect::<Result<_>>()?;
    let var_t = process_cov(params, big_t, big_t)?;
    let pts = grid.points();
    let n = pts.len();
    let mut matrix = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = process_cov(params, pts[i], pts[j])? - c_t[i] * c_t[j] / var_t;
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    DenseKernel::new(grid.clone(), matrix)
}

/// Trapezoid weights on a possibly non-uniform grid.
pub fn trapezoid_weights(grid: &TimeGrid) -> Vec<f64> {
    let p = grid.points();
    let n = p.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { p[i] - p[i - 1] } else { 0.0 };
            let right = if i + 1 < n { p[i + 1] - p[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// One discrete eigenpair; `vector` holds the eigenfunction on the grid,
/// normalized so that `sum_i w_i v_i^2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NystromPair {
    pub lambda: f64,
    pub vector: Vec<f64>,
}

const EXTRA_BLOCK: usize = 16;
const MAX_SUBSPACE_ITER: usize = 1000;
const RESIDUAL_RTOL: f64 = 1e-12;

/// Top `m` eigenpairs of the integral operator with the sampled kernel,
/// discretized with trapezoid weights.
///
/// The symmetric matrix `W^{1/2} C W^{1/2}` is reduced by block subspace
/// iteration with Rayleigh-Ritz extraction, which only ever factors a block of
/// `m + 16` columns.
pub fn nystrom_eigen(kernel: &DenseKernel, m: usize) -> Result<Vec<NystromPair>> {
    let n = kernel.grid.len();
    if m == 0 || m > n {
        return Err(Error::Usage(format!("need 1 <= m <= {n}, got m = {m}")));
    }
    let w = trapezoid_weights(&kernel.grid);
    let sqrt_w = DVector::from_iterator(n, w.iter().map(|v| v.sqrt()));
    let mut a = kernel.matrix.clone();
    for j in 0..n {
        for i in 0..n {
            a[(i, j)] *= sqrt_w[i] * sqrt_w[j];
        }
    }
    let (values, vectors) = top_eigenpairs(&a, m)?;
    Ok(values
        .into_iter()
        .zip(vectors.column_iter())
        .map(|(lambda, v)| {
            let mut f: Vec<f64> = v
                .iter()
                .zip(sqrt_w.iter())
                .map(|(x, s)| if *s > 0.0 { x / s } else { 0.0 })
                .collect();
            let norm: f64 = f.iter().zip(&w).map(|(x, wi)| wi * x * x).sum::<f64>().sqrt();
            // fixed sign: the largest entry in magnitude is positive
            let pivot = f.iter().copied().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            f.iter_mut().for_each(|x| *x *= sign / norm);
            NystromPair { lambda, vector: f }
        })
        .collect())
}

/// Largest `m` eigenpairs of a symmetric matrix, eigenvalues decreasing.
fn top_eigenpairs(a: &DMatrix<f64>, m: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let p = (m + EXTRA_BLOCK).min(n);
    if p == n {
        return Ok(sorted_ritz(SymmetricEigen::new(a.clone()), m));
    }
    let mut rng = stream_rng(0, domain::ORACLE, 0);
    let start = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut q = start.qr().q();
    let mut worst = f64::INFINITY;
    for _ in 0..MAX_SUBSPACE_ITER {
        let z = a * &q;
        let h = q.transpose() * &z;
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let s = DMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let ritz = &q * &s;
        let image = &z * &s;
        let scale = theta[0].abs().max(f64::MIN_POSITIVE);
        worst = (0..m)
            .map(|j| (image.column(j) - ritz.column(j) * theta[j]).norm())
            .fold(0.0, f64::max)
            / scale;
        if worst <= RESIDUAL_RTOL {
            return Ok((theta[..m].to_vec(), ritz.columns(0, m).into_owned()));
        }
        q = image.qr().q();
    }
    Err(Error::Eigensolver {
        iterations: MAX_SUBSPACE_ITER,
        residual: worst,
    })
}

fn sorted_ritz(eig: SymmetricEigen<f64, nalgebra::Dyn>, m: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order[..m].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, m, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Streaming mean and covariance of fixed-length vectors.
#[derive(Debug, Clone)]
pub struct CovAccumulator {
    count: usize,
    mean: Vec<f64>,
    /// Running sum of centered cross products (Welford).
    comoment: DMatrix<f64>,
}

impl CovAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            comoment: DMatrix::zeros(dim, dim),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len(), "sample dimension");
        self.count += 1;
        let c = self.count as f64;
        let before: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&before) {
            *m += d / c;
        }
        let after: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        let dim = x.len();
        for j in 0..dim {
            for i in j..dim {
                self.comoment[(i, j)] += before[i] * after[j];
            }
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample covariance; `None` with fewer than two samples.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        if self.count < 2 {
            return None;
        }
        let mut cov = self.comoment.clone() / (self.count - 1) as f64;
        cov.fill_upper_triangle_with_lower_triangle();
        Some(cov)
    }
}

/// Sample covariance and sample mean of paths sharing one grid.
pub fn empirical_cov(paths: &[BridgePath<'_>]) -> Result<(DenseKernel, Vec<f64>)> {
    let Some(first) = paths.first() else {
        return Err(Error::Usage("empirical covariance needs at least 2 paths".into()));
    };
    if paths.len() < 2 {
        return Err(Error::Usage("empirical covariance needs at least 2 paths".into()));
    }
    if paths.iter().any(|p| p.grid != first.grid || p.values.len() != first.grid.len()) {
        return Err(Error::Usage("paths live on different grids".into()));
    }
    let mut acc = CovAccumulator::new(first.grid.len());
    for p in paths {
        acc.push(&p.values);
    }
    let cov = acc.covariance().expect("at least two samples");
    Ok((DenseKernel::new(first.grid.clone(), cov)?, acc.mean().to_vec()))
}
