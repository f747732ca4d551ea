//! Sample paths of the OU bridge.
//!
//! [`EulerBridge`] integrates the bridge SDE in the enlarged filtration,
//!
//! ```text
//! dX_t = (-theta coth(theta (T - t)) X_t + theta z / sinh(theta (T - t))) dt + sigma dW_t,
//! ```
//!
//! for a process started at 0 with zero level. A random start or a nonzero
//! level is handled by [`reduce_random_start`]: draw `X_0` from its law given
//! `X_T = z`, simulate the centered bridge to the shifted endpoint, and add
//! back the deterministic part. [`ExactSampler`] draws from the joint
//! Gaussian law on the grid and serves as the reference sampler.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ou_model::{bridge_cov, bridge_mean, BridgeSpec, OuParams};

/// Strictly increasing times `0 = t_0 < ... < t_n = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Usage("a time grid needs at least 2 points".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::Usage(format!("time grid must start at 0, got {}", points[0])));
        }
        if points.iter().any(|t| !t.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Usage("time grid must be finite and strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// `steps` equal intervals on `[0, horizon]`; the last point is `horizon` exactly.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) {
            return Err(Error::Usage(format!(
                "uniform grid needs steps >= 1 and T > 0, got {steps} and {horizon}"
            )));
        }
        let mut points: Vec<f64> = (0..=steps)
            .map(|i| horizon * i as f64 / steps as f64)
            .collect();
        points[steps] = horizon;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    fn check_horizon(&self, params: &OuParams) -> Result<()> {
        if self.horizon() != params.horizon() {
            return Err(Error::Usage(format!(
                "grid ends at {} but T = {}",
                self.horizon(),
                params.horizon()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        TimeGrid::new(points)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.points
    }
}

/// One simulated path; borrows the grid it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgePath<'g> {
    pub grid: &'g TimeGrid,
    pub values: Vec<f64>,
}

impl BridgePath<'_> {
    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// `(|theta| coth(|theta| tau), |theta| / sinh(|theta| tau))` for `tau > 0`.
///
/// Both are even in `theta`, which is why the drift only sees `|theta|`.
/// Evaluated through `e^{-|theta| tau}` and `expm1` so neither overflows nor
/// cancels; at `theta = 0` the pair is `(1/tau, 1/tau)`.
fn drift_coefficients(params: &OuParams, tau: f64) -> (f64, f64) {
    if params.is_driftless() {
        return (tau.recip(), tau.recip());
    }
    let k = params.theta().abs();
    let u = k * tau;
    let denom = -(-2.0 * u).exp_m1();
    (k * (1.0 + (-2.0 * u).exp()) / denom, 2.0 * k * (-u).exp() / denom)
}

/// Drift of the centered bridge at state `x` and time `t < T`.
pub fn bridge_drift(spec: &BridgeSpec, x: f64, t: f64) -> Result<f64> {
    let p = &spec.params;
    if !(0.0..p.horizon()).contains(&t) {
        return Err(Error::Domain {
            t,
            horizon: p.horizon(),
        });
    }
    let (pull, push) = drift_coefficients(p, p.horizon() - t);
    Ok(-pull * x + push * spec.z)
}

/// Euler-Maruyama discretization of the centered bridge on a fixed grid.
///
/// The scheme integrates up to the second-to-last grid point and sets the
/// final value to `z`; the drift is singular at `T`.
#[derive(Debug, Clone)]
pub struct EulerBridge<'g> {
    spec: BridgeSpec,
    grid: &'g TimeGrid,
    pull: Vec<f64>,
    push: Vec<f64>,
    dt: Vec<f64>,
}

impl<'g> EulerBridge<'g> {
    pub fn new(spec: &BridgeSpec, grid: &'g TimeGrid) -> Result<Self> {
        if !spec.is_centered() {
            return Err(Error::Usage(
                "the Euler scheme runs the centered bridge (x0 = mu = sigma0 = 0); \
                 use simulate_bridge for general parameters"
                    .into(),
            ));
        }
        grid.check_horizon(&spec.params)?;
        let pts = grid.points();
        let horizon = spec.params.horizon();
        let steps = pts.len() - 2;
        let (mut pull, mut push, mut dt) = (
            Vec::with_capacity(steps),
            Vec::with_capacity(steps),
            Vec::with_capacity(steps),
        );
        for i in 0..steps {
            let (a, b) = drift_coefficients(&spec.params, horizon - pts[i]);
            let h = pts[i + 1] - pts[i];
            if a * h >= 1.0 {
                return Err(Error::Stability {
                    step: i,
                    t: pts[i],
                    ratio: a * h,
                });
            }
            pull.push(a);
            push.push(b);
            dt.push(h);
        }
        Ok(Self {
            spec: *spec,
            grid,
            pull,
            push,
            dt,
        })
    }

    /// Number of normal draws consumed per path.
    pub fn draws_per_path(&self) -> usize {
        self.dt.len()
    }

    pub fn simulate<I: Iterator<Item = f64>>(&self, noise: &mut I) -> Result<BridgePath<'g>> {
        self.simulate_to(self.spec.z, noise)
    }

    /// Simulates the same centered bridge pinned at `z` instead.
    pub fn simulate_to<I: Iterator<Item = f64>>(&self, z: f64, noise: &mut I) -> Result<BridgePath<'g>> {
        let sigma = self.spec.params.sigma();
        let mut values = Vec::with_capacity(self.grid.len());
        let mut x = 0.0;
        values.push(x);
        for (i, ((&a, &b), &h)) in self.pull.iter().zip(&self.push).zip(&self.dt).enumerate() {
            let xi = noise.next().ok_or(Error::NoiseExhausted(i))?;
            x += (b * z - a * x) * h + sigma * h.sqrt() * xi;
            values.push(x);
        }
        values.push(z);
        Ok(BridgePath {
            grid: self.grid,
            values,
        })
    }
}

pub fn simulate_euler<'g, I: Iterator<Item = f64>>(
    spec: &BridgeSpec,
    grid: &'g TimeGrid,
    noise: &mut I,
) -> Result<BridgePath<'g>> {
    EulerBridge::new(spec, grid)?.simulate(noise)
}

/// Draw of `X_0` given `X_T = z`, and the endpoint of the remaining centered bridge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomStart {
    pub x0_draw: f64,
    pub z_centered: f64,
}

pub fn reduce_random_start(spec: &BridgeSpec, u: f64) -> RandomStart {
    let p = &spec.params;
    let mean = bridge_mean(spec, 0.0).expect("0 is inside [0, T]");
    let var = bridge_cov(p, 0.0, 0.0).expect("0 is inside [0, T]").max(0.0);
    let x0_draw = mean + var.sqrt() * u;
    RandomStart {
        x0_draw,
        z_centered: spec.z - p.deterministic_part(x0_draw, p.horizon()),
    }
}

impl RandomStart {
    /// The centered bridge problem left after drawing the start.
    pub fn centered_spec(&self, params: &OuParams) -> BridgeSpec {
        let centered = OuParams::centered(params.theta(), params.sigma(), params.horizon())
            .expect("derived from valid parameters");
        BridgeSpec {
            params: centered,
            z: self.z_centered,
        }
    }

    /// Adds the deterministic part back onto a centered path and pins the end at `z`.
    pub fn compose<'g>(&self, spec: &BridgeSpec, mut centered: BridgePath<'g>) -> BridgePath<'g> {
        let p = &spec.params;
        for (v, &t) in centered.values.iter_mut().zip(centered.grid.points()) {
            *v += p.deterministic_part(self.x0_draw, t);
        }
        if let Some(last) = centered.values.last_mut() {
            *last = spec.z;
        }
        centered
    }
}

/// Composite simulator for arbitrary parameters: random-start reduction
/// followed by the Euler scheme. Consumes one draw for the start plus
/// [`EulerBridge::draws_per_path`] per path.
#[derive(Debug, Clone)]
pub struct GeneralEulerBridge<'g> {
    spec: BridgeSpec,
    centered: EulerBridge<'g>,
}

impl<'g> GeneralEulerBridge<'g> {
    pub fn new(spec: &BridgeSpec, grid: &'g TimeGrid) -> Result<Self> {
        let p = &spec.params;
        let params = OuParams::centered(p.theta(), p.sigma(), p.horizon())?;
        // z enters neither the coefficients nor the stability check
        let centered = EulerBridge::new(&BridgeSpec { params, z: 0.0 }, grid)?;
        Ok(Self {
            spec: *spec,
            centered,
        })
    }

    pub fn simulate<I: Iterator<Item = f64>>(&self, noise: &mut I) -> Result<BridgePath<'g>> {
        let u = noise.next().ok_or(Error::NoiseExhausted(0))?;
        let start = reduce_random_start(&self.spec, u);
        let path = self.centered.simulate_to(start.z_centered, noise)?;
        Ok(start.compose(&self.spec, path))
    }
}

/// Exact sampler from the Gaussian law of the bridge on a grid.
#[derive(Debug, Clone)]
pub struct ExactSampler<'g> {
    grid: &'g TimeGrid,
    mean: Vec<f64>,
    /// Lower-triangular factor of the covariance on `t_0..t_{n-1}`.
    factor: DMatrix<f64>,
    z: f64,
}

/// Largest grid handled by the dense factorization.
pub const EXACT_MAX_POINTS: usize = 2000;

/// Relative tolerance for negative pivots in the semidefinite factorization.
pub const INDEFINITE_RTOL: f64 = 1e-9;

impl<'g> ExactSampler<'g> {
    pub fn new(spec: &BridgeSpec, grid: &'g TimeGrid) -> Result<Self> {
        let p = &spec.params;
        grid.check_horizon(p)?;
        if grid.len() > EXACT_MAX_POINTS {
            return Err(Error::Usage(format!(
                "exact sampler supports at most {EXACT_MAX_POINTS} grid points, got {}",
                grid.len()
            )));
        }
        let pts = &grid.points()[..grid.len() - 1];
        let n = pts.len();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let c = bridge_cov(p, pts[i], pts[j])?;
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        let mean = grid
            .points()
            .iter()
            .map(|&t| bridge_mean(spec, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            mean,
            factor: semidefinite_cholesky(&cov)?,
            z: spec.z,
        })
    }

    pub fn draws_per_path(&self) -> usize {
        self.factor.nrows()
    }

    pub fn simulate<I: Iterator<Item = f64>>(&self, noise: &mut I) -> Result<BridgePath<'g>> {
        let n = self.factor.nrows();
        let xi: Vec<f64> = noise.take(n).collect();
        if xi.len() < n {
            return Err(Error::NoiseExhausted(xi.len()));
        }
        let mut values = self.mean.clone();
        for i in 0..n {
            let row = self.factor.row(i);
            values[i] += (0..=i).map(|j| row[j] * xi[j]).sum::<f64>();
        }
        values[n] = self.z;
        Ok(BridgePath {
            grid: self.grid,
            values,
        })
    }
}

pub fn simulate_exact<'g, I: Iterator<Item = f64>>(
    spec: &BridgeSpec,
    grid: &'g TimeGrid,
    noise: &mut I,
) -> Result<BridgePath<'g>> {
    ExactSampler::new(spec, grid)?.simulate(noise)
}

/// Cholesky factor `L L^T = A` of a positive semidefinite matrix. Pivots
/// within `INDEFINITE_RTOL * max diag` of zero zero out their column.
fn semidefinite_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let floor = INDEFINITE_RTOL * scale;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let d = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d < -floor {
            return Err(Error::Indefinite {
                index: j,
                pivot: d,
                scale,
            });
        }
        if d <= floor {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let s = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Which simulator to use for general parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Exact,
}

/// A prepared simulator for any parameter set.
#[derive(Debug, Clone)]
pub enum Simulator<'g> {
    Euler(GeneralEulerBridge<'g>),
    Exact(ExactSampler<'g>),
}

impl<'g> Simulator<'g> {
    pub fn new(spec: &BridgeSpec, grid: &'g TimeGrid, scheme: Scheme) -> Result<Self> {
        Ok(match scheme {
            Scheme::Euler => Simulator::Euler(GeneralEulerBridge::new(spec, grid)?),
            Scheme::Exact => Simulator::Exact(ExactSampler::new(spec, grid)?),
        })
    }

    pub fn simulate<I: Iterator<Item = f64>>(&self, noise: &mut I) -> Result<BridgePath<'g>> {
        match self {
            Simulator::Euler(s) => s.simulate(noise),
            Simulator::Exact(s) => s.simulate(noise),
        }
    }
}

/// One path of the bridge for arbitrary parameters.
pub fn simulate_bridge<'g, I: Iterator<Item = f64>>(
    spec: &BridgeSpec,
    grid: &'g TimeGrid,
    scheme: Scheme,
    noise: &mut I,
) -> Result<BridgePath<'g>> {
    Simulator::new(spec, grid, scheme)?.simulate(noise)
}
