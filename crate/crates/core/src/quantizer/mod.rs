//! Optimal quadratic quantization of the KL coordinates of the bridge.
//!
//! The bridge is quantized through its first `m` Karhunen-Loeve coordinates,
//! which are independent `N(0, lambda_j)`. For a codebook of size `N`,
//!
//! ```text
//! E_N(X)^2 = sum_{j > m} lambda_j + E_N(N(0, lambda_1) x ... x N(0, lambda_m))^2,
//! ```
//!
//! and the quantization dimension `d(N)` is the `m` minimizing it.
//! One-dimensional problems are solved deterministically ([`scalar`]); higher
//! dimensions use Lloyd's algorithm on a fixed antithetic sample
//! ([`empirical`]), or CLVQ.

pub mod empirical;
mod functional;
pub mod scalar;

pub use functional::{
    functional_quantizer, rate_check, select_dimension, DimensionSearch, DistortionReport,
    FunctionalQuantizer, QuantizedPath, RateRow, RateStudy, Spectrum,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{domain, stream_rng};
use empirical::TrainingSample;

/// Quantizer for a product Gaussian, in KL-coordinate units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

impl Codebook {
    pub fn new(points: Vec<Vec<f64>>, probabilities: Vec<f64>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.is_empty() || dim == 0 {
            return Err(Error::Usage("codebook must have at least one point of dimension >= 1".into()));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Usage("codebook points must share one dimension".into()));
        }
        if probabilities.len() != points.len() {
            return Err(Error::Usage("one probability per codepoint".into()));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Usage("probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Usage(format!("probabilities sum to {total}, not 1")));
        }
        for (i, a) in points.iter().enumerate() {
            if points[..i].contains(a) {
                return Err(Error::Usage(format!("codepoint {i} is duplicated")));
            }
        }
        Ok(Self {
            dim,
            points,
            probabilities,
        })
    }

    /// Codebook with unspecified cell masses (uniform), used as an initial condition.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len().max(1);
        let mut probabilities = vec![1.0 / n as f64; points.len()];
        renormalize(&mut probabilities);
        Self::new(points, probabilities)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    fn from_flat(flat: &[f64], dim: usize, mut probabilities: Vec<f64>) -> Result<Self> {
        renormalize(&mut probabilities);
        Self::new(flat.chunks_exact(dim).map(<[f64]>::to_vec).collect(), probabilities)
    }
}

/// Removes the rounding residue so masses sum to 1 to within an ulp or two.
fn renormalize(p: &mut [f64]) {
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    }
}

/// Knobs shared by the quantizer entry points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub seed: u64,
    /// Training sample size for `m >= 2`; `None` selects `10^6 min(1, 4/m)`.
    pub mc_budget: Option<usize>,
    /// Fresh samples used by held-out distortion estimates.
    pub eval_budget: usize,
    /// Relative distortion decrease under which Lloyd stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mc_budget: None,
            eval_budget: 1_000_000,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

impl QuantizerConfig {
    pub fn training_size(&self, m: usize) -> usize {
        self.mc_budget
            .unwrap_or_else(|| (1e6 * (4.0 / m as f64).min(1.0)).round() as usize)
    }
}

/// Outcome of a codebook optimization.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub codebook: Codebook,
    pub iterations: usize,
    /// Dead cells moved onto the farthest training sample.
    pub reseeds: usize,
    /// Distortion per iteration: exact for `m = 1`, on the training sample otherwise.
    pub distortion_history: Vec<f64>,
}

fn validate_variances(variances: &[f64], n: usize) -> Result<()> {
    if variances.is_empty() || variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Usage("variances must be finite and > 0".into()));
    }
    if n == 0 {
        return Err(Error::Usage("codebook size N must be >= 1".into()));
    }
    Ok(())
}

/// Deterministic 1-D solve for `N(0, variance)`.
fn scalar_codebook(variance: f64, init_std: &[f64]) -> Result<LloydRun> {
    let sol = scalar::solve(init_std)?;
    let s = variance.sqrt();
    let probabilities = scalar::probabilities(&sol.points);
    Ok(LloydRun {
        codebook: Codebook::from_flat(
            &sol.points.iter().map(|x| s * x).collect::<Vec<_>>(),
            1,
            probabilities,
        )?,
        iterations: sol.iterations,
        reseeds: 0,
        distortion_history: sol.distortion_history.iter().map(|d| variance * d).collect(),
    })
}

/// Product of per-coordinate optimal 1-D codebooks, truncated to the `n`
/// most probable combinations.
///
/// Coordinate sizes grow greedily, each increment going to the coordinate
/// whose 1-D distortion drops the most, until the product reaches `n`.
pub fn product_init(variances: &[f64], n: usize) -> Result<Codebook> {
    let m = variances.len();
    let mut sizes = vec![1usize; m];
    let mut cache: Vec<Vec<f64>> = Vec::new();
    let mut optimal = |k: usize| -> Result<Vec<f64>> {
        while cache.len() < k {
            cache.push(scalar::optimal(cache.len() + 1)?);
        }
        Ok(cache[k - 1].clone())
    };
    while sizes.iter().product::<usize>() < n {
        let mut best = (f64::NEG_INFINITY, 0);
        for j in 0..m {
            let gain = variances[j]
                * (scalar::distortion(&optimal(sizes[j])?) - scalar::distortion(&optimal(sizes[j] + 1)?));
            if gain > best.0 {
                best = (gain, j);
            }
        }
        sizes[best.1] += 1;
    }
    let axes: Vec<(Vec<f64>, Vec<f64>)> = sizes
        .iter()
        .zip(variances)
        .map(|(&k, &v)| {
            let x = optimal(k)?;
            let p = scalar::probabilities(&x);
            Ok((x.iter().map(|u| u * v.sqrt()).collect(), p))
        })
        .collect::<Result<_>>()?;
    let total: usize = sizes.iter().product();
    let mut combos: Vec<(f64, Vec<usize>)> = (0..total)
        .map(|mut idx| {
            let mut digits = vec![0; m];
            for j in (0..m).rev() {
                digits[j] = idx % sizes[j];
                idx /= sizes[j];
            }
            let p = digits.iter().zip(&axes).map(|(&d, a)| a.1[d]).product();
            (p, digits)
        })
        .collect();
    // stable: equal masses keep lexicographic order
    combos.sort_by(|a, b| b.0.total_cmp(&a.0));
    combos.truncate(n);
    let points: Vec<Vec<f64>> = combos
        .iter()
        .map(|(_, d)| d.iter().zip(&axes).map(|(&i, a)| a.0[i]).collect())
        .collect();
    let mut probs: Vec<f64> = combos.iter().map(|c| c.0).collect();
    renormalize(&mut probs);
    Codebook::new(points, probs)
}

/// Lloyd's algorithm for `N(0, diag(variances))` with `n` codepoints.
///
/// `m = 1` is solved deterministically to stationarity; `m >= 2` runs on a
/// fixed antithetic training sample drawn once from `cfg.seed`. `n = 1`
/// returns the mean in any dimension.
pub fn lloyd(variances: &[f64], n: usize, init: Option<&Codebook>, cfg: &QuantizerConfig) -> Result<LloydRun> {
    validate_variances(variances, n)?;
    let m = variances.len();
    if let Some(c) = init {
        if c.dim != m || c.len() != n {
            return Err(Error::Usage(format!(
                "initial codebook is {}x{}, expected {n}x{m}",
                c.len(),
                c.dim
            )));
        }
    }
    if n == 1 {
        return Ok(LloydRun {
            codebook: Codebook::new(vec![vec![0.0; m]], vec![1.0])?,
            iterations: 0,
            reseeds: 0,
            distortion_history: vec![variances.iter().sum()],
        });
    }
    if m == 1 {
        let s = variances[0].sqrt();
        let init_std = match init {
            Some(c) => c.points.iter().map(|p| p[0] / s).collect(),
            None => scalar::quantile_init(n),
        };
        return scalar_codebook(variances[0], &init_std);
    }
    let start = match init {
        Some(c) => c.clone(),
        None => product_init(variances, n)?,
    };
    let sample = TrainingSample::generate(variances, cfg.training_size(m), cfg.seed, domain::LLOYD_TRAINING);
    let run = empirical::lloyd(&sample, &start.flat(), cfg.tol, cfg.max_iter);
    Ok(LloydRun {
        codebook: Codebook::from_flat(&run.points, m, run.probabilities)?,
        iterations: run.iterations,
        reseeds: run.reseeds,
        distortion_history: run.history,
    })
}

/// Learning-rate schedule `gamma_k = gamma0 A / (A + k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClvqSchedule {
    pub gamma0: f64,
    pub a: f64,
}

impl Default for ClvqSchedule {
    fn default() -> Self {
        Self { gamma0: 0.5, a: 1e4 }
    }
}

impl ClvqSchedule {
    pub fn rate(&self, k: usize) -> f64 {
        self.gamma0 * self.a / (self.a + k as f64)
    }
}

/// Number of Lloyd iterations polishing the CLVQ output.
pub const CLVQ_LLOYD_POLISH: usize = 10;

/// Competitive learning vector quantization.
///
/// Each step draws one sample and moves its nearest codepoint toward it by
/// `gamma_k`. The result is polished by [`CLVQ_LLOYD_POLISH`] Lloyd iterations.
pub fn clvq(
    variances: &[f64],
    n: usize,
    steps: usize,
    schedule: ClvqSchedule,
    cfg: &QuantizerConfig,
) -> Result<LloydRun> {
    use rand::Rng;
    use rand_distr::StandardNormal;

    validate_variances(variances, n)?;
    let m = variances.len();
    let scale: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let mut points = if m == 1 {
        scalar::quantile_init(n).iter().map(|x| x * scale[0]).collect()
    } else {
        product_init(variances, n)?.flat()
    };
    let mut rng = stream_rng(cfg.seed, domain::CLVQ, 0);
    let mut g = vec![0.0; m];
    for k in 0..steps {
        for (v, s) in g.iter_mut().zip(&scale) {
            *v = s * rng.sample::<f64, _>(StandardNormal);
        }
        let (i, _) = empirical::nearest(&g, &points, m);
        let gamma = schedule.rate(k);
        for (p, v) in points[i * m..(i + 1) * m].iter_mut().zip(&g) {
            *p += gamma * (v - *p);
        }
    }
    if m == 1 {
        let mut std: Vec<f64> = points.iter().map(|x| x / scale[0]).collect();
        std.sort_by(|a, b| a.total_cmp(b));
        std.dedup();
        if std.len() < n {
            return Err(Error::Usage("CLVQ collapsed two codepoints".into()));
        }
        let x = scalar::lloyd_steps(&std, CLVQ_LLOYD_POLISH);
        let probabilities = scalar::probabilities(&x);
        let distortion = variances[0] * scalar::distortion(&x);
        return Ok(LloydRun {
            codebook: Codebook::from_flat(&x.iter().map(|u| u * scale[0]).collect::<Vec<_>>(), 1, probabilities)?,
            iterations: steps,
            reseeds: 0,
            distortion_history: vec![distortion],
        });
    }
    let sample = TrainingSample::generate(variances, cfg.training_size(m), cfg.seed, domain::LLOYD_TRAINING);
    let run = empirical::lloyd(&sample, &points, 0.0, CLVQ_LLOYD_POLISH);
    Ok(LloydRun {
        codebook: Codebook::from_flat(&run.points, m, run.probabilities)?,
        iterations: steps,
        reseeds: run.reseeds,
        distortion_history: run.history,
    })
}

/// Held-out Monte-Carlo estimate of `E[min_a |G - a|^2]`.
pub type DistortionEstimate = empirical::HeldOut;

/// Estimates the distortion of `codebook` under `N(0, diag(variances))` with
/// `eval_budget` fresh draws from `seed`.
pub fn distortion(codebook: &Codebook, variances: &[f64], eval_budget: usize, seed: u64) -> Result<DistortionEstimate> {
    if codebook.dim != variances.len() {
        return Err(Error::Usage(format!(
            "codebook dimension {} does not match {} variances",
            codebook.dim,
            variances.len()
        )));
    }
    if eval_budget < 2 {
        return Err(Error::Usage("eval budget must be >= 2".into()));
    }
    Ok(empirical::evaluate(&codebook.flat(), variances, eval_budget, seed, domain::DISTORTION_EVAL))
}

/// Exact distortion of a 1-D codebook under `N(0, variance)`.
pub fn scalar_distortion(codebook: &Codebook, variance: f64) -> Result<f64> {
    if codebook.dim != 1 {
        return Err(Error::Usage("scalar distortion needs a 1-D codebook".into()));
    }
    let s = variance.sqrt();
    let mut x: Vec<f64> = codebook.points.iter().map(|p| p[0] / s).collect();
    x.sort_by(|a, b| a.total_cmp(b));
    Ok(variance * scalar::distortion(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg() -> QuantizerConfig {
        QuantizerConfig {
            mc_budget: Some(200_000),
            eval_budget: 200_000,
            ..Default::default()
        }
    }

    #[test]
    fn codebook_validation() {
        assert!(Codebook::new(vec![], vec![]).is_err());
        assert!(Codebook::new(vec![vec![0.0], vec![0.0]], vec![0.5, 0.5]).is_err());
        assert!(Codebook::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.6]).is_err());
        assert!(Codebook::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]).is_err());
        assert!(Codebook::new(vec![vec![0.0], vec![1.0]], vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn scalar_lloyd_examples() {
        let run = lloyd(&[1.0], 1, None, &cfg()).unwrap();
        assert_eq!(run.codebook.points, vec![vec![0.0]]);
        assert_eq!(run.distortion_history, vec![1.0]);

        let a = (2.0 / PI).sqrt();
        let run = lloyd(&[1.0], 2, None, &cfg()).unwrap();
        assert!((run.codebook.points[0][0] + a).abs() < 1e-12);
        assert!((run.codebook.points[1][0] - a).abs() < 1e-12);
        let d = scalar_distortion(&run.codebook, 1.0).unwrap();
        assert!((d - (1.0 - 2.0 / PI)).abs() < 1e-14);

        let run = lloyd(&[4.0], 2, None, &cfg()).unwrap();
        assert!((run.codebook.points[1][0] - 2.0 * a).abs() < 1e-12);
        let d = scalar_distortion(&run.codebook, 4.0).unwrap();
        assert!((d - 4.0 * (1.0 - 2.0 / PI)).abs() < 1e-13);
    }

    #[test]
    fn invalid_inputs() {
        assert!(lloyd(&[1.0, 0.0], 2, None, &cfg()).is_err());
        assert!(lloyd(&[], 2, None, &cfg()).is_err());
        assert!(lloyd(&[1.0], 0, None, &cfg()).is_err());
        let init = Codebook::from_points(vec![vec![0.0], vec![1.0]]).unwrap();
        assert!(lloyd(&[1.0, 1.0], 2, Some(&init), &cfg()).is_err());
    }

    #[test]
    fn mc_distortion_examples() {
        let zero = Codebook::new(vec![vec![0.0]], vec![1.0]).unwrap();
        let est = distortion(&zero, &[1.0], 100_000, 4).unwrap();
        // the squared error is the control variate itself, so the estimate is exact
        assert!((est.distortion - 1.0).abs() < 1e-12 && est.std_error < 1e-12);
        assert!((est.raw_distortion - 1.0).abs() < 3.0 * est.raw_std_error);
        let a = (2.0 / PI).sqrt();
        let two = Codebook::new(vec![vec![-a], vec![a]], vec![0.5, 0.5]).unwrap();
        let est = distortion(&two, &[1.0], 1_000_000, 4).unwrap();
        assert!((est.distortion - (1.0 - 2.0 / PI)).abs() < 3.0 * est.std_error);
        assert!(distortion(&two, &[1.0, 1.0], 10, 4).is_err());
    }

    #[test]
    fn distortion_decreases_with_codebook_size() {
        let mut prev = f64::INFINITY;
        for n in [1, 2, 4, 8, 16] {
            let cb = lloyd(&[1.0], n, None, &cfg()).unwrap().codebook;
            let est = distortion(&cb, &[1.0], 200_000, 11).unwrap();
            assert!(est.distortion < prev);
            prev = est.distortion;
        }
    }

    #[test]
    fn product_init_shapes() {
        let cb = product_init(&[1.0, 0.25, 0.1], 4).unwrap();
        assert_eq!(cb.len(), 4);
        assert_eq!(cb.dim, 3);
        // most probable combination sits near the origin of the weak axes
        for p in &cb.points {
            assert_eq!(p[2], 0.0);
        }
        let cb = product_init(&[1.0, 1.0], 4).unwrap();
        let a = (2.0 / PI).sqrt();
        for p in &cb.points {
            assert!((p[0].abs() - a).abs() < 1e-12 && (p[1].abs() - a).abs() < 1e-12);
        }
        assert_eq!(product_init(&[1.0], 3).unwrap().len(), 3);
    }

    #[test]
    fn empirical_lloyd_improves_on_product_start() {
        let run = lloyd(&[1.0, 1.0], 4, None, &cfg()).unwrap();
        for w in run.distortion_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        // the product of two 2-point quantizers is where Lloyd starts
        let product = 2.0 * (1.0 - 2.0 / PI);
        let held_out = distortion(&run.codebook, &[1.0, 1.0], 400_000, 21).unwrap();
        assert!(held_out.distortion < product + 3.0 * held_out.std_error);
        let total: f64 = run.codebook.probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // antithetic training sample keeps the codebook centered
        let centroid: Vec<f64> = (0..2)
            .map(|j| run.codebook.points.iter().zip(&run.codebook.probabilities).map(|(p, w)| w * p[j]).sum())
            .collect();
        assert!(centroid.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn clvq_examples() {
        let a = (2.0 / PI).sqrt();
        let run = clvq(&[1.0], 2, 1_000_000, ClvqSchedule::default(), &cfg()).unwrap();
        assert!((run.codebook.points[0][0] + a).abs() < 1e-2);
        assert!((run.codebook.points[1][0] - a).abs() < 1e-2);

        let run = clvq(&[1.0, 0.5], 1, 100_000, ClvqSchedule::default(), &cfg()).unwrap();
        assert!(run.codebook.points[0].iter().all(|v| v.abs() < 1e-2));

        let c = cfg();
        let from_clvq = clvq(&[1.0, 1.0], 4, 200_000, ClvqSchedule::default(), &c).unwrap();
        let from_lloyd = lloyd(&[1.0, 1.0], 4, None, &c).unwrap();
        let d1 = distortion(&from_clvq.codebook, &[1.0, 1.0], 400_000, 8).unwrap().distortion;
        let d2 = distortion(&from_lloyd.codebook, &[1.0, 1.0], 400_000, 8).unwrap().distortion;
        assert!((d1 - d2).abs() < 0.02 * d2, "{d1} {d2}");
    }

    #[test]
    fn schedule_defaults() {
        let s = ClvqSchedule::default();
        assert_eq!(s.rate(0), 0.5);
        assert_eq!(s.rate(10_000), 0.25);
    }
}
