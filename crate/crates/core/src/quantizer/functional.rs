use serde::{Deserialize, Serialize};

use super::{empirical, lloyd, scalar_distortion, Codebook, LloydRun, QuantizerConfig};
use crate::bridge_sim::TimeGrid;
use crate::error::{Error, Result};
use crate::kl_solver::{kl_basis, KlBasis};
use crate::noise::domain;
use crate::ou_model::{bridge_mean, total_bridge_variance, BridgeSpec, OuParams};

/// Relative slack under which two total distortions count as equal.
const TIE_RTOL: f64 = 1e-12;

/// Leading eigenvalues and the full trace of a covariance operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub trace: f64,
}

impl Spectrum {
    pub fn new(eigenvalues: Vec<f64>, trace: f64) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Usage("spectrum needs at least one positive eigenvalue".into()));
        }
        if !(trace > 0.0) {
            return Err(Error::Usage(format!("trace must be > 0, got {trace}")));
        }
        Ok(Self { eigenvalues, trace })
    }

    /// First `m_max` bridge eigenvalues and the trace `int_0^T Var(X_t | X_T) dt`.
    pub fn of_bridge(params: &OuParams, m_max: usize) -> Result<(Self, KlBasis)> {
        let basis = kl_basis(params, m_max)?;
        let spectrum = Self::new(basis.eigenvalues(), total_bridge_variance(params)?)?;
        Ok((spectrum, basis))
    }

    /// `sum_{j > m} lambda_j`, clamped at 0 against rounding.
    pub fn tail(&self, m: usize) -> f64 {
        (self.trace - self.eigenvalues[..m].iter().sum::<f64>()).max(0.0)
    }
}

/// Squared-distortion budget at truncation order `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub m: usize,
    pub tail: f64,
    pub finite_dim_error_sq: f64,
    /// Monte-Carlo standard error of `finite_dim_error_sq`; 0 when it is exact.
    pub finite_dim_std_error: f64,
    pub total_sq: f64,
}

impl DistortionReport {
    pub fn new(m: usize, tail: f64, finite_dim_error_sq: f64, finite_dim_std_error: f64) -> Self {
        Self {
            m,
            tail,
            finite_dim_error_sq,
            finite_dim_std_error,
            total_sq: tail + finite_dim_error_sq,
        }
    }
}

/// Exact when possible (`N = 1` or `m = 1`), held-out Monte Carlo otherwise.
fn finite_dim_error(codebook: &Codebook, variances: &[f64], cfg: &QuantizerConfig, eval_domain: u64) -> Result<(f64, f64)> {
    if codebook.len() == 1 && codebook.points[0].iter().all(|v| *v == 0.0) {
        return Ok((variances.iter().sum(), 0.0));
    }
    if variances.len() == 1 {
        return Ok((scalar_distortion(codebook, variances[0])?, 0.0));
    }
    if cfg.eval_budget < 2 {
        return Err(Error::Usage("eval budget must be >= 2".into()));
    }
    let est = empirical::evaluate(&codebook.flat(), variances, cfg.eval_budget, cfg.seed, eval_domain);
    Ok((est.distortion, est.std_error))
}

/// Result of the exhaustive search over truncation orders.
#[derive(Debug, Clone)]
pub struct DimensionSearch {
    /// The quantization dimension `d(N)`.
    pub d: usize,
    /// One report per `m = 1..=m_max`.
    pub reports: Vec<DistortionReport>,
    /// The optimized codebook for each `m`.
    pub codebooks: Vec<LloydRun>,
}

impl DimensionSearch {
    pub fn best(&self) -> (&DistortionReport, &LloydRun) {
        (&self.reports[self.d - 1], &self.codebooks[self.d - 1])
    }
}

/// Optimizes an `n`-point codebook for every `m <= m_max` and picks the `m`
/// with the smallest `tail + finite_dim_error_sq`. Ties go to the smaller `m`.
pub fn select_dimension(spectrum: &Spectrum, n: usize, m_max: usize, cfg: &QuantizerConfig) -> Result<DimensionSearch> {
    if m_max == 0 {
        return Err(Error::Usage("m_max must be >= 1".into()));
    }
    if m_max > spectrum.eigenvalues.len() {
        return Err(Error::Usage(format!(
            "m_max = {m_max} exceeds the {} available eigenvalues",
            spectrum.eigenvalues.len()
        )));
    }
    let mut reports = Vec::with_capacity(m_max);
    let mut codebooks = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let variances = &spectrum.eigenvalues[..m];
        let run = lloyd(variances, n, None, cfg)?;
        let (err, se) = finite_dim_error(&run.codebook, variances, cfg, domain::DISTORTION_EVAL)?;
        reports.push(DistortionReport::new(m, spectrum.tail(m), err, se));
        codebooks.push(run);
    }
    let mut d = 1;
    for r in &reports[1..] {
        let best = reports[d - 1].total_sq;
        if r.total_sq < best * (1.0 - TIE_RTOL) {
            d = r.m;
        }
    }
    Ok(DimensionSearch { d, reports, codebooks })
}

/// A quantized path `t -> bridge_mean(t) + sum_j a_j e_j(t)` and its weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedPath {
    pub values: Vec<f64>,
    pub probability: f64,
}

/// `N` weighted representative paths of the bridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalQuantizer {
    pub spec: BridgeSpec,
    /// The KL basis truncated to the selected dimension.
    pub basis: KlBasis,
    pub codebook: Codebook,
    pub report: DistortionReport,
    /// Reports for every candidate truncation order.
    pub candidates: Vec<DistortionReport>,
}

impl FunctionalQuantizer {
    pub fn dimension(&self) -> usize {
        self.codebook.dim
    }

    pub fn mean_path(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        grid.points().iter().map(|&t| bridge_mean(&self.spec, t)).collect()
    }

    /// Evaluates every codepoint's path on `grid`.
    pub fn paths(&self, grid: &TimeGrid) -> Result<Vec<QuantizedPath>> {
        let horizon = self.spec.params.horizon();
        if (grid.horizon() - horizon).abs() > 1e-12 * horizon {
            return Err(Error::Usage(format!(
                "grid ends at {} but the bridge horizon is {horizon}",
                grid.horizon()
            )));
        }
        let mean = self.mean_path(grid)?;
        let modes: Vec<Vec<f64>> = grid
            .points()
            .iter()
            .map(|&t| self.basis.eval(t.min(horizon)))
            .collect::<Result<_>>()?;
        Ok(self
            .codebook
            .points
            .iter()
            .zip(&self.codebook.probabilities)
            .map(|(a, &probability)| QuantizedPath {
                values: mean
                    .iter()
                    .zip(&modes)
                    .map(|(m, e)| m + a.iter().zip(e).map(|(x, y)| x * y).sum::<f64>())
                    .collect(),
                probability,
            })
            .collect())
    }
}

/// Optimal `n`-point functional quantizer of the bridge with dimension search up to `m_max`.
pub fn functional_quantizer(spec: &BridgeSpec, n: usize, m_max: usize, cfg: &QuantizerConfig) -> Result<FunctionalQuantizer> {
    let (spectrum, basis) = Spectrum::of_bridge(&spec.params, m_max)?;
    let search = select_dimension(&spectrum, n, m_max, cfg)?;
    let (report, run) = search.best();
    Ok(FunctionalQuantizer {
        spec: *spec,
        basis: basis.truncated(search.d),
        codebook: run.codebook.clone(),
        report: *report,
        candidates: search.reports.clone(),
    })
}

/// One codebook size of a rate study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub d: usize,
    /// `E_N`, the root of `tail + finite_dim_error_sq`.
    pub distortion: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `ln E_N` against `ln ln N`.
    pub slope: f64,
    /// `E_N sqrt(ln N)` at the largest `N`.
    pub k: f64,
}

/// Fits `ln E_N = c + slope ln ln N` over the given codebook sizes.
///
/// Each selected codebook is re-evaluated on samples independent of both its
/// training sample and the sample used to select its dimension.
pub fn rate_check(spec: &BridgeSpec, n_values: &[usize], m_max: usize, cfg: &QuantizerConfig) -> Result<RateStudy> {
    if n_values.len() < 4 {
        return Err(Error::Usage(format!("rate study needs >= 4 codebook sizes, got {}", n_values.len())));
    }
    if n_values[0] < 2 || n_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Usage("codebook sizes must be strictly increasing and >= 2".into()));
    }
    let (spectrum, _) = Spectrum::of_bridge(&spec.params, m_max)?;
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let search = select_dimension(&spectrum, n, m_max, cfg)?;
        let (report, run) = search.best();
        let variances = &spectrum.eigenvalues[..search.d];
        let (err, se) = finite_dim_error(&run.codebook, variances, cfg, domain::RATE_EVAL)?;
        let e = (report.tail + err).sqrt();
        rows.push(RateRow {
            n,
            d: search.d,
            distortion: e,
            std_error: se / (2.0 * e),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln().ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.distortion.ln()).collect();
    let len = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / len, ys.iter().sum::<f64>() / len);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let last = rows.last().expect("at least four rows");
    let k = last.distortion * (last.n as f64).ln().sqrt();
    Ok(RateStudy {
        slope: sxy / sxx,
        k,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuantizerConfig {
        QuantizerConfig {
            mc_budget: Some(50_000),
            eval_budget: 100_000,
            tol: 1e-5,
            ..Default::default()
        }
    }

    fn brownian() -> BridgeSpec {
        BridgeSpec::new(OuParams::centered(0.0, 1.0, 1.0).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn report_total_is_stored_sum() {
        let r = DistortionReport::new(3, 0.1, 0.2, 0.0);
        assert_eq!(r.total_sq, 0.1 + 0.2);
    }

    #[test]
    fn single_codepoint_selects_dimension_one() {
        let (spectrum, _) = Spectrum::of_bridge(&brownian().params, 6).unwrap();
        let search = select_dimension(&spectrum, 1, 6, &cfg()).unwrap();
        assert_eq!(search.d, 1);
        for r in &search.reports {
            assert!((r.total_sq - spectrum.trace).abs() < 1e-12 * spectrum.trace);
        }
    }

    #[test]
    fn selected_dimension_is_minimal() {
        let (spectrum, _) = Spectrum::of_bridge(&brownian().params, 6).unwrap();
        let search = select_dimension(&spectrum, 10, 6, &cfg()).unwrap();
        let best = search.reports[search.d - 1].total_sq;
        for r in &search.reports {
            assert!(best <= r.total_sq);
            assert!(r.tail >= 0.0 && r.finite_dim_error_sq >= 0.0);
        }
        assert_eq!(search.best().1.codebook.dim, search.d);
    }

    #[test]
    fn one_path_is_the_mean() {
        let spec = BridgeSpec::new(OuParams::new(1.0, -1.0, 1.0, 0.5, 0.3, 2.0).unwrap(), 1.0).unwrap();
        let fq = functional_quantizer(&spec, 1, 3, &cfg()).unwrap();
        let grid = TimeGrid::uniform(2.0, 20).unwrap();
        let paths = fq.paths(&grid).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].values, fq.mean_path(&grid).unwrap());
        assert_eq!(paths[0].probability, 1.0);
    }

    #[test]
    fn paths_are_pinned_and_start_at_zero() {
        let fq = functional_quantizer(&brownian(), 10, 4, &cfg()).unwrap();
        let grid = TimeGrid::uniform(1.0, 64).unwrap();
        let paths = fq.paths(&grid).unwrap();
        assert_eq!(paths.len(), 10);
        for p in &paths {
            assert_eq!(*p.values.last().unwrap(), 0.0);
            assert!(p.values[0].abs() < 1e-12);
        }
        let total: f64 = paths.iter().map(|p| p.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(fq.paths(&TimeGrid::uniform(2.0, 4).unwrap()).is_err());
    }

    #[test]
    fn rate_check_validates_input() {
        assert!(rate_check(&brownian(), &[2, 4, 8], 3, &cfg()).is_err());
        assert!(rate_check(&brownian(), &[2, 4, 4, 8], 3, &cfg()).is_err());
        assert!(rate_check(&brownian(), &[1, 2, 4, 8], 3, &cfg()).is_err());
    }
}
