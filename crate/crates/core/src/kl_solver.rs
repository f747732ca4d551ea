//! Karhunen-Loeve eigensystem of the OU bridge.
//!
//! The eigenvalues are `lambda_n = sigma^2 / (w_n^2 + theta^2)` and the unit
//! eigenfunctions `e_n(t) = c_n sin(w_n (t - T))`, where the frequencies
//! `w_n > 0` are the sorted positive roots of
//!
//! ```text
//! R(w) = (sigma^2 - theta sigma0^2) sin(w T) + w sigma0^2 cos(w T) = 0.
//! ```
//!
//! Depending on the sign of `sigma^2 - theta sigma0^2` the roots are either in
//! closed form or bracketed by half-periods of `tan`; see [`FrequencyCase`].

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::ou_model::OuParams;

/// Relative tolerance under which `sigma^2 = theta sigma0^2` is treated as exact.
pub const CRITICAL_RTOL: f64 = 1e-14;

/// Relative offset from 0, in units of `pi/(2T)`, at which the sign of the
/// residual is probed for the extra low-frequency root.
pub const LOW_ROOT_PROBE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencyCase {
    /// `sigma0 = 0`: `w_n = n pi / T`.
    DeterministicStart,
    /// `sigma^2 = theta sigma0^2`: `w_n = (n - 1/2) pi / T`.
    CriticalRatio,
    /// `theta sigma0^2 < sigma^2`: one root in each `](n - 1/2) pi/T, n pi/T[`.
    SubCritical,
    /// `theta sigma0^2 > sigma^2`: one root in each `]k pi/T, (k + 1/2) pi/T[`,
    /// plus possibly one in `]0, pi/(2T)[`.
    SuperCritical,
}

pub fn classify_case(params: &OuParams) -> FrequencyCase {
    if params.sigma0() == 0.0 {
        return FrequencyCase::DeterministicStart;
    }
    let (v, v0, th) = (params.sigma_sq(), params.sigma0_sq(), params.theta());
    let gap = v - th * v0;
    if gap.abs() <= CRITICAL_RTOL * (v + th.abs() * v0) {
        FrequencyCase::CriticalRatio
    } else if gap > 0.0 {
        FrequencyCase::SubCritical
    } else {
        FrequencyCase::SuperCritical
    }
}

/// Residual `R(w)` of the frequency equation.
pub fn frequency_residual(params: &OuParams, omega: f64) -> f64 {
    let gap = params.sigma_sq() - params.theta() * params.sigma0_sq();
    let wt = omega * params.horizon();
    gap * wt.sin() + omega * params.sigma0_sq() * wt.cos()
}

/// Scale against which residuals are judged: `|sigma^2 - theta sigma0^2| + w sigma0^2`.
pub fn residual_scale(params: &OuParams, omega: f64) -> f64 {
    (params.sigma_sq() - params.theta() * params.sigma0_sq()).abs() + omega * params.sigma0_sq()
}

fn residual_derivative(params: &OuParams, omega: f64) -> f64 {
    let gap = params.sigma_sq() - params.theta() * params.sigma0_sq();
    let big_t = params.horizon();
    let wt = omega * big_t;
    (gap * big_t + params.sigma0_sq()) * wt.cos() - omega * params.sigma0_sq() * big_t * wt.sin()
}

/// Open interval known to contain exactly one frequency. Closed-form cases
/// use a degenerate bracket `lower == upper == root`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
}

impl Bracket {
    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        if self.is_exact() {
            x == self.lower
        } else {
            self.lower < x && x < self.upper
        }
    }
}

/// Whether the super-critical residual changes sign on `]0, pi/(2T)[`.
///
/// Near zero `R(w) ~ w (sigma0^2 - T (theta sigma0^2 - sigma^2))`, and at
/// `pi/(2T)` it equals `sigma^2 - theta sigma0^2 < 0` exactly. The right end
/// is taken from that identity rather than probed just inside the interval:
/// close to the critical ratio the root moves arbitrarily close to `pi/(2T)`,
/// where an interior probe would miss it.
pub fn has_low_frequency_root(params: &OuParams) -> bool {
    if classify_case(params) != FrequencyCase::SuperCritical {
        return false;
    }
    let half = FRAC_PI_2 / params.horizon();
    let gap = params.sigma_sq() - params.theta() * params.sigma0_sq();
    frequency_residual(params, half * LOW_ROOT_PROBE) * gap < 0.0
}

pub fn frequency_brackets(params: &OuParams, n_max: usize) -> Vec<Bracket> {
    let step = PI / params.horizon();
    let half = 0.5 * step;
    match classify_case(params) {
        FrequencyCase::DeterministicStart => (1..=n_max)
            .map(|n| exact(n as f64 * step))
            .collect(),
        FrequencyCase::CriticalRatio => (1..=n_max)
            .map(|n| exact(n as f64 * step - half))
            .collect(),
        FrequencyCase::SubCritical => (1..=n_max)
            .map(|n| Bracket {
                lower: n as f64 * step - half,
                upper: n as f64 * step,
            })
            .collect(),
        FrequencyCase::SuperCritical => {
            let low = has_low_frequency_root(params).then_some(Bracket {
                lower: 0.0,
                upper: half,
            });
            low.into_iter()
                .chain((1..).map(|k| Bracket {
                    lower: k as f64 * step,
                    upper: k as f64 * step + half,
                }))
                .take(n_max)
                .collect()
        }
    }
}

fn exact(root: f64) -> Bracket {
    Bracket {
        lower: root,
        upper: root,
    }
}

/// Bisection down to `1e-3 pi / T`, then Newton steps safeguarded by the
/// bracket; any step leaving the bracket is replaced by a bisection step.
fn refine_root(params: &OuParams, n: usize, bracket: Bracket) -> Result<f64> {
    let f = |w: f64| frequency_residual(params, w);
    let (mut a, mut b) = (bracket.lower, bracket.upper);
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 && a > 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 || (a == 0.0 && fa == 0.0) {
        // the low bracket starts at w = 0 where R vanishes trivially; probe inside
        let probe = a + (b - a) * LOW_ROOT_PROBE;
        let fp = f(probe);
        if a == 0.0 && fp * fb < 0.0 {
            a = probe;
            fa = fp;
        } else {
            return Err(Error::RootNotBracketed {
                n,
                lower: a,
                upper: b,
                r_lower: fa,
                r_upper: fb,
            });
        }
    }

    let coarse = 1e-3 * PI / params.horizon();
    while b - a > coarse {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }

    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fa * fx < 0.0 {
            b = x;
        } else {
            a = x;
            fa = fx;
        }
        let d = residual_derivative(params, x);
        let newton = x - fx / d;
        let next = if d != 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs() || b - a <= 2.0 * f64::EPSILON * b {
            // pick the better of the final iterate and the bracket midpoint
            let mid = 0.5 * (a + b);
            return Ok(if f(next).abs() <= f(mid).abs() { next } else { mid });
        }
        x = next;
    }
    Err(Error::RootFinder {
        n,
        lower: a,
        upper: b,
        residual: f(x),
    })
}

pub fn solve_frequencies(params: &OuParams, n_max: usize) -> Result<Vec<f64>> {
    frequency_brackets(params, n_max)
        .into_iter()
        .enumerate()
        .map(|(i, br)| {
            if br.is_exact() {
                Ok(br.lower)
            } else {
                refine_root(params, i + 1, br)
            }
        })
        .collect()
}

/// `sigma^2 / (w^2 + theta^2)`.
pub fn eigenvalue(omega: f64, params: &OuParams) -> f64 {
    params.sigma_sq() / (omega * omega + params.theta() * params.theta())
}

/// One Karhunen-Loeve mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlMode {
    pub n: usize,
    pub omega: f64,
    pub lambda: f64,
    pub norm: f64,
}

impl KlMode {
    fn new(n: usize, omega: f64, params: &OuParams) -> Self {
        let big_t = params.horizon();
        let sq = big_t / 2.0 - (2.0 * omega * big_t).sin() / (4.0 * omega);
        Self {
            n,
            omega,
            lambda: eigenvalue(omega, params),
            norm: sq.sqrt().recip(),
        }
    }

    /// `e_n(t)` without the domain check.
    #[inline]
    pub fn value(&self, horizon: f64, t: f64) -> f64 {
        self.norm * (self.omega * (t - horizon)).sin()
    }

    /// Residual of the boundary condition `sigma0^2 g'(0) = (sigma^2 - theta sigma0^2) g(0)`
    /// for `g = lambda e_n`, divided by `sup |g|`.
    pub fn boundary_residual(&self, params: &OuParams) -> f64 {
        let big_t = params.horizon();
        let g0 = self.lambda * self.value(big_t, 0.0);
        let dg0 = self.lambda * self.norm * self.omega * (self.omega * big_t).cos();
        let gap = params.sigma_sq() - params.theta() * params.sigma0_sq();
        (params.sigma0_sq() * dg0 - gap * g0).abs() / (self.lambda * self.norm)
    }
}

pub fn eigenfunction_eval(mode: &KlMode, params: &OuParams, t: f64) -> Result<f64> {
    params.check_time(t)?;
    Ok(mode.value(params.horizon(), t))
}

/// Truncated eigensystem `(lambda_n, e_n)`, `n = 1..=m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlBasis {
    pub params: OuParams,
    pub case: FrequencyCase,
    pub modes: Vec<KlMode>,
}

impl KlBasis {
    pub fn m(&self) -> usize {
        self.modes.len()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    /// Evaluates `e_1(t), ..., e_m(t)`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.params.check_time(t)?;
        let big_t = self.params.horizon();
        Ok(self.modes.iter().map(|m| m.value(big_t, t)).collect())
    }

    /// Keeps the first `m` modes.
    pub fn truncated(&self, m: usize) -> KlBasis {
        KlBasis {
            params: self.params,
            case: self.case,
            modes: self.modes[..m.min(self.modes.len())].to_vec(),
        }
    }

    /// `sum_{n <= m} lambda_n e_n(s) e_n(t)`.
    pub fn mercer_sum(&self, s: f64, t: f64) -> f64 {
        let big_t = self.params.horizon();
        self.modes
            .iter()
            .map(|m| m.lambda * m.value(big_t, s) * m.value(big_t, t))
            .sum()
    }

    /// Estimate of `sum_{n > m} lambda_n`.
    ///
    /// Beyond the last computed mode the frequencies are spaced by `pi / T` up
    /// to an `O(1/n)` drift, so the tail is replaced by the integral of
    /// `sigma^2 / ((pi/T)^2 (x + offset)^2 + theta^2)` from `m + 1/2`, with the
    /// offset read off the last frequency. The error is `O(m^-3)` relative.
    pub fn tail_estimate(&self) -> f64 {
        let Some(last) = self.modes.last() else {
            return f64::NAN;
        };
        let p = &self.params;
        let a = PI / p.horizon();
        let offset = last.omega / a - last.n as f64;
        let x = a * (last.n as f64 + 0.5 + offset);
        let k = p.theta().abs();
        if k * p.horizon() < 1e-8 {
            p.sigma_sq() / (a * x)
        } else {
            p.sigma_sq() / (a * k) * (k / x).atan()
        }
    }
}

pub fn kl_basis(params: &OuParams, m: usize) -> Result<KlBasis> {
    if m == 0 {
        return Err(Error::Usage("truncation order m must be >= 1".into()));
    }
    let omegas = solve_frequencies(params, m)?;
    Ok(KlBasis {
        params: *params,
        case: classify_case(params),
        modes: omegas
            .into_iter()
            .enumerate()
            .map(|(i, w)| KlMode::new(i + 1, w, params))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ou_model::{bridge_cov, total_bridge_variance};
    use crate::quad::{integrate, AdaptiveSimpson};

    fn params(theta: f64, sigma0_sq: f64, big_t: f64) -> OuParams {
        OuParams::new(theta, 0.0, 1.0, sigma0_sq.sqrt(), 0.0, big_t).unwrap()
    }

    /// One representative per case.
    fn reference_sets() -> Vec<OuParams> {
        vec![
            params(0.0, 0.0, 1.0),
            params(1.0, 1.0, 1.0),
            params(1.0, 0.5, 1.0),
            params(1.0, 2.0, 1.0),
            params(-0.5, 1.0, 1.0),
            params(0.0, 1.0, 1.0),
        ]
    }

    /// Counts sign changes of the residual on a fine grid of an interval.
    fn count_roots_by_scan(p: &OuParams, lo: f64, hi: f64, samples: usize) -> usize {
        let pts: Vec<f64> = (1..samples)
            .map(|i| lo + (hi - lo) * i as f64 / samples as f64)
            .collect();
        pts.windows(2)
            .filter(|w| frequency_residual(p, w[0]) * frequency_residual(p, w[1]) < 0.0)
            .count()
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_case(&params(1.0, 0.0, 1.0)), FrequencyCase::DeterministicStart);
        assert_eq!(classify_case(&params(1.0, 1.0, 1.0)), FrequencyCase::CriticalRatio);
        assert_eq!(classify_case(&params(1.0, 2.0, 1.0)), FrequencyCase::SuperCritical);
        assert_eq!(classify_case(&params(1.0, 0.5, 1.0)), FrequencyCase::SubCritical);
        // mean repulsion is always sub-critical once sigma0 > 0
        assert_eq!(classify_case(&params(-3.0, 5.0, 1.0)), FrequencyCase::SubCritical);
        assert_eq!(classify_case(&params(-3.0, 0.0, 1.0)), FrequencyCase::DeterministicStart);
        // within the critical tolerance
        let p = OuParams::new(1.0, 0.0, 1.0, (1.0f64 + 1e-15).sqrt(), 0.0, 1.0).unwrap();
        assert_eq!(classify_case(&p), FrequencyCase::CriticalRatio);
    }

    #[test]
    fn closed_form_brackets() {
        let b = frequency_brackets(&params(0.3, 0.0, 1.0), 3);
        let roots: Vec<f64> = b.iter().map(|b| b.lower).collect();
        assert!(b.iter().all(Bracket::is_exact));
        assert_eq!(roots, vec![PI, 2.0 * PI, 3.0 * PI]);
        let b = frequency_brackets(&params(1.0, 1.0, 1.0), 2);
        assert_eq!(b[0].lower, FRAC_PI_2);
        assert_eq!(b[1].lower, 1.5 * PI);
    }

    #[test]
    fn subcritical_bracket_has_sign_change() {
        let p = params(1.0, 0.5, 1.0);
        let b = frequency_brackets(&p, 1)[0];
        assert_eq!((b.lower, b.upper), (FRAC_PI_2, PI));
        let (ra, rb) = (frequency_residual(&p, b.lower), frequency_residual(&p, b.upper));
        assert!(ra * rb < 0.0, "{ra} {rb}");
    }

    #[test]
    fn brackets_are_disjoint_and_each_holds_one_root() {
        for p in reference_sets().into_iter().chain([params(2.0, 3.0, 3.0), params(1.0, 1.8, 2.0)]) {
            let brackets = frequency_brackets(&p, 12);
            assert_eq!(brackets.len(), 12);
            for w in brackets.windows(2) {
                assert!(w[0].upper <= w[1].lower);
            }
            for b in brackets.iter().filter(|b| !b.is_exact()) {
                assert_eq!(count_roots_by_scan(&p, b.lower, b.upper, 20_000), 1, "{p:?} {b:?}");
            }
        }
    }

    #[test]
    fn solve_examples() {
        let w = solve_frequencies(&params(0.0, 0.0, 2.0), 2).unwrap();
        assert_eq!(w, vec![FRAC_PI_2, PI]);
        let w = solve_frequencies(&params(1.0, 1.0, 1.0), 1).unwrap();
        assert_eq!(w, vec![FRAC_PI_2]);
        let p = params(1.0, 0.5, 1.0);
        let w = solve_frequencies(&p, 5).unwrap();
        let brackets = frequency_brackets(&p, 5);
        for (omega, b) in w.iter().zip(&brackets) {
            assert!(b.contains(*omega));
            let r = frequency_residual(&p, *omega).abs();
            assert!(r < 1e-12 * residual_scale(&p, *omega), "residual {r}");
        }
    }

    #[test]
    fn residuals_and_brackets_across_cases() {
        for p in reference_sets().into_iter().chain([params(2.0, 3.0, 3.0), params(-4.0, 0.2, 0.5)]) {
            let brackets = frequency_brackets(&p, 200);
            let w = solve_frequencies(&p, 200).unwrap();
            for (i, (omega, b)) in w.iter().zip(&brackets).enumerate() {
                assert!(b.contains(*omega), "{p:?} n={} {omega} {b:?}", i + 1);
                let r = frequency_residual(&p, *omega).abs();
                assert!(r < 1e-12 * residual_scale(&p, *omega), "{p:?} n={} r={r}", i + 1);
            }
            assert!(w.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn root_finder_failure_is_reported() {
        let p = params(1.0, 0.5, 1.0);
        // no sign change on (0.1, 0.2)
        let err = refine_root(&p, 1, Bracket { lower: 0.1, upper: 0.2 }).unwrap_err();
        assert!(matches!(err, Error::RootNotBracketed { n: 1, .. }));
    }

    /// The printed extra-root condition for the super-critical case is
    /// `sigma0^2 > theta sigma0^2 - sigma^2`. The slope of `R` at zero gives
    /// `sigma0^2 > T (theta sigma0^2 - sigma^2)` instead; the two coincide at
    /// `T = 1`. The scan below counts roots independently of the probe.
    #[test]
    fn low_root_condition_carries_horizon_factor() {
        // (theta, sigma0^2, T): printed condition true, horizon-scaled false
        let p = params(1.0, 2.0, 3.0);
        let printed = p.sigma0_sq() > p.theta() * p.sigma0_sq() - p.sigma_sq();
        let scaled = p.sigma0_sq() > p.horizon() * (p.theta() * p.sigma0_sq() - p.sigma_sq());
        assert!(printed && !scaled);
        let scanned = count_roots_by_scan(&p, 0.0, FRAC_PI_2 / p.horizon(), 100_000);
        assert_eq!(scanned, 0);
        assert!(!has_low_frequency_root(&p));

        // both true
        let p = params(1.0, 1.8, 2.0);
        assert_eq!(count_roots_by_scan(&p, 0.0, FRAC_PI_2 / 2.0, 100_000), 1);
        assert!(has_low_frequency_root(&p));

        // T < 1: printed false, horizon-scaled true
        let p = params(2.0, 3.0, 0.5);
        let printed = p.sigma0_sq() > p.theta() * p.sigma0_sq() - p.sigma_sq();
        let scaled = p.sigma0_sq() > p.horizon() * (p.theta() * p.sigma0_sq() - p.sigma_sq());
        assert!(!printed && scaled);
        assert_eq!(count_roots_by_scan(&p, 0.0, FRAC_PI_2 / 0.5, 100_000), 1);
        assert!(has_low_frequency_root(&p));

        // reference super-critical set at T = 1 has the extra root
        assert!(has_low_frequency_root(&params(1.0, 2.0, 1.0)));
    }

    #[test]
    fn eigenvalue_examples() {
        assert!((eigenvalue(PI, &params(0.0, 0.0, 1.0)) - 1.0 / (PI * PI)).abs() < 1e-17);
        assert!((eigenvalue(PI, &params(0.0, 0.0, 1.0)) - 0.1013212).abs() < 1e-7);
        let v = eigenvalue(FRAC_PI_2, &params(1.0, 1.0, 1.0));
        assert!((v - 1.0 / (PI * PI / 4.0 + 1.0)).abs() < 1e-16);
        assert!((v - 0.288400).abs() < 1e-6);
        let p = params(-2.0, 0.0, 1.0);
        assert_eq!(eigenvalue(3.0, &p), eigenvalue(3.0, &params(2.0, 0.0, 1.0)));
        let seq: Vec<f64> = (1..50).map(|k| eigenvalue(k as f64, &p)).collect();
        assert!(seq.windows(2).all(|w| w[1] < w[0]));
        assert!(eigenvalue(1e12, &p) < 1e-23);
    }

    #[test]
    fn eigenfunction_examples() {
        let p = params(1.0, 0.5, 1.0);
        let basis = kl_basis(&p, 3).unwrap();
        for mode in &basis.modes {
            assert_eq!(eigenfunction_eval(mode, &p, 1.0).unwrap(), 0.0);
        }
        assert!(eigenfunction_eval(&basis.modes[0], &p, 1.01).is_err());
        let bb = params(0.0, 0.0, 1.0);
        let b = kl_basis(&bb, 1).unwrap();
        assert!(eigenfunction_eval(&b.modes[0], &bb, 0.0).unwrap().abs() < 1e-15);
        assert!((b.modes[0].norm - 2f64.sqrt()).abs() < 1e-15);
        let e1 = &basis.modes[0];
        let n = integrate(|t| e1.value(1.0, t).powi(2), 0.0, 1.0).unwrap();
        assert!((n - 1.0).abs() < 1e-10);
    }

    #[test]
    fn basis_examples() {
        let b = kl_basis(&params(0.0, 0.0, 1.0), 3).unwrap();
        for (i, m) in b.modes.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!((m.lambda - 1.0 / (n * n * PI * PI)).abs() < 1e-17);
        }
        let b = kl_basis(&params(1.0, 1.0, 1.0), 1).unwrap();
        assert_eq!(b.modes[0].omega, FRAC_PI_2);
        assert!((b.modes[0].lambda - 1.0 / (PI * PI / 4.0 + 1.0)).abs() < 1e-16);
        assert!(kl_basis(&params(0.0, 0.0, 1.0), 0).is_err());
    }

    #[test]
    fn basis_invariants_and_boundary_conditions() {
        for p in reference_sets() {
            let b = kl_basis(&p, 20).unwrap();
            for (i, m) in b.modes.iter().enumerate() {
                assert_eq!(m.n, i + 1);
                assert_eq!(m.lambda, p.sigma_sq() / (m.omega * m.omega + p.theta().powi(2)));
                let sq = p.horizon() / 2.0 - (2.0 * m.omega * p.horizon()).sin() / (4.0 * m.omega);
                assert!(sq > 0.0);
                assert!(m.boundary_residual(&p) < 1e-10, "{p:?} n={} {}", m.n, m.boundary_residual(&p));
                assert_eq!(m.value(p.horizon(), p.horizon()), 0.0);
            }
            assert!(b.modes.windows(2).all(|w| w[0].omega < w[1].omega && w[0].lambda > w[1].lambda));
        }
    }

    #[test]
    fn orthonormality() {
        let q = AdaptiveSimpson::default();
        for p in reference_sets() {
            let b = kl_basis(&p, 10).unwrap();
            for (i, a) in b.modes.iter().enumerate() {
                for c in &b.modes[i..] {
                    let v = q
                        .integrate(|t| a.value(1.0, t) * c.value(1.0, t), 0.0, 1.0)
                        .unwrap();
                    let target = if a.n == c.n { 1.0 } else { 0.0 };
                    assert!((v - target).abs() < 1e-8, "{p:?} ({}, {}) {v}", a.n, c.n);
                }
            }
        }
    }

    #[test]
    fn integral_equation_holds() {
        for p in reference_sets() {
            let b = kl_basis(&p, 5).unwrap();
            for mode in &b.modes {
                let mut worst: f64 = 0.0;
                for i in 0..=20 {
                    let t = i as f64 / 20.0;
                    let k = |s: f64| bridge_cov(&p, t, s).unwrap() * mode.value(1.0, s);
                    // the kernel has a kink on the diagonal
                    let lhs = integrate(k, 0.0, t).unwrap() + integrate(k, t, 1.0).unwrap();
                    worst = worst.max((lhs - mode.lambda * mode.value(1.0, t)).abs());
                }
                assert!(worst < 1e-8, "{p:?} n={} {worst}", mode.n);
            }
        }
    }

    #[test]
    fn mercer_convergence() {
        for p in reference_sets() {
            let b = kl_basis(&p, 200).unwrap();
            let grid: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
            let sup = |m: usize| {
                let bm = b.truncated(m);
                let mut worst: f64 = 0.0;
                for &s in &grid {
                    for &t in &grid {
                        worst = worst.max((bm.mercer_sum(s, t) - bridge_cov(&p, s, t).unwrap()).abs());
                    }
                }
                worst
            };
            let (e10, e50, e200) = (sup(10), sup(50), sup(200));
            assert!(e10 >= e50 && e50 >= e200, "{p:?}: {e10} {e50} {e200}");
            // |e_n|^2 <= (2/T)(1 + O(1/n)) bounds the uniform error by about twice the tail
            let tail = total_bridge_variance(&p).unwrap() - b.eigenvalues().iter().sum::<f64>();
            assert!(e200 <= 2.02 * tail, "{p:?}: {e200} vs tail {tail}");
        }
    }

    #[test]
    fn trace_matches_eigen_sum_with_tail() {
        let p = params(1.0, 0.5, 1.0);
        let b = kl_basis(&p, 2000).unwrap();
        let partial: f64 = b.modes.iter().map(|m| m.lambda).sum();
        let trace = total_bridge_variance(&p).unwrap();
        assert!((partial + b.tail_estimate() - trace).abs() < 1e-6);
        // the raw truncation gap is the tail, not rounding
        assert!(trace - partial > 1e-5);
    }

    #[test]
    fn case_continuity_across_critical_ratio() {
        let lambda1 = |s0: f64| kl_basis(&params(1.0, s0, 1.0), 1).unwrap().modes[0].lambda;
        let at = lambda1(1.0);
        for eps in [1e-7, 1e-9, 1e-12] {
            let below = lambda1(1.0 - eps);
            let above = lambda1(1.0 + eps);
            assert_eq!(classify_case(&params(1.0, 1.0 - eps, 1.0)), FrequencyCase::SubCritical);
            assert_eq!(classify_case(&params(1.0, 1.0 + eps, 1.0)), FrequencyCase::SuperCritical);
            assert!((below - at).abs() < 1e-6 && (above - at).abs() < 1e-6, "{below} {at} {above}");
        }
    }

    #[test]
    fn basis_json_shape() {
        let b = kl_basis(&params(1.0, 2.0, 1.0), 2).unwrap();
        let v: serde_json::Value = serde_json::to_value(&b).unwrap();
        assert_eq!(v["case"], "SuperCritical");
        assert_eq!(v["params"]["T"], 1.0);
        assert_eq!(v["modes"][1]["n"], 2);
        for key in ["omega", "lambda", "norm"] {
            assert!(v["modes"][0][key].is_f64());
        }
        let back: KlBasis = serde_json::from_value(v).unwrap();
        assert_eq!(back, b);
    }
}
