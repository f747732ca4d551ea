//! Ornstein-Uhlenbeck process and bridge moments.
//!
//! The process solves `dX = theta (mu - X) dt + sigma dW` on `[0, T]` with
//! `X_0 ~ N(x0, sigma0^2)` independent of `W`. The bridge is the same process
//! conditioned on `X_T = z`.
//!
//! All closed forms are evaluated in a factored form that only involves
//! `exp` of non-positive arguments and `expm1`, so they stay finite for
//! `|theta| T` far beyond the overflow threshold of the textbook expressions.
//! For the bridge covariance the textbook expression reduces to
//!
//! ```text
//! c(s, t) = sigma^2 e^{-|theta|(M - m)} G(m) S(T - M) / G(T),  m = s∧t, M = s∨t
//! S(x)    = (1 - e^{-2|theta| x}) / (2|theta|)
//! G(x)    = sigma0^2 e^{-(theta + |theta|) x} + sigma^2 S(x)
//! ```
//!
//! which at `theta = 0` is `(sigma0^2 + sigma^2 m) sigma^2 (T - M) / (sigma0^2 + sigma^2 T)`.
//!
//! The random-start reduction shifts the endpoint by `mu (1 - e^{-theta T})`,
//! i.e. the deterministic part of the solution evaluated at the horizon `T`.
//! That is the term the Gaussian conditioning identity requires.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::AdaptiveSimpson;

/// Below this value of `|theta| T` the `theta = 0` formulas are used.
pub const DRIFTLESS_THRESHOLD: f64 = 1e-10;

/// Parameters of the OU process and of the Gaussian prior on `X_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct OuParams {
    theta: f64,
    mu: f64,
    sigma: f64,
    sigma0: f64,
    x0: f64,
    horizon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    theta: f64,
    mu: f64,
    sigma: f64,
    sigma0: f64,
    x0: f64,
    #[serde(rename = "T")]
    horizon: f64,
}

impl TryFrom<RawParams> for OuParams {
    type Error = Error;

    fn try_from(r: RawParams) -> Result<Self> {
        OuParams::new(r.theta, r.mu, r.sigma, r.sigma0, r.x0, r.horizon)
    }
}

impl From<OuParams> for RawParams {
    fn from(p: OuParams) -> Self {
        RawParams {
            theta: p.theta,
            mu: p.mu,
            sigma: p.sigma,
            sigma0: p.sigma0,
            x0: p.x0,
            horizon: p.horizon,
        }
    }
}

impl OuParams {
    pub fn new(theta: f64, mu: f64, sigma: f64, sigma0: f64, x0: f64, horizon: f64) -> Result<Self> {
        let all = [theta, mu, sigma, sigma0, x0, horizon];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "parameters must be finite, got {all:?}"
            )));
        }
        if sigma <= 0.0 {
            return Err(Error::InvalidParams(format!("sigma must be > 0, got {sigma}")));
        }
        if horizon <= 0.0 {
            return Err(Error::InvalidParams(format!("T must be > 0, got {horizon}")));
        }
        if sigma0 < 0.0 {
            return Err(Error::InvalidParams(format!("sigma0 must be >= 0, got {sigma0}")));
        }
        Ok(Self {
            theta,
            mu,
            sigma,
            sigma0,
            x0,
            horizon,
        })
    }

    /// Centered process started at 0: `mu = x0 = sigma0 = 0`.
    pub fn centered(theta: f64, sigma: f64, horizon: f64) -> Result<Self> {
        Self::new(theta, 0.0, sigma, 0.0, 0.0, horizon)
    }

    /// Same parameters with an `N(x0, sigma0^2)` initial law.
    pub fn with_start(self, x0: f64, sigma0: f64) -> Result<Self> {
        Self::new(self.theta, self.mu, self.sigma, sigma0, x0, self.horizon)
    }

    pub fn with_level(self, mu: f64) -> Result<Self> {
        Self::new(self.theta, mu, self.sigma, self.sigma0, self.x0, self.horizon)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }
    pub fn sigma0_sq(&self) -> f64 {
        self.sigma0 * self.sigma0
    }

    /// Whether the `theta = 0` closed forms apply.
    pub fn is_driftless(&self) -> bool {
        (self.theta * self.horizon).abs() < DRIFTLESS_THRESHOLD
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::Domain {
                t,
                horizon: self.horizon,
            })
        }
    }

    /// `(1 - e^{-2 k x}) / (2 k)` with its `x` limit at `k = 0`.
    fn s_fn(&self, k: f64, x: f64) -> f64 {
        if self.is_driftless() {
            x
        } else {
            -(-2.0 * k * x).exp_m1() / (2.0 * k)
        }
    }

    /// `G(x)` of the factored bridge covariance.
    fn g_fn(&self, x: f64) -> f64 {
        let k = self.theta.abs();
        let decay = if self.is_driftless() {
            1.0
        } else {
            (-(self.theta + k) * x).exp()
        };
        self.sigma0_sq() * decay + self.sigma_sq() * self.s_fn(k, x)
    }

    /// Deterministic part `x0 e^{-theta t} + mu (1 - e^{-theta t})` of the
    /// solution started from `x0`.
    pub fn deterministic_part(&self, start: f64, t: f64) -> f64 {
        if self.is_driftless() {
            start
        } else {
            start * (-self.theta * t).exp() - self.mu * (-self.theta * t).exp_m1()
        }
    }
}

/// OU parameters together with the conditioning value `X_T = z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub params: OuParams,
    pub z: f64,
}

impl BridgeSpec {
    pub fn new(params: OuParams, z: f64) -> Result<Self> {
        if !z.is_finite() {
            return Err(Error::InvalidParams(format!("endpoint z must be finite, got {z}")));
        }
        Ok(Self { params, z })
    }

    /// True when the process starts deterministically at 0 with zero level.
    pub fn is_centered(&self) -> bool {
        let p = &self.params;
        p.sigma0 == 0.0 && p.x0 == 0.0 && p.mu == 0.0
    }
}

/// `E[X_t]`.
pub fn process_mean(params: &OuParams, t: f64) -> Result<f64> {
    params.check_time(t)?;
    Ok(params.deterministic_part(params.x0, t))
}

/// `Cov(X_s, X_t)` of the unconditioned process.
pub fn process_cov(params: &OuParams, s: f64, t: f64) -> Result<f64> {
    params.check_time(s)?;
    params.check_time(t)?;
    let (lo, hi) = (s.min(t), s.max(t));
    let p = params;
    if p.is_driftless() {
        return Ok(p.sigma0_sq() + p.sigma_sq() * lo);
    }
    let th = p.theta;
    Ok(p.sigma0_sq() * (-th * (s + t)).exp() + p.sigma_sq() * (-th * (hi - lo)).exp() * p.s_fn(th, lo))
}

/// `Cov(X_s, X_t | X_T)`.
pub fn bridge_cov(params: &OuParams, s: f64, t: f64) -> Result<f64> {
    params.check_time(s)?;
    params.check_time(t)?;
    let (lo, hi) = (s.min(t), s.max(t));
    let p = params;
    let horizon = p.horizon;
    if p.is_driftless() {
        let (v0, v) = (p.sigma0_sq(), p.sigma_sq());
        return Ok((v0 + v * lo) * v * (horizon - hi) / (v0 + v * horizon));
    }
    let k = p.theta.abs();
    Ok(p.sigma_sq() * (-k * (hi - lo)).exp() * p.g_fn(lo) * p.s_fn(k, horizon - hi) / p.g_fn(horizon))
}

/// `E[X_t | X_T = z]`.
///
/// Written as `beta z + mu (1 - beta) + (x0 - mu) D(t)` with the regression
/// coefficient `beta(t) = Cov(X_t, X_T) / Var(X_T)`; both `beta(T) = 1` and
/// `D(T) = 0` hold exactly, so the value at `T` is `z` bit for bit.
pub fn bridge_mean(spec: &BridgeSpec, t: f64) -> Result<f64> {
    let p = &spec.params;
    p.check_time(t)?;
    let (beta, d) = regression_terms(p, t);
    Ok(beta * spec.z + p.mu * (1.0 - beta) + (p.x0 - p.mu) * d)
}

fn regression_terms(p: &OuParams, t: f64) -> (f64, f64) {
    let horizon = p.horizon;
    let k = p.theta.abs();
    let g_end = p.g_fn(horizon);
    let beta = if p.is_driftless() {
        p.g_fn(t) / g_end
    } else {
        (-k * (horizon - t)).exp() * p.g_fn(t) / g_end
    };
    let decay = if p.is_driftless() { 1.0 } else { (-k * t).exp() };
    let d = p.sigma_sq() * decay * p.s_fn(k, horizon - t) / g_end;
    (beta, d)
}

/// `int_0^T Var(X_t | X_T) dt`, the trace of the bridge covariance operator.
pub fn total_bridge_variance(params: &OuParams) -> Result<f64> {
    AdaptiveSimpson::default().integrate(
        |t| bridge_cov(params, t, t).expect("quadrature node inside [0, T]"),
        0.0,
        params.horizon,
    )
}
