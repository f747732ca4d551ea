//! Adaptive Simpson quadrature with interval bisection.

use crate::error::{Error, Result};

/// Adaptive Simpson integrator.
///
/// Each panel is bisected until the Richardson estimate `|S(l) + S(r) - S| / 15`
/// drops below the panel's share of `abs_tol`, or until the change is at the
/// rounding level of the panel estimate.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveSimpson {
    pub abs_tol: f64,
    pub max_depth: u32,
    /// Panels are always split this many times before the error test is
    /// trusted, so oscillatory integrands cannot alias to a false zero.
    pub min_depth: u32,
}

impl Default for AdaptiveSimpson {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_depth: 60,
            min_depth: 6,
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

impl AdaptiveSimpson {
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let (fa, fb) = (f(a), f(b));
        let m = 0.5 * (a + b);
        let fm = f(m);
        let whole = simpson(a, b, fa, fm, fb);
        let panel = Panel {
            a,
            b,
            fa,
            fm,
            fb,
            whole,
        };
        let mut failed = false;
        let value = self.recurse(&f, panel, self.abs_tol, 0, &mut failed);
        if failed {
            return Err(Error::Quadrature {
                a,
                b,
                tol: self.abs_tol,
                max_depth: self.max_depth,
            });
        }
        Ok(value)
    }

    fn recurse<F: Fn(f64) -> f64>(
        &self,
        f: &F,
        p: Panel,
        tol: f64,
        depth: u32,
        failed: &mut bool,
    ) -> f64 {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let delta = left + right - p.whole;
        let converged = delta.abs() <= 15.0 * tol
            || delta.abs() <= 64.0 * f64::EPSILON * (left.abs() + right.abs());
        if depth >= self.min_depth && converged {
            return left + right + delta / 15.0;
        }
        if depth >= self.max_depth {
            *failed = true;
            return left + right;
        }
        let l = Panel {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: flm,
            fb: p.fm,
            whole: left,
        };
        let r = Panel {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: frm,
            fb: p.fb,
            whole: right,
        };
        self.recurse(f, l, 0.5 * tol, depth + 1, failed)
            + self.recurse(f, r, 0.5 * tol, depth + 1, failed)
    }
}

#[inline]
fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Integrates `f` over `[a, b]` with the default tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    AdaptiveSimpson::default().integrate(f, a, b)
}
