//! Bisection-derived trust interval of the success-probability curve.
//!
//! `P(omega)` is unimodal on the admissible bandwidth range, so the
//! super-level set `{P >= pi}` is an interval. A derivative-sign bisection
//! finds the peak `S*`; two more bisections find the zeros of `P - pi` on
//! either side. The quadratic surrogate is expanded and trusted on
//! `[omega_lb_hat, S*]`.

use super::surrogate::SliceCurve;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IntervalError {
    #[error("slice infeasible: peak success probability {peak:.6} below the floor {floor} on [{lo}, {hi}] MHz")]
    SliceInfeasible {
        peak: f64,
        floor: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid search range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
}

/// Feasible-and-concave bandwidth range of one slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustInterval {
    /// Lower zero of `P - pi`, clamped up to one PRB.
    pub omega_lb_hat: f64,
    /// Bandwidth maximizing `P`.
    pub s_star: f64,
    /// Upper zero of `P - pi`, clamped down to the total bandwidth.
    pub omega_ub: f64,
}

impl TrustInterval {
    pub fn clamp_to_trust(&self, omega: f64) -> f64 {
        omega.clamp(self.omega_lb_hat, self.s_star)
    }

    pub fn clamp_to_box(&self, omega: f64) -> f64 {
        omega.clamp(self.omega_lb_hat, self.omega_ub)
    }
}

fn bisect(mut lo: f64, mut hi: f64, tol: f64, mut above: impl FnMut(f64) -> bool) -> f64 {
    // invariant: predicate true at hi-side target; caller orients the scan
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Locate `[omega_lb_hat, S*, omega_ub]` for one slice on `[a, w_max]` to
/// absolute tolerance `tol` (MHz).
pub fn find_trust_interval(
    curve: &SliceCurve,
    pi_s: f64,
    a: f64,
    w_max: f64,
    tol: f64,
) -> Result<TrustInterval, IntervalError> {
    if !(a > 0.0 && w_max >= a) {
        return Err(IntervalError::InvalidRange { lo: a, hi: w_max });
    }

    // peak by derivative-sign bisection on the unimodal curve
    let s_star = if curve.dp(a) <= 0.0 {
        a
    } else if curve.dp(w_max) >= 0.0 {
        w_max
    } else {
        bisect(a, w_max, tol, |w| curve.dp(w) < 0.0)
    };

    let peak = curve.p(s_star);
    if peak < pi_s {
        return Err(IntervalError::SliceInfeasible {
            peak,
            floor: pi_s,
            lo: a,
            hi: w_max,
        });
    }

    let omega_lb_hat = if curve.p(a) >= pi_s {
        a
    } else {
        bisect(a, s_star, tol, |w| curve.p(w) >= pi_s)
    };

    let omega_ub = if curve.p(w_max) >= pi_s {
        w_max
    } else {
        // P decreases beyond the peak; flip the orientation
        let flipped = bisect(0.0, s_star.max(w_max - s_star), tol, |d| {
            curve.p(w_max - d) >= pi_s
        });
        w_max - flipped
    };

    Ok(TrustInterval {
        omega_lb_hat,
        s_star,
        omega_ub,
    })
}
