//! RA success probability as a differentiable function of slice bandwidth.
//!
//! With the PRACH count relaxed to `F = omega/a`, the interference load is
//! `alpha = y_eff / omega` where `y_eff = a p_nr p_ne lambda_I / (3.5 lambda_R
//! xi)`, and
//!
//! ```text
//! P(omega) = c0 * [ t(omega; y_eff z) - t(omega; y_eff) ],
//! t(omega; c) = (omega / (omega + c))^3.5,
//! c0 = e^{-varpi sigma^2} (1 + varpi rho_o),   z = theta/(1+theta).
//! ```
//!
//! Derivatives are taken from this expression directly, so the surrogate is
//! exactly consistent with the implemented success probability (the preamble
//! pool size stays inside the load).

use crate::miot::{MiotSliceProfile, RadioParams, CELL_SHAPE};
use serde::{Deserialize, Serialize};

/// One slice's success-probability curve at a frozen queue state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SliceCurve {
    /// `e^{-varpi sigma^2} (1 + varpi rho_o)`.
    pub c0: f64,
    /// Load scale `a p_nr p_ne lambda_I / (3.5 lambda_R xi)` (MHz).
    pub y_eff: f64,
    /// `theta/(1+theta)`.
    pub z: f64,
}

impl SliceCurve {
    pub fn new(profile: &MiotSliceProfile, radio: &RadioParams, p_nr: f64, p_ne: f64) -> Self {
        let varpi = profile.theta_th / radio.rho_o_w;
        SliceCurve {
            c0: (-varpi * radio.sigma2_w).exp() * (1.0 + varpi * radio.rho_o_w),
            y_eff: radio.tone_spacing_mhz * p_nr * p_ne * profile.lambda_i
                / (CELL_SHAPE * radio.lambda_r * radio.xi as f64),
            z: profile.theta_th / (1.0 + profile.theta_th),
        }
    }

    fn t(omega: f64, c: f64) -> f64 {
        (omega / (omega + c)).powf(CELL_SHAPE)
    }

    fn t1(omega: f64, c: f64) -> f64 {
        3.5 * c * omega.powf(2.5) / (omega + c).powf(4.5)
    }

    fn t2(omega: f64, c: f64) -> f64 {
        15.75 * c * c * omega.powf(1.5) / (omega + c).powf(5.5)
            - 7.0 * c * omega.powf(1.5) / (omega + c).powf(4.5)
    }

    fn t3(omega: f64, c: f64) -> f64 {
        3.5 * c
            * (3.75 * omega.powf(0.5) / (omega + c).powf(4.5)
                - 22.5 * omega.powf(1.5) / (omega + c).powf(5.5)
                + 24.75 * omega.powf(2.5) / (omega + c).powf(6.5))
    }

    /// Success probability at bandwidth `omega` (MHz).
    pub fn p(&self, omega: f64) -> f64 {
        if self.y_eff == 0.0 {
            return 0.0;
        }
        self.c0 * (Self::t(omega, self.y_eff * self.z) - Self::t(omega, self.y_eff))
    }

    pub fn dp(&self, omega: f64) -> f64 {
        if self.y_eff == 0.0 {
            return 0.0;
        }
        self.c0 * (Self::t1(omega, self.y_eff * self.z) - Self::t1(omega, self.y_eff))
    }

    pub fn d2p(&self, omega: f64) -> f64 {
        if self.y_eff == 0.0 {
            return 0.0;
        }
        self.c0 * (Self::t2(omega, self.y_eff * self.z) - Self::t2(omega, self.y_eff))
    }

    pub fn d3p(&self, omega: f64) -> f64 {
        if self.y_eff == 0.0 {
            return 0.0;
        }
        self.c0 * (Self::t3(omega, self.y_eff * self.z) - Self::t3(omega, self.y_eff))
    }
}

/// Second-order expansion of the intensity-weighted utility
/// `P~ = sum_s w_s P_s(omega_s)` around a local point. Cross-slice second
/// derivatives vanish, so the Hessian is carried as its diagonal.
#[derive(Debug, Clone)]
pub struct TaylorSurrogate {
    pub local: Vec<f64>,
    /// Intensity weights `lambda_s / sum lambda`.
    pub weights: Vec<f64>,
    /// Per-slice `P_s` at the local point.
    pub value: Vec<f64>,
    /// Per-slice `dP_s/domega` at the local point.
    pub gradient: Vec<f64>,
    /// Per-slice `d2P_s/domega2` at the local point.
    pub hessian_diag: Vec<f64>,
}

impl TaylorSurrogate {
    pub fn build(curves: &[SliceCurve], weights: &[f64], local: &[f64]) -> Self {
        assert_eq!(curves.len(), local.len());
        assert_eq!(curves.len(), weights.len());
        TaylorSurrogate {
            local: local.to_vec(),
            weights: weights.to_vec(),
            value: curves.iter().zip(local).map(|(c, &w)| c.p(w)).collect(),
            gradient: curves.iter().zip(local).map(|(c, &w)| c.dp(w)).collect(),
            hessian_diag: curves.iter().zip(local).map(|(c, &w)| c.d2p(w)).collect(),
        }
    }

    /// Second-order prediction of the weighted utility at `omega`.
    pub fn predict(&self, omega: &[f64]) -> f64 {
        let mut acc = 0.0;
        for s in 0..omega.len() {
            let d = omega[s] - self.local[s];
            acc += self.weights[s]
                * (self.value[s] + self.gradient[s] * d + 0.5 * self.hessian_diag[s] * d * d);
        }
        acc
    }

    /// Third-order remainder bound with the endpoint-max rule: the third
    /// derivative is evaluated at both trust-interval endpoints and the larger
    /// magnitude kept, per slice. Diagnostic only.
    pub fn remainder_bound(
        &self,
        curves: &[SliceCurve],
        intervals: &[super::interval::TrustInterval],
        omega: &[f64],
    ) -> f64 {
        let mut acc = 0.0;
        for s in 0..omega.len() {
            let d3 = curves[s]
                .d3p(intervals[s].omega_lb_hat)
                .abs()
                .max(curves[s].d3p(intervals[s].s_star).abs());
            let d = (omega[s] - self.local[s]).abs();
            acc += self.weights[s] * d.powi(3) * d3;
        }
        acc / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::interval::find_trust_interval;
    use crate::miot::{
        alpha_load, ra_success_probability, ArrivalSchedule, LaplaceMode,
    };
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn radio() -> RadioParams {
        RadioParams {
            rho_o_w: 1e-12,
            sigma2_w: 1e-12,
            lambda_r: 3.0,
            xi: 54,
            tone_spacing_mhz: 0.18,
            packet_bits: 2000.0,
            pathloss_exp: 4.0,
        }
    }

    fn profile(gamma_kbit: f64, lambda_i: f64) -> MiotSliceProfile {
        MiotSliceProfile {
            slice_id: 0,
            lambda_i,
            theta_th: (gamma_kbit / 1000.0 / 0.18).exp2() - 1.0,
            arrival: ArrivalSchedule::Constant(1.0),
            pi_s: 0.5,
        }
    }

    /// The curve must agree with the composed closed form exactly.
    #[test]
    fn curve_consistent_with_closed_form() {
        let radio = radio();
        let p = profile(5.8, 18000.0);
        for p_ne in [0.2, 0.7, 1.0] {
            let curve = SliceCurve::new(&p, &radio, 1.0, p_ne);
            for omega in [0.18, 0.5, 2.0, 7.7, 30.0] {
                let f_s = omega / radio.tone_spacing_mhz;
                let alpha =
                    alpha_load(1.0, p_ne, p.lambda_i, radio.lambda_r, 54.0, f_s).unwrap();
                let direct = ra_success_probability(
                    p.theta_th,
                    radio.rho_o_w,
                    radio.sigma2_w,
                    alpha,
                    LaplaceMode::PaperExact,
                )
                .unwrap();
                assert_relative_eq!(curve.p(omega), direct, max_relative = 1e-12);
            }
        }
    }

    /// Finite-difference oracle on 100 random draws inside trust intervals:
    /// gradient to 1e-5 relative, Hessian diagonal to 1e-4 relative.
    #[test]
    fn derivatives_match_central_differences() {
        let radio = radio();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        while checked < 100 {
            let gamma = rng.gen_range(2.0..8.0);
            let lambda_i = rng.gen_range(2000.0..25000.0);
            let p_ne = rng.gen_range(0.1..1.0f64);
            let prof = profile(gamma, lambda_i);
            let curve = SliceCurve::new(&prof, &radio, 1.0, p_ne);
            let Ok(interval) =
                find_trust_interval(&curve, prof.pi_s, 0.18, 60.0, 1e-6)
            else {
                continue;
            };
            let omega =
                rng.gen_range(interval.omega_lb_hat..=interval.s_star.max(interval.omega_lb_hat + 1e-9));
            // Richardson-extrapolated central differences as the oracle
            let h = 1e-3 * omega;
            let d1 = |h: f64| (curve.p(omega + h) - curve.p(omega - h)) / (2.0 * h);
            let fd1 = (4.0 * d1(h / 2.0) - d1(h)) / 3.0;
            let d2 = |h: f64| {
                (curve.p(omega + h) - 2.0 * curve.p(omega) + curve.p(omega - h)) / (h * h)
            };
            let fd2 = (4.0 * d2(h / 2.0) - d2(h)) / 3.0;
            assert_relative_eq!(curve.dp(omega), fd1, max_relative = 1e-5);
            assert_relative_eq!(curve.d2p(omega), fd2, max_relative = 1e-4);
            checked += 1;
        }
    }

    #[test]
    fn third_derivative_matches_differences_of_hessian() {
        let radio = radio();
        let prof = profile(5.8, 18000.0);
        let curve = SliceCurve::new(&prof, &radio, 1.0, 0.8);
        for omega in [0.5, 1.5, 3.0, 9.0] {
            let h = 1e-5 * omega;
            let fd3 = (curve.d2p(omega + h) - curve.d2p(omega - h)) / (2.0 * h);
            assert_relative_eq!(curve.d3p(omega), fd3, max_relative = 1e-4);
        }
    }

    #[test]
    fn gradient_vanishes_at_peak_and_degenerate_cases() {
        let radio = radio();
        let prof = profile(5.8, 18000.0);
        let curve = SliceCurve::new(&prof, &radio, 1.0, 0.8);
        let interval = find_trust_interval(&curve, 0.5, 0.18, 60.0, 1e-6).unwrap();
        assert!(curve.dp(interval.s_star).abs() < 1e-6);
        // second-order condition at an interior maximizer
        assert!(curve.d2p(interval.s_star) < 0.0);
        // empty queues freeze the curve at its degenerate value
        let idle = SliceCurve::new(&prof, &radio, 1.0, 0.0);
        assert_eq!(idle.dp(1.0), 0.0);
        assert_eq!(idle.p(1.0), 0.0);
    }

    /// The quadratic model's remainder: bounded by the endpoint-max rule in at
    /// least 95% of sampled interior points, and the bound scales cubically.
    #[test]
    fn remainder_bound_covers_and_scales() {
        let radio = radio();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let profs: Vec<MiotSliceProfile> = [5.8, 4.35, 2.9]
            .iter()
            .map(|&g| profile(g, 18000.0))
            .collect();
        let curves: Vec<SliceCurve> = profs
            .iter()
            .map(|p| SliceCurve::new(p, &radio, 1.0, 0.8))
            .collect();
        let weights = vec![1.0 / 3.0; 3];
        let intervals: Vec<_> = curves
            .iter()
            .map(|c| find_trust_interval(c, 0.5, 0.18, 60.0, 1e-6).unwrap())
            .collect();
        let local: Vec<f64> = intervals
            .iter()
            .map(|iv| 0.5 * (iv.omega_lb_hat + iv.s_star))
            .collect();
        let surrogate = TaylorSurrogate::build(&curves, &weights, &local);

        // query at the local point: zero bound and zero error
        assert_eq!(surrogate.remainder_bound(&curves, &intervals, &local), 0.0);

        let mut covered = 0;
        let trials = 400;
        for _ in 0..trials {
            let omega: Vec<f64> = intervals
                .iter()
                .map(|iv| rng.gen_range(iv.omega_lb_hat..iv.s_star))
                .collect();
            let exact: f64 = curves
                .iter()
                .zip(&weights)
                .zip(&omega)
                .map(|((c, &w), &o)| w * c.p(o))
                .sum();
            let err = (exact - surrogate.predict(&omega)).abs();
            let bound = surrogate.remainder_bound(&curves, &intervals, &omega);
            if err <= bound + 1e-12 {
                covered += 1;
            }
        }
        assert!(
            covered as f64 >= 0.95 * trials as f64,
            "covered {covered}/{trials}"
        );

        // cubic scaling in the displacement
        let dir = 0.3;
        let q1: Vec<f64> = local.iter().map(|&l| l + dir * 0.01).collect();
        let q2: Vec<f64> = local.iter().map(|&l| l + dir * 0.02).collect();
        let b1 = surrogate.remainder_bound(&curves, &intervals, &q1);
        let b2 = surrogate.remainder_bound(&curves, &intervals, &q2);
        assert_relative_eq!(b2 / b1, 8.0, max_relative = 1e-9);
    }
}
