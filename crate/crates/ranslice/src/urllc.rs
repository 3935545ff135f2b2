//! Finite-blocklength URLLC resource formulas.
//!
//! A served URLLC packet of `L` bits needs `r` channel uses at SNR `nu`:
//!
//! ```text
//! r = L/C + q^2/(2C^2) * (1 + sqrt(1 + 4LC/q^2)),   C = log2(1+nu), q = Q^{-1}(beta),
//! ```
//!
//! the larger root of `L = rC - q sqrt(r)` (the dispersion term taken at its
//! unit bound). The packet occupies `r/(kappa D)` of bandwidth for `D`
//! minislots, and a compound-Poisson batch arrival stream with blocking
//! probability `alpha` and queueing probability `varsigma` needs at most
//! `W^u` of bandwidth (the M/M/W upper bound below).

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum UrllcError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: H is {h}x{h}, G is {g}x{g}")]
    DimensionMismatch { h: usize, g: usize },
    #[error("infeasible rate: SNR must be positive to carry {bits} bits")]
    InfeasibleRate { bits: f64 },
}

/// Per-slice URLLC request parameters (stored units: minislots, bits).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UrllcSliceProfile {
    pub slice_id: usize,
    pub device_count: usize,
    /// Transmission latency bound (minislots).
    pub latency_bound: f64,
    /// Batch arrival intensity (packets/minislot).
    pub arrival_intensity: f64,
    /// Packet payload (bits).
    pub packet_bits: f64,
}

impl UrllcSliceProfile {
    pub fn validate(&self) -> Result<(), UrllcError> {
        if self.device_count < 1 {
            return Err(UrllcError::InvalidParameter(format!(
                "slice {}: needs at least one device",
                self.slice_id
            )));
        }
        if self.latency_bound <= 0.0 {
            return Err(UrllcError::InvalidParameter(format!(
                "slice {}: latency bound must be positive",
                self.slice_id
            )));
        }
        if self.arrival_intensity < 0.0 {
            return Err(UrllcError::InvalidParameter(format!(
                "slice {}: arrival intensity must be non-negative",
                self.slice_id
            )));
        }
        Ok(())
    }
}

/// Shared URLLC thresholds and conversion constants.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UrllcGlobals {
    pub alpha_block: f64,
    pub beta_decode: f64,
    pub varsigma: f64,
    /// Channel uses per minislot per MHz.
    pub kappa_per_mhz: f64,
    /// SNR loss from imperfect channel knowledge (> 1).
    pub phi_snr: f64,
    /// Per-device noise power (W).
    pub sigma2_u_w: f64,
    /// Energy-efficiency tradeoff coefficient.
    pub eta: f64,
    /// Inter-slice priority weight.
    pub rho_tilde: f64,
}

impl UrllcGlobals {
    pub fn validate(&self) -> Result<(), UrllcError> {
        if !(self.alpha_block > 0.0 && self.alpha_block < self.varsigma && self.varsigma < 1.0) {
            return Err(UrllcError::InvalidParameter(
                "need 0 < alpha < varsigma < 1".into(),
            ));
        }
        if !(self.beta_decode > 0.0 && self.beta_decode < 0.5) {
            return Err(UrllcError::InvalidParameter(
                "beta must lie in (0, 0.5)".into(),
            ));
        }
        if self.phi_snr <= 1.0 {
            return Err(UrllcError::InvalidParameter("phi must exceed 1".into()));
        }
        if self.eta <= 0.0 || self.rho_tilde < 0.0 {
            return Err(UrllcError::InvalidParameter(
                "eta must be positive and rho_tilde non-negative".into(),
            ));
        }
        if self.kappa_per_mhz <= 0.0 || self.sigma2_u_w <= 0.0 {
            return Err(UrllcError::InvalidParameter(
                "kappa and noise power must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Blocking/queueing coefficient of the bandwidth bound,
    /// `(alpha - varsigma alpha)/(varsigma - alpha)`.
    pub fn surge_coefficient(&self) -> f64 {
        (self.alpha_block - self.varsigma * self.alpha_block) / (self.varsigma - self.alpha_block)
    }
}

/// `Q^{-1}(beta)`: the upper-tail standard-normal quantile.
pub fn q_inv(beta: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    debug_assert!(beta > 0.0 && beta < 1.0);
    let n = Normal::new(0.0, 1.0).unwrap();
    -n.inverse_cdf(beta)
}

/// Rank-one channel outer product `H = h h^H` for one device and one sample.
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    h: DVector<C64>,
    mat: DMatrix<C64>,
}

impl ChannelMatrix {
    pub fn from_vector(h: DVector<C64>) -> Self {
        let mat = &h * h.adjoint();
        ChannelMatrix { h, mat }
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.h
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    /// `tr(H) = |h|^2`.
    pub fn trace(&self) -> f64 {
        self.h.norm_squared()
    }
}

/// Hermitian PSD power matrix (beamformer outer product after recovery).
#[derive(Debug, Clone)]
pub struct PowerMatrix(pub DMatrix<C64>);

impl PowerMatrix {
    pub fn from_beamformer(g: &DVector<C64>) -> Self {
        PowerMatrix(g * g.adjoint())
    }

    pub fn zeros(dim: usize) -> Self {
        PowerMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|c| c.re).sum()
    }

    /// `tr(Z_j G)`: power radiated by RRH `j` (antennas `[jK, (j+1)K)`).
    pub fn rrh_power(&self, j: usize, antennas: usize) -> f64 {
        (j * antennas..(j + 1) * antennas)
            .map(|i| self.0[(i, i)].re)
            .sum()
    }
}

/// Real part of `tr(A B)` for Hermitian `A`, `B`.
pub fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Received SNR through the trace form `tr(H G) / (phi sigma^2)`.
pub fn snr(h: &ChannelMatrix, g: &PowerMatrix, globals: &UrllcGlobals) -> Result<f64, UrllcError> {
    if h.dim() != g.dim() {
        return Err(UrllcError::DimensionMismatch {
            h: h.dim(),
            g: g.dim(),
        });
    }
    Ok(trace_product(h.matrix(), &g.0).max(0.0) / (globals.phi_snr * globals.sigma2_u_w))
}

/// Channel uses needed for `l_bits` at `snr_lin`, decoding error `beta`.
pub fn channel_uses(l_bits: f64, snr_lin: f64, beta: f64) -> Result<f64, UrllcError> {
    if snr_lin <= 0.0 {
        return Err(UrllcError::InfeasibleRate { bits: l_bits });
    }
    debug_assert!(beta > 0.0 && beta <= 0.5);
    let c = snr_lin.ln_1p() / std::f64::consts::LN_2;
    let q = if beta >= 0.5 { 0.0 } else { q_inv(beta) };
    if q == 0.0 {
        return Ok(l_bits / c);
    }
    let q2c2 = q * q / (2.0 * c * c);
    Ok(l_bits / c + q2c2 * (1.0 + (1.0 + 4.0 * l_bits * c / (q * q)).sqrt()))
}

/// Transmitted bits over `r` channel uses by the normal approximation,
/// `L = r C - Q^{-1}(beta) sqrt(r V)`, `V = ln^2(2) (1 - (1+snr)^{-2})`.
pub fn normal_approx_bits(r: f64, snr_lin: f64, beta: f64) -> f64 {
    debug_assert!(r > 0.0);
    let c = snr_lin.ln_1p() / std::f64::consts::LN_2;
    let v = std::f64::consts::LN_2.powi(2) * (1.0 - (1.0 + snr_lin).powi(-2));
    let q = if beta >= 0.5 { 0.0 } else { q_inv(beta) };
    r * c - q * (r * v).sqrt()
}

/// Bandwidth (MHz) occupied by one served packet, `b r / (kappa D)`.
pub fn per_packet_bandwidth(served: bool, r: f64, globals: &UrllcGlobals, d_s: f64) -> f64 {
    debug_assert!(r >= 0.0 && d_s > 0.0);
    if !served {
        return 0.0;
    }
    r / (globals.kappa_per_mhz * d_s)
}

/// One device's term in the bandwidth bound.
#[derive(Debug, Clone, Copy)]
pub struct ServedTerm {
    pub served: bool,
    /// Channel uses for this device's packet.
    pub r: f64,
    /// Slice arrival intensity (packets/minislot).
    pub lambda: f64,
    /// Slice latency bound (minislots).
    pub d: f64,
}

/// Minimum upper bound (MHz) of the bandwidth that keeps the M/M/W^u queue
/// within the blocking and queueing probability targets:
///
/// ```text
/// W^u = sum lambda b r / kappa
///     + coeff * sqrt( (sum b lambda^2 D^2)(sum lambda b r^2/(kappa^2 D)) / min lambda D )
/// ```
///
/// with the min over slices that serve at least one device; an empty service
/// set yields 0.
pub fn urllc_bandwidth_bound(terms: &[ServedTerm], globals: &UrllcGlobals) -> Result<f64, UrllcError> {
    if globals.varsigma <= globals.alpha_block {
        return Err(UrllcError::InvalidParameter(
            "queueing probability must exceed blocking probability".into(),
        ));
    }
    let served: Vec<&ServedTerm> = terms.iter().filter(|t| t.served).collect();
    if served.is_empty() {
        return Ok(0.0);
    }
    let kappa = globals.kappa_per_mhz;
    let mean: f64 = served.iter().map(|t| t.lambda * t.r / kappa).sum();
    let s_latency: f64 = served.iter().map(|t| t.lambda * t.lambda * t.d * t.d).sum();
    let s_uses: f64 = served
        .iter()
        .map(|t| t.lambda * t.r * t.r / (kappa * kappa * t.d))
        .sum();
    let min_ld = served
        .iter()
        .map(|t| t.lambda * t.d)
        .fold(f64::INFINITY, f64::min);
    let surge = globals.surge_coefficient() * (s_latency * s_uses / min_ld).sqrt();
    Ok(mean + surge)
}

/// Energy-efficiency utility of the URLLC slices,
/// `sum_i b_i/(1 - e^{-D_i}) - eta sum_i b_i tr(G_i)`.
pub fn urllc_utility(entries: &[(bool, f64, f64)], eta: f64) -> f64 {
    entries
        .iter()
        .filter(|(b, _, _)| *b)
        .map(|&(_, d, tr_g)| 1.0 / (-(-d).exp_m1()) - eta * tr_g)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn globals() -> UrllcGlobals {
        UrllcGlobals {
            alpha_block: 1e-5,
            beta_decode: 2e-8,
            varsigma: 2e-5,
            kappa_per_mhz: 512.0,
            phi_snr: 1.5,
            sigma2_u_w: 1e-13,
            eta: 100.0,
            rho_tilde: 1.0,
        }
    }

    fn random_cvec(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<C64> {
        DVector::from_fn(n, |_, _| {
            C64::new(rng.sample::<f64, _>(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal)) * scale
        })
    }

    #[test]
    fn q_inv_reference_values() {
        // pinned against the standard-normal upper-tail quantile
        assert_relative_eq!(q_inv(0.5), 0.0, epsilon = 1e-12);
        assert_relative_eq!(q_inv(0.158655253931457), 1.0, epsilon = 1e-9);
        assert_relative_eq!(q_inv(0.0013498980316301), 3.0, epsilon = 1e-9);
        assert_relative_eq!(q_inv(2.866515719235352e-7), 5.0, epsilon = 1e-8);
        // series/symmetry checks: Q^{-1}(1-b) = -Q^{-1}(b)
        for b in [1e-10, 1e-6, 0.01, 0.3] {
            assert_relative_eq!(q_inv(1.0 - b), -q_inv(b), epsilon = 1e-7);
        }
    }

    #[test]
    fn snr_trace_form_equals_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = globals();
        for _ in 0..20 {
            let h = random_cvec(&mut rng, 6, 1.0);
            let gv = random_cvec(&mut rng, 6, 1.0);
            let hm = ChannelMatrix::from_vector(h.clone());
            let gm = PowerMatrix::from_beamformer(&gv);
            let via_trace = snr(&hm, &gm, &g).unwrap();
            let ip = h.adjoint() * &gv;
            let direct = ip[(0, 0)].norm_sqr() / (g.phi_snr * g.sigma2_u_w);
            assert_relative_eq!(via_trace, direct, max_relative = 1e-10);
        }
    }

    #[test]
    fn snr_degenerate_cases() {
        let g = globals();
        let h = ChannelMatrix::from_vector(DVector::from_element(4, C64::new(1.0, 0.0)));
        assert_eq!(snr(&h, &PowerMatrix::zeros(4), &g).unwrap(), 0.0);
        // matched filter: aligned unit vectors at power p give p/(phi sigma^2)
        let unit = DVector::from_fn(4, |i, _| {
            if i == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let h = ChannelMatrix::from_vector(unit.clone());
        let p = 0.25f64;
        let beam = PowerMatrix::from_beamformer(&(unit * C64::new(p.sqrt(), 0.0)));
        assert_relative_eq!(
            snr(&h, &beam, &g).unwrap(),
            p / (g.phi_snr * g.sigma2_u_w),
            max_relative = 1e-12
        );
        assert!(snr(&h, &PowerMatrix::zeros(6), &g).is_err());
    }

    #[test]
    fn channel_uses_closed_form_cases() {
        let beta = 2e-8;
        let q = q_inv(beta);
        let snr = 3.0;
        let c = (1.0f64 + snr).log2();
        assert_relative_eq!(
            channel_uses(0.0, snr, beta).unwrap(),
            q * q / (c * c),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            channel_uses(160.0, snr, 0.5).unwrap(),
            160.0 / c,
            max_relative = 1e-12
        );
        assert!(channel_uses(160.0, 0.0, beta).is_err());
    }

    /// Root-finding oracle: the closed form is the larger root of
    /// `rho(r) = r C - q sqrt(r) - L`, located by bisection.
    #[test]
    fn channel_uses_matches_bisection_root() {
        let beta = 2e-8;
        let q = q_inv(beta);
        for (l, s) in [(160.0, 2.0), (160.0, 20.0), (1000.0, 0.5), (32.0, 7.7)] {
            let c = (1.0f64 + s).log2();
            let f = |r: f64| r * c - q * r.sqrt() - l;
            let (mut lo, mut hi) = (l / c, 1e9);
            assert!(f(lo) <= 0.0 && f(hi) > 0.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            let closed = channel_uses(l, s, beta).unwrap();
            assert_relative_eq!(closed, root, max_relative = 1e-9);
        }
    }

    #[test]
    fn channel_uses_monotonicity_grid() {
        let beta = 2e-8;
        // strictly decreasing in SNR
        let mut prev = f64::INFINITY;
        for i in 1..200 {
            let s = 0.1 * i as f64;
            let r = channel_uses(160.0, s, beta).unwrap();
            assert!(r < prev);
            prev = r;
        }
        // strictly increasing in L
        let mut prev = 0.0;
        for i in 1..200 {
            let l = 10.0 * i as f64;
            let r = channel_uses(l, 4.0, beta).unwrap();
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn normal_approx_dominates_unit_bound() {
        let beta = 2e-8;
        for (l0, s) in [(160.0, 1.0), (160.0, 12.0), (500.0, 3.3)] {
            let r = channel_uses(l0, s, beta).unwrap();
            // the ln^2(2) dispersion bound is conservative
            assert!(normal_approx_bits(r, s, beta) >= l0 - 1e-9);
        }
        // beta = 0.5 removes the dispersion penalty
        let r = 100.0;
        let s = 3.0;
        assert_relative_eq!(
            normal_approx_bits(r, s, 0.5),
            r * (1.0f64 + s).log2(),
            max_relative = 1e-12
        );
        // dispersion saturates at high SNR
        let v_hi = 1.0 - (1.0 + 1e9f64).powi(-2);
        assert_relative_eq!(v_hi, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn per_packet_bandwidth_cases() {
        let g = globals();
        assert_eq!(per_packet_bandwidth(false, 100.0, &g, 1.0), 0.0);
        // documented convention: r = 100 uses over D = 1 minislot at
        // kappa = 5.12e-4 uses/minislot/Hz occupies 100/512 MHz
        assert_relative_eq!(
            per_packet_bandwidth(true, 100.0, &g, 1.0),
            0.1953125,
            epsilon = 1e-12
        );
        // doubling the latency bound halves the bandwidth
        assert_relative_eq!(
            per_packet_bandwidth(true, 100.0, &g, 2.0),
            per_packet_bandwidth(true, 100.0, &g, 1.0) / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn bandwidth_bound_cases() {
        let g = globals();
        assert_relative_eq!(g.surge_coefficient(), 1e-5 * (1.0 - 2e-5) / 1e-5, epsilon = 1e-12);

        let none = vec![
            ServedTerm {
                served: false,
                r: 100.0,
                lambda: 0.1,
                d: 1.0,
            };
            4
        ];
        assert_eq!(urllc_bandwidth_bound(&none, &g).unwrap(), 0.0);

        // single served device: the surge term collapses to coeff * lambda r / kappa
        let one = [ServedTerm {
            served: true,
            r: 80.0,
            lambda: 0.4,
            d: 2.0,
        }];
        let expect = 0.4 * 80.0 / g.kappa_per_mhz * (1.0 + g.surge_coefficient());
        assert_relative_eq!(urllc_bandwidth_bound(&one, &g).unwrap(), expect, max_relative = 1e-12);

        let mut bad = g;
        bad.varsigma = 1e-5;
        bad.alpha_block = 1e-5;
        assert!(urllc_bandwidth_bound(&one, &bad).is_err());
    }

    /// Serving one more device never lowers the bound.
    #[test]
    fn bandwidth_bound_superadditive() {
        let g = globals();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut terms: Vec<ServedTerm> = (0..6)
                .map(|_| ServedTerm {
                    served: rng.gen_bool(0.5),
                    r: rng.gen_range(20.0..400.0),
                    lambda: rng.gen_range(0.05..3.0),
                    d: rng.gen_range(0.5..4.0),
                })
                .collect();
            let base = urllc_bandwidth_bound(&terms, &g).unwrap();
            if let Some(t) = terms.iter_mut().find(|t| !t.served) {
                t.served = true;
                let bigger = urllc_bandwidth_bound(&terms, &g).unwrap();
                assert!(bigger >= base - 1e-12, "bound shrank: {base} -> {bigger}");
            }
        }
    }

    #[test]
    fn utility_cases() {
        assert_eq!(urllc_utility(&[(false, 1.0, 0.3), (false, 2.0, 0.1)], 100.0), 0.0);
        // one device with a huge latency bound: gain saturates at 1
        let u = urllc_utility(&[(true, 60.0, 0.02)], 100.0);
        assert_relative_eq!(u, 1.0 - 100.0 * 0.02, epsilon = 1e-9);
        // eta = 0 keeps only the count-weighted gain
        let u = urllc_utility(&[(true, 1.0, 0.5), (true, 2.0, 0.7)], 0.0);
        let expect = 1.0 / (1.0 - (-1.0f64).exp()) + 1.0 / (1.0 - (-2.0f64).exp());
        assert_relative_eq!(u, expect, epsilon = 1e-12);
    }
}
