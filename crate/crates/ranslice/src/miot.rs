//! Closed-form random-access analysis for mIoT slices.
//!
//! An active IoT device transmits a preamble on a uniformly chosen
//! (preamble, PRACH) pair; the receiving RRH decodes it when the preamble SINR
//! clears the slice threshold. Under truncated channel-inversion power control
//! and Rayleigh fading, the success probability of an attempting device is
//!
//! ```text
//! P_s = exp(-varpi * sigma^2) * L(varpi),      varpi = theta_th / rho_o,
//! ```
//!
//! where `L` is the Laplace transform of the intra-cell interference seen at
//! the serving RRH, driven by the gamma-Poisson law of the number of co-choice
//! active devices per Voronoi cell. The per-device queue intensity evolves by a
//! thinned-Poisson recursion, which closes the loop: queue occupancy sets the
//! interferer density, and the success probability sets the queue drain rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shape parameter of the gamma approximation to the typical Voronoi cell
/// area; also the exponent of the interference Laplace transform.
pub const CELL_SHAPE: f64 = 3.5;

#[derive(Debug, Error)]
pub enum MiotError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bandwidth {omega} MHz below one PRB ({a} MHz) for slice {slice}")]
    BandwidthBelowPrb { slice: usize, omega: f64, a: f64 },
    #[error("internal consistency: probability {value} out of [0,1] (tol 1e-9) in {context}")]
    ProbabilityOutOfRange { value: f64, context: &'static str },
}

/// Per-slice mIoT request parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiotSliceProfile {
    pub slice_id: usize,
    /// Device intensity (devices/km^2).
    pub lambda_i: f64,
    /// SINR decode threshold, linear.
    pub theta_th: f64,
    /// New-packet arrival intensity per minislot.
    pub arrival: ArrivalSchedule,
    /// Required floor on the RA success probability.
    pub pi_s: f64,
}

impl MiotSliceProfile {
    pub fn validate(&self) -> Result<(), MiotError> {
        if self.lambda_i <= 0.0 {
            return Err(MiotError::InvalidParameter(format!(
                "slice {}: lambda_i must be positive",
                self.slice_id
            )));
        }
        if self.theta_th <= 0.0 {
            return Err(MiotError::InvalidParameter(format!(
                "slice {}: theta_th must be positive",
                self.slice_id
            )));
        }
        if !(0.0..=1.0).contains(&self.pi_s) {
            return Err(MiotError::InvalidParameter(format!(
                "slice {}: pi_s must lie in [0,1]",
                self.slice_id
            )));
        }
        if self.arrival.iter_first(1_000).any(|v| v < 0.0) {
            return Err(MiotError::InvalidParameter(format!(
                "slice {}: arrival intensity must be non-negative",
                self.slice_id
            )));
        }
        Ok(())
    }
}

/// Arrival intensity schedule over minislots, either flat or tabulated.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArrivalSchedule {
    Constant(f64),
    PerSlot(Vec<f64>),
}

impl ArrivalSchedule {
    /// Arrival intensity at minislot `t` (1-based). A tabulated schedule holds
    /// its last value beyond the table.
    pub fn at(&self, t: usize) -> f64 {
        match self {
            ArrivalSchedule::Constant(v) => *v,
            ArrivalSchedule::PerSlot(vs) => {
                if vs.is_empty() {
                    0.0
                } else {
                    vs[(t - 1).min(vs.len() - 1)]
                }
            }
        }
    }

    fn iter_first(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        (1..=n).map(move |t| self.at(t))
    }
}

/// Radio-plane constants shared by all mIoT slices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadioParams {
    /// Power-control cutoff at the serving RRH (W).
    pub rho_o_w: f64,
    /// Noise power (W).
    pub sigma2_w: f64,
    /// RRH intensity (RRHs/km^2).
    pub lambda_r: f64,
    /// Non-dedicated preamble pool size.
    pub xi: u32,
    /// PRACH tone spacing, i.e. the bandwidth of one PRB (MHz).
    pub tone_spacing_mhz: f64,
    /// IoT packet size (bits).
    pub packet_bits: f64,
    /// Path-loss exponent (used by the Monte-Carlo oracle).
    pub pathloss_exp: f64,
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), MiotError> {
        let checks = [
            (self.rho_o_w > 0.0, "rho_o must be positive"),
            (self.sigma2_w > 0.0, "sigma2 must be positive"),
            (self.lambda_r > 0.0, "lambda_r must be positive"),
            (self.xi >= 1, "xi must be at least 1"),
            (self.tone_spacing_mhz > 0.0, "tone spacing must be positive"),
            (self.packet_bits > 0.0, "packet size must be positive"),
            (self.pathloss_exp > 2.0, "path-loss exponent must exceed 2"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(MiotError::InvalidParameter(msg.into()));
            }
        }
        Ok(())
    }
}

/// RACH access-control scheme applied to active devices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum AccessControl {
    /// Every active device may request the RACH.
    Unrestricted,
    /// Access class barring: an active device transmits only when a uniform
    /// draw falls below `p_acb`.
    Acb { p_acb: f64 },
}

impl AccessControl {
    pub fn validate(&self) -> Result<(), MiotError> {
        if let AccessControl::Acb { p_acb } = self {
            if !(*p_acb > 0.0 && *p_acb <= 1.0) {
                return Err(MiotError::InvalidParameter(
                    "p_acb must lie in (0,1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Probability that an active device's RACH request is not restricted.
pub fn access_probability(ctrl: AccessControl) -> f64 {
    match ctrl {
        AccessControl::Unrestricted => 1.0,
        AccessControl::Acb { p_acb } => p_acb,
    }
}

/// Mean number of co-choice active devices per cell divided by the cell-shape
/// constant: `alpha_s = p_nr * p_ne * lambda_i / (3.5 * lambda_r * xi * f_s)`.
pub fn alpha_load(
    p_nr: f64,
    p_ne: f64,
    lambda_i: f64,
    lambda_r: f64,
    xi: f64,
    f_s: f64,
) -> Result<f64, MiotError> {
    let denom = CELL_SHAPE * lambda_r * xi * f_s;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(MiotError::InvalidParameter(format!(
            "alpha_load denominator must be positive (lambda_r={lambda_r}, xi={xi}, f_s={f_s})"
        )));
    }
    if p_nr < 0.0 || p_ne < 0.0 || lambda_i < 0.0 {
        return Err(MiotError::InvalidParameter(
            "alpha_load inputs must be non-negative".into(),
        ));
    }
    Ok(p_nr * p_ne * lambda_i / denom)
}

/// PMF of the number of active devices per Voronoi cell sharing one
/// (preamble, PRACH) pair: a gamma(3.5)-mixed Poisson law,
/// `pmf(n) = Gamma(n+3.5)/(Gamma(3.5) n!) * alpha^n / (1+alpha)^(n+3.5)`.
pub fn gamma_poisson_pmf(n: u64, alpha: f64) -> f64 {
    debug_assert!(alpha >= 0.0);
    if alpha == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    let ln = statrs::function::gamma::ln_gamma(nf + CELL_SHAPE)
        - statrs::function::gamma::ln_gamma(CELL_SHAPE)
        - statrs::function::gamma::ln_gamma(nf + 1.0)
        + nf * alpha.ln()
        - (nf + CELL_SHAPE) * alpha.ln_1p();
    ln.exp()
}

/// Cut the gamma-Poisson PMF adaptively: extend until the tail mass drops
/// below 1e-12, capped at 1e5 terms. Returns the (unnormalized) head.
pub fn gamma_poisson_pmf_head(alpha: f64) -> Vec<f64> {
    const TAIL: f64 = 1e-12;
    const CAP: usize = 100_000;
    let mut head = Vec::with_capacity(64);
    let mut cum = 0.0;
    for n in 0..CAP as u64 {
        let p = gamma_poisson_pmf(n, alpha);
        head.push(p);
        cum += p;
        if 1.0 - cum < TAIL && n as f64 > CELL_SHAPE * alpha {
            break;
        }
    }
    head
}

/// How the interference Laplace transform treats the vanishing-load limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplaceMode {
    /// Evaluate the closed form verbatim; it tends to 0 as `alpha -> 0`.
    #[default]
    PaperExact,
    /// Return 1 when `alpha < 1e-12`: zero interference implies no
    /// interference-driven outage.
    PhysicalLimit,
}

/// Laplace transform of the intra-cell interference at the serving RRH,
///
/// ```text
/// L(varpi) = (1+varpi rho_o) / (1 + alpha varpi rho_o/(1+varpi rho_o))^3.5
///          - (1+varpi rho_o) / (1 + alpha)^3.5 .
/// ```
///
/// Equivalently `(1+varpi rho_o) * (E[z^X] - P{X=0})` with `z = 1/(1+varpi
/// rho_o)` and `X` the gamma-Poisson co-choice count.
pub fn interference_laplace(varpi: f64, alpha: f64, rho_o: f64, mode: LaplaceMode) -> f64 {
    debug_assert!(varpi >= 0.0 && alpha >= 0.0 && rho_o > 0.0);
    if mode == LaplaceMode::PhysicalLimit && alpha < 1e-12 {
        return 1.0;
    }
    let w = varpi * rho_o;
    let first = (1.0 + w) / (1.0 + alpha * w / (1.0 + w)).powf(CELL_SHAPE);
    let second = (1.0 + w) / (1.0 + alpha).powf(CELL_SHAPE);
    (first - second).max(0.0)
}

/// RA success probability of an attempting device: `exp(-varpi sigma^2) *
/// L(varpi)` with `varpi = theta_th/rho_o`.
pub fn ra_success_probability(
    theta_th: f64,
    rho_o: f64,
    sigma2: f64,
    alpha: f64,
    mode: LaplaceMode,
) -> Result<f64, MiotError> {
    let varpi = theta_th / rho_o;
    let p = (-varpi * sigma2).exp() * interference_laplace(varpi, alpha, rho_o, mode);
    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(MiotError::ProbabilityOutOfRange {
            value: p,
            context: "ra_success_probability",
        });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Packets popped from the head of the queue per successful RA:
/// `x_s = a log2(1+theta_th) / L` with `a` in MHz and `L` in bits
/// (one minislot of one PRB carries `a` Mbit at spectral efficiency
/// `log2(1+theta_th)`).
pub fn packets_per_success(a_mhz: f64, theta_th: f64, l_bits: f64) -> f64 {
    debug_assert!(a_mhz > 0.0 && l_bits > 0.0);
    a_mhz * (1.0 + theta_th).log2() * 1.0e6 / l_bits
}

/// One step of the accumulated-packet intensity recursion,
/// `theta_a(t) = [theta_w(t-1) + theta_a(t-1)
///               - x_s P_s(t-1) (1 - e^{-theta_w(t-1)-theta_a(t-1)})]^+`.
pub fn queue_step(theta_w_prev: f64, theta_a_prev: f64, p_s_prev: f64, x_s: f64) -> f64 {
    debug_assert!(theta_w_prev >= 0.0 && theta_a_prev >= 0.0 && x_s >= 0.0);
    debug_assert!((0.0..=1.0).contains(&p_s_prev));
    let total = theta_w_prev + theta_a_prev;
    let drained = x_s * p_s_prev * (-(-total).exp_m1());
    (total - drained).max(0.0)
}

/// Probability that a device queue is non-empty, `1 - e^{-theta_a}`.
pub fn nonempty_probability(theta_a: f64) -> f64 {
    debug_assert!(theta_a >= 0.0);
    -(-theta_a).exp_m1()
}

/// Per-minislot record of one slice's queue/RACH state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotState {
    /// Accumulated-packet intensity at the start of the minislot.
    pub theta_a: f64,
    /// Non-empty probability.
    pub p_ne: f64,
    /// RA success probability of an attempting device.
    pub p_s: f64,
}

/// Closed-form trajectory over a slot: `per_slice[s][t-1]` is the state of
/// slice `s` at minislot `t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueueTrajectory {
    pub per_slice: Vec<Vec<SlotState>>,
}

impl QueueTrajectory {
    pub fn minislots(&self) -> usize {
        self.per_slice.first().map_or(0, Vec::len)
    }

    /// Largest non-empty probability a slice reaches over the slot.
    pub fn max_p_ne(&self, slice: usize) -> f64 {
        self.per_slice[slice]
            .iter()
            .map(|s| s.p_ne)
            .fold(0.0, f64::max)
    }
}

/// Policy for the success probability at the first minislot, where no device
/// has anything to send yet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", content = "value")]
pub enum InitSuccess {
    /// Noise-only limit `exp(-theta_th sigma^2 / rho_o)`.
    NoiseOnly,
    /// A fixed value in [0,1].
    Fixed(f64),
}

impl Default for InitSuccess {
    fn default() -> Self {
        InitSuccess::NoiseOnly
    }
}

/// Options for [`evolve_slot`].
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub laplace_mode: LaplaceMode,
    #[serde(default)]
    pub init_success: InitSuccess,
}

/// Evolve the closed-form queue/RACH state of every slice over `t_slots`
/// minislots at fixed per-slice bandwidths `omega` (MHz). PRACH counts are
/// relaxed to the continuous `F_s = omega_s / a`.
pub fn evolve_slot(
    profiles: &[MiotSliceProfile],
    radio: &RadioParams,
    ctrl: AccessControl,
    omega: &[f64],
    t_slots: usize,
    opts: EvolveOptions,
) -> Result<QueueTrajectory, MiotError> {
    assert_eq!(profiles.len(), omega.len(), "one bandwidth per slice");
    let a = radio.tone_spacing_mhz;
    for (s, &w) in omega.iter().enumerate() {
        if w < a - 1e-12 {
            return Err(MiotError::BandwidthBelowPrb {
                slice: s,
                omega: w,
                a,
            });
        }
    }
    let p_nr = access_probability(ctrl);
    let mut per_slice = Vec::with_capacity(profiles.len());
    for (profile, &w) in profiles.iter().zip(omega) {
        let f_s = w / a;
        let x_s = packets_per_success(a, profile.theta_th, radio.packet_bits);
        let p1 = match opts.init_success {
            InitSuccess::NoiseOnly => (-profile.theta_th / radio.rho_o_w * radio.sigma2_w).exp(),
            InitSuccess::Fixed(v) => v.clamp(0.0, 1.0),
        };
        let mut states = Vec::with_capacity(t_slots);
        states.push(SlotState {
            theta_a: 0.0,
            p_ne: 0.0,
            p_s: p1,
        });
        for t in 2..=t_slots {
            let prev = states[t - 2];
            let theta_w_prev = profile.arrival.at(t - 1);
            let theta_a = queue_step(theta_w_prev, prev.theta_a, prev.p_s, x_s);
            let p_ne = nonempty_probability(theta_a);
            let alpha = alpha_load(
                p_nr,
                p_ne,
                profile.lambda_i,
                radio.lambda_r,
                radio.xi as f64,
                f_s,
            )?;
            let p_s = ra_success_probability(
                profile.theta_th,
                radio.rho_o_w,
                radio.sigma2_w,
                alpha,
                opts.laplace_mode,
            )?;
            states.push(SlotState { theta_a, p_ne, p_s });
        }
        per_slice.push(states);
    }
    Ok(QueueTrajectory { per_slice })
}

/// Intensity-weighted time average of RA success probabilities,
/// `(1/T) sum_t sum_s lambda_s P_s(t) / sum_s lambda_s`.
pub fn miot_utility(traj: &QueueTrajectory, profiles: &[MiotSliceProfile]) -> f64 {
    let t_slots = traj.minislots();
    if t_slots == 0 {
        return 0.0;
    }
    let total_intensity: f64 = profiles.iter().map(|p| p.lambda_i).sum();
    let mut acc = 0.0;
    for (states, profile) in traj.per_slice.iter().zip(profiles) {
        let weight = profile.lambda_i / total_intensity;
        acc += weight * states.iter().map(|s| s.p_s).sum::<f64>();
    }
    acc / t_slots as f64
}
