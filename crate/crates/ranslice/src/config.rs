//! Experiment configuration.
//!
//! All unit conversions happen here, once, at parse time:
//!
//! * powers are configured in dBm and stored in watts;
//! * the mIoT queue serving rate `gamma_th` (Kbit/minislot) fixes the SINR
//!   decode threshold through `gamma = a * log2(1 + theta)` with `a` in MHz
//!   and gamma in Mbit/minislot, so `theta = 2^(gamma/1000/a) - 1`;
//! * URLLC latency bounds are configured in milliseconds and stored in
//!   minislots (one minislot spans one millisecond);
//! * `kappa` is configured in channel uses per minislot per Hz and stored per
//!   MHz, so every bandwidth in the code is an MHz quantity.

use crate::miot::{AccessControl, ArrivalSchedule, MiotSliceProfile, RadioParams};
use crate::urllc::{UrllcGlobals, UrllcSliceProfile};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("failed to parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Raw per-slice mIoT parameters as configured.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiotSliceConfig {
    /// Device intensity (devices/km^2).
    pub lambda_i: f64,
    /// Queue serving rate (Kbit/minislot); fixes the SINR threshold.
    pub gamma_th_kbit: f64,
    /// New-packet arrival intensity (packets/minislot).
    pub arrival: ArrivalSchedule,
    /// Required RA success probability.
    pub pi_s: f64,
}

/// Raw per-slice URLLC parameters as configured.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UrllcSliceConfig {
    /// Number of devices in the slice.
    pub devices: usize,
    /// Transmission latency bound (milliseconds).
    pub d_ms: f64,
    /// Batch arrival intensity (packets/minislot).
    pub lambda: f64,
    /// Packet payload (bits).
    pub packet_bits: f64,
}

/// Everything a run needs, in configured units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    // radio plane
    pub total_bandwidth_mhz: f64,
    pub tone_spacing_mhz: f64,
    pub preamble_pool: u32,
    pub lambda_r: f64,
    pub rho_o_dbm: f64,
    pub sigma2_dbm: f64,
    pub pathloss_exp: f64,
    pub iot_packet_bits: f64,
    /// Downlink power an RRH spends per connected IoT device (mW).
    pub e_iot_mw: f64,
    /// Over-provisioning coefficient for excess IoT devices.
    pub alpha_g: f64,

    // slices
    pub miot_slices: Vec<MiotSliceConfig>,
    pub urllc_slices: Vec<UrllcSliceConfig>,

    // URLLC globals
    pub blocking_prob: f64,
    pub decode_error_prob: f64,
    pub queueing_prob: f64,
    /// Channel uses per minislot per Hz.
    pub kappa: f64,
    pub snr_loss: f64,
    pub urllc_noise_dbm: f64,
    pub energy_coeff: f64,
    pub priority_weight: f64,

    // CoMP deployment
    pub rrh_count: usize,
    pub antennas_per_rrh: usize,
    pub rrh_power_w: f64,
    pub area_km: f64,
    pub antenna_gain_db: f64,
    pub shadowing_db: f64,

    // algorithm
    pub minislots: usize,
    pub sample_count: usize,
    pub penalty_mu: f64,
    pub k_max: usize,
    pub q_max: usize,
    pub access: AccessControl,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_init_power")]
    pub init_beam_power_w: f64,
}

fn default_init_power() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// ADMM stop: `delta_omega` below this (None: 1e-3 * |S^I| * a).
    pub admm_delta: Option<f64>,
    /// Inner-loop stop on relative objective change.
    pub inner_rel: f64,
    /// Bisection tolerance for trust intervals (MHz).
    pub bisection_mhz: f64,
    /// Scaled KKT/constraint residual bound.
    pub kkt: f64,
    /// Outer-approximation cut violation bound.
    pub cut: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            admm_delta: None,
            inner_rel: 1e-5,
            bisection_mhz: 1e-6,
            kkt: 1e-6,
            cut: 1e-7,
        }
    }
}

impl SystemConfig {
    /// The parameter set used throughout the evaluation section of the study:
    /// three mIoT slices at 18000 devices/km^2 and two URLLC slices (3 + 5
    /// devices) over a 3-RRH CoMP cluster in 1 km^2.
    pub fn paper_defaults() -> Self {
        SystemConfig {
            total_bandwidth_mhz: 60.0,
            tone_spacing_mhz: 0.18,
            preamble_pool: 54,
            lambda_r: 3.0,
            rho_o_dbm: -90.0,
            sigma2_dbm: -90.0,
            pathloss_exp: 4.0,
            iot_packet_bits: 2000.0,
            e_iot_mw: 0.03,
            alpha_g: 0.05,
            miot_slices: vec![
                MiotSliceConfig {
                    lambda_i: 18000.0,
                    gamma_th_kbit: 5.8,
                    arrival: ArrivalSchedule::Constant(1.5),
                    pi_s: 0.5,
                },
                MiotSliceConfig {
                    lambda_i: 18000.0,
                    gamma_th_kbit: 4.35,
                    arrival: ArrivalSchedule::Constant(1.0),
                    pi_s: 0.5,
                },
                MiotSliceConfig {
                    lambda_i: 18000.0,
                    gamma_th_kbit: 2.9,
                    arrival: ArrivalSchedule::Constant(0.5),
                    pi_s: 0.5,
                },
            ],
            urllc_slices: vec![
                UrllcSliceConfig {
                    devices: 3,
                    d_ms: 1.0,
                    lambda: 0.1,
                    packet_bits: 160.0,
                },
                UrllcSliceConfig {
                    devices: 5,
                    d_ms: 2.0,
                    lambda: 0.1,
                    packet_bits: 160.0,
                },
            ],
            blocking_prob: 1e-5,
            decode_error_prob: 2e-8,
            queueing_prob: 2e-5,
            kappa: 5.12e-4,
            snr_loss: 1.5,
            urllc_noise_dbm: -100.0,
            energy_coeff: 100.0,
            priority_weight: 1.0,
            rrh_count: 3,
            antennas_per_rrh: 2,
            rrh_power_w: 3.0,
            area_km: 1.0,
            antenna_gain_db: 5.0,
            shadowing_db: 10.0,
            minislots: 60,
            sample_count: 100,
            penalty_mu: 2.9e-3,
            k_max: 250,
            q_max: 250,
            access: AccessControl::Unrestricted,
            tolerances: Tolerances::default(),
            init_beam_power_w: default_init_power(),
        }
    }

    /// Paper parameters at a desk-scale sample count (M = 20).
    pub fn desk_defaults() -> Self {
        let mut cfg = Self::paper_defaults();
        cfg.sample_count = 20;
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.total_bandwidth_mhz <= 0.0 {
            return Err(invalid("total_bandwidth_mhz", "must be positive"));
        }
        if self.tone_spacing_mhz <= 0.0 {
            return Err(invalid("tone_spacing_mhz", "must be positive"));
        }
        if self.miot_slices.is_empty() {
            return Err(invalid("miot_slices", "at least one mIoT slice"));
        }
        if !(self.blocking_prob > 0.0 && self.blocking_prob < self.queueing_prob) {
            return Err(invalid(
                "blocking_prob",
                "needs 0 < blocking_prob < queueing_prob",
            ));
        }
        if self.queueing_prob >= 1.0 {
            return Err(invalid("queueing_prob", "must be below 1"));
        }
        if !(self.decode_error_prob > 0.0 && self.decode_error_prob < 0.5) {
            return Err(invalid("decode_error_prob", "must lie in (0, 0.5)"));
        }
        if self.snr_loss <= 1.0 {
            return Err(invalid("snr_loss", "must exceed 1"));
        }
        if self.energy_coeff <= 0.0 {
            return Err(invalid("energy_coeff", "must be positive"));
        }
        if self.priority_weight < 0.0 {
            return Err(invalid("priority_weight", "must be non-negative"));
        }
        if self.kappa <= 0.0 {
            return Err(invalid("kappa", "must be positive"));
        }
        if self.rrh_count == 0 || self.antennas_per_rrh == 0 {
            return Err(invalid("rrh_count", "deployment must be non-empty"));
        }
        if self.sample_count == 0 {
            return Err(invalid("sample_count", "need at least one sample"));
        }
        if self.minislots == 0 {
            return Err(invalid("minislots", "need at least one minislot"));
        }
        if self.penalty_mu <= 0.0 {
            return Err(invalid("penalty_mu", "must be positive"));
        }
        self.access
            .validate()
            .map_err(|e| invalid("access", e.to_string()))?;
        self.radio_params()
            .validate()
            .map_err(|e| invalid("radio", e.to_string()))?;
        for (i, p) in self.miot_profiles().iter().enumerate() {
            p.validate()
                .map_err(|e| invalid(&format!("miot_slices[{i}]"), e.to_string()))?;
        }
        for (i, u) in self.urllc_profiles().iter().enumerate() {
            u.validate()
                .map_err(|e| invalid(&format!("urllc_slices[{i}]"), e.to_string()))?;
        }
        self.urllc_globals()
            .validate()
            .map_err(|e| invalid("urllc globals", e.to_string()))?;
        Ok(())
    }

    pub fn radio_params(&self) -> RadioParams {
        RadioParams {
            rho_o_w: dbm_to_watt(self.rho_o_dbm),
            sigma2_w: dbm_to_watt(self.sigma2_dbm),
            lambda_r: self.lambda_r,
            xi: self.preamble_pool,
            tone_spacing_mhz: self.tone_spacing_mhz,
            packet_bits: self.iot_packet_bits,
            pathloss_exp: self.pathloss_exp,
        }
    }

    pub fn miot_profiles(&self) -> Vec<MiotSliceProfile> {
        self.miot_slices
            .iter()
            .enumerate()
            .map(|(s, c)| MiotSliceProfile {
                slice_id: s,
                lambda_i: c.lambda_i,
                theta_th: (c.gamma_th_kbit / 1000.0 / self.tone_spacing_mhz).exp2() - 1.0,
                arrival: c.arrival.clone(),
                pi_s: c.pi_s,
            })
            .collect()
    }

    pub fn urllc_profiles(&self) -> Vec<UrllcSliceProfile> {
        self.urllc_slices
            .iter()
            .enumerate()
            .map(|(s, c)| UrllcSliceProfile {
                slice_id: s,
                device_count: c.devices,
                latency_bound: c.d_ms,
                arrival_intensity: c.lambda,
                packet_bits: c.packet_bits,
            })
            .collect()
    }

    pub fn urllc_globals(&self) -> UrllcGlobals {
        UrllcGlobals {
            alpha_block: self.blocking_prob,
            beta_decode: self.decode_error_prob,
            varsigma: self.queueing_prob,
            kappa_per_mhz: self.kappa * 1e6,
            phi_snr: self.snr_loss,
            sigma2_u_w: dbm_to_watt(self.urllc_noise_dbm),
            eta: self.energy_coeff,
            rho_tilde: self.priority_weight,
        }
    }

    /// Per-RRH downlink power reserved for IoT feedback,
    /// `sum_s (1+alpha_g) (lambda_s / lambda_r) E_hat`.
    pub fn iot_power_reserve_w(&self) -> f64 {
        let e_hat = self.e_iot_mw * 1e-3;
        self.miot_slices
            .iter()
            .map(|s| (1.0 + self.alpha_g) * s.lambda_i / self.lambda_r * e_hat)
            .sum()
    }

    /// ADMM stopping threshold on the consensus residual.
    pub fn admm_delta_tol(&self) -> f64 {
        self.tolerances.admm_delta.unwrap_or_else(|| {
            1e-3 * self.miot_slices.len() as f64 * self.tone_spacing_mhz
        })
    }

    pub fn total_urllc_devices(&self) -> usize {
        self.urllc_slices.iter().map(|s| s.devices).sum()
    }
}

/// A full experiment: one system config plus the sweep/run controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub seed: u64,
    /// Monte-Carlo replications for validation runs.
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// IoT intensity scaling for the Monte-Carlo validation preset.
    #[serde(default = "default_mc_scale")]
    pub mc_intensity_scale: f64,
    #[serde(default)]
    pub sweep: Option<Sweep>,
}

fn default_replications() -> usize {
    200
}

fn default_mc_scale() -> f64 {
    1.0 / 30.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Which configured quantity a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// IoT intensity multiplier `n`: every slice gets 900 n devices/km^2.
    IotMultiplier,
    /// URLLC batch arrival intensity (packets/minislot) for every slice.
    UrllcArrival,
    /// Total system bandwidth (MHz).
    TotalBandwidth,
    /// ACB factor.
    AcbFactor,
    /// Serving-rate multiplier `m`: gammas set to {3.6 m, 2.7 m, 1.8 m}.
    GammaMultiplier,
    /// Latency multiplier `d`: D set to {0.25 d, 0.5 d} ms.
    LatencyMultiplier,
    /// Energy-efficiency coefficient.
    EnergyCoeff,
}

impl SweepAxis {
    pub fn column(&self) -> &'static str {
        match self {
            SweepAxis::IotMultiplier => "n",
            SweepAxis::UrllcArrival => "lambda",
            SweepAxis::TotalBandwidth => "w_mhz",
            SweepAxis::AcbFactor => "p_acb",
            SweepAxis::GammaMultiplier => "m",
            SweepAxis::LatencyMultiplier => "d",
            SweepAxis::EnergyCoeff => "eta",
        }
    }

    /// A copy of `base` with this axis set to `value`.
    pub fn apply(&self, base: &SystemConfig, value: f64) -> SystemConfig {
        let mut cfg = base.clone();
        match self {
            SweepAxis::IotMultiplier => {
                for s in &mut cfg.miot_slices {
                    s.lambda_i = 900.0 * value;
                }
            }
            SweepAxis::UrllcArrival => {
                for s in &mut cfg.urllc_slices {
                    s.lambda = value;
                }
            }
            SweepAxis::TotalBandwidth => cfg.total_bandwidth_mhz = value,
            SweepAxis::AcbFactor => {
                cfg.access = AccessControl::Acb { p_acb: value };
            }
            SweepAxis::GammaMultiplier => {
                let base_gammas = [3.6, 2.7, 1.8];
                for (s, g) in cfg.miot_slices.iter_mut().zip(base_gammas) {
                    s.gamma_th_kbit = g * value;
                }
            }
            SweepAxis::LatencyMultiplier => {
                let base_d = [0.25, 0.5];
                for (s, d) in cfg.urllc_slices.iter_mut().zip(base_d) {
                    s.d_ms = d * value;
                }
            }
            SweepAxis::EnergyCoeff => cfg.energy_coeff = value,
        }
        cfg
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.system.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn paper_defaults_validate() {
        let cfg = SystemConfig::paper_defaults();
        cfg.validate().unwrap();
        assert_eq!(cfg.miot_profiles().len(), 3);
        assert_eq!(cfg.total_urllc_devices(), 8);
    }

    #[test]
    fn dbm_conversion() {
        assert_relative_eq!(dbm_to_watt(0.0), 1e-3, epsilon = 1e-15);
        assert_relative_eq!(dbm_to_watt(-90.0), 1e-12, epsilon = 1e-24);
        assert_relative_eq!(dbm_to_watt(30.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma_fixes_theta_and_drain_rate() {
        let cfg = SystemConfig::paper_defaults();
        let profiles = cfg.miot_profiles();
        // gamma = a log2(1+theta) recovers the configured serving rate
        for (p, c) in profiles.iter().zip(&cfg.miot_slices) {
            let gamma_back = cfg.tone_spacing_mhz * (1.0 + p.theta_th).log2() * 1000.0;
            assert_relative_eq!(gamma_back, c.gamma_th_kbit, epsilon = 1e-9);
        }
        let x: Vec<f64> = profiles
            .iter()
            .map(|p| {
                crate::miot::packets_per_success(
                    cfg.tone_spacing_mhz,
                    p.theta_th,
                    cfg.iot_packet_bits,
                )
            })
            .collect();
        assert_relative_eq!(x[0], 2.9, epsilon = 1e-10);
        assert_relative_eq!(x[1], 2.175, epsilon = 1e-10);
        assert_relative_eq!(x[2], 1.45, epsilon = 1e-10);
    }

    #[test]
    fn iot_reserve_matches_hand_value() {
        let cfg = SystemConfig::paper_defaults();
        // 3 slices * 1.05 * (18000/3) * 0.03 mW = 567 mW
        assert_relative_eq!(cfg.iot_power_reserve_w(), 0.567, epsilon = 1e-12);
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let mut cfg = SystemConfig::paper_defaults();
        cfg.queueing_prob = 1e-6;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("blocking_prob"));
    }

    #[test]
    fn sweep_axis_application() {
        let base = SystemConfig::paper_defaults();
        let cfg = SweepAxis::IotMultiplier.apply(&base, 10.0);
        assert!(cfg.miot_slices.iter().all(|s| s.lambda_i == 9000.0));
        let cfg = SweepAxis::TotalBandwidth.apply(&base, 45.0);
        assert_eq!(cfg.total_bandwidth_mhz, 45.0);
        let cfg = SweepAxis::AcbFactor.apply(&base, 0.5);
        assert_eq!(cfg.access, AccessControl::Acb { p_acb: 0.5 });
    }
}
