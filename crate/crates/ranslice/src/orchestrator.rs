//! Two-timescale slice resource orchestration.
//!
//! At the start of a time slot the coordinator draws `M` channel samples
//! (sample average approximation of the unknown minislot channels), then runs
//! an ADMM consensus loop: each sample solves its own convex subproblem for a
//! local copy of the slice bandwidths, and the global copy is the dual-shifted
//! average. Inside every subproblem a greedy pass fixes the URLLC device
//! associations. Once the bandwidths are frozen, every minislot re-optimizes
//! beamformers and associations against freshly sensed channels with the
//! bandwidths held constant.

use crate::config::SystemConfig;
use crate::convex::{
    find_trust_interval, rank_one_recovery, solve_subproblem, DeviceContext, IntervalError,
    SliceCurve, SubproblemError, SubproblemInputs, SubproblemMode, SubproblemOutput,
    TaylorSurrogate, TrustInterval,
};
use crate::miot::{
    access_probability, evolve_slot, miot_utility, EvolveOptions, MiotSliceProfile,
    QueueTrajectory, RadioParams,
};
use crate::urllc::{trace_product, ChannelMatrix, PowerMatrix, UrllcGlobals, C64};
use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("subproblem failure: {0}")]
    Subproblem(#[from] SubproblemError),
    #[error("exhaustive search refused: {0} devices exceed the cap of 16")]
    TooManyDevices(usize),
    #[error("miot error: {0}")]
    Miot(#[from] crate::miot::MiotError),
}

/// Static CoMP-cluster geometry: RRH and URLLC device positions.
#[derive(Debug, Clone)]
pub struct CompLayout {
    pub rrh_positions: Vec<[f64; 2]>,
    /// Flattened device list: (slice, position).
    pub devices: Vec<(usize, [f64; 2])>,
    pub antennas: usize,
}

impl CompLayout {
    /// Drop RRHs and URLLC devices uniformly on the configured square.
    pub fn generate(cfg: &SystemConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = cfg.area_km;
        let rrh_positions = (0..cfg.rrh_count)
            .map(|_| [rng.gen_range(0.0..a), rng.gen_range(0.0..a)])
            .collect();
        let mut devices = Vec::new();
        for (s, slice) in cfg.urllc_slices.iter().enumerate() {
            for _ in 0..slice.devices {
                devices.push((s, [rng.gen_range(0.0..a), rng.gen_range(0.0..a)]));
            }
        }
        CompLayout {
            rrh_positions,
            devices,
            antennas: cfg.antennas_per_rrh,
        }
    }

    pub fn beam_dim(&self) -> usize {
        self.rrh_positions.len() * self.antennas
    }
}

/// `M` stacked channel samples per device.
#[derive(Debug, Clone)]
pub struct ChannelSampleSet {
    /// `samples[m][device]`.
    pub samples: Vec<Vec<ChannelMatrix>>,
}

/// Mean linear amplitude gain from path loss, antenna gain and log-normal
/// shadowing: `h(dB) = 128.1 + 37.6 log10 d` with `d` in km.
fn pathloss_amplitude(dist_km: f64, cfg: &SystemConfig, shadow_db: f64) -> f64 {
    let pl_db = 128.1 + 37.6 * dist_km.max(1e-3).log10();
    let net_db = -pl_db + cfg.antenna_gain_db + shadow_db;
    10f64.powf(net_db / 20.0)
}

fn draw_channel(
    layout: &CompLayout,
    cfg: &SystemConfig,
    device: usize,
    rng: &mut ChaCha8Rng,
) -> ChannelMatrix {
    let (_, pos) = layout.devices[device];
    let k = layout.antennas;
    let mut h = DVector::from_element(layout.beam_dim(), C64::new(0.0, 0.0));
    for (j, rrh) in layout.rrh_positions.iter().enumerate() {
        let d = ((pos[0] - rrh[0]).powi(2) + (pos[1] - rrh[1]).powi(2)).sqrt();
        let shadow_db: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.shadowing_db;
        let amp = pathloss_amplitude(d, cfg, shadow_db);
        for a in 0..k {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            h[j * k + a] = C64::new(re, im) * (amp / std::f64::consts::SQRT_2);
        }
    }
    ChannelMatrix::from_vector(h)
}

/// Draw `m` i.i.d. sample sets of the propagation model; deterministic per
/// seed. `m = 1` degenerates to the single-sample baseline.
pub fn generate_channel_samples(
    layout: &CompLayout,
    cfg: &SystemConfig,
    m: usize,
    seed: u64,
) -> ChannelSampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..m)
        .map(|_| {
            (0..layout.devices.len())
                .map(|i| draw_channel(layout, cfg, i, &mut rng))
                .collect()
        })
        .collect();
    ChannelSampleSet { samples }
}

/// Per-device static context for one sample or minislot.
pub fn device_contexts(
    layout: &CompLayout,
    cfg: &SystemConfig,
    channels: &[ChannelMatrix],
) -> Vec<DeviceContext> {
    layout
        .devices
        .iter()
        .zip(channels)
        .map(|(&(s, _), ch)| DeviceContext {
            channel: ch.clone(),
            lambda: cfg.urllc_slices[s].lambda,
            d: cfg.urllc_slices[s].d_ms,
            l_bits: cfg.urllc_slices[s].packet_bits,
        })
        .collect()
}

/// Maximum-ratio beamformers at the configured warm-start power: the initial
/// `G` candidates every device carries before its first solve.
pub fn initial_beamformers(channels: &[ChannelMatrix], power_w: f64) -> Vec<Option<PowerMatrix>> {
    channels
        .iter()
        .map(|ch| {
            let h = ch.vector();
            let norm = h.norm();
            if norm <= 0.0 {
                return Some(PowerMatrix::zeros(h.len()));
            }
            let g = h * C64::new(power_w.sqrt() / norm, 0.0);
            Some(PowerMatrix::from_beamformer(&g))
        })
        .collect()
}

/// Shared feasibility/utility context for association decisions.
pub struct AssociationContext<'a> {
    pub devices: &'a [DeviceContext],
    pub g_current: &'a [Option<PowerMatrix>],
    pub omega_miot: &'a [f64],
    pub budgets: &'a [f64],
    pub w_total: f64,
    pub alpha_g: f64,
    pub globals: &'a UrllcGlobals,
    pub rrh_count: usize,
    pub antennas: usize,
    /// Utility scaling (the SAA sample count at the slot level, 1 per minislot).
    pub m_count: f64,
}

impl AssociationContext<'_> {
    /// Marginal utility of serving device `i` at its current beamformer.
    fn gain(&self, i: usize) -> f64 {
        let tr = self.g_current[i].as_ref().map_or(0.0, |g| g.trace());
        self.globals.rho_tilde * (self.devices[i].gain() - self.globals.eta * tr) / self.m_count
    }

    fn feasible(&self, served: &[bool]) -> bool {
        crate::convex::subproblem::association_feasible(
            self.devices,
            served,
            self.g_current,
            self.omega_miot,
            self.budgets,
            self.w_total,
            self.alpha_g,
            self.globals,
            self.rrh_count,
            self.antennas,
        )
    }

    /// Objective value of an association at the current beamformers.
    pub fn utility(&self, served: &[bool]) -> f64 {
        served
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| self.gain(i))
            .sum()
    }
}

/// Greedy association: repeatedly admit the highest-gain candidate that keeps
/// the power and bandwidth constraints feasible. `O(N)` acceptance tests;
/// ties break toward the lowest device index.
pub fn greedy_association(ctx: &AssociationContext) -> Vec<bool> {
    let n = ctx.devices.len();
    let mut served = vec![false; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    while !remaining.is_empty() {
        let (pos, &best) = remaining
            .iter()
            .enumerate()
            .max_by(|(_, &a), (_, &b)| {
                ctx.gain(a)
                    .partial_cmp(&ctx.gain(b))
                    .unwrap()
                    .then(b.cmp(&a))
            })
            .unwrap();
        remaining.remove(pos);
        served[best] = true;
        if !ctx.feasible(&served) {
            served[best] = false;
        }
    }
    served
}

/// Exhaustive association oracle: enumerate all subsets (capped at 16
/// devices), return the feasible argmax of the same utility the greedy uses.
pub fn exhaustive_association(ctx: &AssociationContext) -> Result<Vec<bool>, OrchestratorError> {
    let n = ctx.devices.len();
    if n > 16 {
        return Err(OrchestratorError::TooManyDevices(n));
    }
    let mut best = vec![false; n];
    let mut best_utility = 0.0; // the empty set is always feasible
    for mask in 0u32..(1 << n) {
        let served: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        if !ctx.feasible(&served) {
            continue;
        }
        let u = ctx.utility(&served);
        if u > best_utility {
            best_utility = u;
            best = served;
        }
    }
    Ok(best)
}

/// Global consensus state of the ADMM loop.
#[derive(Debug, Clone)]
pub struct ConsensusState {
    pub omega_global: Vec<f64>,
    /// `omega_local[m][s]`.
    pub omega_local: Vec<Vec<f64>>,
    /// Duals `psi[m][s]`.
    pub psi: Vec<Vec<f64>>,
    pub mu: f64,
}

impl ConsensusState {
    pub fn new(omega_init: Vec<f64>, m: usize, mu: f64) -> Self {
        let s = omega_init.len();
        ConsensusState {
            omega_local: vec![omega_init.clone(); m],
            omega_global: omega_init,
            psi: vec![vec![0.0; s]; m],
            mu,
        }
    }

    /// Per-slice dual sums; an exact algebraic zero after every round.
    pub fn dual_sums(&self) -> Vec<f64> {
        let s = self.omega_global.len();
        (0..s)
            .map(|j| self.psi.iter().map(|row| row[j]).sum())
            .collect()
    }
}

/// One consensus round: average the dual-shifted locals into the global copy,
/// update the duals, and return the consensus residual
/// `delta = sum_s |omega_s' - omega_s|`.
pub fn admm_round(state: &mut ConsensusState) -> f64 {
    let m = state.omega_local.len() as f64;
    let s_count = state.omega_global.len();
    let mut delta = 0.0;
    for s in 0..s_count {
        let new: f64 = state
            .omega_local
            .iter()
            .zip(&state.psi)
            .map(|(w, p)| w[s] + p[s] / state.mu)
            .sum::<f64>()
            / m;
        delta += (new - state.omega_global[s]).abs();
        state.omega_global[s] = new;
    }
    for (w, p) in state.omega_local.iter().zip(state.psi.iter_mut()) {
        for s in 0..s_count {
            p[s] += state.mu * (w[s] - state.omega_global[s]);
        }
    }
    delta
}

/// Why the slot-level optimization fell back to URLLC-only operation.
#[derive(Debug, Clone)]
pub enum MiotFallback {
    SliceInfeasible { slice: usize, detail: String },
    AggregateInfeasible { detail: String },
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceStats {
    pub outer_iterations: usize,
    pub delta_trace: Vec<f64>,
    pub dual_sum_max: f64,
    pub tightness_min: f64,
    pub residual_max: f64,
    pub subproblems_solved: usize,
}

pub struct Algorithm1Output {
    /// Consensus bandwidths (zeros under the fallback).
    pub omega: Vec<f64>,
    pub fallback: Option<MiotFallback>,
    pub stats: ConvergenceStats,
    /// Final per-sample beamformers, carried into the minislot loop as warm
    /// candidates.
    pub sample_g: Vec<Vec<Option<PowerMatrix>>>,
}

/// Reference non-empty probability for the slot-level curves: the worst
/// (largest) value on the closed-form trajectory at the given bandwidths.
fn reference_p_ne(
    profiles: &[MiotSliceProfile],
    radio: &RadioParams,
    cfg: &SystemConfig,
    omega: &[f64],
) -> Result<Vec<f64>, crate::miot::MiotError> {
    let traj = evolve_slot(
        profiles,
        radio,
        cfg.access,
        omega,
        cfg.minislots,
        EvolveOptions::default(),
    )?;
    Ok((0..profiles.len()).map(|s| traj.max_p_ne(s)).collect())
}

struct SampleWorkspace {
    g: Vec<Option<PowerMatrix>>,
    served: Vec<bool>,
    omega_local_point: Vec<f64>,
    objective: f64,
}

/// ADMM-based slot-level bandwidth allocation.
pub fn algorithm1(
    cfg: &SystemConfig,
    layout: &CompLayout,
    samples: &ChannelSampleSet,
) -> Result<Algorithm1Output, OrchestratorError> {
    let profiles = cfg.miot_profiles();
    let radio = cfg.radio_params();
    let globals = cfg.urllc_globals();
    let n_slices = profiles.len();
    let m = samples.samples.len();
    let p_nr = access_probability(cfg.access);
    let total_intensity: f64 = profiles.iter().map(|p| p.lambda_i).sum();
    let weights: Vec<f64> = profiles.iter().map(|p| p.lambda_i / total_intensity).collect();
    let reserve = cfg.iot_power_reserve_w();
    let budgets: Vec<f64> = vec![cfg.rrh_power_w - reserve; cfg.rrh_count];
    let a = cfg.tone_spacing_mhz;
    let w_total = cfg.total_bandwidth_mhz;
    let bis_tol = cfg.tolerances.bisection_mhz;

    let build_curves = |p_ne: &[f64]| -> Vec<SliceCurve> {
        profiles
            .iter()
            .zip(p_ne)
            .map(|(p, &pn)| SliceCurve::new(p, &radio, p_nr, pn))
            .collect()
    };
    let find_intervals = |curves: &[SliceCurve]| -> Result<Vec<TrustInterval>, MiotFallback> {
        curves
            .iter()
            .zip(&profiles)
            .map(|(c, p)| {
                find_trust_interval(c, p.pi_s, a, w_total, bis_tol).map_err(|e| match e {
                    IntervalError::SliceInfeasible { .. } => MiotFallback::SliceInfeasible {
                        slice: p.slice_id,
                        detail: e.to_string(),
                    },
                    other => MiotFallback::AggregateInfeasible {
                        detail: other.to_string(),
                    },
                })
            })
            .collect()
    };

    let mut stats = ConvergenceStats {
        tightness_min: 1.0,
        ..Default::default()
    };
    let fallback_output = |fb: MiotFallback, stats: ConvergenceStats, g: Vec<Vec<Option<PowerMatrix>>>| {
        log::warn!("mIoT slices cannot be created ({fb:?}); allocating all bandwidth to URLLC");
        Ok(Algorithm1Output {
            omega: vec![0.0; n_slices],
            fallback: Some(fb),
            stats,
            sample_g: g,
        })
    };

    // bootstrap reference state from the saturated worst case
    let mut p_ne_ref = vec![1.0; n_slices];
    let mut curves = build_curves(&p_ne_ref);
    let mut intervals = match find_intervals(&curves) {
        Ok(iv) => iv,
        Err(fb) => {
            return fallback_output(
                fb,
                stats,
                vec![initial_beamformers(&samples.samples[0], cfg.init_beam_power_w); m],
            )
        }
    };
    let midpoint: Vec<f64> = intervals
        .iter()
        .map(|iv| 0.5 * (iv.omega_lb_hat + iv.s_star))
        .collect();

    let mut state = ConsensusState::new(midpoint.clone(), m, cfg.penalty_mu);
    let mut workspaces: Vec<SampleWorkspace> = (0..m)
        .map(|i| SampleWorkspace {
            g: initial_beamformers(&samples.samples[i], cfg.init_beam_power_w),
            served: vec![false; layout.devices.len()],
            omega_local_point: midpoint.clone(),
            objective: f64::NEG_INFINITY,
        })
        .collect();
    let device_ctx: Vec<Vec<DeviceContext>> = samples
        .samples
        .iter()
        .map(|ch| device_contexts(layout, cfg, ch))
        .collect();

    let delta_tol = cfg.admm_delta_tol();
    let mut p_ne_frozen = false;

    for k in 0..cfg.k_max {
        // refresh the queue reference at the current consensus, then freeze
        if !p_ne_frozen {
            match reference_p_ne(&profiles, &radio, cfg, &state.omega_global) {
                Ok(fresh) => {
                    let drift = fresh
                        .iter()
                        .zip(&p_ne_ref)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    p_ne_ref = fresh;
                    if drift < 1e-6 || k >= 5 {
                        p_ne_frozen = true;
                    }
                }
                Err(e) => {
                    return fallback_output(
                        MiotFallback::AggregateInfeasible { detail: e.to_string() },
                        stats,
                        workspaces.into_iter().map(|w| w.g).collect(),
                    )
                }
            }
            curves = build_curves(&p_ne_ref);
            intervals = match find_intervals(&curves) {
                Ok(iv) => iv,
                Err(fb) => {
                    return fallback_output(fb, stats, workspaces.into_iter().map(|w| w.g).collect())
                }
            };
        }

        // inner loop: alternate greedy association and convex solves per sample
        let mut prev_obj: Option<f64> = None;
        for _q in 0..cfg.q_max {
            let results: Vec<Result<(usize, SubproblemOutput, Vec<bool>), SubproblemError>> =
                workspaces
                    .par_iter()
                    .enumerate()
                    .map(|(i, ws)| {
                        let ctx = AssociationContext {
                            devices: &device_ctx[i],
                            g_current: &ws.g,
                            omega_miot: &state.omega_local[i],
                            budgets: &budgets,
                            w_total,
                            alpha_g: cfg.alpha_g,
                            globals: &globals,
                            rrh_count: cfg.rrh_count,
                            antennas: cfg.antennas_per_rrh,
                            m_count: m as f64,
                        };
                        let served = greedy_association(&ctx);
                        let local: Vec<f64> = ws
                            .omega_local_point
                            .iter()
                            .zip(&intervals)
                            .map(|(&w, iv)| iv.clamp_to_trust(w))
                            .collect();
                        let surrogate = TaylorSurrogate::build(&curves, &weights, &local);
                        let phi_sigma = globals.phi_snr * globals.sigma2_u_w;
                        let warm: Vec<f64> = device_ctx[i]
                            .iter()
                            .zip(&ws.g)
                            .map(|(d, g)| {
                                g.as_ref().map_or(1.0, |gm| {
                                    trace_product(d.channel.matrix(), &gm.0).max(0.0) / phi_sigma
                                })
                            })
                            .collect();
                        let inputs = SubproblemInputs {
                            devices: &device_ctx[i],
                            served: &served,
                            mode: SubproblemMode::Slot {
                                surrogate: &surrogate,
                                intervals: &intervals,
                                psi: &state.psi[i],
                                omega_bar: &state.omega_global,
                                mu: state.mu,
                                m_count: m as f64,
                            },
                            budgets: &budgets,
                            w_total_mhz: w_total,
                            alpha_g: cfg.alpha_g,
                            globals: &globals,
                            rrh_count: cfg.rrh_count,
                            antennas: cfg.antennas_per_rrh,
                            warm_nu: Some(&warm),
                            kkt_tol: cfg.tolerances.kkt,
                            cut_tol: cfg.tolerances.cut,
                        };
                        solve_subproblem(&inputs).map(|out| (i, out, served))
                    })
                    .collect();

            let mut obj_sum = 0.0;
            for res in results {
                match res {
                    Ok((i, out, served)) => {
                        stats.subproblems_solved += 1;
                        stats.residual_max = stats.residual_max.max(out.residuals.max());
                        for t in out.tightness.iter().flatten() {
                            stats.tightness_min = stats.tightness_min.min(*t);
                        }
                        state.omega_local[i].copy_from_slice(&out.omega);
                        let ws = &mut workspaces[i];
                        ws.omega_local_point = out.omega.clone();
                        for (slot, g_new) in ws.g.iter_mut().zip(out.g) {
                            if let Some(g) = g_new {
                                *slot = Some(g);
                            }
                        }
                        ws.served = served;
                        ws.objective = out.objective;
                        obj_sum += out.objective;
                    }
                    Err(SubproblemError::Infeasible(detail)) => {
                        return fallback_output(
                            MiotFallback::AggregateInfeasible { detail },
                            stats,
                            workspaces.into_iter().map(|w| w.g).collect(),
                        )
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let stop = prev_obj.map_or(false, |p| {
                (obj_sum - p).abs() / p.abs().max(1.0) < cfg.tolerances.inner_rel
            });
            prev_obj = Some(obj_sum);
            if stop {
                break;
            }
        }

        let delta = admm_round(&mut state);
        stats.delta_trace.push(delta);
        let dual_max = state
            .dual_sums()
            .iter()
            .map(|d| d.abs())
            .fold(0.0, f64::max);
        stats.dual_sum_max = stats.dual_sum_max.max(dual_max);
        stats.outer_iterations = k + 1;
        if delta < delta_tol && k > 0 {
            break;
        }
    }

    Ok(Algorithm1Output {
        omega: state.omega_global.clone(),
        fallback: None,
        stats,
        sample_g: workspaces.into_iter().map(|w| w.g).collect(),
    })
}

/// One minislot's re-optimization output.
pub struct MinislotDecision {
    pub served: Vec<bool>,
    pub beamformers: Vec<Option<DVector<C64>>>,
    /// Realized URLLC utility `sum gain - eta sum tr(G)` over served devices.
    pub utility: f64,
    /// Total transmit power spent on URLLC (W).
    pub urllc_power_w: f64,
    /// Independent per-RRH power audit: reserve + served beamformer power.
    pub power_per_rrh_w: Vec<f64>,
    pub tightness_min: f64,
    pub residual_max: f64,
}

/// Re-optimize associations and beamformers for one minislot at fixed slice
/// bandwidths, alternating the greedy pass with the power-minimizing solve
/// until the association stabilizes.
pub fn algorithm2_minislot(
    cfg: &SystemConfig,
    layout: &CompLayout,
    omega_fixed: &[f64],
    channels: &[ChannelMatrix],
    carried_g: &mut [Option<PowerMatrix>],
) -> Result<MinislotDecision, OrchestratorError> {
    let globals = cfg.urllc_globals();
    let reserve = cfg.iot_power_reserve_w();
    let budgets: Vec<f64> = vec![cfg.rrh_power_w - reserve; cfg.rrh_count];
    let devices = device_contexts(layout, cfg, channels);
    let phi_sigma = globals.phi_snr * globals.sigma2_u_w;

    let mut served = vec![false; devices.len()];
    let mut tightness_min: f64 = 1.0;
    let mut residual_max: f64 = 0.0;
    const MAX_ALTERNATIONS: usize = 8;
    for round in 0..MAX_ALTERNATIONS {
        let ctx = AssociationContext {
            devices: &devices,
            g_current: carried_g,
            omega_miot: omega_fixed,
            budgets: &budgets,
            w_total: cfg.total_bandwidth_mhz,
            alpha_g: cfg.alpha_g,
            globals: &globals,
            rrh_count: cfg.rrh_count,
            antennas: cfg.antennas_per_rrh,
            m_count: 1.0,
        };
        let fresh = greedy_association(&ctx);
        let stable = fresh == served && round > 0;
        served = fresh;
        if stable {
            break;
        }
        if served.iter().all(|&b| !b) {
            break;
        }
        let warm: Vec<f64> = devices
            .iter()
            .zip(carried_g.iter())
            .map(|(d, g)| {
                g.as_ref().map_or(1.0, |gm| {
                    trace_product(d.channel.matrix(), &gm.0).max(0.0) / phi_sigma
                })
            })
            .collect();
        let inputs = SubproblemInputs {
            devices: &devices,
            served: &served,
            mode: SubproblemMode::Minislot {
                omega_fixed,
            },
            budgets: &budgets,
            w_total_mhz: cfg.total_bandwidth_mhz,
            alpha_g: cfg.alpha_g,
            globals: &globals,
            rrh_count: cfg.rrh_count,
            antennas: cfg.antennas_per_rrh,
            warm_nu: Some(&warm),
            kkt_tol: cfg.tolerances.kkt,
            cut_tol: cfg.tolerances.cut,
        };
        match solve_subproblem(&inputs) {
            Ok(out) => {
                residual_max = residual_max.max(out.residuals.max());
                for t in out.tightness.iter().flatten() {
                    tightness_min = tightness_min.min(*t);
                }
                for (slot, g_new) in carried_g.iter_mut().zip(out.g) {
                    if let Some(g) = g_new {
                        *slot = Some(g);
                    }
                }
            }
            Err(SubproblemError::Infeasible(_)) => {
                // shrink to the empty association rather than abort the slot
                served = vec![false; devices.len()];
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut beamformers: Vec<Option<DVector<C64>>> = vec![None; devices.len()];
    let mut utility = 0.0;
    let mut urllc_power = 0.0;
    let mut power_per_rrh = vec![reserve; cfg.rrh_count];
    for (i, dev) in devices.iter().enumerate() {
        if !served[i] {
            continue;
        }
        let gm = carried_g[i].as_ref().expect("served device has a beamformer");
        let (g_vec, report) = rank_one_recovery(gm, 1e-6);
        tightness_min = tightness_min.min(report.ratio);
        let p = gm.trace();
        utility += dev.gain() - globals.eta * p;
        urllc_power += p;
        for (j, q) in power_per_rrh.iter_mut().enumerate() {
            *q += gm.rrh_power(j, cfg.antennas_per_rrh);
        }
        beamformers[i] = Some(g_vec);
    }

    Ok(MinislotDecision {
        served,
        beamformers,
        utility,
        urllc_power_w: urllc_power,
        power_per_rrh_w: power_per_rrh,
        tightness_min,
        residual_max,
    })
}

/// End-to-end slot output.
pub struct SroRunOutput {
    pub omega: Vec<f64>,
    pub fallback: Option<MiotFallback>,
    pub u_bar_iot: f64,
    pub u_bar_urllc: f64,
    /// `U = U^I + rho~ U^u`.
    pub u_total: f64,
    pub omega_iot_total: f64,
    pub omega_urllc: f64,
    /// Total URLLC transmit energy bookkeeping over the slot (mW summed over
    /// minislots).
    pub energy_urllc_mw: f64,
    pub served_min: usize,
    pub served_mean: f64,
    pub trajectory: Option<QueueTrajectory>,
    pub stats: ConvergenceStats,
    pub minislot_tightness_min: f64,
    pub minislot_residual_max: f64,
    pub power_audit_max_w: f64,
}

/// Full slice-resource-optimization pipeline for one slot: sample channels,
/// run the consensus loop, then re-optimize each minislot against freshly
/// sensed channels.
pub fn run_sro(cfg: &SystemConfig, seed: u64) -> Result<SroRunOutput, OrchestratorError> {
    let layout = CompLayout::generate(cfg, seed);
    let samples = generate_channel_samples(&layout, cfg, cfg.sample_count, seed.wrapping_add(1));
    let alg1 = algorithm1(cfg, &layout, &samples)?;

    let profiles = cfg.miot_profiles();
    let radio = cfg.radio_params();
    let (trajectory, u_bar_iot) = if alg1.fallback.is_none() {
        let traj = evolve_slot(
            &profiles,
            &radio,
            cfg.access,
            &alg1.omega,
            cfg.minislots,
            EvolveOptions::default(),
        )?;
        let u = miot_utility(&traj, &profiles);
        (Some(traj), u)
    } else {
        (None, 0.0)
    };

    let omega_for_minislot: Vec<f64> = if alg1.fallback.is_none() {
        alg1.omega.clone()
    } else {
        vec![0.0; profiles.len()]
    };

    // sensed channels come from the same generative model on a distinct
    // seed stream
    let mut carried_g = initial_beamformers(&samples.samples[0], cfg.init_beam_power_w);
    let mut u_sum = 0.0;
    let mut energy_w = 0.0;
    let mut served_min = usize::MAX;
    let mut served_sum = 0usize;
    let mut minislot_tightness: f64 = 1.0;
    let mut minislot_residual: f64 = 0.0;
    let mut power_audit_max: f64 = 0.0;
    for t in 0..cfg.minislots {
        let sensed = generate_channel_samples(
            &layout,
            cfg,
            1,
            seed.wrapping_add(100_000).wrapping_add(t as u64),
        );
        let decision = algorithm2_minislot(
            cfg,
            &layout,
            &omega_for_minislot,
            &sensed.samples[0],
            &mut carried_g,
        )?;
        u_sum += decision.utility;
        energy_w += decision.urllc_power_w;
        let count = decision.served.iter().filter(|&&b| b).count();
        served_min = served_min.min(count);
        served_sum += count;
        minislot_tightness = minislot_tightness.min(decision.tightness_min);
        minislot_residual = minislot_residual.max(decision.residual_max);
        power_audit_max = power_audit_max.max(
            decision
                .power_per_rrh_w
                .iter()
                .cloned()
                .fold(0.0, f64::max),
        );
    }
    let t = cfg.minislots as f64;
    let u_bar_urllc = u_sum / t;
    let globals = cfg.urllc_globals();
    let omega_iot_total: f64 = omega_for_minislot.iter().sum();
    Ok(SroRunOutput {
        omega: omega_for_minislot.clone(),
        fallback: alg1.fallback,
        u_bar_iot,
        u_bar_urllc,
        u_total: u_bar_iot + globals.rho_tilde * u_bar_urllc,
        omega_iot_total,
        omega_urllc: cfg.total_bandwidth_mhz
            - omega_iot_total * (1.0 + cfg.alpha_g),
        energy_urllc_mw: energy_w * 1e3,
        served_min: if served_min == usize::MAX { 0 } else { served_min },
        served_mean: served_sum as f64 / t,
        trajectory,
        stats: alg1.stats,
        minislot_tightness_min: minislot_tightness,
        minislot_residual_max: minislot_residual,
        power_audit_max_w: power_audit_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_cfg() -> SystemConfig {
        let mut cfg = SystemConfig::paper_defaults();
        cfg.sample_count = 2;
        cfg.minislots = 6;
        cfg.k_max = 12;
        cfg.q_max = 6;
        cfg
    }

    #[test]
    fn channel_samples_deterministic_and_sized() {
        let cfg = small_cfg();
        let layout = CompLayout::generate(&cfg, 5);
        let a = generate_channel_samples(&layout, &cfg, 3, 11);
        let b = generate_channel_samples(&layout, &cfg, 3, 11);
        assert_eq!(a.samples.len(), 3);
        assert_eq!(a.samples[0].len(), 8);
        for (x, y) in a.samples.iter().flatten().zip(b.samples.iter().flatten()) {
            assert_eq!(x.vector(), y.vector());
        }
        let single = generate_channel_samples(&layout, &cfg, 1, 11);
        assert_eq!(single.samples.len(), 1);
    }

    /// Moment-matching oracle: the sample mean of tr(H) converges to the
    /// analytic mean power of the path-loss/shadowing/antenna-gain model.
    /// The 10 dB case is heavy-tailed, so a tighter 2 dB case guards the
    /// scaling constants.
    #[test]
    fn channel_mean_power_matches_lognormal_moment() {
        for shadow_db in [10.0, 2.0] {
            let mut cfg = small_cfg();
            cfg.urllc_slices.truncate(1);
            cfg.urllc_slices[0].devices = 1;
            cfg.shadowing_db = shadow_db;
            let layout = CompLayout::generate(&cfg, 42);
            let m = 20_000;
            let set = generate_channel_samples(&layout, &cfg, m, 7);
            let traces: Vec<f64> = set.samples.iter().map(|s| s[0].trace()).collect();
            let mean: f64 = traces.iter().sum::<f64>() / m as f64;
            let var: f64 =
                traces.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
            let sigma_mean = (var / m as f64).sqrt();

            let (_, pos) = layout.devices[0];
            // amplitude carries e^{s Z} with s = sigma_dB ln10/20, so power
            // carries e^{2 s Z} with mean e^{2 s^2}
            let s = shadow_db * std::f64::consts::LN_10 / 20.0;
            let shadow_mean = (2.0 * s * s).exp();
            let mut expect = 0.0;
            for rrh in &layout.rrh_positions {
                let d = ((pos[0] - rrh[0]).powi(2) + (pos[1] - rrh[1]).powi(2))
                    .sqrt()
                    .max(1e-3);
                let pl_db = 128.1 + 37.6 * d.log10();
                let lin = 10f64.powf((-pl_db + cfg.antenna_gain_db) / 10.0);
                expect += cfg.antennas_per_rrh as f64 * lin * shadow_mean;
            }
            assert!(
                (mean - expect).abs() <= 3.0 * sigma_mean,
                "shadow {shadow_db} dB: mean {mean:.3e} vs analytic {expect:.3e} (3 sigma {:.3e})",
                3.0 * sigma_mean
            );
        }
    }

    #[test]
    fn admm_round_hand_example() {
        let mut state = ConsensusState::new(vec![0.0], 2, 1.0);
        state.omega_local = vec![vec![1.0], vec![3.0]];
        state.psi = vec![vec![0.2], vec![-0.2]];
        let delta = admm_round(&mut state);
        assert_relative_eq!(state.omega_global[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(state.psi[0][0], -0.8, epsilon = 1e-12);
        assert_relative_eq!(state.psi[1][0], 0.8, epsilon = 1e-12);
        assert_relative_eq!(delta, 2.0, epsilon = 1e-12);
        assert!(state.dual_sums()[0].abs() < 1e-15);
    }

    #[test]
    fn admm_consensus_fixed_point() {
        let mut state = ConsensusState::new(vec![2.5, 1.0], 4, 0.8);
        for w in &mut state.omega_local {
            w.copy_from_slice(&[2.5, 1.0]);
        }
        let delta = admm_round(&mut state);
        assert_relative_eq!(delta, 0.0, epsilon = 1e-15);
        assert!(state.psi.iter().flatten().all(|&p| p == 0.0));
    }

    /// Dual sums stay at exact zero over arbitrary rounds.
    #[test]
    fn dual_sum_zero_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = ConsensusState::new(vec![1.0, 2.0, 3.0], 5, 2.9e-3);
        for _ in 0..20 {
            for w in &mut state.omega_local {
                for v in w.iter_mut() {
                    *v = rng.gen_range(0.5..5.0);
                }
            }
            admm_round(&mut state);
            for d in state.dual_sums() {
                assert!(d.abs() < 1e-12, "dual sum {d}");
            }
        }
    }
}
