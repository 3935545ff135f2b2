//! The per-sample convex subproblem.
//!
//! Given fixed device associations `b`, minimize
//!
//! ```text
//! -(1/M) P~(omega)          (second-order surrogate)
//! -(rho~/M) U^u(b, G)       (URLLC gain minus eta * power)
//! + sum_s [ psi_s (omega_s - omega_bar_s) + mu/2 (omega_s - omega_bar_s)^2 ]
//! ```
//!
//! over the slice bandwidths, served-device SNR auxiliaries `nu` and PSD power
//! matrices `G`, subject to per-RRH power, the total-bandwidth constraint with
//! the auxiliary-variable reformulation `tr(H G)/(phi sigma^2) >= nu`, the
//! trust-interval box, and `G >= 0` (rank dropped by the relaxation).
//!
//! The single nonlinear convex constraint `W^u(f(nu)) <= W - sum (1+alpha_g)
//! omega` is handled by outer approximation: supporting-hyperplane cuts are
//! added at the current iterate until the direct evaluation of the constraint
//! is violated by less than the cut tolerance.

use super::conic::{
    conic_solve, embed_hermitian, extract_hermitian, svec_index, svec_len, svec_of_sym,
    ConicError, ConicProblem, Row, SolveStatus,
};
use super::interval::TrustInterval;
use super::recovery::rank_one_recovery;
use super::surrogate::TaylorSurrogate;
use crate::urllc::{
    channel_uses, q_inv, trace_product, urllc_bandwidth_bound, ChannelMatrix, PowerMatrix,
    ServedTerm, UrllcGlobals,
};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SubproblemError {
    #[error("subproblem infeasible: {0}")]
    Infeasible(String),
    #[error("conic solver failed: {0}")]
    Solver(#[from] ConicError),
    #[error("cut loop exceeded {0} iterations without closing the bandwidth constraint")]
    CutLoopStalled(usize),
}

/// Static URLLC device data for one sample or one minislot.
#[derive(Debug, Clone)]
pub struct DeviceContext {
    pub channel: ChannelMatrix,
    /// Slice batch arrival intensity (packets/minislot).
    pub lambda: f64,
    /// Slice latency bound (minislots).
    pub d: f64,
    /// Packet payload (bits).
    pub l_bits: f64,
}

impl DeviceContext {
    /// Latency gain `1/(1 - e^{-D})` of serving this device.
    pub fn gain(&self) -> f64 {
        1.0 / (-(-self.d).exp_m1())
    }
}

/// What the bandwidth variables look like.
pub enum SubproblemMode<'a> {
    /// Slot level: bandwidths are variables tied to the ADMM consensus.
    Slot {
        surrogate: &'a TaylorSurrogate,
        intervals: &'a [TrustInterval],
        psi: &'a [f64],
        omega_bar: &'a [f64],
        mu: f64,
        /// Sample count `M` scaling the utility terms.
        m_count: f64,
    },
    /// Minislot level: bandwidths are fixed, only `(nu, G)` move.
    Minislot { omega_fixed: &'a [f64] },
}

pub struct SubproblemInputs<'a> {
    pub devices: &'a [DeviceContext],
    pub served: &'a [bool],
    pub mode: SubproblemMode<'a>,
    /// Per-RRH power left for URLLC after the IoT reserve (W).
    pub budgets: &'a [f64],
    pub w_total_mhz: f64,
    pub alpha_g: f64,
    pub globals: &'a UrllcGlobals,
    pub rrh_count: usize,
    pub antennas: usize,
    /// Seed SNRs for the first bandwidth cuts (per device; unserved ignored).
    pub warm_nu: Option<&'a [f64]>,
    pub kkt_tol: f64,
    pub cut_tol: f64,
}

/// Independent re-evaluation of every constraint at the returned point,
/// scaled by `max(1, |rhs|)`.
#[derive(Debug, Clone, Default)]
pub struct ResidualReport {
    pub power: f64,
    pub bandwidth: f64,
    pub box_bounds: f64,
    pub snr_link: f64,
    pub psd_min_eig: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.power
            .max(self.bandwidth)
            .max(self.box_bounds)
            .max(self.snr_link)
            .max(self.psd_min_eig)
    }
}

pub struct SubproblemOutput {
    pub omega: Vec<f64>,
    /// Solved power matrices for served devices.
    pub g: Vec<Option<PowerMatrix>>,
    /// SNR auxiliaries (0 for unserved devices).
    pub nu: Vec<f64>,
    /// Utility-flavored objective (negated Lagrangian) at the solution.
    pub objective: f64,
    /// Objective after each cut iteration (non-increasing).
    pub objective_trace: Vec<f64>,
    pub cuts_added: usize,
    pub residuals: ResidualReport,
    /// Rank-one eigen-ratio per served device.
    pub tightness: Vec<Option<f64>>,
    pub solver_status: SolveStatus,
}

/// `f(nu)`: channel uses for `l_bits` at SNR `nu` (the auxiliary-variable
/// form of the channel-use bound).
fn f_uses(l_bits: f64, nu: f64, beta: f64) -> f64 {
    channel_uses(l_bits, nu, beta).expect("positive nu")
}

/// `df/dnu` by the chain rule through `C = log2(1+nu)`.
fn f_uses_deriv(l_bits: f64, nu: f64, beta: f64) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let c = nu.ln_1p() / ln2;
    let dc = 1.0 / ((1.0 + nu) * ln2);
    if beta >= 0.5 {
        return -l_bits / (c * c) * dc;
    }
    let q2 = q_inv(beta).powi(2);
    let s = (1.0 + 4.0 * l_bits * c / q2).sqrt();
    let df_dc = -l_bits / (c * c) - q2 / c.powi(3) - q2 * s / c.powi(3) + l_bits / (c * c * s);
    df_dc * dc
}

struct BandwidthCut {
    /// Coefficient per served-device slot (aligned with `served_idx`).
    nu_coeff: Vec<f64>,
    /// Right-hand side for the nu/omega row.
    rhs: f64,
}

/// Served-device bandwidth demand and its gradient at `nu_hat`.
fn bandwidth_cut(
    devices: &[DeviceContext],
    served_idx: &[usize],
    nu_hat: &[f64],
    globals: &UrllcGlobals,
    w_total: f64,
) -> BandwidthCut {
    let beta = globals.beta_decode;
    let kappa = globals.kappa_per_mhz;
    let r: Vec<f64> = served_idx
        .iter()
        .zip(nu_hat)
        .map(|(&i, &nu)| f_uses(devices[i].l_bits, nu, beta))
        .collect();
    let terms: Vec<ServedTerm> = served_idx
        .iter()
        .zip(&r)
        .map(|(&i, &ri)| ServedTerm {
            served: true,
            r: ri,
            lambda: devices[i].lambda,
            d: devices[i].d,
        })
        .collect();
    let w_u = urllc_bandwidth_bound(&terms, globals).expect("validated globals");

    let s1: f64 = terms.iter().map(|t| t.lambda * t.lambda * t.d * t.d).sum();
    let s2: f64 = terms
        .iter()
        .map(|t| t.lambda * t.r * t.r / (kappa * kappa * t.d))
        .sum();
    let min_ld = terms
        .iter()
        .map(|t| t.lambda * t.d)
        .fold(f64::INFINITY, f64::min);
    let coeff = globals.surge_coefficient();
    let sqrt_term = (s1 * s2 / min_ld).sqrt();

    // linearization: W^u(nu) >= w_u + sum slope_k (nu_k - nu_hat_k), so the
    // cut is sum (1+alpha_g) omega + sum slope_k nu_k <= W - w_u + sum slope_k nu_hat_k
    let mut nu_coeff = Vec::with_capacity(served_idx.len());
    let mut rhs = w_total - w_u;
    for (k, &i) in served_idx.iter().enumerate() {
        let dwu_dr = devices[i].lambda / kappa
            + if sqrt_term > 0.0 {
                coeff * (s1 / min_ld) * (devices[i].lambda * r[k] / (kappa * kappa * devices[i].d))
                    / sqrt_term
            } else {
                0.0
            };
        let slope = dwu_dr * f_uses_deriv(devices[i].l_bits, nu_hat[k], beta);
        nu_coeff.push(slope);
        rhs += slope * nu_hat[k];
    }
    BandwidthCut { nu_coeff, rhs }
}

/// Point on the bandwidth-constraint boundary along the segment from an
/// infeasible `nu` toward [`NU_DEEP`]; falls back to `nu` when even the deep
/// endpoint is infeasible (the plain Kelley cut still makes progress).
#[allow(clippy::too_many_arguments)]
fn boundary_point(
    devices: &[DeviceContext],
    served_idx: &[usize],
    nu: &[f64],
    omega: &[f64],
    globals: &UrllcGlobals,
    alpha_g: f64,
    w_total: f64,
) -> Vec<f64> {
    let deep: Vec<f64> = vec![NU_DEEP; nu.len()];
    let viol_at = |t: f64| {
        let point: Vec<f64> = nu
            .iter()
            .zip(&deep)
            .map(|(&a, &b)| a + t * (b - a))
            .collect();
        bandwidth_violation(devices, served_idx, &point, omega, globals, alpha_g, w_total)
    };
    if viol_at(1.0) > 0.0 {
        return nu.to_vec();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if viol_at(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    nu.iter()
        .zip(&deep)
        .map(|(&a, &b)| a + hi * (b - a))
        .collect()
}

/// Direct evaluation of the bandwidth constraint violation at `(omega, nu)`.
fn bandwidth_violation(
    devices: &[DeviceContext],
    served_idx: &[usize],
    nu: &[f64],
    omega: &[f64],
    globals: &UrllcGlobals,
    alpha_g: f64,
    w_total: f64,
) -> f64 {
    let terms: Vec<ServedTerm> = served_idx
        .iter()
        .zip(nu)
        .map(|(&i, &v)| ServedTerm {
            served: true,
            r: f_uses(devices[i].l_bits, v.max(1e-12), globals.beta_decode),
            lambda: devices[i].lambda,
            d: devices[i].d,
        })
        .collect();
    let w_u = urllc_bandwidth_bound(&terms, globals).expect("validated globals");
    let miot: f64 = omega.iter().map(|&o| (1.0 + alpha_g) * o).sum();
    miot + w_u - w_total
}

const NU_FLOOR: f64 = 1e-8;
/// A deeply feasible SNR where the channel-use demand is near its floor.
const NU_DEEP: f64 = 1e6;
/// Cuts are generated no lower than this SNR; below it the channel-use curve
/// is astronomically steep and the hyperplanes condition the problem badly.
const NU_CUT_FLOOR: f64 = 1e-3;
const MAX_CUTS: usize = 80;
/// Power matrices are solved in milliwatts; watt-scale entries (~1e-4) sit
/// too close to the interior-point tolerances.
const PWR_SCALE: f64 = 1e3;
/// SNR ladder seeding the outer approximation of the bandwidth constraint.
const SEED_NU: [f64; 5] = [0.05, 0.5, 5.0, 50.0, 500.0];

pub fn solve_subproblem(inputs: &SubproblemInputs) -> Result<SubproblemOutput, SubproblemError> {
    let n_dev = inputs.devices.len();
    assert_eq!(inputs.served.len(), n_dev);
    let served_idx: Vec<usize> = (0..n_dev).filter(|&i| inputs.served[i]).collect();
    let ns = served_idx.len();
    let dim_c = inputs.rrh_count * inputs.antennas;
    let dim_r = 2 * dim_c;
    let block_len = svec_len(dim_r);

    if inputs.budgets.iter().any(|&b| b < -1e-12) {
        return Err(SubproblemError::Infeasible(
            "IoT power reserve exceeds an RRH budget".into(),
        ));
    }

    let (n_omega, m_count) = match &inputs.mode {
        SubproblemMode::Slot { surrogate, m_count, .. } => (surrogate.local.len(), *m_count),
        SubproblemMode::Minislot { .. } => (0, 1.0),
    };
    let n_vars = n_omega + ns + ns * block_len;
    let g_start = |k: usize| n_omega + ns + k * block_len;

    let mut problem = ConicProblem::new(n_vars);

    // objective
    match &inputs.mode {
        SubproblemMode::Slot {
            surrogate,
            intervals,
            psi,
            omega_bar,
            mu,
            m_count,
        } => {
            for s in 0..n_omega {
                // convexity guard: positive curvature outside the concave
                // stretch is clamped to zero
                let curv = (-surrogate.weights[s] * surrogate.hessian_diag[s] / m_count).max(0.0);
                problem.p_diag[s] = mu + curv;
                problem.q[s] = -surrogate.weights[s] * surrogate.gradient[s] / m_count
                    - curv * surrogate.local[s]
                    - mu * omega_bar[s]
                    + psi[s];
                // trust box of Eq.-style bounds
                problem.add_ineq(vec![(s, 1.0)], intervals[s].omega_ub);
                problem.add_ineq(vec![(s, -1.0)], -intervals[s].omega_lb_hat);
            }
        }
        SubproblemMode::Minislot { .. } => {}
    }
    // power cost on tr(G) = tr(X)/2, with X carried in milliwatts
    let g_cost = inputs.globals.rho_tilde * inputs.globals.eta / m_count / PWR_SCALE;
    for (k, _) in served_idx.iter().enumerate() {
        for d in 0..dim_r {
            problem.q[g_start(k) + svec_index(d, d)] += 0.5 * g_cost;
        }
    }

    // PSD cones
    for (k, _) in served_idx.iter().enumerate() {
        problem.add_psd_block(g_start(k), dim_r);
    }

    // nu floor
    for k in 0..ns {
        problem.add_ineq(vec![(n_omega + k, -1.0)], -NU_FLOOR);
    }

    // per-RRH power: sum_served tr(Z_j G_i) <= budget_j
    for j in 0..inputs.rrh_count {
        let mut row: Row = Vec::new();
        for (k, _) in served_idx.iter().enumerate() {
            for ant in 0..inputs.antennas {
                let d1 = j * inputs.antennas + ant;
                let d2 = dim_c + d1;
                // tr(Z_j G) = (X[d1,d1] + X[d2,d2]) / 2 summed over antennas
                row.push((g_start(k) + svec_index(d1, d1), 0.5));
                row.push((g_start(k) + svec_index(d2, d2), 0.5));
            }
        }
        problem.add_ineq(row, inputs.budgets[j] * PWR_SCALE);
    }

    // SNR link, normalized to unit scale: nu_k - tr(H_i G_i)/(phi sigma^2) <= 0
    let phi_sigma = inputs.globals.phi_snr * inputs.globals.sigma2_u_w;
    for (k, &i) in served_idx.iter().enumerate() {
        let h_emb = embed_hermitian(inputs.devices[i].channel.matrix());
        let coeffs = svec_of_sym(&(h_emb * (0.5 / (phi_sigma * PWR_SCALE))));
        let mut row: Row = vec![(n_omega + k, 1.0)];
        for (off, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                row.push((g_start(k) + off, -c));
            }
        }
        problem.add_ineq(row, 0.0);
    }

    // static bandwidth row: sum (1+alpha_g) omega <= W (the served demand
    // tightens it through cuts)
    if n_omega > 0 {
        let row: Row = (0..n_omega).map(|s| (s, 1.0 + inputs.alpha_g)).collect();
        problem.add_ineq(row, inputs.w_total_mhz);
    }
    let fixed_miot: f64 = match &inputs.mode {
        SubproblemMode::Minislot { omega_fixed } => omega_fixed
            .iter()
            .map(|&o| (1.0 + inputs.alpha_g) * o)
            .sum(),
        SubproblemMode::Slot { .. } => 0.0,
    };
    if ns == 0 && fixed_miot > inputs.w_total_mhz + 1e-9 {
        return Err(SubproblemError::Infeasible(
            "fixed slice bandwidths exceed the system bandwidth".into(),
        ));
    }

    let add_cut = |problem: &mut ConicProblem, cut: &BandwidthCut| {
        let mut row: Row = (0..n_omega).map(|s| (s, 1.0 + inputs.alpha_g)).collect();
        for (k, &c) in cut.nu_coeff.iter().enumerate() {
            row.push((n_omega + k, c));
        }
        problem.add_ineq(row, cut.rhs - fixed_miot);
    };

    // seed cuts: the warm SNR point plus a coarse ladder across the usable
    // SNR range, so the first relaxations already rule out collapsed SNRs
    let mut cuts_added = 0usize;
    if ns > 0 {
        let warm: Vec<f64> = served_idx
            .iter()
            .map(|&i| {
                inputs
                    .warm_nu
                    .map(|w| w[i])
                    .unwrap_or(1.0)
                    .max(NU_CUT_FLOOR)
            })
            .collect();
        let seeds = std::iter::once(warm).chain(
            SEED_NU
                .iter()
                .map(|&c| vec![c; ns]),
        );
        for nu_hat in seeds {
            let cut = bandwidth_cut(
                inputs.devices,
                &served_idx,
                &nu_hat,
                inputs.globals,
                inputs.w_total_mhz,
            );
            add_cut(&mut problem, &cut);
            cuts_added += 1;
        }
    }

    // outer-approximation loop
    let mut objective_trace = Vec::new();
    let sol = loop {
        let sol = match conic_solve(&problem) {
            Ok(s) => s,
            Err(ConicError::PrimalInfeasible) => {
                return Err(SubproblemError::Infeasible(
                    "conic relaxation infeasible".into(),
                ))
            }
            Err(e) => return Err(SubproblemError::Solver(e)),
        };
        let omega: Vec<f64> = (0..n_omega).map(|s| sol.x[s]).collect();
        let nu: Vec<f64> = (0..ns)
            .map(|k| sol.x[n_omega + k].max(NU_CUT_FLOOR))
            .collect();
        let omega_for_bw: Vec<f64> = match &inputs.mode {
            SubproblemMode::Minislot { omega_fixed } => omega_fixed.to_vec(),
            SubproblemMode::Slot { .. } => omega.clone(),
        };
        objective_trace.push(-evaluate_lagrangian(inputs, &sol.x, n_omega, &served_idx, g_start, dim_c));
        let violation = if ns == 0 {
            omega_for_bw
                .iter()
                .map(|&o| (1.0 + inputs.alpha_g) * o)
                .sum::<f64>()
                - inputs.w_total_mhz
        } else {
            bandwidth_violation(
                inputs.devices,
                &served_idx,
                &nu,
                &omega_for_bw,
                inputs.globals,
                inputs.alpha_g,
                inputs.w_total_mhz,
            )
        };
        if violation <= inputs.cut_tol || ns == 0 {
            break sol;
        }
        if cuts_added >= MAX_CUTS {
            log::warn!(
                "bandwidth cut loop capped at {MAX_CUTS} with violation {violation:.3e}; returning best feasible point"
            );
            break sol;
        }
        // supporting hyperplane at the constraint boundary: walk from the
        // infeasible iterate toward a deeply feasible SNR point
        let nu_cut = boundary_point(
            inputs.devices,
            &served_idx,
            &nu,
            &omega_for_bw,
            inputs.globals,
            inputs.alpha_g,
            inputs.w_total_mhz,
        );
        let cut = bandwidth_cut(
            inputs.devices,
            &served_idx,
            &nu_cut,
            inputs.globals,
            inputs.w_total_mhz,
        );
        add_cut(&mut problem, &cut);
        cuts_added += 1;
    };

    // extraction
    let omega: Vec<f64> = (0..n_omega).map(|s| sol.x[s]).collect();
    let mut nu_full = vec![0.0; n_dev];
    let mut g_full: Vec<Option<PowerMatrix>> = vec![None; n_dev];
    let mut tightness: Vec<Option<f64>> = vec![None; n_dev];
    for (k, &i) in served_idx.iter().enumerate() {
        nu_full[i] = sol.x[n_omega + k].max(0.0);
        let block = &sol.x[g_start(k)..g_start(k) + block_len];
        let x_r = super::conic::sym_of_svec(block, dim_r);
        let g_c = extract_hermitian(&x_r, dim_c) / nalgebra::Complex::new(PWR_SCALE, 0.0);
        let pm = PowerMatrix(g_c);
        let (_, report) = rank_one_recovery(&pm, 1e-6);
        tightness[i] = Some(report.ratio);
        g_full[i] = Some(pm);
    }

    let residuals = audit(inputs, &omega, &nu_full, &g_full, &served_idx);
    let objective = -evaluate_lagrangian(inputs, &sol.x, n_omega, &served_idx, g_start, dim_c);

    Ok(SubproblemOutput {
        omega,
        g: g_full,
        nu: nu_full,
        objective,
        objective_trace,
        cuts_added,
        residuals,
        tightness,
        solver_status: sol.status,
    })
}

/// The augmented partial Lagrangian evaluated at a raw solver point.
fn evaluate_lagrangian(
    inputs: &SubproblemInputs,
    x: &[f64],
    n_omega: usize,
    served_idx: &[usize],
    g_start: impl Fn(usize) -> usize,
    dim_c: usize,
) -> f64 {
    let mut acc = 0.0;
    let mut m_div = 1.0;
    if let SubproblemMode::Slot {
        surrogate,
        psi,
        omega_bar,
        mu,
        m_count,
        ..
    } = &inputs.mode
    {
        m_div = *m_count;
        let omega: Vec<f64> = (0..n_omega).map(|s| x[s]).collect();
        acc -= surrogate.predict(&omega) / m_count;
        for s in 0..n_omega {
            let d = omega[s] - omega_bar[s];
            acc += psi[s] * d + 0.5 * mu * d * d;
        }
    }
    // URLLC part: -(rho~/M) [sum gain - eta sum tr(G)]
    let mut u = 0.0;
    for (k, &i) in served_idx.iter().enumerate() {
        let mut tr = 0.0;
        for d in 0..2 * dim_c {
            tr += x[g_start(k) + svec_index(d, d)];
        }
        u += inputs.devices[i].gain() - inputs.globals.eta * 0.5 * tr / PWR_SCALE;
    }
    acc -= inputs.globals.rho_tilde * u / m_div;
    acc
}

/// Re-evaluate every constraint from scratch at the returned point.
fn audit(
    inputs: &SubproblemInputs,
    omega: &[f64],
    nu: &[f64],
    g: &[Option<PowerMatrix>],
    served_idx: &[usize],
) -> ResidualReport {
    let mut rep = ResidualReport::default();

    for j in 0..inputs.rrh_count {
        let used: f64 = served_idx
            .iter()
            .map(|&i| g[i].as_ref().map_or(0.0, |m| m.rrh_power(j, inputs.antennas)))
            .sum();
        let scale = inputs.budgets[j].abs().max(1.0);
        rep.power = rep.power.max((used - inputs.budgets[j]) / scale);
    }

    let omega_for_bw: Vec<f64> = match &inputs.mode {
        SubproblemMode::Minislot { omega_fixed } => omega_fixed.to_vec(),
        SubproblemMode::Slot { .. } => omega.to_vec(),
    };
    let nu_served: Vec<f64> = served_idx
        .iter()
        .map(|&i| nu[i].max(NU_CUT_FLOOR))
        .collect();
    let violation = if served_idx.is_empty() {
        omega_for_bw
            .iter()
            .map(|&o| (1.0 + inputs.alpha_g) * o)
            .sum::<f64>()
            - inputs.w_total_mhz
    } else {
        bandwidth_violation(
            inputs.devices,
            served_idx,
            &nu_served,
            &omega_for_bw,
            inputs.globals,
            inputs.alpha_g,
            inputs.w_total_mhz,
        )
    };
    rep.bandwidth = violation / inputs.w_total_mhz.max(1.0);

    if let SubproblemMode::Slot { intervals, .. } = &inputs.mode {
        for (s, iv) in intervals.iter().enumerate() {
            let scale = iv.omega_ub.abs().max(1.0);
            rep.box_bounds = rep
                .box_bounds
                .max((omega[s] - iv.omega_ub) / scale)
                .max((iv.omega_lb_hat - omega[s]) / scale);
        }
    }

    let phi_sigma = inputs.globals.phi_snr * inputs.globals.sigma2_u_w;
    for &i in served_idx {
        if let Some(gm) = &g[i] {
            let tr_hg = trace_product(inputs.devices[i].channel.matrix(), &gm.0);
            let scale = (phi_sigma * nu[i]).abs().max(1e-12);
            rep.snr_link = rep.snr_link.max((phi_sigma * nu[i] - tr_hg) / scale);

            let min_eig = gm
                .0
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let scale = gm.trace().max(1e-9);
            rep.psd_min_eig = rep.psd_min_eig.max(-min_eig / scale);
        }
    }
    rep
}

/// Direct feasibility check of an association at fixed beamformers: the
/// greedy scheme's acceptance test. Fails when any served device has
/// non-positive SNR, a power budget is exceeded, or the bandwidth bound
/// no longer fits.
#[allow(clippy::too_many_arguments)]
pub fn association_feasible(
    devices: &[DeviceContext],
    served: &[bool],
    g: &[Option<PowerMatrix>],
    omega_miot: &[f64],
    budgets: &[f64],
    w_total: f64,
    alpha_g: f64,
    globals: &UrllcGlobals,
    rrh_count: usize,
    antennas: usize,
) -> bool {
    let phi_sigma = globals.phi_snr * globals.sigma2_u_w;
    let mut terms = Vec::new();
    for (i, dev) in devices.iter().enumerate() {
        if !served[i] {
            continue;
        }
        let Some(gm) = &g[i] else { return false };
        let snr = trace_product(dev.channel.matrix(), &gm.0) / phi_sigma;
        if snr <= 0.0 {
            return false;
        }
        let Ok(r) = channel_uses(dev.l_bits, snr, globals.beta_decode) else {
            return false;
        };
        terms.push(ServedTerm {
            served: true,
            r,
            lambda: dev.lambda,
            d: dev.d,
        });
    }
    let w_u = urllc_bandwidth_bound(&terms, globals).expect("validated globals");
    let miot: f64 = omega_miot.iter().map(|&o| (1.0 + alpha_g) * o).sum();
    if miot + w_u > w_total + 1e-9 {
        return false;
    }
    for j in 0..rrh_count {
        let used: f64 = devices
            .iter()
            .enumerate()
            .filter(|(i, _)| served[*i])
            .map(|(i, _)| g[i].as_ref().map_or(0.0, |m| m.rrh_power(j, antennas)))
            .sum();
        if used > budgets[j] + 1e-12 {
            return false;
        }
    }
    true
}

/// A PSD projection test helper shared with the audits.
pub fn min_eigenvalue(m: &DMatrix<super::conic::C64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
