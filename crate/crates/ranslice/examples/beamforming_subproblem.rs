//! Solve one per-sample convex subproblem and recover the rank-one
//! beamformers, printing the tightness certificate and constraint audit.
//!
//! ```sh
//! cargo run --release --example beamforming_subproblem
//! ```

use ranslice::config::SystemConfig;
use ranslice::convex::{
    rank_one_recovery, solve_subproblem, SubproblemInputs, SubproblemMode,
};
use ranslice::orchestrator::{
    device_contexts, generate_channel_samples, initial_beamformers, CompLayout,
};
use ranslice::urllc::trace_product;

fn main() {
    env_logger::init();
    let cfg = SystemConfig::desk_defaults();
    let layout = CompLayout::generate(&cfg, 7);
    let samples = generate_channel_samples(&layout, &cfg, 1, 8);
    let devices = device_contexts(&layout, &cfg, &samples.samples[0]);
    let served = vec![true; devices.len()];
    let globals = cfg.urllc_globals();
    let reserve = cfg.iot_power_reserve_w();
    let budgets = vec![cfg.rrh_power_w - reserve; cfg.rrh_count];
    let g0 = initial_beamformers(&samples.samples[0], cfg.init_beam_power_w);
    let phi_sigma = globals.phi_snr * globals.sigma2_u_w;
    let warm: Vec<f64> = devices
        .iter()
        .zip(&g0)
        .map(|(d, g)| {
            g.as_ref()
                .map_or(1.0, |gm| trace_product(d.channel.matrix(), &gm.0) / phi_sigma)
        })
        .collect();

    // bandwidths as if the mIoT slices took 9 MHz of the 60
    let omega_fixed = vec![3.0; 3];
    let inputs = SubproblemInputs {
        devices: &devices,
        served: &served,
        mode: SubproblemMode::Minislot {
            omega_fixed: &omega_fixed,
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
    let t0 = std::time::Instant::now();
    let out = solve_subproblem(&inputs).expect("subproblem");
    let dt = t0.elapsed();

    println!("solved in {dt:.2?} with {} cuts", out.cuts_added);
    println!("objective (utility) : {:.6}", out.objective);
    println!("max scaled residual : {:.2e}", out.residuals.max());
    for (i, g) in out.g.iter().enumerate() {
        let Some(gm) = g else { continue };
        let (vec, report) = rank_one_recovery(gm, 1e-6);
        println!(
            "device {i}: power {:.4} mW, SNR {:.1}, eigen-ratio {:.9}, |g| {:.4e}",
            gm.trace() * 1e3,
            out.nu[i],
            report.ratio,
            vec.norm()
        );
    }
}
