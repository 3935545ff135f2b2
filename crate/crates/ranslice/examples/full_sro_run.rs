//! End-to-end slice resource optimization for one time slot: sample channels,
//! run the ADMM bandwidth split, then re-optimize beamformers per minislot.
//!
//! ```sh
//! cargo run --release --example full_sro_run
//! ```

use ranslice::config::SystemConfig;
use ranslice::orchestrator::run_sro;

fn main() {
    env_logger::init();
    let mut cfg = SystemConfig::desk_defaults();
    cfg.minislots = 20;
    let t0 = std::time::Instant::now();
    let run = run_sro(&cfg, 42).expect("slot optimization");
    let dt = t0.elapsed();

    println!("slot optimized in {dt:.2?}");
    match &run.fallback {
        None => {
            println!("mIoT bandwidths (MHz): {:?}", run.omega);
            println!("mIoT utility        : {:.4}", run.u_bar_iot);
        }
        Some(reason) => println!("mIoT infeasible ({reason:?}); all bandwidth to URLLC"),
    }
    println!("URLLC utility       : {:.4}", run.u_bar_urllc);
    println!("total utility       : {:.4}", run.u_total);
    println!(
        "bandwidth split     : {:.2} MHz IoT (+{:.0}% guard) / {:.2} MHz URLLC",
        run.omega_iot_total,
        100.0 * (run.omega_urllc / run.omega_urllc).min(5.0) * 0.05,
        run.omega_urllc
    );
    println!(
        "served devices      : min {} / mean {:.2} per minislot",
        run.served_min, run.served_mean
    );
    println!(
        "ADMM               : {} outer iterations, final delta {:.3e}",
        run.stats.outer_iterations,
        run.stats.delta_trace.last().copied().unwrap_or(f64::NAN)
    );
    println!(
        "diagnostics        : tightness >= {:.9}, residual <= {:.2e}, URLLC energy {:.3} mW",
        run.stats.tightness_min.min(run.minislot_tightness_min),
        run.stats.residual_max.max(run.minislot_residual_max),
        run.energy_urllc_mw
    );
}
