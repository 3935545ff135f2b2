//! Discrete-event Monte-Carlo oracle for the mIoT closed forms.
//!
//! RRHs and devices are dropped as independent PPPs on a square with torus
//! wrap-around (so the finite window approximates the infinite plane), devices
//! associate with their nearest RRH, and every minislot runs one round of the
//! slotted-ALOHA contention: active devices that pass access control pick a
//! (preamble, PRACH) pair uniformly, and a preamble decodes iff its SINR under
//! truncated channel-inversion power control and Exp(1) fading clears the
//! slice threshold. Queues are integer-valued per device; new arrivals during
//! minislot `t` are only visible at `t + 1`.

use crate::miot::{access_probability, AccessControl, MiotSliceProfile, RadioParams};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Poisson};
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no RRHs drawn after {0} attempts; raise lambda_r or the area")]
    EmptyDeployment(usize),
    #[error("slice {slice}: bandwidth {omega} MHz yields no whole PRACH (tone spacing {a} MHz)")]
    NoPrach { slice: usize, omega: f64, a: f64 },
}

/// One sampled PPP deployment with nearest-RRH association.
#[derive(Debug, Clone)]
pub struct DeploymentRealization {
    pub rrh_positions: Vec<[f64; 2]>,
    /// Per slice, the device positions.
    pub device_positions: Vec<Vec<[f64; 2]>>,
    /// Per slice, device index -> associated RRH index.
    pub association: Vec<Vec<usize>>,
    /// Side of the simulation square (km).
    pub area_km: f64,
}

impl DeploymentRealization {
    /// Number of devices of `slice` associated with each RRH.
    pub fn cell_counts(&self, slice: usize) -> Vec<usize> {
        let mut counts = vec![0usize; self.rrh_positions.len()];
        for &r in &self.association[slice] {
            counts[r] += 1;
        }
        counts
    }
}

fn torus_dist2(a: [f64; 2], b: [f64; 2], side: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..2 {
        let d = (a[k] - b[k]).abs();
        let d = d.min(side - d);
        acc += d * d;
    }
    acc
}

/// Draw a PPP deployment: Poisson counts over the square, uniform positions,
/// nearest-RRH association under the torus metric. Resamples (bounded) when
/// the RRH process comes up empty.
pub fn sample_deployment(
    lambda_r: f64,
    lambda_i: &[f64],
    area_km: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DeploymentRealization, SimError> {
    if lambda_r <= 0.0 || area_km <= 0.0 || lambda_i.iter().any(|&l| l <= 0.0) {
        return Err(SimError::InvalidParameter(
            "intensities and area must be positive".into(),
        ));
    }
    const RETRIES: usize = 64;
    let region = area_km * area_km;
    let mut rrh_positions = Vec::new();
    for attempt in 0..=RETRIES {
        let n_rrh = Poisson::new(lambda_r * region).unwrap().sample(rng) as usize;
        if n_rrh > 0 {
            rrh_positions = (0..n_rrh)
                .map(|_| [rng.gen_range(0.0..area_km), rng.gen_range(0.0..area_km)])
                .collect();
            break;
        }
        if attempt == RETRIES {
            return Err(SimError::EmptyDeployment(RETRIES));
        }
    }
    let mut device_positions = Vec::with_capacity(lambda_i.len());
    let mut association = Vec::with_capacity(lambda_i.len());
    for &lam in lambda_i {
        let n = Poisson::new(lam * region).unwrap().sample(rng) as usize;
        let pos: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.gen_range(0.0..area_km), rng.gen_range(0.0..area_km)])
            .collect();
        let assoc = pos
            .iter()
            .map(|&p| {
                rrh_positions
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        torus_dist2(p, **a, area_km)
                            .total_cmp(&torus_dist2(p, **b, area_km))
                    })
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect();
        device_positions.push(pos);
        association.push(assoc);
    }
    Ok(DeploymentRealization {
        rrh_positions,
        device_positions,
        association,
        area_km,
    })
}

/// Empirical counterpart of the closed-form trajectory.
#[derive(Debug, Clone)]
pub struct EmpiricalTrajectory {
    /// Attempt-conditioned success frequency per slice and minislot; `None`
    /// when no device attempted anywhere in the pool.
    pub p_hat: Vec<Vec<Option<f64>>>,
    /// Mean queue length per device at the start of each minislot.
    pub mean_queue: Vec<Vec<f64>>,
    /// Fraction of devices with a non-empty queue at the start of each minislot.
    pub nonempty_freq: Vec<Vec<f64>>,
    pub replications: usize,
}

#[derive(Default, Clone)]
struct SliceSlotTally {
    attempts: u64,
    successes: u64,
    queue_sum: u64,
    nonempty: u64,
    devices: u64,
}

struct RepOutcome {
    tallies: Vec<Vec<SliceSlotTally>>,
}

fn merge(mut into: Vec<Vec<SliceSlotTally>>, from: RepOutcome) -> Vec<Vec<SliceSlotTally>> {
    for (a, b) in into.iter_mut().flatten().zip(from.tallies.into_iter().flatten()) {
        a.attempts += b.attempts;
        a.successes += b.successes;
        a.queue_sum += b.queue_sum;
        a.nonempty += b.nonempty;
        a.devices += b.devices;
    }
    into
}

fn rep_seed(seed: u64, rep: u64) -> u64 {
    seed ^ rep.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn simulate_replication(
    deployment: &DeploymentRealization,
    radio: &RadioParams,
    ctrl: AccessControl,
    profiles: &[MiotSliceProfile],
    prachs: &[usize],
    t_slots: usize,
    rng: &mut ChaCha8Rng,
) -> RepOutcome {
    let n_slices = profiles.len();
    let p_nr = access_probability(ctrl);
    let noise_over_rho = radio.sigma2_w / radio.rho_o_w;
    let mut queues: Vec<Vec<u64>> = deployment
        .device_positions
        .iter()
        .map(|d| vec![0u64; d.len()])
        .collect();
    let mut tallies = vec![vec![SliceSlotTally::default(); t_slots]; n_slices];
    let x_pop: Vec<f64> = profiles
        .iter()
        .map(|p| crate::miot::packets_per_success(radio.tone_spacing_mhz, p.theta_th, radio.packet_bits))
        .collect();

    // (device, fading gain) lists keyed by (rrh, preamble, prach), per slice;
    // ordered map keeps the pop-draw sequence reproducible
    let mut groups: BTreeMap<(usize, usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for t in 0..t_slots {
        for s in 0..n_slices {
            let tally = &mut tallies[s][t];
            tally.devices += queues[s].len() as u64;
            for &q in &queues[s] {
                tally.queue_sum += q;
                tally.nonempty += (q > 0) as u64;
            }

            groups.clear();
            for (dev, &q) in queues[s].iter().enumerate() {
                if q == 0 {
                    continue;
                }
                if p_nr < 1.0 && !rng.gen_bool(p_nr) {
                    continue;
                }
                let preamble = rng.gen_range(0..radio.xi as usize);
                let prach = rng.gen_range(0..prachs[s]);
                let h: f64 = rng.sample(Exp1);
                groups
                    .entry((deployment.association[s][dev], preamble, prach))
                    .or_default()
                    .push((dev, h));
            }

            for members in groups.values() {
                let total: f64 = members.iter().map(|&(_, h)| h).sum();
                for &(dev, h) in members {
                    tally.attempts += 1;
                    let sinr = h / (noise_over_rho + (total - h));
                    if sinr >= profiles[s].theta_th {
                        tally.successes += 1;
                        let mut pop = x_pop[s].floor() as u64;
                        let frac = x_pop[s].fract();
                        if frac > 0.0 && rng.gen_bool(frac) {
                            pop += 1;
                        }
                        queues[s][dev] = queues[s][dev].saturating_sub(pop);
                    }
                }
            }

            // arrivals during t are counted at t + 1
            let arrival = profiles[s].arrival.at(t + 1);
            if arrival > 0.0 {
                let poisson = Poisson::new(arrival).unwrap();
                for q in queues[s].iter_mut() {
                    *q += poisson.sample(rng) as u64;
                }
            }
        }
    }
    RepOutcome { tallies }
}

fn prach_counts(
    profiles: &[MiotSliceProfile],
    radio: &RadioParams,
    omega: &[f64],
) -> Result<Vec<usize>, SimError> {
    omega
        .iter()
        .enumerate()
        .map(|(s, &w)| {
            let f = (w / radio.tone_spacing_mhz).floor() as usize;
            if f < 1 {
                Err(SimError::NoPrach {
                    slice: s,
                    omega: w,
                    a: radio.tone_spacing_mhz,
                })
            } else {
                Ok(f)
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(|v| {
            debug_assert_eq!(v.len(), profiles.len());
            v
        })
}

fn finalize(
    totals: Vec<Vec<SliceSlotTally>>,
    replications: usize,
) -> EmpiricalTrajectory {
    let p_hat = totals
        .iter()
        .map(|slots| {
            slots
                .iter()
                .map(|t| {
                    (t.attempts > 0).then(|| t.successes as f64 / t.attempts as f64)
                })
                .collect()
        })
        .collect();
    let mean_queue = totals
        .iter()
        .map(|slots| {
            slots
                .iter()
                .map(|t| {
                    if t.devices == 0 {
                        0.0
                    } else {
                        t.queue_sum as f64 / t.devices as f64
                    }
                })
                .collect()
        })
        .collect();
    let nonempty_freq = totals
        .iter()
        .map(|slots| {
            slots
                .iter()
                .map(|t| {
                    if t.devices == 0 {
                        0.0
                    } else {
                        t.nonempty as f64 / t.devices as f64
                    }
                })
                .collect()
        })
        .collect();
    EmpiricalTrajectory {
        p_hat,
        mean_queue,
        nonempty_freq,
        replications,
    }
}

/// Replicate the slotted-ALOHA contention over one fixed deployment.
/// Replications run concurrently and merge in replication order, so the
/// result is independent of scheduling.
pub fn run_slot(
    deployment: &DeploymentRealization,
    radio: &RadioParams,
    ctrl: AccessControl,
    profiles: &[MiotSliceProfile],
    omega: &[f64],
    t_slots: usize,
    replications: usize,
    seed: u64,
) -> Result<EmpiricalTrajectory, SimError> {
    let prachs = prach_counts(profiles, radio, omega)?;
    let outcomes: Vec<RepOutcome> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(rep_seed(seed, rep));
            simulate_replication(deployment, radio, ctrl, profiles, &prachs, t_slots, &mut rng)
        })
        .collect();
    let zero = vec![vec![SliceSlotTally::default(); t_slots]; profiles.len()];
    let totals = outcomes.into_iter().fold(zero, merge);
    Ok(finalize(totals, replications))
}

/// Replicate with a fresh PPP deployment per replication, matching the
/// ensemble the closed forms average over.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    lambda_i: &[f64],
    area_km: f64,
    radio: &RadioParams,
    ctrl: AccessControl,
    profiles: &[MiotSliceProfile],
    omega: &[f64],
    t_slots: usize,
    replications: usize,
    seed: u64,
) -> Result<EmpiricalTrajectory, SimError> {
    let prachs = prach_counts(profiles, radio, omega)?;
    let outcomes: Vec<Result<RepOutcome, SimError>> = (0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(rep_seed(seed, rep));
            let deployment = sample_deployment(radio.lambda_r, lambda_i, area_km, &mut rng)?;
            Ok(simulate_replication(
                &deployment,
                radio,
                ctrl,
                profiles,
                &prachs,
                t_slots,
                &mut rng,
            ))
        })
        .collect();
    let zero = vec![vec![SliceSlotTally::default(); t_slots]; profiles.len()];
    let mut totals = zero;
    for o in outcomes {
        totals = merge(totals, o?);
    }
    Ok(finalize(totals, replications))
}
