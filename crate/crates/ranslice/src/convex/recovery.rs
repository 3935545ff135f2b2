//! Rank-one beamformer recovery from a solved power matrix.
//!
//! The relaxation drops the rank constraint, but at any subproblem optimum the
//! power matrix is rank-one, so `g = sqrt(lambda_max) u_max` reproduces every
//! trace functional of `G`. The eigen-ratio `lambda_max / tr(G)` certifies
//! this: a ratio below `1 - tol` contradicts the tightness guarantee and is
//! surfaced as a warning while the principal component is still returned.

use crate::urllc::PowerMatrix;
use nalgebra::{Complex, DVector};

pub type C64 = Complex<f64>;

#[derive(Debug, Clone, Copy)]
pub struct TightnessReport {
    /// `lambda_max / tr(G)`; 1 for an exact rank-one matrix.
    pub ratio: f64,
    /// Whether the ratio clears `1 - tol`.
    pub exact: bool,
}

/// Principal-component beamformer of `g_mat` plus its tightness certificate.
pub fn rank_one_recovery(g_mat: &PowerMatrix, tol: f64) -> (DVector<C64>, TightnessReport) {
    let n = g_mat.dim();
    let trace = g_mat.trace();
    if trace <= 0.0 {
        return (
            DVector::from_element(n, C64::new(0.0, 0.0)),
            TightnessReport {
                ratio: 1.0,
                exact: true,
            },
        );
    }
    let eig = g_mat.0.clone().symmetric_eigen();
    let (idx, &lambda_max) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.total_cmp(b))
        .expect("nonempty spectrum");
    let u = eig.eigenvectors.column(idx).into_owned();
    let g = u * C64::new(lambda_max.max(0.0).sqrt(), 0.0);
    let ratio = lambda_max / trace;
    let exact = ratio >= 1.0 - tol;
    if !exact {
        log::warn!(
            "rank-one recovery: eigen-ratio {ratio:.9} below 1 - {tol:e}; returning the principal component"
        );
    }
    (g, TightnessReport { ratio, exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::urllc::trace_product;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_rank_one_recovers_up_to_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let g0 = DVector::from_fn(6, |_, _| {
                C64::new(
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                )
            });
            let mat = PowerMatrix::from_beamformer(&g0);
            let (g, report) = rank_one_recovery(&mat, 1e-6);
            assert!(report.exact);
            assert_relative_eq!(report.ratio, 1.0, epsilon = 1e-9);
            // equal up to a global phase: |<g, g0>| = |g||g0|
            let ip = (g.adjoint() * &g0)[(0, 0)].norm();
            assert_relative_eq!(ip, g.norm() * g0.norm(), max_relative = 1e-9);
        }
    }

    #[test]
    fn identity_reports_maximal_violation() {
        let n = 6;
        let mat = PowerMatrix(DMatrix::from_diagonal_element(n, n, C64::new(1.0, 0.0)));
        let (_, report) = rank_one_recovery(&mat, 1e-6);
        assert!(!report.exact);
        assert_relative_eq!(report.ratio, 1.0 / n as f64, epsilon = 1e-12);
    }

    #[test]
    fn recovered_beamformer_reproduces_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let g0 = DVector::from_fn(6, |_, _| {
            C64::new(
                rng.sample(rand_distr::StandardNormal),
                rng.sample(rand_distr::StandardNormal),
            )
        });
        let mat = PowerMatrix::from_beamformer(&g0);
        let (g, report) = rank_one_recovery(&mat, 1e-6);
        assert!(report.exact);
        let rebuilt = PowerMatrix::from_beamformer(&g);
        let h = DVector::from_fn(6, |_, _| {
            C64::new(
                rng.sample(rand_distr::StandardNormal),
                rng.sample(rand_distr::StandardNormal),
            )
        });
        let hm = &h * h.adjoint();
        assert_relative_eq!(
            trace_product(&hm, &mat.0),
            trace_product(&hm, &rebuilt.0),
            max_relative = 1e-8
        );
        for j in 0..3 {
            assert_relative_eq!(mat.rrh_power(j, 2), rebuilt.rrh_power(j, 2), max_relative = 1e-8);
        }
    }

    #[test]
    fn zero_matrix_is_trivially_tight() {
        let (g, report) = rank_one_recovery(&PowerMatrix::zeros(4), 1e-6);
        assert!(report.exact);
        assert!(g.iter().all(|c| c.norm() == 0.0));
    }
}
