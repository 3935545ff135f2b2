//! Cone-program interface used by the subproblem solver.
//!
//! Problems are quadratic programs over scalar variables and symmetric-matrix
//! variables (stored in scaled-triangle form), with equality rows, inequality
//! rows and PSD cone blocks. Solving is delegated to a primal-dual
//! interior-point method (Clarabel); everything above this module talks only
//! to [`ConicProblem`] / [`ConicSolution`].
//!
//! Complex Hermitian matrix data enters through its real symmetric embedding
//! `[[Re, -Im], [Im, Re]]`; for Hermitian `A`, `B` the real trace satisfies
//! `tr(A B) = tr(A_r B_r) / 2`, and the embedding-averaged solution of the
//! embedded program recovers the complex one.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{Complex, DMatrix};
use thiserror::Error;

pub type C64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("problem is primal infeasible")]
    PrimalInfeasible,
    #[error("problem is dual infeasible (unbounded)")]
    DualInfeasible,
    #[error("solver failed: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    AlmostOptimal,
    MaxIterationsBestFeasible,
}

/// Scaled-triangle length of an `n x n` symmetric matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Index of entry `(i, j)`, `i <= j`, in column-major upper-triangle order.
pub fn svec_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

/// Scaled triangular packing of a symmetric matrix: off-diagonals carry a
/// factor sqrt(2) so that `svec(A) . svec(B) = tr(A B)`.
pub fn svec_of_sym(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut v = vec![0.0; svec_len(n)];
    let s2 = std::f64::consts::SQRT_2;
    for j in 0..n {
        for i in 0..=j {
            v[svec_index(i, j)] = if i == j { m[(i, j)] } else { s2 * m[(i, j)] };
        }
    }
    v
}

/// Inverse of [`svec_of_sym`].
pub fn sym_of_svec(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let s2 = std::f64::consts::SQRT_2;
    for j in 0..n {
        for i in 0..=j {
            let x = v[svec_index(i, j)];
            if i == j {
                m[(i, j)] = x;
            } else {
                m[(i, j)] = x / s2;
                m[(j, i)] = x / s2;
            }
        }
    }
    m
}

/// Real symmetric embedding `[[Re, -Im], [Im, Re]]` of a Hermitian matrix.
pub fn embed_hermitian(a: &DMatrix<C64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            out[(i, j)] = v.re;
            out[(n + i, n + j)] = v.re;
            out[(i, n + j)] = -v.im;
            out[(n + i, j)] = v.im;
        }
    }
    out
}

/// Recover the complex Hermitian matrix from an embedded symmetric solution,
/// averaging over the embedding symmetry.
pub fn extract_hermitian(x: &DMatrix<f64>, n: usize) -> DMatrix<C64> {
    let mut g = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (x[(i, j)] + x[(n + i, n + j)]);
            let im = 0.5 * (x[(n + i, j)] - x[(i, n + j)]);
            g[(i, j)] = C64::new(re, im);
        }
    }
    // hermitianize against floating-point asymmetry
    let gh = g.adjoint();
    (g + gh) * C64::new(0.5, 0.0)
}

/// A sparse linear row over the decision variables.
pub type Row = Vec<(usize, f64)>;

/// Quadratic cone program: minimize `1/2 x' diag(p) x + q' x` subject to
/// equality rows, inequality rows (`a.x <= b`) and PSD blocks over
/// scaled-triangle variable ranges.
#[derive(Debug, Clone, Default)]
pub struct ConicProblem {
    pub num_vars: usize,
    pub p_diag: Vec<f64>,
    pub q: Vec<f64>,
    eq_rows: Vec<(Row, f64)>,
    ineq_rows: Vec<(Row, f64)>,
    psd_blocks: Vec<(usize, usize)>,
}

impl ConicProblem {
    pub fn new(num_vars: usize) -> Self {
        ConicProblem {
            num_vars,
            p_diag: vec![0.0; num_vars],
            q: vec![0.0; num_vars],
            ..Default::default()
        }
    }

    pub fn add_eq(&mut self, row: Row, rhs: f64) {
        self.eq_rows.push((row, rhs));
    }

    /// `a . x <= rhs`.
    pub fn add_ineq(&mut self, row: Row, rhs: f64) {
        self.ineq_rows.push((row, rhs));
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_rows.len()
    }

    /// Declare variables `[start, start + svec_len(dim))` as the scaled
    /// triangle of a `dim x dim` PSD matrix.
    pub fn add_psd_block(&mut self, start: usize, dim: usize) {
        debug_assert!(start + svec_len(dim) <= self.num_vars);
        self.psd_blocks.push((start, dim));
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: u32,
}

fn csc_from_triplets(m: usize, n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    triplets.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(triplets.len());
    let mut nzval = Vec::with_capacity(triplets.len());
    for &(r, c, v) in triplets.iter() {
        colptr[c + 1] += 1;
        rowval.push(r);
        nzval.push(v);
    }
    for c in 0..n {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

/// Solve with an interior-point method. Non-PSD or otherwise degenerate
/// iterates trigger one regularized restart before a hard error.
pub fn conic_solve(problem: &ConicProblem) -> Result<ConicSolution, ConicError> {
    solve_inner(problem, 0.0).or_else(|e| match e {
        ConicError::Numerical(_) => solve_inner(problem, 1e-9),
        other => Err(other),
    })
}

fn solve_inner(problem: &ConicProblem, regularization: f64) -> Result<ConicSolution, ConicError> {
    let n = problem.num_vars;
    let mut p_triplets: Vec<(usize, usize, f64)> = problem
        .p_diag
        .iter()
        .enumerate
        ()
        .filter(|(_, &v)| v != 0.0 || regularization > 0.0)
        .map(|(i, &v)| (i, i, v + regularization))
        .collect();
    let p = csc_from_triplets(n, n, &mut p_triplets);

    let mut a_triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row_idx = 0usize;

    if !problem.eq_rows.is_empty() {
        for (row, rhs) in &problem.eq_rows {
            for &(c, v) in row {
                a_triplets.push((row_idx, c, v));
            }
            b.push(*rhs);
            row_idx += 1;
        }
        cones.push(SupportedConeT::ZeroConeT(problem.eq_rows.len()));
    }
    if !problem.ineq_rows.is_empty() {
        for (row, rhs) in &problem.ineq_rows {
            for &(c, v) in row {
                a_triplets.push((row_idx, c, v));
            }
            b.push(*rhs);
            row_idx += 1;
        }
        cones.push(SupportedConeT::NonnegativeConeT(problem.ineq_rows.len()));
    }
    for &(start, dim) in &problem.psd_blocks {
        let len = svec_len(dim);
        for k in 0..len {
            a_triplets.push((row_idx, start + k, -1.0));
            b.push(0.0);
            row_idx += 1;
        }
        cones.push(SupportedConeT::PSDTriangleConeT(dim));
    }

    let a = csc_from_triplets(row_idx, n, &mut a_triplets);
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-9)
        .tol_gap_rel(1e-9)
        .tol_feas(1e-9)
        .max_iter(200)
        .build()
        .map_err(|e| ConicError::Numerical(e.to_string()))?;
    let mut solver = DefaultSolver::new(&p, &problem.q, &a, &b, &cones, settings);
    solver.solve();

    let status = match solver.solution.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(ConicError::PrimalInfeasible)
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            return Err(ConicError::DualInfeasible)
        }
        SolverStatus::MaxIterations => SolveStatus::MaxIterationsBestFeasible,
        other => return Err(ConicError::Numerical(format!("{other:?}"))),
    };
    Ok(ConicSolution {
        x: solver.solution.x.clone(),
        objective: solver.solution.obj_val,
        status,
        iterations: solver.solution.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(rng: &mut impl Rng, n: usize) -> DMatrix<C64> {
        let raw = DMatrix::from_fn(n, n, |_, _| {
            C64::new(
                rng.sample(rand_distr::StandardNormal),
                rng.sample(rand_distr::StandardNormal),
            )
        });
        (&raw + raw.adjoint()) * C64::new(0.5, 0.0)
    }

    fn min_eigenvalue_problem(c: &DMatrix<f64>) -> (ConicProblem, usize) {
        let n = c.nrows();
        let len = svec_len(n);
        let mut p = ConicProblem::new(len);
        p.q = svec_of_sym(c);
        let trace_row: Row = (0..n).map(|i| (svec_index(i, i), 1.0)).collect();
        p.add_eq(trace_row, 1.0);
        p.add_psd_block(0, n);
        (p, n)
    }

    /// min tr(CX) s.t. tr(X) = 1, X psd equals the smallest eigenvalue of C,
    /// attained at the eigenvector outer product.
    #[test]
    fn recovers_min_eigenvalue_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let n = rng.gen_range(2..=12);
            let raw = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(rand_distr::StandardNormal));
            let c = (&raw + raw.transpose()) * 0.5;
            let (p, n) = min_eigenvalue_problem(&c);
            let sol = conic_solve(&p).unwrap();
            let lambda_min = c
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert_relative_eq!(sol.objective, lambda_min, epsilon = 1e-7);
            // the maximizer is the eigenvector outer product
            let x = sym_of_svec(&sol.x, n);
            assert_relative_eq!(x.trace(), 1.0, epsilon = 1e-7);
        }
    }

    /// Same battery through the complex Hermitian embedding.
    #[test]
    fn recovers_min_eigenvalue_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let n = rng.gen_range(2..=6);
            let c = random_hermitian(&mut rng, n);
            let c_r = embed_hermitian(&c);
            // tr(C G) = tr(C_r X)/2 and tr(G) = tr(X)/2: fix tr(X) = 2.
            let len = svec_len(2 * n);
            let mut p = ConicProblem::new(len);
            p.q = svec_of_sym(&(c_r.clone() * 0.5));
            let trace_row: Row = (0..2 * n).map(|i| (svec_index(i, i), 1.0)).collect();
            p.add_eq(trace_row, 2.0);
            p.add_psd_block(0, 2 * n);
            let sol = conic_solve(&p).unwrap();
            let lambda_min = c
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert_relative_eq!(sol.objective, lambda_min, epsilon = 1e-7);

            let x = sym_of_svec(&sol.x, 2 * n);
            let g = extract_hermitian(&x, n);
            let tr: f64 = g.diagonal().iter().map(|v| v.re).sum();
            assert_relative_eq!(tr, 1.0, epsilon = 1e-7);
        }
    }

    /// Pure box-constrained separable quadratic: matches the projected
    /// closed-form solution.
    #[test]
    fn box_quadratic_matches_projection() {
        // min 1/2 sum p_i x_i^2 + q_i x_i on [lo, hi]
        let p_diag = [2.0, 0.5, 1.0];
        let q = [-1.0, 3.0, -10.0];
        let (lo, hi) = (-1.0, 2.0);
        let mut prob = ConicProblem::new(3);
        prob.p_diag = p_diag.to_vec();
        prob.q = q.to_vec();
        for i in 0..3 {
            prob.add_ineq(vec![(i, 1.0)], hi);
            prob.add_ineq(vec![(i, -1.0)], -lo);
        }
        let sol = conic_solve(&prob).unwrap();
        for i in 0..3 {
            let unconstrained = -q[i] / p_diag[i];
            let expect = unconstrained.clamp(lo, hi);
            assert_relative_eq!(sol.x[i], expect, epsilon = 1e-6);
        }
    }

    #[test]
    fn infeasible_certificate() {
        let mut prob = ConicProblem::new(1);
        prob.add_ineq(vec![(0, 1.0)], 0.0);
        prob.add_ineq(vec![(0, -1.0)], -1.0); // x >= 1 and x <= 0
        match conic_solve(&prob) {
            Err(ConicError::PrimalInfeasible) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn embedding_roundtrip_preserves_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.gen_range(2..=6);
            let a = random_hermitian(&mut rng, n);
            let v = DVector::from_fn(n, |_, _| {
                C64::new(
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                )
            });
            let g = &v * v.adjoint();
            let prod_complex: f64 = crate::urllc::trace_product(&a, &g);
            let prod_embedded =
                (embed_hermitian(&a) * embed_hermitian(&g)).trace() / 2.0;
            assert_relative_eq!(prod_complex, prod_embedded, max_relative = 1e-10);
            let back = extract_hermitian(&embed_hermitian(&g), n);
            assert_relative_eq!((back - g).norm(), 0.0, epsilon = 1e-12);
        }
    }
}
