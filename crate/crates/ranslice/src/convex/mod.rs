//! Per-sample convex machinery for the slot-level subproblems: the quadratic
//! surrogate of the RA success utility, the bisection trust interval, the
//! PSD-cone solver with the auxiliary-variable bandwidth constraint, and
//! rank-one beamformer recovery.

pub mod conic;
pub mod interval;
pub mod recovery;
pub mod subproblem;
pub mod surrogate;

pub use conic::{conic_solve, ConicError, ConicProblem, ConicSolution, SolveStatus};
pub use interval::{find_trust_interval, IntervalError, TrustInterval};
pub use recovery::{rank_one_recovery, TightnessReport};
pub use subproblem::{
    solve_subproblem, DeviceContext, ResidualReport, SubproblemError, SubproblemInputs,
    SubproblemMode, SubproblemOutput,
};
pub use surrogate::{SliceCurve, TaylorSurrogate};
