//! Reference solvers: exact deterministic max-NPV (with a brute-force
//! agreement oracle), expected value under perfect information, the rigid
//! and dynamic baseline policies, and exact finite-horizon backward
//! induction over the scheduling MDP.

mod det;
mod mdp;
mod policies;

pub use det::{brute_force_det_npv, solve_det_npv, BruteLimits, ConstraintKind, DetProblem, StartConstraint};
pub use mdp::{advance_distribution, exact_mdp_enpv, MdpSolution, ObsState, MDP_STATE_LIMIT};
pub use policies::{ev_pi, run_dyn, solve_rigid, Conditioning, DynEpochMode, DynOptions, DynOutcome};
