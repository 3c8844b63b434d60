//! Exact oracles: unit propagation, DPLL, branch-and-bound MaxSAT and the
//! Hamming-closest optimal assignment used for closest-assignment supervision.

mod counters;
mod dpll;
mod maxsat;
mod propagate;

pub use dpll::{dpll_solve, dpll_solve_with, DpllOptions, SatResult};
pub use maxsat::{
    closest_assignment, closest_assignment_with, maxsat_optimum, maxsat_optimum_with, round_reference, MaxSatOptions,
    MaxSatSolution,
};
pub use propagate::{unit_propagate, PartialAssignment, PropagationKind, PropagationOutcome};
