//! Small dense conic solver for the semidefinite relaxations.

mod lmi;
mod problem;
mod solver;

pub use lmi::{
    embed_hermitian, embed_unchecked, epigraph_inverse_trace, hermitian_from_embedding, Epigraph, LmiBlock, LmiProblem,
    LmiSolution,
};
pub use problem::{BlockId, BlockKind, BlockValue, Coeff, ConicProblem, ConicSolution, Constraint, Status};
pub use solver::{solve, solve_with, ConicBackend, InteriorPoint, SolverOptions};
