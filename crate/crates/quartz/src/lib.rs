//! Quartz: a stochastic primal-dual coordinate solver for L2-regularized
//! empirical risk minimization with arbitrary block samplings.
//!
//! The library covers the full pipeline: sparse data handling, sampling
//! schemes over example subsets (serial, tau-nice, product, distributed)
//! with seeded samplers, closed-form separable-overapproximation stepsizes,
//! the solver itself with duality-gap tracking, and complexity/speedup
//! analysis of the resulting iteration bounds.

pub mod analysis;
pub mod cli;
pub mod eso;
pub mod io;
pub mod loss;
pub mod matrix;
pub mod problem;
pub mod sampling;
pub mod solver;
pub mod synth;
mod util;

pub use loss::{LossKind, LossModel, Regularizer};
pub use matrix::DataMatrix;
pub use problem::{GapDecomposition, ProblemInstance, TOL_NUM};
pub use sampling::{Sampler, SamplingScheme};
pub use solver::{DualOption, SolveOutcome, SolveStatus, Solver, SolverConfig};
