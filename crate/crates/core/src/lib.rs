//! Eigenenergy estimation from simulated Hadamard-test records.
//!
//! The pipeline synthesizes the time signal `y(t) = Σ p_ℓ e^{-i E_ℓ τ t}` of a
//! normalized benchmark Hamiltonian, samples it on a sparse random set of
//! integer times, and recovers the dominant frequency by sweeping a grid
//! shift `ν` and solving one basis-pursuit-denoising problem per shift. The
//! shift with the smallest ℓ1 solution wins.
//!
//! The numerical kernels ([`fourier`], [`solver`]) are generic over the
//! floating point type through [`Real`]; the aliases at the crate root fix
//! them to `f64`, which is what the rest of the pipeline uses.

// `!(x > 0.0)` is how the validators reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the linear algebra they implement.
#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod bench;
pub mod config;
pub mod error;
pub mod estimator;
pub mod fourier;
pub mod hamiltonians;
pub mod oracle;
pub mod real;
pub mod seed;
pub mod signal;
pub mod solver;

pub use error::{Error, Result};
pub use real::Real;

pub use num_complex::Complex64;

/// Shifted Fourier operator in double precision.
pub type FourierOp = fourier::ShiftedFourierOp<f64>;
/// Grid decomposition in double precision.
pub type GridDecomposition = fourier::GridDecomposition<f64>;
/// Basis-pursuit-denoising problem in double precision.
pub type BpdnProblem = solver::BpdnProblem<f64>;
/// Basis-pursuit-denoising solution in double precision.
pub type BpdnSolution = solver::BpdnSolution<f64>;
/// Solver options in double precision.
pub type SolverOptions = solver::SolverOptions<f64>;

pub use estimator::{EstimateReport, EstimatorConfig, SampleSet};
pub use hamiltonians::{DenseHamiltonian, Spectrum};
pub use signal::{RuntimeLedger, TimeSeries};
