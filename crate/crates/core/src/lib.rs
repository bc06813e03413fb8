//! Active learning over low-dimensional parameter grids with fully Bayesian
//! surrogates.
//!
//! The crate reconstructs an unknown function on a dense candidate grid by
//! repeatedly measuring the point where the surrogate is least certain. Two
//! surrogates are provided, both inferred with a No-U-Turn sampler:
//!
//! * [`bnn`]: a tanh multilayer perceptron with Normal(0, 1) priors on every
//!   weight and bias and a prior on the observation noise scale.
//! * [`gp`]: a Gaussian process with a Matérn 5/2 kernel and Log-Normal priors
//!   on lengthscales and amplitude, plus a MAP fast path.
//!
//! [`testbed`] holds the benchmark functions (including a Metropolis Ising
//! simulation), [`metrics`] the MSE/NLPD scores, [`active`] the acquisition
//! loop and [`experiment`] the sweep runner behind the command-line tool.
//!
//! ```
//! use activebayes::grid::EvaluationGrid;
//!
//! let grid = EvaluationGrid::new(&[(0.0, 1.0)], &[3]).unwrap();
//! assert_eq!(grid.points(), &[vec![0.0], vec![0.5], vec![1.0]]);
//! ```

pub mod active;
pub mod bnn;
pub mod data;
mod error;
pub mod experiment;
pub mod gp;
pub mod grid;
mod linalg;
pub mod metrics;
pub mod predictive;
pub mod rng;
pub mod sampler;
pub mod testbed;

pub use error::{Error, Result};
