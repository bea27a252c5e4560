//! Block-sparse compressed sensing over complex vectors.
//!
//! The centrepiece is [`solver::bnhtp_solve`], a block Newton hard-thresholding
//! pursuit for
//!
//! ```text
//!     min ‖Ax − y‖²   s.t.  ‖x_[i]‖₀ ≤ s_i  for every block i
//! ```
//!
//! Around it sit the objective/gradient model and its numeric lemma checks
//! ([`model`]), a complex AMP baseline ([`amp`]), the multi-user data generator
//! and the four sensing-matrix ensembles ([`datagen`]), evaluation indicators and
//! the false-alarm / miss-detection protocol ([`metrics`]), and a brute-force
//! global solver for small instances ([`oracle`]).
//!
//! Indices are 0-based throughout.

pub mod amp;
pub mod datagen;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod types;

pub use error::{Error, Result};
pub use matrix::SensingMatrix;
pub use model::Problem;
pub use solver::{bnhtp_solve, SolveResult, SolverConfig};
pub use types::{BlockStructure, ComplexSignal, SupportSet, C64};
