//! Order reduction of chemical master equations by Lyapunov-balanced truncation.
//!
//! The pipeline is:
//!
//! 1. [`network`]: parse a reaction network and evaluate its propensities.
//! 2. [`statespace`]: enumerate the reachable population vectors, assemble the
//!    sparse infinitesimal generator and the output matrix.
//! 3. [`balred`]: remove the zero eigenvalue with a similarity transform, balance
//!    the resulting stable LTI system and truncate (or residualize) it, with the
//!    certified bound `2 * sum(neglected Hankel singular values)`.
//! 4. [`sim`]: integrate the full CME, the reduced model, Gillespie ensembles and a
//!    minimal finite state projection, and compare the results.
//!
//! Dense kernels (Schur, Lyapunov, eigen/singular value decompositions, matrix
//! exponential) live in [`linalg`].

pub mod balred;
pub mod error;
pub mod linalg;
pub mod network;
pub mod sim;
pub mod statespace;

pub use error::{Error, Result};
