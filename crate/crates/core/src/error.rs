use thiserror::Error;

use crate::balred::BalredError;
use crate::linalg::LinalgError;
use crate::network::ParseError;
use crate::sim::SimError;
use crate::statespace::StateSpaceError;

/// Crate-level error, one variant per pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("network: {0}")]
    Parse(#[from] ParseError),
    #[error("state space: {0}")]
    StateSpace(#[from] StateSpaceError),
    #[error("linear algebra: {0}")]
    Linalg(#[from] LinalgError),
    #[error("reduction: {0}")]
    Balred(#[from] BalredError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
