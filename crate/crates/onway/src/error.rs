//! Crate-wide error type aggregating the per-module error enums.

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::choice::ChoiceError;
use crate::estimation::EstimationError;
use crate::io::IoError;
use crate::scenario::ScenarioError;
use crate::spatial::SpatialError;

/// Any error produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Choice(#[from] ChoiceError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
