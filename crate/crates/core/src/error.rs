use thiserror::Error;

use crate::egomotion::EgoError;
use crate::event_model::EventError;
use crate::flow_head::HeadError;
use crate::io::FormatError;
use crate::metrics::MetricsError;
use crate::scene_sim::SimError;
use crate::uq::UqError;

/// Any error produced by the pipeline, tagged by the module that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Event(#[from] EventError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Head(#[from] HeadError),
    #[error(transparent)]
    Uq(#[from] UqError),
    #[error(transparent)]
    Ego(#[from] EgoError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl Error {
    /// Short stable name of the error class, used in CLI diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Event(e) => e.class(),
            Error::Sim(e) => e.class(),
            Error::Head(e) => e.class(),
            Error::Uq(e) => e.class(),
            Error::Ego(e) => e.class(),
            Error::Metrics(e) => e.class(),
            Error::Format(e) => e.class(),
        }
    }

    /// True for malformed input files and other I/O failures, as opposed to
    /// failures of the numerical pipeline itself.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Format(_))
    }
}
