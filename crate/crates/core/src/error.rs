use thiserror::Error;

use crate::{flowgraph::FlowGraphError, model::ModelError, report::ReportError, scc::SccError};
use crate::{synth::SynthError, tracer::TraceError};

/// Pipeline error carrying the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("flowgraph: {0}")]
    FlowGraph(#[from] FlowGraphError),
    #[error("scc: {0}")]
    Scc(#[from] SccError),
    #[error("tracer: {0}")]
    Trace(#[from] TraceError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
    #[error("report: {0}")]
    Report(#[from] ReportError),
}

impl Error {
    /// True for failures to read or decode input, as opposed to domain errors
    /// such as an imbalanced snapshot.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Model(e) if e.is_input_error())
    }
}
