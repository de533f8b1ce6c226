//! Grid and snapshot data model, input parsing and validation, and the
//! fuel emission-rate table.

mod fuel;
mod network;
mod snapshot;
mod validate;

use std::path::Path;

use thiserror::Error;

pub use fuel::{emission_rate, EmissionTable, FuelType};
pub use network::{parse_network, Bus, Generator, Line, Network};
pub use snapshot::{
    parse_snapshot, parse_snapshot_with, reconcile_dual_end_flows, ExtraSource, LineFlow,
    NegativeLoadPolicy, Snapshot, SnapshotOptions,
};
pub use validate::{validate_snapshot, BusResidual, ValidationReport, Violation};

/// Mixed absolute/relative comparison bound, in MW.
///
/// A residual `r` at a point whose largest flow magnitude is `scale` is
/// admissible when `|r| <= abs + rel * scale`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-6, rel: 1e-6 }
    }
}

impl Tolerance {
    pub fn absolute(abs: f64) -> Self {
        Self { abs, rel: 0.0 }
    }

    pub fn bound(&self, scale: f64) -> f64 {
        self.abs + self.rel * scale.abs()
    }

    pub fn admits(&self, residual: f64, scale: f64) -> bool {
        residual.abs() <= self.bound(scale)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate {kind} id \"{id}\"")]
    DuplicateId { kind: &'static str, id: String },
    #[error("line \"{line}\" is a self-loop on bus \"{bus}\"")]
    SelfLoop { line: String, bus: String },
    #[error("lines \"{first}\" and \"{second}\" both connect buses \"{a}\" and \"{b}\"")]
    ParallelLine {
        first: String,
        second: String,
        a: String,
        b: String,
    },
    #[error("unknown {kind} \"{id}\" referenced by {context}")]
    UnknownReference {
        kind: &'static str,
        id: String,
        context: String,
    },
    #[error("invalid {field} for \"{id}\": {value}")]
    InvalidValue {
        field: &'static str,
        id: String,
        value: f64,
    },
    #[error("no emission rate for fuel \"{0}\"")]
    UnknownFuel(FuelType),
    #[error("line \"{line}\" receives {received} MW but sends only {sent} MW")]
    InconsistentPair {
        line: String,
        sent: f64,
        received: f64,
    },
    #[error("negative load {mw} MW at bus \"{bus}\" (enable negative-load conversion to accept)")]
    NegativeLoad { bus: String, mw: f64 },
}

impl ModelError {
    pub fn is_input_error(&self) -> bool {
        matches!(self, ModelError::Io { .. } | ModelError::Parse { .. })
    }

    pub(crate) fn json(path: &Path, err: serde_json::Error) -> Self {
        ModelError::Parse {
            path: path.display().to_string(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, ModelError> {
    std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn check_nonnegative(field: &'static str, id: &str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidValue {
            field,
            id: id.to_string(),
            value,
        })
    }
}
