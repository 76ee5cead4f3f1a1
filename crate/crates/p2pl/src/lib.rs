//! Peer-to-peer deep learning simulator.
//!
//! Devices hold local MNIST shards and train small MLPs with momentum
//! mini-batch gradient descent, then combine parameters with graph
//! neighbors through consensus averaging. Federated averaging, a
//! consensus-first baseline, and single-model centralized training run on
//! the same machinery for comparison. Everything is deterministic given a
//! master seed.

// Force linkage of the BLAS provider used by ndarray's `blas` feature.
use blas_src as _;

pub mod dataset;
pub mod harness;
pub mod mixing;
pub mod model;
pub mod protocol;
pub mod rng;
pub mod topology;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("{op}: input must not be empty")]
    EmptyInput { op: &'static str },

    #[error("bad {kind} magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        kind: &'static str,
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated {kind} file {path}: {detail}")]
    IdxTruncated {
        kind: &'static str,
        path: PathBuf,
        detail: String,
    },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("label out of range at sample {index}: {value}")]
    LabelOutOfRange { index: usize, value: u8 },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("invalid graph spec: {0}")]
    GraphSpec(String),

    #[error("graph construction for {spec} failed: no connected sample within {attempts} attempts")]
    GraphNotConnected { spec: String, attempts: usize },

    #[error("graph is disconnected: {op} requires a connected graph")]
    Disconnected { op: &'static str },

    #[error("radius calibration did not converge: {0}")]
    Calibration(String),

    #[error("malformed edge list {path} at line {line}: {detail}")]
    EdgeListParse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),

    #[error("unknown preset '{name}'; available presets:\n{}", .available.join("\n"))]
    UnknownPreset {
        name: String,
        available: Vec<String>,
    },

    #[error("malformed metric file {path} at line {line}: {detail}")]
    MetricParse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
