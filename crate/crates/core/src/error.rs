use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("DX parse error at line {line}: {msg}")]
    Dx { line: usize, msg: String },

    #[error("PDB parse error at line {line}: {msg}")]
    Pdb { line: usize, msg: String },

    #[error("QUBO file parse error at line {line}: {msg}")]
    Coo { line: usize, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point ({x}, {y}, {z}) lies outside the grid bounding box")]
    OutOfBounds { x: f64, y: f64, z: f64 },

    #[error("site grid is empty: no lattice point passes tau_g = {tau_g} (max density in box {max_density})")]
    EmptySiteGrid { tau_g: f64, max_density: f64 },

    #[error("{solver} solver is capped at {cap} variables, model has {n}")]
    SolverCap {
        solver: &'static str,
        n: usize,
        cap: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("evaluation refused: {0}")]
    Evaluation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dx(line: usize, msg: impl Into<String>) -> Self {
        Error::Dx {
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn pdb(line: usize, msg: impl Into<String>) -> Self {
        Error::Pdb {
            line,
            msg: msg.into(),
        }
    }

    /// Attach the offending file path to an error.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::File { source, .. } => source.exit_code(),
            Error::Config(_) | Error::InvalidInput(_) | Error::LengthMismatch { .. } => 2,
            Error::Dx { .. } | Error::Pdb { .. } | Error::Coo { .. } | Error::Json(_) => 3,
            Error::EmptySiteGrid { .. } => 4,
            Error::SolverCap { .. } => 5,
            Error::Evaluation(_) | Error::OutOfBounds { .. } => 6,
            Error::Io(_) => 7,
        }
    }
}
