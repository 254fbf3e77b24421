//! Run, mesh and bench commands behind the `flipsim` binary.

use std::io;
use std::path::{Path, PathBuf};

pub mod commands;
pub mod config;
pub mod report;
pub mod snapshot;

pub use commands::{cmd_bench, cmd_mesh, cmd_run, BenchMatrix, MeshRequest};
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 1 usage/config, 2 runtime or solver failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

impl From<flipsim::sim::SimError> for CliError {
    fn from(e: flipsim::sim::SimError) -> Self {
        use flipsim::sim::SimError;
        match e {
            SimError::Solver { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<snapshot::SnapshotError> for CliError {
    fn from(e: snapshot::SnapshotError) -> Self {
        match e {
            snapshot::SnapshotError::Io { path, source } => CliError::Io { path, source },
            // a snapshot that does not parse is bad input, not a failing disk
            snapshot::SnapshotError::Format { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<flipsim::surface::MeshError> for CliError {
    fn from(e: flipsim::surface::MeshError) -> Self {
        match e {
            flipsim::surface::MeshError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Runtime(other.to_string()),
        }
    }
}
