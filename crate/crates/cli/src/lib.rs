//! Library surface of the command-line driver: configuration, manifests and
//! the simulate/infer/benchmark commands, reusable from tests and other
//! programs.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{cmd_benchmark, cmd_infer, cmd_simulate};
pub use config::RunConfig;
pub use manifest::RunManifest;

/// Map an error to the documented process exit code: 2 validation,
/// 3 numerical failure, 4 I/O.
pub fn exit_code(err: &abclin::Error) -> i32 {
    use abclin::Error::*;
    match err {
        Invalid(_) | Format { .. } => 2,
        NonFinite(_) | Singular(_) | Numerical(_) | SimulationFailed { .. } => 3,
        Io(_) => 4,
    }
}
