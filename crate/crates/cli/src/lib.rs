//! Pipeline stages behind the `koopstitch` command: simulate, fit,
//! spectrum, discover, stitch and predict.

pub mod commands;
pub mod config;

pub use commands::*;
pub use config::RunConfig;

/// Exit code for a failed run: 3 for numerical failures, 2 otherwise.
pub fn exit_code(err: &koopstitch::Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}
