//! Command-line harness: config resolution and the subcommand
//! implementations, exposed as a library so tests can drive them directly.

pub mod commands;
pub mod configfile;

use stransformer_core::Error;

/// Exit-code taxonomy: 0 success, 2 configuration/usage, 3 data/artifact
/// integrity, 4 runtime or numerical failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Usage(_) => 2,
        Error::Parse { .. } | Error::Io(_) => 3,
        Error::Dimension { .. } | Error::Numeric(_) | Error::Metric(_) => 4,
    }
}
