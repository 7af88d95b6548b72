//! Pipeline front end: configuration, the five verbs, and report
//! rendering. The `tcav` binary is a thin wrapper over this crate.

pub mod commands;
pub mod config;
pub mod report;
pub mod results;

use tcav_core::ErrorKind;

/// Process exit code for a failure of the given kind.
pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}
