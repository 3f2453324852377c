//! Library surface of the experiment harness; the `mecax` binary is a thin
//! clap wrapper over these modules.

pub mod config;
pub mod experiment;
pub mod plot;
