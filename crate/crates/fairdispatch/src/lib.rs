//! Files, parallel evaluation and the command-line driver around
//! [`fairdispatch_core`].

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod parallel;
pub mod policy_spec;

pub use config::{Profile, RunConfig};
pub use error::CliError;
