//! Command-line front end for the thin-film dimension-reduction library:
//! configuration parsing, experiment dispatch, CSV/JSON emission.

pub mod commands;
pub mod config;

pub use commands::run;
pub use config::{RunConfig, StateSpec, Variant};
