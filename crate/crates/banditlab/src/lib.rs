//! Experiment harness, file formats and command-line front end for
//! `banditlab-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod montecarlo;

pub use cli::run_cli;
