//! Command-line front end for the triality simulations: state preparation,
//! fringe scans, path blocking, tomography, and the seven-state table.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod table1;

pub use commands::{Format, Report};
pub use config::ExperimentConfig;
