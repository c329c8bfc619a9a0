//! Data generation, persistence, configuration and the command line.

pub mod checkpoint;
pub mod cli;
pub mod compare;
pub mod config;
pub mod eval;
pub mod pipeline;
pub mod synthetic;
pub mod visualize;
