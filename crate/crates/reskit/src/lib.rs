//! Kuramoto-Sivashinsky data, file formats, configuration and the experiment
//! drivers behind the `reskit` command-line tool.

pub mod config;
pub mod dataset;
pub mod experiments;
pub mod ks;
