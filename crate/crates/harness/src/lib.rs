//! Experiment runner and CLI support for `percolab`.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod experiments;
