//! Experiment runner for the polymer laboratory.

pub mod accept;
pub mod config;
pub mod experiments;
pub mod output;
