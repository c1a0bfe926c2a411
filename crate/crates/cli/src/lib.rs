//! HTTP service and command line for the ddap orchestrator.

pub mod api;
pub mod cli;
