//! Scenario loading, command dispatch, and trace and report emission for
//! the `intersection` tool.

pub mod commands;
pub mod report;
pub mod scenario;
pub mod trace;

pub use intersection_core as core;
