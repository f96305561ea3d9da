//! Command-line and HTTP front ends for the `mof_forge` engine.

pub mod api;
pub mod commands;
