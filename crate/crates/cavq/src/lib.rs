//! File formats, reporting and the command-line front end for `cavq-core`.

pub mod commands;
pub mod config;
pub mod plots;
pub mod records;
pub mod snapshot;
