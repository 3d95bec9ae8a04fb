//! Command-line layer: configuration, table output, commands and the
//! acceptance criteria.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod error;
pub mod table;
