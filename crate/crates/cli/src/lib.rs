//! Scenario-file loading for the `jetgamma` command-line tool.

pub mod scenario;
