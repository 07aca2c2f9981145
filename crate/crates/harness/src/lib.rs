//! Files, command line and live gateway around `sartrack-core`.

pub mod atomic;
pub mod cli;
pub mod gateway;
pub mod protocol;
pub mod registry_file;
pub mod scenario_file;
pub mod sysid_csv;
pub mod telemetry_csv;
