//! Deterministic closed-loop simulation: plant, scripted people, synthetic
//! perception, and the scheduler that ties them to the mission layer.

pub mod perception;
pub mod plant;
pub mod runner;
pub mod scenario;
pub mod schedule;
pub mod telemetry;
pub mod world;

pub use runner::{identify_axis, run_closed_loop, Simulation};
pub use scenario::{Scenario, ScenarioError, SCENARIO_SCHEMA};
pub use telemetry::{LogRow, Summary, TickRecord};
