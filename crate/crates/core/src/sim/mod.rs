//! Deterministic two-rate simulation of the servo-in-the-loop arm.

pub mod config;
pub mod engine;
pub mod log;

pub use config::{parse_scenario, ConfigError, ScenarioFile};
pub use engine::{
    run_scenario, run_scenario_with_probe, Monitors, PlantKind, ProbeEvent, Scenario, SimError,
    SimFailure, Timing,
};
pub use log::{
    compare_runs, metric, CompareError, LogRow, Metric, MonitorSummary, TrajectoryLog, COLUMNS,
};
