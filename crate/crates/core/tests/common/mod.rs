#![allow(dead_code)]

use nalgebra::{DVector, Vector3};
use outerloop::cli::presets::preset;
use outerloop::control::{ArmRegressor, Measurement, OuterController};
use outerloop::model::PlantModel;
use outerloop::sim::{parse_scenario, Scenario};

pub fn scenario(name: &str) -> Scenario {
    parse_scenario(preset(name).expect("preset"), name).expect("preset parses")
}

pub fn measurement(plant: &PlantModel, q: Vector3<f64>, qd: Vector3<f64>) -> Measurement {
    Measurement {
        q: DVector::from_column_slice(q.as_slice()),
        qd: DVector::from_column_slice(qd.as_slice()),
        x: DVector::from_column_slice(plant.forward_kinematics(&q).as_slice()),
    }
}

pub fn controller(s: &Scenario, meas: &Measurement) -> OuterController<ArmRegressor> {
    OuterController::new(s.regressor(), s.controller.clone(), &s.initial, meas).expect("controller")
}

/// Root mean square of the per-row norm of the selected columns over
/// `t >= from`.
pub fn rms_from(log: &outerloop::sim::TrajectoryLog, cols: &[&str], from: f64) -> f64 {
    let end = log.rows.last().map_or(0.0, |r| r.t);
    outerloop::sim::metric(log, cols, outerloop::sim::Metric::Rms { from, to: end }).unwrap()
}

/// Per-joint RMS of the error columns over `t >= from`.
pub fn joint_rms(log: &outerloop::sim::TrajectoryLog, from: f64) -> [f64; 3] {
    ["e1", "e2", "e3"].map(|c| rms_from(log, &[c], from))
}

pub const ALL_PRESETS: &[&str] = &[
    "fig3_filter_regulation",
    "fig6_observer_regulation",
    "fig9_observer_tracking",
    "fig12_joint_direct",
    "fig15_composite",
    "fig18_flexible",
    "fig19_reduced_stiffness",
    "fig20_high_stiffness",
    "fig21_pid_inner",
    "fig24_cartesian_adaptive",
    "fig25_cartesian_kinematic",
];
