//! Arm model: kinematics, body-frame dynamics and the closed-form regressor.

pub mod dual;
pub mod kinematics;
pub mod plant;
pub mod regressor;

pub use kinematics::{ArmGeometry, KinematicParams};
pub use plant::{FlexibleState, LinkBody, PlantModel, RigidState};
