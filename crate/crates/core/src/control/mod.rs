//! Adaptive outer-loop controllers producing position/velocity commands
//! for a sealed joint servo.

pub mod config;
pub mod controller;
pub mod error;
pub mod lyapunov;
pub mod model;
pub mod projection;
pub mod target;

pub use config::{
    Adaptation, Forgetting, InitialEstimates, InnerLoop, OuterConfig, ReferenceLaw,
    ServoGainEstimates,
};
pub use controller::{
    pseudo_inverse, Evaluation, Layout, Measurement, OuterCommand, OuterController,
};
pub use error::ControlError;
pub use lyapunov::{lyapunov_terms, LyapunovTerms, PlantTruth};
pub use model::{ArmRegressor, RegressorModel};
pub use target::{Harmonic, Target, TargetSample};
