//! Adaptive outer-loop command generators for robots whose joint servos are
//! sealed PI or PID loops, together with the arm model and a two-rate
//! simulation harness.

pub mod cli;
pub mod control;
pub mod model;
pub mod servo;
pub mod sim;
