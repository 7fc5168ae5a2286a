//! Desired motion: a fixed task-space point, or harmonic task/joint
//! trajectories with analytic derivatives.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// `p(t) = offset + cos_amp * cos(omega t) + sin_amp * sin(omega t)`,
/// componentwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub offset: Vec<f64>,
    pub cos_amp: Vec<f64>,
    pub sin_amp: Vec<f64>,
    pub omega: f64,
}

/// Position, velocity and acceleration at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSample {
    pub pos: DVector<f64>,
    pub vel: DVector<f64>,
    pub acc: DVector<f64>,
}

impl TargetSample {
    /// True when velocity and acceleration are exactly zero.
    pub fn is_stationary(&self) -> bool {
        self.vel.iter().chain(self.acc.iter()).all(|v| *v == 0.0)
    }
}

impl Harmonic {
    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn is_consistent(&self) -> bool {
        self.cos_amp.len() == self.offset.len()
            && self.sin_amp.len() == self.offset.len()
            && self.omega.is_finite()
    }

    pub fn sample(&self, t: f64) -> TargetSample {
        let (s, c) = (self.omega * t).sin_cos();
        let w = self.omega;
        let n = self.dim();
        let mut pos = DVector::zeros(n);
        let mut vel = DVector::zeros(n);
        let mut acc = DVector::zeros(n);
        for i in 0..n {
            let (a, b) = (self.cos_amp[i], self.sin_amp[i]);
            pos[i] = self.offset[i] + a * c + b * s;
            vel[i] = w * (-a * s + b * c);
            acc[i] = -w * w * (a * c + b * s);
        }
        TargetSample { pos, vel, acc }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// Constant task-space position (regulation).
    TaskPoint(DVector<f64>),
    TaskTrajectory(Harmonic),
    JointTrajectory(Harmonic),
}

impl Target {
    pub fn is_task_space(&self) -> bool {
        !matches!(self, Target::JointTrajectory(_))
    }

    pub fn dim(&self) -> usize {
        match self {
            Target::TaskPoint(p) => p.len(),
            Target::TaskTrajectory(h) | Target::JointTrajectory(h) => h.dim(),
        }
    }

    pub fn sample(&self, t: f64) -> TargetSample {
        match self {
            Target::TaskPoint(p) => TargetSample {
                pos: p.clone(),
                vel: DVector::zeros(p.len()),
                acc: DVector::zeros(p.len()),
            },
            Target::TaskTrajectory(h) | Target::JointTrajectory(h) => h.sample(t),
        }
    }
}
