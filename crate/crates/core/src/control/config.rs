//! Runtime configuration of an outer-loop controller.

use nalgebra::{DMatrix, DVector};

use super::error::ControlError;

/// How the nominal joint reference velocity `v` is produced.
#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceLaw {
    /// Passive filter on `J^T dx` without task velocity; adds `-alpha J^T dx`
    /// to the scaled compensation.
    Filter {
        k1: DVector<f64>,
        k2: DVector<f64>,
        alpha: f64,
    },
    /// Task-space observer; with a moving target the estimated Jacobian's
    /// pseudo-inverse supplies feedforward.
    Observer { beta: f64, gamma: f64 },
    /// Exactly known kinematics: `v = J^+ xdot_d - gamma J^T (x - x_d)`.
    KnownKinematics { gamma: f64, a_k: DVector<f64> },
    /// Joint-space tracking: `v = qdot_d - alpha_bar (q - q_d)`.
    Joint { alpha_bar: f64 },
}

impl ReferenceLaw {
    pub fn is_task_space(&self) -> bool {
        !matches!(self, ReferenceLaw::Joint { .. })
    }

    /// Laws that adapt `a_k` and therefore carry `a_k` in their state.
    pub fn adapts_kinematics(&self) -> bool {
        matches!(
            self,
            ReferenceLaw::Filter { .. } | ReferenceLaw::Observer { .. }
        )
    }
}

/// Which embedded servo the command ODE is shaped for.
#[derive(Clone, Debug, PartialEq)]
pub enum InnerLoop {
    PiVelocity,
    /// PID position servo; `k_c` pulls `q_r` toward `q`.
    PidPosition {
        k_c: DVector<f64>,
    },
}

/// Bounded-gain forgetting for the composite gains.
#[derive(Clone, Debug, PartialEq)]
pub struct Forgetting {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda_bar: DVector<f64>,
    /// Diagonal of the upper bound on `Gamma_d`.
    pub gamma_d_bar: DVector<f64>,
    pub lambda_i_bar: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Adaptation {
    /// Gradient laws driven by the sliding vector only.
    Direct,
    /// Adds a filtered torque prediction error.
    Composite {
        gamma0: f64,
        lambda_f: f64,
        forgetting: Option<Forgetting>,
    },
    /// No dynamic compensation: `q_c = q_r` (conventional kinematic loop).
    Kinematic,
}

/// Designer's guess of the servo gains, used only for the `K_c` bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ServoGainEstimates {
    pub kp: DVector<f64>,
    pub ki: DVector<f64>,
    pub kd: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterConfig {
    pub law: ReferenceLaw,
    pub inner: InnerLoop,
    pub adaptation: Adaptation,
    /// Kinematic adaptation gain (symmetric positive definite).
    pub gamma_k: DMatrix<f64>,
    /// Scale adaptation gain (diagonal).
    pub lambda: DVector<f64>,
    /// Dynamic adaptation gain (symmetric positive definite).
    pub gamma_d: DMatrix<f64>,
    pub lambda_i: DVector<f64>,
    pub lambda_p: DVector<f64>,
    /// Box for `w_I` and `w_P`.
    pub projection: (f64, f64),
    /// Optional bound on `|d w_I/dt|`, `|d w_P/dt|`.
    pub w_rate_limit: Option<f64>,
    /// Floor on the smallest singular value of the estimated Jacobian.
    pub sigma_min: f64,
    /// RK4 substeps per outer period for the internal ODEs.
    pub substeps: usize,
    pub servo_estimates: Option<ServoGainEstimates>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialEstimates {
    pub a_k: DVector<f64>,
    pub a_d: DVector<f64>,
    pub w: DVector<f64>,
    pub w_i: DVector<f64>,
    pub w_p: DVector<f64>,
}

/// Lower bound on `k_c` per joint so that the PID-mode Lyapunov weight
/// stays positive semidefinite (damping neglected).
pub fn k_c_lower_bound(kp: f64, ki: f64, kd: f64) -> f64 {
    2.0 * ki / (kp + (kp * kp + 4.0 * ki * kd).sqrt())
}

/// Bound used when no servo gain estimates are supplied, valid whenever
/// `k_P, k_D >= k_I`.
pub fn default_k_c_bound() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

fn positive(v: &DVector<f64>, name: &str) -> Result<(), ControlError> {
    if v.iter().all(|x| x.is_finite() && *x > 0.0) {
        Ok(())
    } else {
        Err(ControlError::InvalidConfig(format!(
            "`{name}` must be positive"
        )))
    }
}

fn positive_scalar(v: f64, name: &str) -> Result<(), ControlError> {
    positive(&DVector::from_element(1, v), name)
}

fn spd(m: &DMatrix<f64>, name: &str) -> Result<(), ControlError> {
    let sym = (m - m.transpose()).amax() <= 1e-12 * (1.0 + m.amax());
    if m.is_square() && sym && m.clone().cholesky().is_some() {
        Ok(())
    } else {
        Err(ControlError::InvalidConfig(format!(
            "`{name}` must be symmetric positive definite"
        )))
    }
}

impl OuterConfig {
    /// Structural and sign checks plus the stability gates on `beta` and
    /// `K_c`.
    pub fn validate(
        &self,
        dof: usize,
        task_dim: usize,
        pk: usize,
        pd: usize,
    ) -> Result<(), ControlError> {
        let dim = |v: &DVector<f64>, n: usize, name: &str| {
            if v.len() == n {
                Ok(())
            } else {
                Err(ControlError::InvalidConfig(format!(
                    "`{name}` has {} entries, expected {n}",
                    v.len()
                )))
            }
        };
        match &self.law {
            ReferenceLaw::Filter { k1, k2, alpha } => {
                dim(k1, dof, "k1")?;
                dim(k2, dof, "k2")?;
                positive(k1, "k1")?;
                positive(k2, "k2")?;
                positive_scalar(*alpha, "alpha")?;
            }
            ReferenceLaw::Observer { beta, gamma } => {
                positive_scalar(*beta, "beta")?;
                positive_scalar(*gamma, "gamma")?;
                if *beta <= 4.0 * gamma / 9.0 {
                    return Err(ControlError::GainConditionViolated(format!(
                        "observer gain beta = {beta} must exceed 4 gamma / 9 = {}",
                        4.0 * gamma / 9.0
                    )));
                }
            }
            ReferenceLaw::KnownKinematics { gamma, a_k } => {
                positive_scalar(*gamma, "gamma")?;
                dim(a_k, pk, "kinematic_params")?;
            }
            ReferenceLaw::Joint { alpha_bar } => positive_scalar(*alpha_bar, "alpha_bar")?,
        }
        if self.law.is_task_space() && task_dim != dof {
            return Err(ControlError::InvalidConfig(
                "only square task spaces are supported".into(),
            ));
        }
        if let InnerLoop::PidPosition { k_c } = &self.inner {
            dim(k_c, dof, "k_c")?;
            positive(k_c, "k_c")?;
            for i in 0..dof {
                let bound = match &self.servo_estimates {
                    Some(e) => k_c_lower_bound(e.kp[i], e.ki[i], e.kd[i]),
                    None => default_k_c_bound(),
                };
                if k_c[i] < bound {
                    return Err(ControlError::GainConditionViolated(format!(
                        "k_c[{i}] = {} is below the bound {bound:.6}",
                        k_c[i]
                    )));
                }
            }
            if matches!(self.adaptation, Adaptation::Composite { .. }) {
                return Err(ControlError::InvalidConfig(
                    "composite adaptation is only available with a PI velocity servo".into(),
                ));
            }
        }
        if let Adaptation::Composite {
            gamma0,
            lambda_f,
            forgetting,
        } = &self.adaptation
        {
            positive_scalar(*gamma0, "gamma0")?;
            positive_scalar(*lambda_f, "lambda_f")?;
            if let Some(f) = forgetting {
                positive_scalar(f.lambda1, "lambda1")?;
                positive_scalar(f.lambda2, "lambda2")?;
                positive_scalar(f.lambda3, "lambda3")?;
                dim(&f.lambda_bar, dof, "lambda_bar")?;
                dim(&f.gamma_d_bar, pd, "gamma_d_bar")?;
                dim(&f.lambda_i_bar, dof, "lambda_i_bar")?;
                positive(&f.lambda_bar, "lambda_bar")?;
                positive(&f.gamma_d_bar, "gamma_d_bar")?;
                positive(&f.lambda_i_bar, "lambda_i_bar")?;
                for i in 0..dof {
                    if self.lambda[i] > f.lambda_bar[i] || self.lambda_i[i] > f.lambda_i_bar[i] {
                        return Err(ControlError::InvalidConfig(
                            "initial composite gains must not exceed their bounds".into(),
                        ));
                    }
                }
                let scale = DMatrix::from_diagonal(&f.gamma_d_bar.map(|v| 1.0 / v.sqrt()));
                let normalized = &scale * &self.gamma_d * &scale;
                if normalized.symmetric_eigenvalues().max() > 1.0 + 1e-12 {
                    return Err(ControlError::InvalidConfig(
                        "initial gamma_d must not exceed gamma_d_bar".into(),
                    ));
                }
            }
        }
        if self.law.adapts_kinematics() {
            if self.gamma_k.nrows() != pk {
                return Err(ControlError::InvalidConfig(format!(
                    "`gamma_k` must be {pk}x{pk}"
                )));
            }
            spd(&self.gamma_k, "gamma_k")?;
        }
        if self.adaptation != Adaptation::Kinematic {
            dim(&self.lambda, dof, "lambda")?;
            dim(&self.lambda_i, dof, "lambda_i")?;
            positive(&self.lambda, "lambda")?;
            positive(&self.lambda_i, "lambda_i")?;
            if self.gamma_d.nrows() != pd {
                return Err(ControlError::InvalidConfig(format!(
                    "`gamma_d` must be {pd}x{pd}"
                )));
            }
            spd(&self.gamma_d, "gamma_d")?;
            if matches!(self.inner, InnerLoop::PidPosition { .. }) {
                dim(&self.lambda_p, dof, "lambda_p")?;
                positive(&self.lambda_p, "lambda_p")?;
            }
        }
        let (lo, hi) = self.projection;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(ControlError::InvalidConfig(
                "projection box must satisfy 0 < lo < hi".into(),
            ));
        }
        if let Some(r) = self.w_rate_limit {
            positive_scalar(r, "w_rate_limit")?;
        }
        if !(self.sigma_min >= 0.0) {
            return Err(ControlError::InvalidConfig(
                "`sigma_min` must be non-negative".into(),
            ));
        }
        if self.substeps == 0 {
            return Err(ControlError::InvalidConfig(
                "`substeps` must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_gains_bound_is_golden_ratio_conjugate() {
        let b = k_c_lower_bound(10.0, 10.0, 10.0);
        assert!((b - default_k_c_bound()).abs() < 1e-15);
        assert!(0.62 >= b && 0.60 < b);
    }
}
