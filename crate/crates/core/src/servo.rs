//! Sealed joint servo: decentralized PI velocity or PID position control,
//! evaluated every inner tick against a zero-order-held command.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position and velocity command sent from the outer loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServoCommand {
    pub q_c: Vector3<f64>,
    pub qd_c: Vector3<f64>,
}

impl ServoCommand {
    pub fn hold(q: Vector3<f64>) -> Self {
        Self {
            q_c: q,
            qd_c: Vector3::zeros(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServoMode {
    PiVelocity,
    PidPosition,
}

#[derive(Debug, Error, PartialEq)]
pub enum ServoError {
    #[error("servo gain `{0}` must be positive and finite")]
    NonPositiveGain(&'static str),
    #[error(
        "derivative gain is required for PID position mode and not allowed for PI velocity mode"
    )]
    DerivativeGainMismatch,
}

/// Per-joint diagonal gains of the embedded servo.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerGains {
    pub mode: ServoMode,
    pub kp: Vector3<f64>,
    pub ki: Vector3<f64>,
    pub kd: Option<Vector3<f64>>,
    /// Symmetric voltage limit, off when `None`.
    pub saturation: Option<f64>,
}

fn check_positive(v: &Vector3<f64>, name: &'static str) -> Result<(), ServoError> {
    if v.iter().all(|g| g.is_finite() && *g > 0.0) {
        Ok(())
    } else {
        Err(ServoError::NonPositiveGain(name))
    }
}

impl InnerGains {
    pub fn pi(kp: Vector3<f64>, ki: Vector3<f64>) -> Result<Self, ServoError> {
        check_positive(&kp, "kp")?;
        check_positive(&ki, "ki")?;
        Ok(Self {
            mode: ServoMode::PiVelocity,
            kp,
            ki,
            kd: None,
            saturation: None,
        })
    }

    pub fn pid(kd: Vector3<f64>, kp: Vector3<f64>, ki: Vector3<f64>) -> Result<Self, ServoError> {
        check_positive(&kd, "kd")?;
        check_positive(&kp, "kp")?;
        check_positive(&ki, "ki")?;
        Ok(Self {
            mode: ServoMode::PidPosition,
            kp,
            ki,
            kd: Some(kd),
            saturation: None,
        })
    }

    pub fn validate(&self) -> Result<(), ServoError> {
        check_positive(&self.kp, "kp")?;
        check_positive(&self.ki, "ki")?;
        match (self.mode, self.kd) {
            (ServoMode::PiVelocity, None) => Ok(()),
            (ServoMode::PidPosition, Some(kd)) => check_positive(&kd, "kd"),
            _ => Err(ServoError::DerivativeGainMismatch),
        }
    }

    fn saturate(&self, u: Vector3<f64>) -> Vector3<f64> {
        match self.saturation {
            Some(limit) => u.map(|v| v.clamp(-limit, limit)),
            None => u,
        }
    }
}

/// `u = -K_P (qdot - qdot_c) - K_I (q - q_c)`.
pub fn pi_velocity(
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    cmd: &ServoCommand,
    gains: &InnerGains,
) -> Vector3<f64> {
    let u = -gains.kp.component_mul(&(qd - cmd.qd_c)) - gains.ki.component_mul(&(q - cmd.q_c));
    gains.saturate(u)
}

/// Integral state of the PID position servo.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ServoState {
    /// Trapezoidal integral of `q - q_c`.
    pub integral: Vector3<f64>,
    last_error: Option<Vector3<f64>>,
}

impl ServoState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// `u = -K_D (qdot - qdot_c) - K_P (q - q_c) - K_I int(q - q_c)`.
///
/// The integral is first advanced from the previous sample to this one by
/// the trapezoidal rule, then used.
pub fn pid_position(
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    cmd: &ServoCommand,
    state: &ServoState,
    gains: &InnerGains,
    dt: f64,
) -> (Vector3<f64>, ServoState) {
    let err = q - cmd.q_c;
    let mut next = *state;
    if let Some(prev) = state.last_error {
        next.integral += (prev + err) * (0.5 * dt);
    }
    next.last_error = Some(err);
    let kd = gains.kd.unwrap_or_else(Vector3::zeros);
    let u = -kd.component_mul(&(qd - cmd.qd_c))
        - gains.kp.component_mul(&err)
        - gains.ki.component_mul(&next.integral);
    (gains.saturate(u), next)
}

/// Servo with its own state, dispatching on the configured mode.
#[derive(Clone, Debug)]
pub struct JointServo {
    pub gains: InnerGains,
    pub state: ServoState,
}

impl JointServo {
    pub fn new(gains: InnerGains) -> Self {
        Self {
            gains,
            state: ServoState::default(),
        }
    }

    pub fn update(
        &mut self,
        q: &Vector3<f64>,
        qd: &Vector3<f64>,
        cmd: &ServoCommand,
        dt: f64,
    ) -> Vector3<f64> {
        match self.gains.mode {
            ServoMode::PiVelocity => pi_velocity(q, qd, cmd, &self.gains),
            ServoMode::PidPosition => {
                let (u, next) = pid_position(q, qd, cmd, &self.state, &self.gains, dt);
                self.state = next;
                u
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pi_gains() -> InnerGains {
        InnerGains::pi(Vector3::repeat(30.0), Vector3::repeat(15.0)).unwrap()
    }

    fn pid_gains() -> InnerGains {
        InnerGains::pid(
            Vector3::repeat(30.0),
            Vector3::repeat(15.0),
            Vector3::repeat(10.0),
        )
        .unwrap()
    }

    #[test]
    fn pi_is_zero_on_command() {
        let q = Vector3::new(0.1, -0.2, 0.3);
        let qd = Vector3::new(1.0, 2.0, -1.0);
        let cmd = ServoCommand { q_c: q, qd_c: qd };
        assert_eq!(pi_velocity(&q, &qd, &cmd, &pi_gains()), Vector3::zeros());
    }

    #[test]
    fn pi_position_error_only() {
        let cmd = ServoCommand::hold(Vector3::zeros());
        let u = pi_velocity(
            &Vector3::new(0.1, 0.0, 0.0),
            &Vector3::zeros(),
            &cmd,
            &pi_gains(),
        );
        assert!((u - Vector3::new(-1.5, 0.0, 0.0)).amax() < 1e-15);
    }

    #[test]
    fn effective_gains_with_motor() {
        let k = Vector3::new(60.0, 30.0, 10.0);
        assert_eq!(
            k.component_mul(&pi_gains().kp),
            Vector3::new(1800.0, 900.0, 300.0)
        );
    }

    #[test]
    fn pid_constant_error_integrates_exactly() {
        let gains = pid_gains();
        let e = Vector3::new(0.2, -0.1, 0.05);
        let cmd = ServoCommand::hold(Vector3::zeros());
        let mut state = ServoState::default();
        let dt = 0.0005;
        let steps = 2001;
        let mut u = Vector3::zeros();
        for _ in 0..steps {
            let (out, next) = pid_position(&e, &Vector3::zeros(), &cmd, &state, &gains, dt);
            u = out;
            state = next;
        }
        let t = dt * (steps - 1) as f64;
        let integral_part = u + gains.kp.component_mul(&e);
        let expected = -gains.ki.component_mul(&e) * t;
        assert!((integral_part - expected).amax() < 1e-9);
    }

    #[test]
    fn pid_zero_on_perfect_tracking() {
        let gains = pid_gains();
        let q = Vector3::new(0.3, 0.2, 0.1);
        let cmd = ServoCommand {
            q_c: q,
            qd_c: Vector3::zeros(),
        };
        let mut servo = JointServo::new(gains);
        for _ in 0..10 {
            assert_eq!(
                servo.update(&q, &Vector3::zeros(), &cmd, 0.0005),
                Vector3::zeros()
            );
        }
    }

    #[test]
    fn rejects_bad_gains() {
        assert!(InnerGains::pi(Vector3::new(1.0, 0.0, 1.0), Vector3::repeat(1.0)).is_err());
        let mut g = pi_gains();
        g.kd = Some(Vector3::repeat(1.0));
        assert_eq!(g.validate(), Err(ServoError::DerivativeGainMismatch));
        assert!(pid_gains().validate().is_ok());
    }

    #[test]
    fn saturation_clamps_when_enabled() {
        let mut g = pi_gains();
        g.saturation = Some(1.0);
        let cmd = ServoCommand::hold(Vector3::zeros());
        let u = pi_velocity(&Vector3::new(1.0, -1.0, 0.01), &Vector3::zeros(), &cmd, &g);
        assert_eq!(u, Vector3::new(-1.0, 1.0, -0.15));
    }
}
