//! Lyapunov candidates of the closed loop, evaluated with the true plant
//! parameters. Only the simulator can call these.

use nalgebra::{DMatrix, DVector};

use super::config::{Adaptation, InnerLoop, ReferenceLaw};
use super::controller::{Evaluation, Measurement, OuterController};
use super::model::RegressorModel;

/// True values the estimates are compared against.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantTruth {
    pub a_k: DVector<f64>,
    pub a_d: DVector<f64>,
    /// Motor gain `K` (diagonal).
    pub motor_gain: DVector<f64>,
    /// Viscous damping `B` (diagonal).
    pub damping: DVector<f64>,
    pub servo_kp: DVector<f64>,
    pub servo_ki: DVector<f64>,
    /// Present for a PID position servo.
    pub servo_kd: Option<DVector<f64>>,
    /// Inertia `M(q)` at the measured configuration (rotor included).
    pub mass: DMatrix<f64>,
}

impl PlantTruth {
    /// Servo gain the scale estimate inverts: `K K_P` (PI) or `K K_D` (PID).
    pub fn effective_gain(&self) -> DVector<f64> {
        match &self.servo_kd {
            Some(kd) => self.motor_gain.component_mul(kd),
            None => self.motor_gain.component_mul(&self.servo_kp),
        }
    }

    pub fn true_w(&self) -> DVector<f64> {
        self.effective_gain().map(|k| 1.0 / k)
    }

    /// `K_P^-1 K_I` (PI) or `K_D^-1 K_I` (PID).
    pub fn true_w_i(&self) -> DVector<f64> {
        match &self.servo_kd {
            Some(kd) => self.servo_ki.component_div(kd),
            None => self.servo_ki.component_div(&self.servo_kp),
        }
    }

    /// `K_D^-1 K_P`, PID only.
    pub fn true_w_p(&self) -> Option<DVector<f64>> {
        self.servo_kd
            .as_ref()
            .map(|kd| self.servo_kp.component_div(kd))
    }
}

/// Individual terms of the candidate; `total` is their sum.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LyapunovTerms {
    /// Task-space block (filter: scaled by `alpha`; observer: the second,
    /// quasi-Lyapunov candidate with its constant offset dropped).
    pub kinematic: f64,
    pub sliding: f64,
    pub integral: f64,
    pub scale: f64,
    pub dynamic: f64,
    pub integral_scale: f64,
    pub proportional_scale: f64,
    pub total: f64,
}

fn weighted(v: &DVector<f64>, weights: &DVector<f64>) -> f64 {
    0.5 * v
        .iter()
        .zip(weights.iter())
        .map(|(x, w)| w * x * x)
        .sum::<f64>()
}

fn quad_inv(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let solved = m
        .clone()
        .cholesky()
        .map(|c| c.solve(v))
        .unwrap_or_else(|| DVector::from_element(v.len(), f64::NAN));
    0.5 * v.dot(&solved)
}

/// Candidate for the active controller at its current state, or `None`
/// when no candidate applies (kinematic loop).
///
/// `eval` must come from [`OuterController::evaluate_now`] at the same
/// state and measurement.
pub fn lyapunov_terms<R: RegressorModel>(
    ctrl: &OuterController<R>,
    eval: &Evaluation,
    meas: &Measurement,
    truth: &PlantTruth,
) -> Option<LyapunovTerms> {
    let cfg = ctrl.config();
    if cfg.adaptation == Adaptation::Kinematic {
        return None;
    }
    let l = ctrl.layout();
    let state = ctrl.state();
    let block =
        |r: &std::ops::Range<usize>| DVector::from_column_slice(&state.as_slice()[r.clone()]);
    let mut t = LyapunovTerms::default();

    let s = &eval.sliding;
    t.sliding = 0.5 * s.dot(&(&truth.mass * s));

    let e = &meas.q - block(&l.q_r);
    let k_star = truth.effective_gain();
    match (&cfg.inner, &truth.servo_kd) {
        (InnerLoop::PidPosition { k_c }, Some(kd)) => {
            let k = &truth.motor_gain;
            let ext = &e + k_c.component_mul(&block(&l.int_e));
            let w_ext = k.component_mul(&truth.servo_ki).component_div(k_c);
            let m_w = DVector::from_fn(e.len(), |i, _| {
                (kd[i] + truth.damping[i] / k[i]) * k_c[i] + truth.servo_kp[i]
                    - truth.servo_ki[i] / k_c[i]
            });
            let w_e = DVector::from_fn(e.len(), |i, _| {
                k[i] * m_w[i] + k[i] * k_c[i] * kd[i] + k_c[i] * truth.damping[i]
            });
            t.integral = weighted(&ext, &w_ext) + weighted(&e, &w_e);
        }
        _ => {
            t.integral = weighted(&e, &truth.motor_gain.component_mul(&truth.servo_ki));
        }
    }

    let (gain_w, gain_d, gain_i) = ctrl.adaptation_gains(state);
    let dw = block(&l.w) - truth.true_w();
    t.scale = weighted(&dw, &k_star.component_div(&gain_w));
    let da = block(&l.a_d) - &truth.a_d;
    t.dynamic = quad_inv(&gain_d, &da);
    let dwi = block(&l.w_i) - truth.true_w_i();
    t.integral_scale = weighted(&dwi, &k_star.component_div(&gain_i));
    if let Some(wp) = truth.true_w_p() {
        if !l.w_p.is_empty() {
            let dwp = block(&l.w_p) - wp;
            t.proportional_scale = weighted(&dwp, &k_star.component_div(&cfg.lambda_p));
        }
    }

    match &cfg.law {
        ReferenceLaw::Filter { k1, k2, alpha } => {
            let dx = &eval.tracking_error;
            let y = block(&l.y);
            let dak = block(&l.a_k) - &truth.a_k;
            t.kinematic = alpha
                * (0.5 * dx.dot(dx)
                    + weighted(&y, &k2.component_div(k1))
                    + quad_inv(&cfg.gamma_k, &dak));
        }
        ReferenceLaw::Observer { beta, gamma } => {
            let dx = &eval.tracking_error;
            let dxo = eval
                .observer_error
                .clone()
                .unwrap_or_else(|| DVector::zeros(dx.len()));
            let dak = block(&l.a_k) - &truth.a_k;
            t.kinematic = 0.5 * dxo.dot(&dxo) + 0.5 * dx.dot(dx) + quad_inv(&cfg.gamma_k, &dak)
                - (1.0 / beta + 1.0 / gamma) * state[l.int_ss.start];
        }
        ReferenceLaw::KnownKinematics { .. } | ReferenceLaw::Joint { .. } => {}
    }

    t.total = t.kinematic
        + t.sliding
        + t.integral
        + t.scale
        + t.dynamic
        + t.integral_scale
        + t.proportional_scale;
    Some(t)
}
