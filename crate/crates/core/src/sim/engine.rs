//! Two-rate fixed-step simulation: plant and servo at the inner period,
//! outer controller every `N` inner ticks with a zero-order-held command.

use nalgebra::{DVector, Vector3};
use thiserror::Error;

use crate::control::{
    lyapunov_terms, Adaptation, ArmRegressor, ControlError, InitialEstimates, InnerLoop,
    Measurement, OuterConfig, OuterController, PlantTruth, Target,
};
use crate::model::{FlexibleState, PlantModel, RigidState};
use crate::servo::{InnerGains, JointServo, ServoCommand, ServoMode};

use super::log::{
    LogRow, MonitorSummary, TrajectoryLog, FLAG_LYAPUNOV_INCREASE, FLAG_PROJECTION_ACTIVE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlantKind {
    Rigid,
    /// Elastic joints; the servo reads rotor-side signals.
    Flexible,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub dt_inner: f64,
    pub dt_outer: f64,
    pub duration: f64,
    /// RK4 pieces per inner tick.
    pub plant_substeps: usize,
}

impl Timing {
    /// Inner ticks per outer step.
    pub fn ratio(&self) -> usize {
        (self.dt_outer / self.dt_inner).round() as usize
    }

    pub fn outer_steps(&self) -> usize {
        (self.duration / self.dt_outer).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monitors {
    pub lyapunov: bool,
    /// Allowed increase per outer step is `lyapunov_c * dt_inner^2`.
    pub lyapunov_c: f64,
    /// Any plant or controller state entry beyond this aborts the run.
    pub divergence_ceiling: f64,
}

impl Default for Monitors {
    fn default() -> Self {
        Self {
            lyapunov: false,
            lyapunov_c: 1.0e4,
            divergence_ceiling: 1.0e6,
        }
    }
}

/// Everything needed to run one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantModel,
    pub plant_kind: PlantKind,
    pub servo: InnerGains,
    pub controller: OuterConfig,
    pub initial: InitialEstimates,
    /// Append Coulomb friction columns to the controller's regressor.
    pub friction_regressor: bool,
    pub target: Target,
    pub timing: Timing,
    pub q0: Vector3<f64>,
    pub qd0: Vector3<f64>,
    pub monitors: Monitors,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("controller error at t = {t:.4} s: {source}")]
    Controller { t: f64, source: ControlError },
    #[error("numerical divergence at t = {t:.4} s: |{what}| = {value:.3e}")]
    NumericalDivergence {
        t: f64,
        what: &'static str,
        value: f64,
    },
}

/// A failed run keeps the rows logged before the failure.
#[derive(Clone, Debug, PartialEq)]
pub struct SimFailure {
    pub error: SimError,
    pub log: TrajectoryLog,
}

/// Instrumentation callback events.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProbeEvent {
    /// The outer controller read the measurement taken at `t`.
    OuterStep { tick: usize, t: f64 },
    /// The servo evaluated at inner tick `tick` (time `t`) using the
    /// command emitted at `command_time`.
    Servo {
        tick: usize,
        t: f64,
        command_time: f64,
    },
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        let tm = &self.timing;
        if !(tm.dt_inner > 0.0 && tm.dt_inner.is_finite()) {
            return bad("timing.dt_inner must be positive");
        }
        if !(tm.dt_outer > 0.0 && tm.dt_outer.is_finite()) {
            return bad("timing.dt_outer must be positive");
        }
        let ratio = tm.dt_outer / tm.dt_inner;
        if ratio < 0.5 || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return bad("timing.dt_outer must be an integer multiple of timing.dt_inner");
        }
        if !(tm.duration >= 0.0 && tm.duration.is_finite()) {
            return bad("timing.duration must be non-negative");
        }
        let steps = tm.duration / tm.dt_outer;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return bad("timing.duration must be an integer multiple of timing.dt_outer");
        }
        if tm.plant_substeps == 0 {
            return bad("timing.plant_substeps must be at least 1");
        }
        self.servo
            .validate()
            .map_err(|e| SimError::InvalidConfig(format!("servo: {e}")))?;
        let servo_pid = self.servo.mode == ServoMode::PidPosition;
        let outer_pid = matches!(self.controller.inner, InnerLoop::PidPosition { .. });
        if servo_pid != outer_pid {
            return bad("controller.inner does not match servo.mode");
        }
        if self.target.is_task_space() != self.controller.law.is_task_space() {
            return bad("target space does not match controller.law");
        }
        if self.target.dim() != 3 {
            return bad("target must have 3 components");
        }
        if self
            .q0
            .iter()
            .chain(self.qd0.iter())
            .any(|v| !v.is_finite())
        {
            return bad("initial state must be finite");
        }
        Ok(())
    }

    pub fn regressor(&self) -> ArmRegressor {
        ArmRegressor {
            geometry: self.plant.geometry(),
            friction: self.friction_regressor,
        }
    }

    /// True parameters for the Lyapunov monitor. `None` for the flexible
    /// plant, whose rigid-body candidate does not apply.
    pub fn truth(&self, q: &Vector3<f64>) -> Option<PlantTruth> {
        if self.plant_kind == PlantKind::Flexible {
            return None;
        }
        let mut a_d: Vec<f64> = self.plant.dynamic_params(true).iter().copied().collect();
        a_d.truncate(crate::model::regressor::DYNAMIC_PARAMS);
        if self.friction_regressor {
            a_d.extend_from_slice(&self.plant.coulomb.unwrap_or([0.0; 3]));
        }
        let k = &self.plant.motor_gain;
        Some(PlantTruth {
            a_k: dv(&self.plant.kinematic_params().as_vector()),
            a_d: DVector::from_vec(a_d),
            motor_gain: DVector::from_column_slice(k),
            damping: DVector::from_column_slice(&self.plant.damping),
            servo_kp: dv(&self.servo.kp),
            servo_ki: dv(&self.servo.ki),
            servo_kd: self.servo.kd.as_ref().map(dv),
            mass: {
                let m = self.plant.rigid_mass_matrix(q);
                nalgebra::DMatrix::from_column_slice(3, 3, m.as_slice())
            },
        })
    }
}

fn dv(v: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn v3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn arr_or_nan(v: Option<DVector<f64>>) -> [f64; 3] {
    match v {
        Some(v) if v.len() == 3 => [v[0], v[1], v[2]],
        _ => [f64::NAN; 3],
    }
}

#[derive(Clone, Copy, Debug)]
enum PlantState {
    Rigid(RigidState),
    Flexible(FlexibleState),
}

impl PlantState {
    fn link(&self) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            PlantState::Rigid(s) => (s.q, s.qd),
            PlantState::Flexible(s) => (s.q, s.qd),
        }
    }

    /// Signals the servo encoders read.
    fn servo_side(&self) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            PlantState::Rigid(s) => (s.q, s.qd),
            PlantState::Flexible(s) => (s.theta, s.theta_d),
        }
    }

    fn max_abs(&self) -> f64 {
        match self {
            PlantState::Rigid(s) => s.q.amax().max(s.qd.amax()),
            PlantState::Flexible(s) => {
                s.q.amax()
                    .max(s.qd.amax())
                    .max(s.theta.amax())
                    .max(s.theta_d.amax())
            }
        }
    }

    fn is_finite(&self) -> bool {
        let (q, qd) = self.link();
        let (th, thd) = self.servo_side();
        q.iter()
            .chain(qd.iter())
            .chain(th.iter())
            .chain(thd.iter())
            .all(|v| v.is_finite())
    }
}

fn rigid_rk4(plant: &PlantModel, s: RigidState, u: &Vector3<f64>, h: f64) -> RigidState {
    let f = |s: &RigidState| (s.qd, plant.rigid_accel(s, u));
    let at = |d: &(Vector3<f64>, Vector3<f64>), k: f64| RigidState {
        q: s.q + d.0 * k,
        qd: s.qd + d.1 * k,
    };
    let k1 = f(&s);
    let k2 = f(&at(&k1, 0.5 * h));
    let k3 = f(&at(&k2, 0.5 * h));
    let k4 = f(&at(&k3, h));
    RigidState {
        q: s.q + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0),
        qd: s.qd + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0),
    }
}

type FlexDeriv = [Vector3<f64>; 4];

fn flexible_rk4(plant: &PlantModel, s: FlexibleState, u: &Vector3<f64>, h: f64) -> FlexibleState {
    let f = |s: &FlexibleState| -> FlexDeriv {
        let (qdd, thdd) = plant.flexible_accel(s, u);
        [s.qd, qdd, s.theta_d, thdd]
    };
    let at = |d: &FlexDeriv, k: f64| FlexibleState {
        q: s.q + d[0] * k,
        qd: s.qd + d[1] * k,
        theta: s.theta + d[2] * k,
        theta_d: s.theta_d + d[3] * k,
    };
    let k1 = f(&s);
    let k2 = f(&at(&k1, 0.5 * h));
    let k3 = f(&at(&k2, 0.5 * h));
    let k4 = f(&at(&k3, h));
    let comb = |i: usize| (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
    FlexibleState {
        q: s.q + comb(0),
        qd: s.qd + comb(1),
        theta: s.theta + comb(2),
        theta_d: s.theta_d + comb(3),
    }
}

fn advance(
    plant: &PlantModel,
    s: PlantState,
    u: &Vector3<f64>,
    dt: f64,
    substeps: usize,
) -> PlantState {
    let h = dt / substeps as f64;
    match s {
        PlantState::Rigid(mut r) => {
            for _ in 0..substeps {
                r = rigid_rk4(plant, r, u, h);
            }
            PlantState::Rigid(r)
        }
        PlantState::Flexible(mut f) => {
            for _ in 0..substeps {
                f = flexible_rk4(plant, f, u, h);
            }
            PlantState::Flexible(f)
        }
    }
}

/// Run a scenario to completion.
pub fn run_scenario(s: &Scenario) -> Result<TrajectoryLog, SimFailure> {
    run_scenario_with_probe(s, &mut |_| {})
}

/// [`run_scenario`] with an instrumentation callback.
pub fn run_scenario_with_probe(
    s: &Scenario,
    probe: &mut dyn FnMut(&ProbeEvent),
) -> Result<TrajectoryLog, SimFailure> {
    let fail = |error: SimError, log: TrajectoryLog| SimFailure { error, log };
    if let Err(e) = s.validate() {
        return Err(fail(e, TrajectoryLog::default()));
    }
    let tm = s.timing;
    let ratio = tm.ratio();
    let steps = tm.outer_steps();
    let plant = &s.plant;

    let mut state = match s.plant_kind {
        PlantKind::Rigid => PlantState::Rigid(RigidState { q: s.q0, qd: s.qd0 }),
        PlantKind::Flexible => PlantState::Flexible(FlexibleState {
            q: s.q0,
            qd: s.qd0,
            theta: s.q0,
            theta_d: Vector3::zeros(),
        }),
    };
    let measure = |st: &PlantState| {
        let (q, qd) = st.link();
        Measurement {
            q: dv(&q),
            qd: dv(&qd),
            x: dv(&plant.forward_kinematics(&q)),
        }
    };

    let mut ctrl = match OuterController::new(
        s.regressor(),
        s.controller.clone(),
        &s.initial,
        &measure(&state),
    ) {
        Ok(c) => c,
        Err(e) => {
            return Err(fail(
                SimError::Controller { t: 0.0, source: e },
                TrajectoryLog::default(),
            ))
        }
    };
    let adaptive = s.controller.adaptation != Adaptation::Kinematic;
    let monitor_on = s.monitors.lyapunov && adaptive && s.plant_kind == PlantKind::Rigid;
    let tolerance = s.monitors.lyapunov_c * tm.dt_inner * tm.dt_inner;
    let mut log = TrajectoryLog {
        rows: Vec::with_capacity(steps + 1),
        monitors: MonitorSummary {
            lyapunov_enabled: monitor_on,
            lyapunov_tolerance: tolerance,
            ..Default::default()
        },
    };
    let mut servo = JointServo::new(s.servo);
    let mut last_u = Vector3::zeros();
    let mut prev_v: Option<f64> = None;
    let true_a_k = dv(&plant.kinematic_params().as_vector());
    let (lo, hi) = s.controller.projection;
    let ceiling = s.monitors.divergence_ceiling;

    for k in 0..=steps {
        let t = k as f64 * tm.dt_outer;
        let meas = measure(&state);
        let l = ctrl.layout().clone();
        let eval = match ctrl.evaluate_now(t, &meas, &s.target) {
            Ok(e) => e,
            Err(e) => return Err(fail(SimError::Controller { t, source: e }, log)),
        };

        let mut flags = 0;
        let v_total = if monitor_on {
            s.truth(&v3(&meas.q))
                .and_then(|truth| lyapunov_terms(&ctrl, &eval, &meas, &truth))
                .map(|t| t.total)
        } else {
            None
        };
        if let (Some(v), Some(p)) = (v_total, prev_v) {
            let inc = v - p;
            log.monitors.lyapunov_max_increase = log.monitors.lyapunov_max_increase.max(inc);
            if inc > tolerance {
                log.monitors.lyapunov_violations += 1;
                flags |= FLAG_LYAPUNOV_INCREASE;
            }
        }
        prev_v = v_total;

        let blk = |r: &std::ops::Range<usize>| {
            if r.is_empty() {
                None
            } else {
                Some(ctrl.block(r))
            }
        };
        let w_i = blk(&l.w_i);
        let w_p = blk(&l.w_p);
        let at_bound = |v: &Option<DVector<f64>>| {
            v.as_ref()
                .is_some_and(|v| v.iter().any(|x| *x <= lo || *x >= hi))
        };
        if at_bound(&w_i) || at_bound(&w_p) {
            flags |= FLAG_PROJECTION_ACTIVE;
        }
        let q_r = ctrl.block(&l.q_r);
        let q_c = ctrl.block(&l.q_c);
        let qc_qr = &q_c - &q_r;
        log.monitors.max_qc_qr = log.monitors.max_qc_qr.max(qc_qr.amax());
        let (q, qd) = state.link();
        let row_base = LogRow {
            t,
            q: arr(&q),
            dq: arr(&qd),
            x: arr(&v3(&meas.x)),
            e: arr_or_nan(Some(eval.tracking_error.clone())),
            q_c: arr(&v3(&q_c)),
            dq_c: [f64::NAN; 3],
            u: arr(&last_u),
            w: arr_or_nan(blk(&l.w)),
            w_i: arr_or_nan(w_i),
            w_p: arr_or_nan(w_p),
            qc_qr: arr(&v3(&qc_qr)),
            ad_norm: blk(&l.a_d).map_or(f64::NAN, |a| a.norm()),
            ak_err: blk(&l.a_k).map_or(f64::NAN, |a| (a - &true_a_k).norm()),
            lyapunov: v_total.unwrap_or(f64::NAN),
            flags,
        };

        probe(&ProbeEvent::OuterStep { tick: k * ratio, t });
        let cmd = match ctrl.step(&meas, &s.target, t, tm.dt_outer) {
            Ok(c) => c,
            Err(e) => {
                log.rows.push(row_base);
                return Err(fail(SimError::Controller { t, source: e }, log));
            }
        };
        let mut row = row_base;
        row.dq_c = arr(&v3(&cmd.qd_c));
        log.rows.push(row);
        if k == steps {
            break;
        }
        if let Some(v) = ctrl.state().iter().find(|v| v.abs() > ceiling) {
            return Err(fail(
                SimError::NumericalDivergence {
                    t,
                    what: "controller state",
                    value: *v,
                },
                log,
            ));
        }

        let held = ServoCommand {
            q_c: v3(&cmd.q_c),
            qd_c: v3(&cmd.qd_c),
        };
        for j in 0..ratio {
            let tick = k * ratio + j;
            let ti = tick as f64 * tm.dt_inner;
            let (sq, sqd) = state.servo_side();
            probe(&ProbeEvent::Servo {
                tick,
                t: ti,
                command_time: t,
            });
            let u = servo.update(&sq, &sqd, &held, tm.dt_inner);
            last_u = u;
            state = advance(plant, state, &u, tm.dt_inner, tm.plant_substeps);
            let size = state.max_abs();
            if !state.is_finite() || size > ceiling {
                let value = if size.is_finite() {
                    size
                } else {
                    f64::INFINITY
                };
                return Err(fail(
                    SimError::NumericalDivergence {
                        t: ti + tm.dt_inner,
                        what: "plant state",
                        value,
                    },
                    log,
                ));
            }
        }
    }
    Ok(log)
}
