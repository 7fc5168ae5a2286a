//! On-disk scenario description (TOML) and its conversion into a runnable
//! [`Scenario`].

use nalgebra::{DMatrix, DVector, Vector3};
use serde::Deserialize;
use thiserror::Error;

use crate::control::{
    Adaptation, Forgetting, Harmonic, InitialEstimates, InnerLoop, OuterConfig, ReferenceLaw,
    ServoGainEstimates, Target,
};
use crate::model::regressor::param_count;
use crate::model::PlantModel;
use crate::servo::{InnerGains, ServoMode};

use super::engine::{Monitors, PlantKind, Scenario, Timing};

/// Parse or validation failure, anchored to a line when the offending key
/// can be located in the source.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
    /// Dotted key of the offending field, when known.
    pub field: Option<String>,
}

/// A scalar (applied to every joint) or an explicit per-joint list.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Gain {
    Scalar(f64),
    Diag(Vec<f64>),
}

impl Gain {
    fn vector(&self, n: usize) -> Vec<f64> {
        match self {
            Gain::Scalar(v) => vec![*v; n],
            Gain::Diag(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub timing: TimingSection,
    #[serde(default)]
    pub plant: PlantSection,
    pub servo: ServoSection,
    pub controller: ControllerSection,
    pub target: TargetSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub monitors: MonitorSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimingSection {
    pub dt_inner: f64,
    pub dt_outer: f64,
    pub duration: f64,
    #[serde(default = "one")]
    pub plant_substeps: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PlantKindKey {
    #[default]
    Rigid,
    Flexible,
}

/// Overrides on top of the reference arm.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(default)]
    pub kind: PlantKindKey,
    pub damping: Option<[f64; 3]>,
    pub motor_gain: Option<[f64; 3]>,
    pub rotor_inertia: Option<[f64; 3]>,
    pub rotor_damping: Option<[f64; 3]>,
    pub stiffness: Option<[f64; 3]>,
    pub coulomb: Option<[f64; 3]>,
    pub gravity: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ServoSection {
    pub mode: ServoMode,
    pub kp: Gain,
    pub ki: Gain,
    pub kd: Option<Gain>,
    pub saturation: Option<f64>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LawKey {
    Filter,
    Observer,
    KnownKinematics,
    Joint,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AdaptationKey {
    Direct,
    Composite,
    /// No dynamic compensation; the command is the reference itself.
    None,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ForgettingSection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda_bar: Gain,
    pub gamma_d_bar: Gain,
    pub lambda_i_bar: Gain,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub kp: Gain,
    pub ki: Gain,
    pub kd: Gain,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControllerInitial {
    pub a_k: Option<Gain>,
    #[serde(default = "zero_gain")]
    pub a_d: Gain,
    #[serde(default = "zero_gain")]
    pub w: Gain,
    #[serde(default = "unit_gain")]
    pub w_i: Gain,
    #[serde(default = "unit_gain")]
    pub w_p: Gain,
}

impl Default for ControllerInitial {
    fn default() -> Self {
        Self {
            a_k: None,
            a_d: zero_gain(),
            w: zero_gain(),
            w_i: unit_gain(),
            w_p: unit_gain(),
        }
    }
}

fn zero_gain() -> Gain {
    Gain::Scalar(0.0)
}

fn unit_gain() -> Gain {
    Gain::Scalar(1.0)
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub law: LawKey,
    pub adaptation: AdaptationKey,
    // law-specific
    pub k1: Option<Gain>,
    pub k2: Option<Gain>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha_bar: Option<f64>,
    /// Known kinematic parameters for `known_kinematics` (defaults to the
    /// plant's).
    pub a_k: Option<[f64; 3]>,
    /// Reference pull-in gain for a PID position servo.
    pub k_c: Option<Gain>,
    // adaptation
    pub gamma_k: Option<Gain>,
    pub lambda: Option<Gain>,
    pub gamma_d: Option<Gain>,
    pub lambda_i: Option<Gain>,
    pub lambda_p: Option<Gain>,
    pub gamma0: Option<f64>,
    pub lambda_f: Option<f64>,
    pub forgetting: Option<ForgettingSection>,
    pub projection: Option<[f64; 2]>,
    pub w_rate_limit: Option<f64>,
    pub sigma_min: Option<f64>,
    pub substeps: Option<usize>,
    /// Include Coulomb friction in the dynamic regressor.
    #[serde(default)]
    pub friction: bool,
    pub servo_estimates: Option<EstimateSection>,
    #[serde(default)]
    pub initial: ControllerInitial,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AngleUnit {
    #[default]
    Rad,
    Deg,
}

impl AngleUnit {
    fn factor(self) -> f64 {
        match self {
            AngleUnit::Rad => 1.0,
            AngleUnit::Deg => std::f64::consts::PI / 180.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Point,
    TaskHarmonic,
    JointHarmonic,
}

/// `p(t) = offset + cos_amp cos(omega t) + sin_amp sin(omega t)`; a point
/// uses `offset` only.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub kind: TargetKind,
    pub offset: [f64; 3],
    pub cos_amp: Option<[f64; 3]>,
    pub sin_amp: Option<[f64; 3]>,
    pub omega: Option<f64>,
    /// Joint trajectories only.
    #[serde(default)]
    pub unit: AngleUnit,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub q: [f64; 3],
    #[serde(default)]
    pub qd: [f64; 3],
    #[serde(default)]
    pub unit: AngleUnit,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MonitorSection {
    #[serde(default)]
    pub lyapunov: bool,
    #[serde(default = "default_lyapunov_c")]
    pub lyapunov_c: f64,
    #[serde(default = "default_ceiling")]
    pub divergence_ceiling: f64,
}

impl Default for MonitorSection {
    fn default() -> Self {
        Self {
            lyapunov: false,
            lyapunov_c: default_lyapunov_c(),
            divergence_ceiling: default_ceiling(),
        }
    }
}

fn default_lyapunov_c() -> f64 {
    Monitors::default().lyapunov_c
}

fn default_ceiling() -> f64 {
    Monitors::default().divergence_ceiling
}

pub const DEFAULT_PROJECTION: (f64, f64) = (0.05, 50.0);
pub const DEFAULT_SIGMA_MIN: f64 = 1e-3;
pub const DEFAULT_SUBSTEPS: usize = 40;

/// Builds a field error; the line is filled in by [`parse_scenario`].
fn field_err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        message: format!("`{field}`: {}", message.into()),
        line: None,
        field: Some(field.to_string()),
    }
}

fn require<T: Clone>(v: &Option<T>, field: &str, law: &str) -> Result<T, ConfigError> {
    v.clone()
        .ok_or_else(|| field_err(field, format!("required by {law}")))
}

fn reject<T>(v: &Option<T>, field: &str, why: &str) -> Result<(), ConfigError> {
    match v {
        Some(_) => Err(field_err(field, format!("not used {why}"))),
        None => Ok(()),
    }
}

fn vec_n(g: &Gain, n: usize, field: &str) -> Result<DVector<f64>, ConfigError> {
    let v = g.vector(n);
    if v.len() != n {
        return Err(field_err(
            field,
            format!("expected {n} entries, found {}", v.len()),
        ));
    }
    Ok(DVector::from_vec(v))
}

fn v3(g: &Gain, field: &str) -> Result<Vector3<f64>, ConfigError> {
    let v = vec_n(g, 3, field)?;
    Ok(Vector3::new(v[0], v[1], v[2]))
}

fn diag_n(g: &Gain, n: usize, field: &str) -> Result<DMatrix<f64>, ConfigError> {
    Ok(DMatrix::from_diagonal(&vec_n(g, n, field)?))
}

impl ScenarioFile {
    pub fn into_scenario(self, default_name: &str) -> Result<Scenario, ConfigError> {
        let mut plant = PlantModel::table_one();
        let p = &self.plant;
        let set =
            |dst: &mut [f64; 3], src: &Option<[f64; 3]>, field: &str| -> Result<(), ConfigError> {
                if let Some(v) = src {
                    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                        return Err(field_err(field, "must be non-negative"));
                    }
                    *dst = *v;
                }
                Ok(())
            };
        set(&mut plant.damping, &p.damping, "plant.damping")?;
        set(&mut plant.motor_gain, &p.motor_gain, "plant.motor_gain")?;
        set(
            &mut plant.rotor_inertia,
            &p.rotor_inertia,
            "plant.rotor_inertia",
        )?;
        set(
            &mut plant.rotor_damping,
            &p.rotor_damping,
            "plant.rotor_damping",
        )?;
        set(&mut plant.stiffness, &p.stiffness, "plant.stiffness")?;
        if let Some(g) = p.gravity {
            plant.gravity = g;
        }
        if let Some(d) = p.coulomb {
            if d.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(field_err("plant.coulomb", "must be non-negative"));
            }
            plant.coulomb = Some(d);
        }
        if plant.motor_gain.iter().any(|k| *k <= 0.0) {
            return Err(field_err("plant.motor_gain", "must be positive"));
        }
        let plant_kind = match p.kind {
            PlantKindKey::Rigid => PlantKind::Rigid,
            PlantKindKey::Flexible => {
                if plant
                    .rotor_inertia
                    .iter()
                    .chain(plant.stiffness.iter())
                    .any(|v| *v <= 0.0)
                {
                    return Err(field_err(
                        "plant.stiffness",
                        "flexible plant needs positive stiffness and rotor inertia",
                    ));
                }
                PlantKind::Flexible
            }
        };

        let s = &self.servo;
        let servo = InnerGains {
            mode: s.mode,
            kp: v3(&s.kp, "servo.kp")?,
            ki: v3(&s.ki, "servo.ki")?,
            kd: s.kd.as_ref().map(|g| v3(g, "servo.kd")).transpose()?,
            saturation: s.saturation,
        };
        servo
            .validate()
            .map_err(|e| field_err("servo", e.to_string()))?;

        let c = &self.controller;
        let n = 3;
        let pk = 3;
        let pd = param_count(c.friction);
        let law_name = match c.law {
            LawKey::Filter => "law `filter`",
            LawKey::Observer => "law `observer`",
            LawKey::KnownKinematics => "law `known_kinematics`",
            LawKey::Joint => "law `joint`",
        };
        let law = match c.law {
            LawKey::Filter => {
                reject(&c.beta, "controller.beta", "by law `filter`")?;
                reject(&c.gamma, "controller.gamma", "by law `filter`")?;
                reject(&c.alpha_bar, "controller.alpha_bar", "by law `filter`")?;
                reject(&c.a_k, "controller.a_k", "by law `filter`")?;
                ReferenceLaw::Filter {
                    k1: vec_n(
                        &require(&c.k1, "controller.k1", law_name)?,
                        n,
                        "controller.k1",
                    )?,
                    k2: vec_n(
                        &require(&c.k2, "controller.k2", law_name)?,
                        n,
                        "controller.k2",
                    )?,
                    alpha: require(&c.alpha, "controller.alpha", law_name)?,
                }
            }
            LawKey::Observer => {
                for (v, f) in [
                    (&c.alpha, "controller.alpha"),
                    (&c.alpha_bar, "controller.alpha_bar"),
                ] {
                    reject(v, f, "by law `observer`")?;
                }
                reject(&c.k1, "controller.k1", "by law `observer`")?;
                reject(&c.k2, "controller.k2", "by law `observer`")?;
                reject(&c.a_k, "controller.a_k", "by law `observer`")?;
                ReferenceLaw::Observer {
                    beta: require(&c.beta, "controller.beta", law_name)?,
                    gamma: require(&c.gamma, "controller.gamma", law_name)?,
                }
            }
            LawKey::KnownKinematics => {
                for (v, f) in [
                    (&c.alpha, "controller.alpha"),
                    (&c.alpha_bar, "controller.alpha_bar"),
                    (&c.beta, "controller.beta"),
                ] {
                    reject(v, f, "by law `known_kinematics`")?;
                }
                reject(
                    &c.gamma_k,
                    "controller.gamma_k",
                    "by law `known_kinematics`",
                )?;
                let a_k = c
                    .a_k
                    .map(Vector3::from)
                    .unwrap_or_else(|| plant.kinematic_params().as_vector());
                ReferenceLaw::KnownKinematics {
                    gamma: require(&c.gamma, "controller.gamma", law_name)?,
                    a_k: DVector::from_column_slice(a_k.as_slice()),
                }
            }
            LawKey::Joint => {
                for (v, f) in [
                    (&c.alpha, "controller.alpha"),
                    (&c.beta, "controller.beta"),
                    (&c.gamma, "controller.gamma"),
                ] {
                    reject(v, f, "by law `joint`")?;
                }
                reject(&c.gamma_k, "controller.gamma_k", "by law `joint`")?;
                reject(&c.a_k, "controller.a_k", "by law `joint`")?;
                ReferenceLaw::Joint {
                    alpha_bar: require(&c.alpha_bar, "controller.alpha_bar", law_name)?,
                }
            }
        };

        let inner = match s.mode {
            ServoMode::PiVelocity => {
                reject(&c.k_c, "controller.k_c", "with a PI velocity servo")?;
                reject(
                    &c.lambda_p,
                    "controller.lambda_p",
                    "with a PI velocity servo",
                )?;
                InnerLoop::PiVelocity
            }
            ServoMode::PidPosition => InnerLoop::PidPosition {
                k_c: vec_n(
                    &require(&c.k_c, "controller.k_c", "a PID position servo")?,
                    n,
                    "controller.k_c",
                )?,
            },
        };

        let adaptation = match c.adaptation {
            AdaptationKey::Direct | AdaptationKey::None => {
                reject(
                    &c.gamma0,
                    "controller.gamma0",
                    "without composite adaptation",
                )?;
                reject(
                    &c.lambda_f,
                    "controller.lambda_f",
                    "without composite adaptation",
                )?;
                reject(
                    &c.forgetting,
                    "controller.forgetting",
                    "without composite adaptation",
                )?;
                if c.adaptation == AdaptationKey::Direct {
                    Adaptation::Direct
                } else {
                    Adaptation::Kinematic
                }
            }
            AdaptationKey::Composite => {
                let forgetting = match &c.forgetting {
                    Some(f) => Some(Forgetting {
                        lambda1: f.lambda1,
                        lambda2: f.lambda2,
                        lambda3: f.lambda3,
                        lambda_bar: vec_n(&f.lambda_bar, n, "controller.forgetting.lambda_bar")?,
                        gamma_d_bar: vec_n(
                            &f.gamma_d_bar,
                            pd,
                            "controller.forgetting.gamma_d_bar",
                        )?,
                        lambda_i_bar: vec_n(
                            &f.lambda_i_bar,
                            n,
                            "controller.forgetting.lambda_i_bar",
                        )?,
                    }),
                    None => None,
                };
                Adaptation::Composite {
                    gamma0: require(&c.gamma0, "controller.gamma0", "composite adaptation")?,
                    lambda_f: require(&c.lambda_f, "controller.lambda_f", "composite adaptation")?,
                    forgetting,
                }
            }
        };
        let adaptive = adaptation != Adaptation::Kinematic;
        let pid = matches!(inner, InnerLoop::PidPosition { .. });
        let gain_or = |g: &Option<Gain>,
                       field: &str,
                       needed: bool,
                       len: usize|
         -> Result<DVector<f64>, ConfigError> {
            match g {
                Some(g) => vec_n(g, len, field),
                None if needed => Err(field_err(field, "required by the selected adaptation")),
                None => Ok(DVector::zeros(len)),
            }
        };
        let gamma_k = match (&c.gamma_k, law.adapts_kinematics()) {
            (Some(g), true) => diag_n(g, pk, "controller.gamma_k")?,
            (None, true) => {
                return Err(field_err(
                    "controller.gamma_k",
                    format!("required by {law_name}"),
                ))
            }
            (Some(_), false) => {
                return Err(field_err(
                    "controller.gamma_k",
                    format!("not used by {law_name}"),
                ))
            }
            (None, false) => DMatrix::zeros(pk, pk),
        };
        if !adaptive {
            for (v, f) in [
                (&c.lambda, "controller.lambda"),
                (&c.gamma_d, "controller.gamma_d"),
                (&c.lambda_i, "controller.lambda_i"),
                (&c.lambda_p, "controller.lambda_p"),
            ] {
                reject(v, f, "without dynamic adaptation")?;
            }
        }
        let gamma_d = match &c.gamma_d {
            Some(g) => diag_n(g, pd, "controller.gamma_d")?,
            None if adaptive => {
                return Err(field_err(
                    "controller.gamma_d",
                    "required by the selected adaptation",
                ))
            }
            None => DMatrix::zeros(pd, pd),
        };
        let servo_estimates = match &c.servo_estimates {
            Some(e) => Some(ServoGainEstimates {
                kp: vec_n(&e.kp, n, "controller.servo_estimates.kp")?,
                ki: vec_n(&e.ki, n, "controller.servo_estimates.ki")?,
                kd: vec_n(&e.kd, n, "controller.servo_estimates.kd")?,
            }),
            None => None,
        };
        let projection = c
            .projection
            .map(|p| (p[0], p[1]))
            .unwrap_or(DEFAULT_PROJECTION);
        let controller = OuterConfig {
            law,
            inner,
            adaptation,
            gamma_k,
            lambda: gain_or(&c.lambda, "controller.lambda", adaptive, n)?,
            gamma_d,
            lambda_i: gain_or(&c.lambda_i, "controller.lambda_i", adaptive, n)?,
            lambda_p: gain_or(&c.lambda_p, "controller.lambda_p", adaptive && pid, n)?,
            projection,
            w_rate_limit: c.w_rate_limit,
            sigma_min: c.sigma_min.unwrap_or(DEFAULT_SIGMA_MIN),
            substeps: c.substeps.unwrap_or(DEFAULT_SUBSTEPS),
            servo_estimates,
        };
        controller.validate(n, 3, pk, pd).map_err(|e| ConfigError {
            message: e.to_string(),
            line: None,
            field: Some("controller".into()),
        })?;

        let ini = &c.initial;
        let a_k0 = match (&ini.a_k, controller.law.adapts_kinematics()) {
            (Some(g), true) => vec_n(g, pk, "controller.initial.a_k")?,
            (None, true) => {
                return Err(field_err(
                    "controller.initial.a_k",
                    format!("required by {law_name}"),
                ))
            }
            (Some(_), false) => {
                return Err(field_err(
                    "controller.initial.a_k",
                    format!("not used by {law_name}"),
                ))
            }
            (None, false) => DVector::zeros(pk),
        };
        let initial = InitialEstimates {
            a_k: a_k0,
            a_d: vec_n(&ini.a_d, pd, "controller.initial.a_d")?,
            w: vec_n(&ini.w, n, "controller.initial.w")?,
            w_i: vec_n(&ini.w_i, n, "controller.initial.w_i")?,
            w_p: vec_n(&ini.w_p, n, "controller.initial.w_p")?,
        };

        let t = &self.target;
        let harmonic = |scale: f64| -> Result<Harmonic, ConfigError> {
            let omega = require(&t.omega, "target.omega", "a harmonic target")?;
            if !omega.is_finite() {
                return Err(field_err("target.omega", "must be finite"));
            }
            let sc = |v: [f64; 3]| v.iter().map(|x| x * scale).collect::<Vec<_>>();
            Ok(Harmonic {
                offset: sc(t.offset),
                cos_amp: sc(t.cos_amp.unwrap_or([0.0; 3])),
                sin_amp: sc(t.sin_amp.unwrap_or([0.0; 3])),
                omega,
            })
        };
        let target = match t.kind {
            TargetKind::Point => {
                reject(&t.cos_amp, "target.cos_amp", "by a point target")?;
                reject(&t.sin_amp, "target.sin_amp", "by a point target")?;
                reject(&t.omega, "target.omega", "by a point target")?;
                if t.unit != AngleUnit::Rad {
                    return Err(field_err(
                        "target.unit",
                        "only joint trajectories take a unit",
                    ));
                }
                Target::TaskPoint(DVector::from_column_slice(&t.offset))
            }
            TargetKind::TaskHarmonic => {
                if t.unit != AngleUnit::Rad {
                    return Err(field_err(
                        "target.unit",
                        "only joint trajectories take a unit",
                    ));
                }
                Target::TaskTrajectory(harmonic(1.0)?)
            }
            TargetKind::JointHarmonic => Target::JointTrajectory(harmonic(t.unit.factor())?),
        };
        if target.is_task_space() != controller.law.is_task_space() {
            return Err(field_err(
                "target.kind",
                format!("does not match {law_name}"),
            ));
        }

        let f = self.initial.unit.factor();
        let q0 = Vector3::from(self.initial.q) * f;
        let qd0 = Vector3::from(self.initial.qd) * f;
        let tm = &self.timing;
        let timing = Timing {
            dt_inner: tm.dt_inner,
            dt_outer: tm.dt_outer,
            duration: tm.duration,
            plant_substeps: tm.plant_substeps,
        };
        let monitors = Monitors {
            lyapunov: self.monitors.lyapunov,
            lyapunov_c: self.monitors.lyapunov_c,
            divergence_ceiling: self.monitors.divergence_ceiling,
        };
        let scenario = Scenario {
            name: self
                .name
                .clone()
                .unwrap_or_else(|| default_name.to_string()),
            plant,
            plant_kind,
            servo,
            controller,
            initial,
            friction_regressor: c.friction,
            target,
            timing,
            q0,
            qd0,
            monitors,
        };
        scenario.validate().map_err(|e| {
            let msg = e.to_string();
            let field = [
                "timing.dt_inner",
                "timing.dt_outer",
                "timing.duration",
                "timing.plant_substeps",
            ]
            .into_iter()
            .filter_map(|f| msg.find(f).map(|pos| (pos, f)))
            .min()
            .map(|(_, f)| f)
            .map(str::to_string);
            ConfigError {
                message: msg,
                line: None,
                field,
            }
        })?;
        Ok(scenario)
    }
}

/// Line (1-based) of `key = ...` inside the `[section]` named by a dotted
/// field path such as `controller.forgetting.lambda1`.
fn locate(text: &str, field: &str) -> Option<usize> {
    let (section, key) = match field.rsplit_once('.') {
        Some((s, k)) => (s, k),
        None => ("", field),
    };
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == field {
                return Some(i + 1);
            }
            continue;
        }
        let Some((k, _)) = line.split_once('=') else {
            continue;
        };
        if k.trim() == key && current == section {
            return Some(i + 1);
        }
    }
    None
}

/// Parse and validate a scenario from TOML text.
pub fn parse_scenario(text: &str, default_name: &str) -> Result<Scenario, ConfigError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigError {
            message: e.message().to_string(),
            line,
            field: None,
        }
    })?;
    file.into_scenario(default_name).map_err(|mut e| {
        if let Some(f) = &e.field {
            e.line = locate(text, f);
        }
        e
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[timing]
dt_inner = 0.0005
dt_outer = 0.02
duration = 1.0

[servo]
mode = "pi_velocity"
kp = 30.0
ki = 15.0

[controller]
law = "joint"
adaptation = "direct"
alpha_bar = 2.0
lambda = 0.5
gamma_d = 0.5
lambda_i = 100.0

[target]
kind = "joint_harmonic"
offset = [36.0, 0.0, 0.0]
cos_amp = [-36.0, 0.0, 0.0]
sin_amp = [0.0, 36.0, 36.0]
omega = 3.141592653589793
unit = "deg"
"#;

    #[test]
    fn parses_joint_scenario() {
        let s = parse_scenario(BASE, "base").unwrap();
        assert_eq!(s.name, "base");
        assert_eq!(s.timing.ratio(), 40);
        assert_eq!(s.controller.gamma_d.nrows(), 15);
        let q = s.target.sample(0.5).pos;
        assert!((q[1] - 36f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn misaligned_outer_period_names_field_and_line() {
        let text = BASE.replace("dt_outer = 0.02", "dt_outer = 0.0203");
        let e = parse_scenario(&text, "x").unwrap_err();
        assert!(e.message.contains("timing.dt_outer"), "{e}");
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = BASE.replace("lambda_i = 100.0", "lambda_j = 100.0");
        let e = parse_scenario(&text, "x").unwrap_err();
        assert!(e.message.contains("lambda_j"), "{e}");
        assert_eq!(e.line, Some(18));
    }

    #[test]
    fn law_irrelevant_gain_is_rejected() {
        let text = BASE.replace("alpha_bar = 2.0", "alpha_bar = 2.0\nbeta = 1.0");
        let e = parse_scenario(&text, "x").unwrap_err();
        assert_eq!(e.field.as_deref(), Some("controller.beta"));
        assert_eq!(e.line, Some(16));
    }

    #[test]
    fn missing_law_gain_is_reported() {
        let text = BASE.replace("alpha_bar = 2.0\n", "");
        let e = parse_scenario(&text, "x").unwrap_err();
        assert_eq!(e.field.as_deref(), Some("controller.alpha_bar"));
    }
}
