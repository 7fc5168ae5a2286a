//! Self-checks run by `outerloop validate`.

use nalgebra::{DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::config::{default_k_c_bound, k_c_lower_bound};
use crate::control::{ControlError, InnerLoop, OuterConfig, ReferenceLaw};
use crate::model::regressor::{dynamic_regressor, param_count};
use crate::model::{ArmGeometry, KinematicParams, PlantModel};
use crate::sim::{parse_scenario, run_scenario, Scenario};

use super::presets::{preset, PRESETS};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct ValidateOptions {
    /// Only checks whose name contains this substring.
    pub filter: Option<String>,
    /// Test hook: offset the dynamic parameters fed to the regressor suite
    /// so that it must fail.
    pub perturb_dynamics: bool,
}

/// Random samples per regressor suite.
pub const SAMPLES: usize = 1000;
/// Duration of the short preset variants (s).
pub const SHORT_DURATION: f64 = 1.0;

const INITIAL_POSE_DEG: [f64; 3] = [30.0, 60.0, -150.0];
const INITIAL_POSE_X: [f64; 3] = [-0.7500, 1.2990, 0.5196];
const LINK_INERTIA_AT_ZERO: [[f64; 3]; 3] = [
    [18.9058, 0.0, 0.0],
    [0.0, 18.9290, 9.4327],
    [0.0, 9.4327, 5.1205],
];
const LINK_INERTIA_EIGENVALUES: [f64; 3] = [0.3352, 18.9058, 23.7143];
const ANCHOR_TOL: f64 = 1e-3;

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

/// Reported deviation of an anchor value.
fn anchor(name: &str, deviation: f64) -> Check {
    check(
        name,
        deviation < ANCHOR_TOL,
        format!("max abs deviation {deviation:.3e} (tol {ANCHOR_TOL:.0e})"),
    )
}

pub fn anchor_initial_pose() -> Check {
    let plant = PlantModel::table_one();
    let q = Vector3::from(INITIAL_POSE_DEG.map(f64::to_radians));
    let x = plant.forward_kinematics(&q);
    anchor(
        "anchor.initial_pose",
        (x - Vector3::from(INITIAL_POSE_X)).amax(),
    )
}

pub fn anchor_link_inertia() -> Check {
    let plant = PlantModel::table_one();
    let m = plant.link_mass_matrix(&Vector3::zeros());
    let expected = Matrix3::from_fn(|r, c| LINK_INERTIA_AT_ZERO[r][c]);
    anchor("anchor.link_inertia", (m - expected).amax())
}

pub fn anchor_link_inertia_eigenvalues() -> Check {
    let plant = PlantModel::table_one();
    let m = plant.link_mass_matrix(&Vector3::zeros());
    let mut eig: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let dev = eig
        .iter()
        .zip(LINK_INERTIA_EIGENVALUES)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    anchor("anchor.link_inertia_eigenvalues", dev)
}

fn uniform3(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.gen_range(lo..hi))
}

/// A plant with randomized inertial, damping and friction data.
pub fn random_plant(rng: &mut ChaCha8Rng) -> PlantModel {
    let mut p = PlantModel::table_one();
    for body in [&mut p.link1, &mut p.link2, &mut p.link3, &mut p.tool] {
        body.mass *= rng.gen_range(0.5..2.0);
        for i in body.inertia.iter_mut() {
            *i *= rng.gen_range(0.5..2.0);
        }
        body.com = body.length * rng.gen_range(0.1..0.9);
    }
    for i in 0..3 {
        p.damping[i] = rng.gen_range(0.0..1.0);
        p.rotor_inertia[i] = rng.gen_range(0.0..1.0);
    }
    p.coulomb = Some(uniform3(rng, 0.0, 3.0).into());
    p
}

/// `Y_d a_d` against the body-frame dynamics of randomized plants.
pub fn dynamic_regressor_suite(seed: u64, perturb: bool) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let plant = random_plant(&mut rng);
        let q = uniform3(&mut rng, -std::f64::consts::PI, std::f64::consts::PI);
        let qd = uniform3(&mut rng, -2.0, 2.0);
        let z = uniform3(&mut rng, -2.0, 2.0);
        let zd = uniform3(&mut rng, -5.0, 5.0);
        let mut a = plant.dynamic_params(true);
        if perturb {
            a[0] += 1e-3;
        }
        let (m0, c, g) = plant.mass_coriolis_gravity(&q, &qd);
        let d = Vector3::from(plant.coulomb.unwrap_or_default());
        let friction = d.component_mul(&z.map(crate::model::plant::sgn));
        let rhs = (m0 + plant.rotor_inertia_matrix()) * zd
            + c * z
            + plant.damping_matrix() * z
            + g
            + friction;
        let lhs = dynamic_regressor(&q, &qd, &z, &zd, true) * &a;
        let err = (lhs - DVector::from_column_slice(rhs.as_slice())).norm();
        worst = worst.max(err / (1.0 + rhs.norm()));
    }
    check(
        "regressor.dynamic",
        worst < 1e-9,
        format!("{SAMPLES} samples, worst scaled residual {worst:.2e} (tol 1e-9)"),
    )
}

/// `Y_k(q, psi) a_k` against `J(q, a_k) psi`.
pub fn kinematic_regressor_suite(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geo = ArmGeometry::default();
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let q = uniform3(&mut rng, -std::f64::consts::PI, std::f64::consts::PI);
        let psi = uniform3(&mut rng, -2.0, 2.0);
        let a_k = uniform3(&mut rng, 0.2, 5.0);
        let lhs = geo.kinematic_regressor(&q, &psi) * a_k;
        let rhs = geo.jacobian(&q, &KinematicParams::from(a_k)) * psi;
        worst = worst.max((lhs - rhs).norm() / (1.0 + rhs.norm()));
    }
    check(
        "regressor.kinematic",
        worst < 1e-9,
        format!("{SAMPLES} samples, worst scaled residual {worst:.2e} (tol 1e-9)"),
    )
}

/// `z^T (dM/dt - 2C) z` vanishes for the body-frame Coriolis matrix.
pub fn skew_symmetry_suite(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let plant = random_plant(&mut rng);
        let q = uniform3(&mut rng, -std::f64::consts::PI, std::f64::consts::PI);
        let qd = uniform3(&mut rng, -2.0, 2.0);
        let z = uniform3(&mut rng, -2.0, 2.0);
        let (m0, c, _) = plant.mass_coriolis_gravity(&q, &qd);
        let partials = plant.link_mass_partials(&q);
        let m_dot: Matrix3<f64> = (0..3).map(|i| partials[i] * qd[i]).sum();
        let form = z.dot(&((m_dot - c * 2.0) * z));
        let scale = 1.0 + m0.norm() * qd.norm() * z.norm_squared();
        worst = worst.max(form.abs() / scale);
    }
    check(
        "regressor.skew_symmetry",
        worst < 1e-6,
        format!("{SAMPLES} samples, worst scaled |z'(dM-2C)z| {worst:.2e} (tol 1e-6)"),
    )
}

fn preset_scenario(name: &str) -> Scenario {
    let text = preset(name).expect("bundled preset");
    parse_scenario(text, name).expect("bundled preset parses")
}

fn observer_config(beta: f64, gamma: f64) -> OuterConfig {
    let mut c = preset_scenario("fig6_observer_regulation").controller;
    c.law = ReferenceLaw::Observer { beta, gamma };
    c
}

fn pid_config(k_c: f64) -> OuterConfig {
    let mut c = preset_scenario("fig21_pid_inner").controller;
    c.inner = InnerLoop::PidPosition {
        k_c: DVector::from_element(3, k_c),
    };
    c.servo_estimates = None;
    c
}

fn gate(c: &OuterConfig) -> Result<(), ControlError> {
    c.validate(3, 3, 3, param_count(false))
}

fn rejected(r: Result<(), ControlError>) -> bool {
    matches!(r, Err(ControlError::GainConditionViolated(_)))
}

pub fn observer_gain_gate() -> Check {
    let ok = gate(&observer_config(1.0, 1.0)).is_ok();
    let low = rejected(gate(&observer_config(0.4, 1.0)));
    let edge_in = gate(&observer_config(4.0 / 9.0 + 1e-9, 1.0)).is_ok();
    let edge_out = rejected(gate(&observer_config(4.0 / 9.0, 1.0)));
    check(
        "gates.observer",
        ok && low && edge_in && edge_out,
        format!(
            "beta=1 accepted: {ok}; beta=0.4 rejected: {low}; \
             just above 4/9 accepted: {edge_in}; at 4/9 rejected: {edge_out}"
        ),
    )
}

pub fn pull_in_gain_gate() -> Check {
    let bound = default_k_c_bound();
    let golden = (k_c_lower_bound(1.0, 1.0, 1.0) - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15;
    let ok = gate(&pid_config(0.62)).is_ok();
    let low = rejected(gate(&pid_config(0.60)));
    check(
        "gates.pull_in",
        golden && ok && low,
        format!(
            "bound {bound:.6}; equal gains give it: {golden}; \
             0.62 accepted: {ok}; 0.60 rejected: {low}"
        ),
    )
}

/// Short run of a preset at its own timing; it must finish cleanly.
pub fn short_preset_run(name: &str) -> Check {
    let mut s = preset_scenario(name);
    s.timing.duration = SHORT_DURATION;
    let label = format!("preset.{name}");
    match run_scenario(&s) {
        Ok(log) => check(label, true, format!("{} rows", log.rows.len())),
        Err(f) => check(label, false, f.error.to_string()),
    }
}

/// Lyapunov monitor on the short variant, with the outer loop running at
/// the inner rate.
pub fn short_preset_lyapunov(name: &str) -> Option<Check> {
    let mut s = preset_scenario(name);
    if !s.monitors.lyapunov {
        return None;
    }
    s.timing.duration = SHORT_DURATION;
    s.timing.dt_outer = s.timing.dt_inner;
    let label = format!("lyapunov.{name}");
    Some(match run_scenario(&s) {
        Ok(log) => {
            let m = &log.monitors;
            check(
                label,
                m.lyapunov_passed(),
                format!(
                    "{} violations, max step increase {:.2e} (tol {:.2e})",
                    m.lyapunov_violations, m.lyapunov_max_increase, m.lyapunov_tolerance
                ),
            )
        }
        Err(f) => check(label, false, f.error.to_string()),
    })
}

/// Names of every check, in execution order.
pub fn check_names() -> Vec<String> {
    let mut names: Vec<String> = [
        "anchor.initial_pose",
        "anchor.link_inertia",
        "anchor.link_inertia_eigenvalues",
        "regressor.dynamic",
        "regressor.kinematic",
        "regressor.skew_symmetry",
        "gates.observer",
        "gates.pull_in",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for (name, _) in PRESETS {
        names.push(format!("preset.{name}"));
        if preset_scenario(name).monitors.lyapunov {
            names.push(format!("lyapunov.{name}"));
        }
    }
    names
}

/// Run the selected checks.
pub fn run_checks(opts: &ValidateOptions) -> Vec<Check> {
    let selected = |n: &str| opts.filter.as_deref().is_none_or(|f| n.contains(f));
    let mut out = Vec::new();
    let fixed: [(&str, Box<dyn Fn() -> Check>); 8] = [
        ("anchor.initial_pose", Box::new(anchor_initial_pose)),
        ("anchor.link_inertia", Box::new(anchor_link_inertia)),
        (
            "anchor.link_inertia_eigenvalues",
            Box::new(anchor_link_inertia_eigenvalues),
        ),
        (
            "regressor.dynamic",
            Box::new(|| dynamic_regressor_suite(1, opts.perturb_dynamics)),
        ),
        (
            "regressor.kinematic",
            Box::new(|| kinematic_regressor_suite(2)),
        ),
        (
            "regressor.skew_symmetry",
            Box::new(|| skew_symmetry_suite(3)),
        ),
        ("gates.observer", Box::new(observer_gain_gate)),
        ("gates.pull_in", Box::new(pull_in_gain_gate)),
    ];
    for (name, f) in fixed.iter() {
        if selected(name) {
            out.push(f());
        }
    }
    for (name, _) in PRESETS {
        if selected(&format!("preset.{name}")) {
            out.push(short_preset_run(name));
        }
        if selected(&format!("lyapunov.{name}")) {
            out.extend(short_preset_lyapunov(name));
        }
    }
    out
}

/// Fixed-width table of results.
pub fn render_table(checks: &[Check]) -> String {
    let width = checks
        .iter()
        .map(|c| c.name.len())
        .max()
        .unwrap_or(5)
        .max(5);
    let mut s = format!("{:<width$}  {:<6}  DETAIL\n", "CHECK", "RESULT");
    for c in checks {
        let r = if c.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{:<width$}  {:<6}  {}\n", c.name, r, c.detail));
    }
    s
}
