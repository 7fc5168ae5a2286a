mod common;

use common::{controller, measurement, scenario, ALL_PRESETS};
use nalgebra::{DMatrix, DVector, Vector3};
use outerloop::cli::validate::{observer_gain_gate, pull_in_gain_gate};
use outerloop::control::{
    lyapunov_terms, pseudo_inverse, Adaptation, ControlError, Harmonic, OuterConfig, PlantTruth,
    ReferenceLaw, Target,
};
use outerloop::model::regressor::param_count;
use outerloop::sim::run_scenario;
use proptest::prelude::*;

fn gate(c: &OuterConfig) -> Result<(), ControlError> {
    c.validate(3, 3, 3, param_count(false))
}

fn observer(beta: f64, gamma: f64) -> OuterConfig {
    let mut c = scenario("fig6_observer_regulation").controller;
    c.law = ReferenceLaw::Observer { beta, gamma };
    c
}

#[test]
fn observer_gate_accepts_unit_gains_and_rejects_low_beta() {
    assert!(gate(&observer(1.0, 1.0)).is_ok());
    assert!(matches!(
        gate(&observer(0.4, 1.0)),
        Err(ControlError::GainConditionViolated(_))
    ));
    assert!(gate(&observer(4.0 / 9.0 + 1e-9, 1.0)).is_ok());
    assert!(observer_gain_gate().passed);
}

#[test]
fn pull_in_gate_sits_at_golden_ratio_conjugate() {
    assert!(pull_in_gain_gate().passed);
}

#[test]
fn pseudo_inverse_of_square_jacobian_is_its_inverse() {
    let s = scenario("fig6_observer_regulation");
    let model = s.regressor();
    use outerloop::control::RegressorModel;
    let q = DVector::from_vec(vec![0.4, 0.9, -1.7]);
    let a_k = DVector::from_vec(vec![1.8, 1.8, 1.2]);
    let j = model.jacobian(&q, &a_k);
    let (pinv, _) = pseudo_inverse(&j).unwrap();
    let inv = j.clone().try_inverse().unwrap();
    assert!((pinv - inv).amax() < 1e-10);
}

fn zero_amplitude(offset: DVector<f64>) -> Target {
    Target::TaskTrajectory(Harmonic {
        offset: offset.iter().copied().collect(),
        cos_amp: vec![0.0; 3],
        sin_amp: vec![0.0; 3],
        omega: std::f64::consts::PI / 3.0,
    })
}

#[test]
fn stationary_tracking_target_reproduces_regulator_bit_for_bit() {
    for name in ["fig6_observer_regulation", "fig3_filter_regulation"] {
        let mut reg = scenario(name);
        reg.timing.duration = 2.0;
        let offset = reg.target.sample(0.0).pos;
        let mut trk = reg.clone();
        trk.target = zero_amplitude(offset);
        let a = run_scenario(&reg).unwrap().to_csv();
        let b = run_scenario(&trk).unwrap().to_csv();
        assert!(a == b, "{name}: tracking path diverged from regulator path");
    }
}

#[test]
fn equilibrium_without_estimates_stays_put() {
    let mut s = scenario("fig12_joint_direct");
    let q = Vector3::new(0.3, 0.5, -0.8);
    s.target = Target::JointTrajectory(Harmonic {
        offset: q.iter().copied().collect(),
        cos_amp: vec![0.0; 3],
        sin_amp: vec![0.0; 3],
        omega: 0.0,
    });
    let meas = measurement(&s.plant, q, Vector3::zeros());
    let mut c = controller(&s, &meas);
    let before = c.state().clone();
    for k in 0..10 {
        let cmd = c.step(&meas, &s.target, k as f64 * 0.02, 0.02).unwrap();
        assert_eq!(cmd.qd_c.amax(), 0.0);
    }
    assert_eq!(c.state(), &before);
}

/// Advance a preset's controller away from its initial state with a frozen
/// measurement, then compare one outer step at the configured substeps
/// against a run with 100 times as many.
#[test]
fn single_step_matches_fine_substep_oracle() {
    for name in ALL_PRESETS {
        let s = scenario(name);
        let q = s.q0 + Vector3::new(0.05, -0.04, 0.03);
        let meas = measurement(&s.plant, q, Vector3::new(0.2, -0.1, 0.15));
        let mut c = controller(&s, &meas);
        let dt = s.timing.dt_outer;
        for k in 0..5 {
            c.step(&meas, &s.target, k as f64 * dt, dt).unwrap();
        }
        let t = 5.0 * dt;
        let n = c.config().substeps;
        let now = c.evaluate_now(t, &meas, &s.target).unwrap();
        let l = c.layout().clone();
        let held = outerloop::control::OuterCommand {
            q_c: c.block(&l.q_c),
            qd_c: DVector::from_column_slice(&now.deriv.as_slice()[l.q_c.clone()]),
        };
        let coarse = c
            .integrate(c.state(), &meas, &held, &s.target, t, dt, n)
            .unwrap();
        let fine = c
            .integrate(c.state(), &meas, &held, &s.target, t, dt, 100 * n)
            .unwrap();
        let err = (&coarse - &fine).amax();
        let scale = fine.amax().max(1.0);
        assert!(
            err <= 1e-6 * scale,
            "{name}: {err:.3e} vs scale {scale:.3e}"
        );
    }
}

fn joint_truth(s: &outerloop::sim::Scenario, q: &Vector3<f64>) -> PlantTruth {
    s.truth(q).unwrap()
}

#[test]
fn candidate_matches_hand_computed_terms() {
    let mut s = scenario("fig12_joint_direct");
    // a diagonal, non-uniform dynamic gain keeps the hand computation simple
    s.controller.gamma_d =
        DMatrix::from_diagonal(&DVector::from_fn(15, |i, _| 0.2 + 0.1 * i as f64));
    let q = Vector3::new(0.2, 0.6, -0.9);
    let qd = Vector3::new(0.3, -0.2, 0.4);
    let meas = measurement(&s.plant, q, qd);
    let mut c = controller(&s, &meas);
    let l = c.layout().clone();
    let mut state = c.state().clone();
    let set = |state: &mut DVector<f64>, r: &std::ops::Range<usize>, f: &dyn Fn(usize) -> f64| {
        for (k, i) in r.clone().enumerate() {
            state[i] = f(k);
        }
    };
    set(&mut state, &l.q_r, &|k| q[k] - 0.01 * (k as f64 + 1.0));
    set(&mut state, &l.w, &|k| 0.01 * (k as f64 + 1.0));
    set(&mut state, &l.a_d, &|k| 0.3 * k as f64 - 1.0);
    set(&mut state, &l.w_i, &|k| 0.4 + 0.2 * k as f64);
    c.set_state(state.clone());

    let eval = c.evaluate_now(1.0, &meas, &s.target).unwrap();
    let truth = joint_truth(&s, &q);
    let v = lyapunov_terms(&c, &eval, &meas, &truth).unwrap();

    let kk = &s.plant.motor_gain;
    let kp = &s.servo.kp;
    let ki = &s.servo.ki;
    let m = s.plant.rigid_mass_matrix(&q);
    let sl = Vector3::from_fn(|i, _| eval.sliding[i]);
    let mut oracle = 0.5 * sl.dot(&(m * sl));
    for i in 0..3 {
        let e = q[i] - state[l.q_r.start + i];
        oracle += 0.5 * kk[i] * ki[i] * e * e;
        let kstar = kk[i] * kp[i];
        let dw = state[l.w.start + i] - 1.0 / kstar;
        oracle += 0.5 * kstar / s.controller.lambda[i] * dw * dw;
        let dwi = state[l.w_i.start + i] - ki[i] / kp[i];
        oracle += 0.5 * kstar / s.controller.lambda_i[i] * dwi * dwi;
    }
    for j in 0..15 {
        let da = state[l.a_d.start + j] - truth.a_d[j];
        oracle += 0.5 * da * da / s.controller.gamma_d[(j, j)];
    }
    assert!(
        (v.total - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
        "{} vs {}",
        v.total,
        oracle
    );
}

#[test]
fn candidate_vanishes_at_the_truth() {
    for name in ["fig12_joint_direct", "fig21_pid_inner", "fig15_composite"] {
        let mut s = scenario(name);
        let q = Vector3::new(0.2, 0.6, -0.9);
        s.target = Target::JointTrajectory(Harmonic {
            offset: q.iter().copied().collect(),
            cos_amp: vec![0.0; 3],
            sin_amp: vec![0.0; 3],
            omega: 0.0,
        });
        let truth = joint_truth(&s, &q);
        s.initial.a_d = truth.a_d.clone();
        s.initial.w = truth.true_w();
        s.initial.w_i = truth.true_w_i();
        if let Some(wp) = truth.true_w_p() {
            s.initial.w_p = wp;
        }
        let meas = measurement(&s.plant, q, Vector3::zeros());
        let c = controller(&s, &meas);
        let eval = c.evaluate_now(0.0, &meas, &s.target).unwrap();
        let v = lyapunov_terms(&c, &eval, &meas, &truth).unwrap();
        assert!(v.total.abs() < 1e-20, "{name}: {v:?}");
    }
}

#[test]
fn kinematic_loop_has_no_candidate() {
    let s = scenario("fig25_cartesian_kinematic");
    assert_eq!(s.controller.adaptation, Adaptation::Kinematic);
    let meas = measurement(&s.plant, s.q0, Vector3::zeros());
    let c = controller(&s, &meas);
    let eval = c.evaluate_now(0.0, &meas, &s.target).unwrap();
    let truth = s.truth(&s.q0).unwrap();
    assert!(lyapunov_terms(&c, &eval, &meas, &truth).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Scale estimates stay inside the projection box whatever the
    /// initial guess and however hard the measurement pushes them.
    #[test]
    fn projected_estimates_stay_in_box(
        wi0 in -5.0f64..200.0,
        wp0 in -5.0f64..200.0,
        dq in prop::array::uniform3(-0.5f64..0.5),
        qd in prop::array::uniform3(-3.0f64..3.0),
    ) {
        let mut s = scenario("fig21_pid_inner");
        s.controller.lambda_i *= 1e3;
        s.controller.lambda_p *= 1e3;
        s.initial.w_i = DVector::from_element(3, wi0);
        s.initial.w_p = DVector::from_element(3, wp0);
        let q = s.q0 + Vector3::from(dq);
        let meas = measurement(&s.plant, q, Vector3::from(qd));
        let mut c = controller(&s, &meas);
        let (lo, hi) = s.controller.projection;
        let l = c.layout().clone();
        for k in 0..20 {
            c.step(&meas, &s.target, k as f64 * 0.02, 0.02).unwrap();
            for v in c.block(&l.w_i).iter().chain(c.block(&l.w_p).iter()) {
                prop_assert!(*v >= lo && *v <= hi);
            }
        }
    }
}
