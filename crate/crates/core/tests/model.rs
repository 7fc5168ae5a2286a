use nalgebra::{Matrix3, Vector3};
use outerloop::model::regressor::dynamic_regressor;
use outerloop::model::{ArmGeometry, FlexibleState, KinematicParams, PlantModel, RigidState};
use proptest::prelude::*;

fn angles() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-3.1f64..3.1).prop_map(Vector3::from)
}

fn rates(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-r..r).prop_map(Vector3::from)
}

fn conservative(mut p: PlantModel) -> PlantModel {
    p.damping = [0.0; 3];
    p.rotor_damping = [0.0; 3];
    p.coulomb = None;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mass_matrices_are_symmetric_positive_definite(q in angles()) {
        let p = PlantModel::table_one();
        for m in [p.link_mass_matrix(&q), p.rigid_mass_matrix(&q)] {
            prop_assert!((m - m.transpose()).amax() < 1e-12);
            prop_assert!(m.symmetric_eigenvalues().min() > 0.0);
        }
    }

    #[test]
    fn coriolis_makes_mass_rate_skew(q in angles(), qd in rates(3.0), z in rates(3.0)) {
        let p = PlantModel::table_one();
        let (m, c, _) = p.mass_coriolis_gravity(&q, &qd);
        let d = p.link_mass_partials(&q);
        let m_dot: Matrix3<f64> = (0..3).map(|i| d[i] * qd[i]).sum();
        let form = z.dot(&((m_dot - c * 2.0) * z));
        prop_assert!(form.abs() < 1e-6 * (1.0 + m.norm() * qd.norm() * z.norm_squared()));
    }

    /// Without friction, `Y_d a - g` is linear in `(zeta, zeta_dot)`.
    #[test]
    fn regressor_is_linear_in_reference_signals(
        q in angles(), qd in rates(2.0),
        z1 in rates(2.0), z2 in rates(2.0),
        zd1 in rates(4.0), zd2 in rates(4.0),
        k in -3.0f64..3.0,
    ) {
        let p = PlantModel::table_one();
        let a = p.dynamic_params(true);
        let g = dynamic_regressor(&q, &qd, &Vector3::zeros(), &Vector3::zeros(), false) * &a;
        let f = |z: Vector3<f64>, zd: Vector3<f64>| dynamic_regressor(&q, &qd, &z, &zd, false) * &a - &g;
        let lhs = f(z1 + z2 * k, zd1 + zd2 * k);
        let rhs = f(z1, zd1) + f(z2, zd2) * k;
        prop_assert!((lhs - &rhs).amax() < 1e-9 * (1.0 + rhs.amax()));
    }

    #[test]
    fn jacobian_matches_finite_differences(q in angles(), a in prop::array::uniform3(0.5f64..3.0)) {
        let geo = ArmGeometry::default();
        let ak = KinematicParams(a);
        let j = geo.jacobian(&q, &ak);
        let h = 1e-6;
        for c in 0..3 {
            let mut e = Vector3::zeros();
            e[c] = h;
            let fd = (geo.forward_kinematics(&(q + e), &ak) - geo.forward_kinematics(&(q - e), &ak)) / (2.0 * h);
            prop_assert!((fd - j.column(c)).amax() < 1e-7);
        }
    }

    #[test]
    fn kinematic_regressor_factors_jacobian(q in angles(), psi in rates(2.0), a in prop::array::uniform3(0.2f64..4.0)) {
        let geo = ArmGeometry::default();
        let lhs = geo.kinematic_regressor(&q, &psi) * Vector3::from(a);
        let rhs = geo.jacobian(&q, &KinematicParams(a)) * psi;
        prop_assert!((lhs - rhs).amax() < 1e-12 * (1.0 + rhs.amax()));
    }
}

fn rk4<S: Copy>(s: S, h: f64, f: impl Fn(&S) -> S, axpy: impl Fn(&S, &S, f64) -> S) -> S {
    let k1 = f(&s);
    let k2 = f(&axpy(&s, &k1, 0.5 * h));
    let k3 = f(&axpy(&s, &k2, 0.5 * h));
    let k4 = f(&axpy(&s, &k3, h));
    let s = axpy(&s, &k1, h / 6.0);
    let s = axpy(&s, &k2, h / 3.0);
    let s = axpy(&s, &k3, h / 3.0);
    axpy(&s, &k4, h / 6.0)
}

#[test]
fn rigid_energy_is_conserved_without_input_or_damping() {
    let p = conservative(PlantModel::table_one());
    let energy = |s: &RigidState| {
        0.5 * s.qd.dot(&(p.rigid_mass_matrix(&s.q) * s.qd)) + p.potential_energy(&s.q)
    };
    let mut s = RigidState {
        q: Vector3::new(0.3, 0.9, -1.2),
        qd: Vector3::new(0.8, -0.5, 1.0),
    };
    let e0 = energy(&s);
    let h = 5e-5;
    for _ in 0..20_000 {
        s = rk4(
            s,
            h,
            |s| RigidState {
                q: s.qd,
                qd: p.rigid_accel(s, &Vector3::zeros()),
            },
            |s, d, k| RigidState {
                q: s.q + d.q * k,
                qd: s.qd + d.qd * k,
            },
        );
    }
    let drift = (energy(&s) - e0).abs() / e0.abs();
    assert!(drift < 1e-6, "relative drift {drift:.3e}");
}

#[test]
fn flexible_energy_is_conserved_without_input_or_damping() {
    let mut p = conservative(PlantModel::table_one());
    p.stiffness = [6.0e4, 3.0e4, 1.0e4];
    let energy = |s: &FlexibleState| {
        let dth = s.theta - s.q;
        let spring: f64 = (0..3).map(|i| 0.5 * p.stiffness[i] * dth[i] * dth[i]).sum();
        let rotor: f64 = (0..3)
            .map(|i| 0.5 * p.rotor_inertia[i] * s.theta_d[i] * s.theta_d[i])
            .sum();
        0.5 * s.qd.dot(&(p.link_mass_matrix(&s.q) * s.qd))
            + rotor
            + spring
            + p.potential_energy(&s.q)
    };
    let q = Vector3::new(0.3, 0.9, -1.2);
    let mut s = FlexibleState {
        q,
        qd: Vector3::new(0.8, -0.5, 1.0),
        theta: q + Vector3::new(1e-3, -2e-3, 1e-3),
        theta_d: Vector3::new(0.5, 0.2, -0.4),
    };
    let e0 = energy(&s);
    let h = 5e-5;
    for _ in 0..20_000 {
        s = rk4(
            s,
            h,
            |s| {
                let (qdd, thdd) = p.flexible_accel(s, &Vector3::zeros());
                FlexibleState {
                    q: s.qd,
                    qd: qdd,
                    theta: s.theta_d,
                    theta_d: thdd,
                }
            },
            |s, d, k| FlexibleState {
                q: s.q + d.q * k,
                qd: s.qd + d.qd * k,
                theta: s.theta + d.theta * k,
                theta_d: s.theta_d + d.theta_d * k,
            },
        );
    }
    let drift = (energy(&s) - e0).abs() / e0.abs();
    assert!(drift < 1e-6, "relative drift {drift:.3e}");
}
