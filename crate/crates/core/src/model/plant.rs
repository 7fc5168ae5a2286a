//! Ground-truth plant: inertial data, body-frame rigid dynamics, the
//! actuator model and the flexible-joint extension.
//!
//! The mass matrix here is assembled from per-body COM Jacobians and
//! rotational inertia; Coriolis terms come from Christoffel symbols of that
//! matrix, differentiated exactly with dual numbers. None of this goes
//! through the closed-form regressor in [`super::regressor`], so the two can
//! check each other.

use nalgebra::{Cholesky, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::dual::{seed, Dual, Real};
use super::kinematics::{ArmGeometry, KinematicParams};
use super::regressor::{DYNAMIC_PARAMS, FRICTION_PARAMS};

/// Standard gravity (m/s^2), acting along `-Z0`.
pub const GRAVITY: f64 = 9.81;

/// One rigid link: mass, principal inertia about the COM in the link frame
/// (x along the link), length and COM offset along the link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkBody {
    pub mass: f64,
    /// `[I_xx, I_yy, I_zz]` about the COM (kg m^2).
    pub inertia: [f64; 3],
    pub length: f64,
    pub com: f64,
}

impl LinkBody {
    /// Second-moment tensor `int r r^T dm` about the COM, in principal axes.
    fn second_moments_com(&self) -> Matrix3<f64> {
        let [ixx, iyy, izz] = self.inertia;
        let half = 0.5 * (ixx + iyy + izz);
        Matrix3::from_diagonal(&Vector3::new(half - ixx, half - iyy, half - izz))
    }
}

/// Physical truth of the simulated manipulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    /// Vertical base link (long axis is its local `y`).
    pub link1: LinkBody,
    pub link2: LinkBody,
    pub link3: LinkBody,
    pub tool: LinkBody,
    /// Tool angle relative to link 3, about the joint-3 axis (rad).
    pub tool_angle: f64,
    pub gravity: f64,
    /// Viscous damping `B` (N m s).
    pub damping: [f64; 3],
    /// Motor gain `K` (N m / V).
    pub motor_gain: [f64; 3],
    /// Rotor inertia seen from the link side `D_r` (kg m^2).
    pub rotor_inertia: [f64; 3],
    /// Rotor damping `B_r` (N m s), flexible plant only.
    pub rotor_damping: [f64; 3],
    /// Joint stiffness `K_s` (N m / rad), flexible plant only.
    pub stiffness: [f64; 3],
    /// Coulomb friction levels `D` (N m), when enabled.
    pub coulomb: Option<[f64; 3]>,
}

impl Default for PlantModel {
    fn default() -> Self {
        Self::table_one()
    }
}

/// Joint-space state of the rigid plant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidState {
    pub q: Vector3<f64>,
    pub qd: Vector3<f64>,
}

/// Link and rotor state of the flexible-joint plant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlexibleState {
    pub q: Vector3<f64>,
    pub qd: Vector3<f64>,
    pub theta: Vector3<f64>,
    pub theta_d: Vector3<f64>,
}

/// `sgn` with `sgn(0) = 0`.
pub fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn diag(v: &[f64; 3]) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::from(*v))
}

type V3<T> = [T; 3];

fn add<T: Real>(a: V3<T>, b: V3<T>) -> V3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
fn sub<T: Real>(a: V3<T>, b: V3<T>) -> V3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn mul<T: Real>(a: V3<T>, k: T) -> V3<T> {
    [a[0] * k, a[1] * k, a[2] * k]
}
fn dot<T: Real>(a: V3<T>, b: V3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross<T: Real>(a: V3<T>, b: V3<T>) -> V3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

struct BodyPose<T> {
    mass: f64,
    inertia: [f64; 3],
    axes: [V3<T>; 3],
    com: V3<T>,
    after_joint3: bool,
}

impl PlantModel {
    /// Inertial data of the simulated 3-DOF arm with tool, with the motor,
    /// damping and rotor values used throughout the simulation studies.
    pub fn table_one() -> Self {
        Self {
            link1: LinkBody {
                mass: 1.6,
                inertia: [0.4320, 0.0720, 0.4320],
                length: 1.8,
                com: 0.9,
            },
            link2: LinkBody {
                mass: 0.6,
                inertia: [0.0054, 0.1620, 0.1620],
                length: 1.8,
                com: 0.9,
            },
            link3: LinkBody {
                mass: 0.6,
                inertia: [0.0054, 0.1620, 0.1620],
                length: 1.8,
                com: 0.9,
            },
            tool: LinkBody {
                mass: 0.8,
                inertia: [0.0032, 0.0960, 0.0960],
                length: 1.2,
                com: 0.6,
            },
            tool_angle: 30f64.to_radians(),
            gravity: GRAVITY,
            damping: [0.20, 0.15, 0.10],
            motor_gain: [60.0, 30.0, 10.0],
            rotor_inertia: [0.6, 0.3, 0.1],
            rotor_damping: [0.30, 0.20, 0.15],
            stiffness: [6.0e6, 3.0e6, 1.0e6],
            coulomb: None,
        }
    }

    pub fn geometry(&self) -> ArmGeometry {
        ArmGeometry {
            base_height: self.link1.length,
            tool_angle: self.tool_angle,
        }
    }

    /// True kinematic parameters `[l2, l3, l_E]`.
    pub fn kinematic_params(&self) -> KinematicParams {
        KinematicParams([self.link2.length, self.link3.length, self.tool.length])
    }

    pub fn forward_kinematics(&self, q: &Vector3<f64>) -> Vector3<f64> {
        self.geometry()
            .forward_kinematics(q, &self.kinematic_params())
    }

    pub fn motor_gain_matrix(&self) -> Matrix3<f64> {
        diag(&self.motor_gain)
    }

    pub fn damping_matrix(&self) -> Matrix3<f64> {
        diag(&self.damping)
    }

    pub fn rotor_inertia_matrix(&self) -> Matrix3<f64> {
        diag(&self.rotor_inertia)
    }

    fn poses<T: Real>(&self, q: &[T; 3]) -> [BodyPose<T>; 3] {
        let zero = T::cst(0.0);
        let one = T::cst(1.0);
        let (s1, c1) = (q[0].sin(), q[0].cos());
        let e_r = [-s1, c1, zero];
        let n = [c1, s1, zero];
        let up = [zero, zero, one];
        let u = |phi: T| add(mul(e_r, phi.cos()), mul(up, phi.sin()));
        let v = |phi: T| sub(mul(up, phi.cos()), mul(e_r, phi.sin()));
        let a = q[1];
        let b = q[1] + q[2];
        let c = b + T::cst(self.tool_angle);
        let o2 = [zero, zero, T::cst(self.link1.length)];
        let o3 = add(o2, mul(u(a), T::cst(self.link2.length)));
        [
            BodyPose {
                mass: self.link2.mass,
                inertia: self.link2.inertia,
                axes: [u(a), v(a), n],
                com: add(o2, mul(u(a), T::cst(self.link2.com))),
                after_joint3: false,
            },
            BodyPose {
                mass: self.link3.mass,
                inertia: self.link3.inertia,
                axes: [u(b), v(b), n],
                com: add(o3, mul(u(b), T::cst(self.link3.com))),
                after_joint3: true,
            },
            BodyPose {
                mass: self.tool.mass,
                inertia: self.tool.inertia,
                axes: [u(c), v(c), n],
                com: add(
                    add(o3, mul(u(b), T::cst(self.link3.length))),
                    mul(u(c), T::cst(self.tool.com)),
                ),
                after_joint3: true,
            },
        ]
    }

    /// Link-side mass matrix and gravity torque from body Jacobians.
    fn mass_gravity_generic<T: Real>(&self, q: &[T; 3]) -> ([[T; 3]; 3], [T; 3]) {
        let zero = T::cst(0.0);
        let (s1, c1) = (q[0].sin(), q[0].cos());
        let n = [c1, s1, zero];
        let up = [zero, zero, T::cst(1.0)];
        let o2 = [zero, zero, T::cst(self.link1.length)];
        let o3 = add(
            o2,
            mul(
                add(mul([-s1, c1, zero], q[1].cos()), mul(up, q[1].sin())),
                T::cst(self.link2.length),
            ),
        );

        let mut m = [[zero; 3]; 3];
        let mut g = [zero; 3];
        // base link only spins about the vertical axis
        m[0][0] = T::cst(self.link1.inertia[1]);

        for body in self.poses(q) {
            let jv = [
                cross(up, body.com),
                cross(n, sub(body.com, o2)),
                if body.after_joint3 {
                    cross(n, sub(body.com, o3))
                } else {
                    [zero; 3]
                },
            ];
            let axes_world = [up, n, if body.after_joint3 { n } else { [zero; 3] }];
            let jw: Vec<V3<T>> = axes_world
                .iter()
                .map(|w| {
                    [
                        dot(body.axes[0], *w),
                        dot(body.axes[1], *w),
                        dot(body.axes[2], *w),
                    ]
                })
                .collect();
            let mass = T::cst(body.mass);
            for i in 0..3 {
                for j in 0..3 {
                    let mut rot = zero;
                    for k in 0..3 {
                        rot = rot + T::cst(body.inertia[k]) * jw[i][k] * jw[j][k];
                    }
                    m[i][j] = m[i][j] + mass * dot(jv[i], jv[j]) + rot;
                }
                g[i] = g[i] + T::cst(body.mass * self.gravity) * jv[i][2];
            }
        }
        (m, g)
    }

    /// `M0(q)`, the link inertia matrix (rotor inertia excluded).
    pub fn link_mass_matrix(&self, q: &Vector3<f64>) -> Matrix3<f64> {
        let (m, _) = self.mass_gravity_generic(&[q[0], q[1], q[2]]);
        Matrix3::from_fn(|r, c| m[r][c])
    }

    /// Rigid-plant inertia `M0(q) + D_r`.
    pub fn rigid_mass_matrix(&self, q: &Vector3<f64>) -> Matrix3<f64> {
        self.link_mass_matrix(q) + self.rotor_inertia_matrix()
    }

    /// Partial derivatives `dM0/dq_i`, exact.
    pub fn link_mass_partials(&self, q: &Vector3<f64>) -> [Matrix3<f64>; 3] {
        let base = [q[0], q[1], q[2]];
        let mut out = [Matrix3::zeros(); 3];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut dir = [0.0; 3];
            dir[i] = 1.0;
            let qd: [Dual; 3] = seed(&base, &dir);
            let (m, _) = self.mass_gravity_generic(&qd);
            *slot = Matrix3::from_fn(|r, c| m[r][c].du);
        }
        out
    }

    /// `(M0, C, g)` with `C` from Christoffel symbols of `M0`, so that
    /// `dM0/dt - 2C` is skew-symmetric. Rotor inertia is constant and does
    /// not contribute to `C`.
    pub fn mass_coriolis_gravity(
        &self,
        q: &Vector3<f64>,
        qd: &Vector3<f64>,
    ) -> (Matrix3<f64>, Matrix3<f64>, Vector3<f64>) {
        let (m, g) = self.mass_gravity_generic(&[q[0], q[1], q[2]]);
        let dm = self.link_mass_partials(q);
        let mut c = Matrix3::zeros();
        for k in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for i in 0..3 {
                    acc += 0.5 * (dm[i][(k, j)] + dm[j][(k, i)] - dm[k][(i, j)]) * qd[i];
                }
                c[(k, j)] = acc;
            }
        }
        (
            Matrix3::from_fn(|r, cc| m[r][cc]),
            c,
            Vector3::new(g[0], g[1], g[2]),
        )
    }

    /// Gravitational potential energy of all links (J).
    pub fn potential_energy(&self, q: &Vector3<f64>) -> f64 {
        let poses = self.poses(&[q[0], q[1], q[2]]);
        let mut v = self.link1.mass * self.gravity * self.link1.com;
        for body in poses {
            v += body.mass * self.gravity * body.com[2];
        }
        v
    }

    fn friction_torque(&self, qd: &Vector3<f64>) -> Vector3<f64> {
        match self.coulomb {
            Some(d) => Vector3::new(d[0] * sgn(qd[0]), d[1] * sgn(qd[1]), d[2] * sgn(qd[2])),
            None => Vector3::zeros(),
        }
    }

    /// Rigid plant: `qdd = M^-1 (K u - C qd - B qd - g - D sgn(qd))`.
    pub fn rigid_accel(&self, state: &RigidState, u: &Vector3<f64>) -> Vector3<f64> {
        let (m0, c, g) = self.mass_coriolis_gravity(&state.q, &state.qd);
        let m = m0 + self.rotor_inertia_matrix();
        let rhs = self.motor_gain_matrix() * u
            - c * state.qd
            - self.damping_matrix() * state.qd
            - g
            - self.friction_torque(&state.qd);
        solve_spd(m, rhs)
    }

    /// Flexible-joint plant: link side driven by the spring torque, rotor
    /// side by the motor.
    pub fn flexible_accel(
        &self,
        state: &FlexibleState,
        u: &Vector3<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let (m0, c, g) = self.mass_coriolis_gravity(&state.q, &state.qd);
        let spring = diag(&self.stiffness) * (state.theta - state.q);
        let link_rhs = spring
            - c * state.qd
            - self.damping_matrix() * state.qd
            - g
            - self.friction_torque(&state.qd);
        let qdd = solve_spd(m0, link_rhs);
        let rotor_rhs =
            self.motor_gain_matrix() * u - diag(&self.rotor_damping) * state.theta_d - spring;
        let thdd = Vector3::new(
            rotor_rhs[0] / self.rotor_inertia[0],
            rotor_rhs[1] / self.rotor_inertia[1],
            rotor_rhs[2] / self.rotor_inertia[2],
        );
        (qdd, thdd)
    }

    /// The rigid plant a very stiff flexible-joint plant approaches: rotor
    /// damping folded into the link damping.
    pub fn rigid_equivalent(&self) -> Self {
        let mut out = self.clone();
        for i in 0..3 {
            out.damping[i] += self.rotor_damping[i];
        }
        out
    }

    /// Second moments of the link-2 body about joint 2 and of the combined
    /// link-3 + tool body about joint 3, in their link frames. Also returns
    /// first moments `(m x, m y)` and the total mass of the joint-3 body.
    fn grouped_moments(&self) -> (Matrix3<f64>, Matrix3<f64>, Vector3<f64>, Vector3<f64>, f64) {
        let l2 = &self.link2;
        let c2 = Vector3::new(l2.com, 0.0, 0.0);
        let s_a = l2.second_moments_com() + c2 * c2.transpose() * l2.mass;
        let first_a = c2 * l2.mass;

        let l3 = &self.link3;
        let c3 = Vector3::new(l3.com, 0.0, 0.0);
        let (sd, cd) = self.tool_angle.sin_cos();
        let rot = Matrix3::new(cd, -sd, 0.0, sd, cd, 0.0, 0.0, 0.0, 1.0);
        let ce = Vector3::new(l3.length + self.tool.com * cd, self.tool.com * sd, 0.0);
        let s_b = l3.second_moments_com()
            + c3 * c3.transpose() * l3.mass
            + rot * self.tool.second_moments_com() * rot.transpose()
            + ce * ce.transpose() * self.tool.mass;
        let first_b = c3 * l3.mass + ce * self.tool.mass;
        (s_a, s_b, first_a, first_b, l3.mass + self.tool.mass)
    }

    /// True dynamic parameter vector matching
    /// [`super::regressor::dynamic_regressor`]. With `include_rotor` the
    /// rotor inertia is folded in (rigid plant); without it the vector
    /// describes the link-side dynamics only (flexible plant). Coulomb
    /// levels are appended when friction is enabled.
    pub fn dynamic_params(&self, include_rotor: bool) -> DVector<f64> {
        let (s_a, s_b, _first_a, first_b, m_b) = self.grouped_moments();
        let l2 = self.link2.length;
        let g0 = self.gravity;
        let dr = if include_rotor {
            self.rotor_inertia
        } else {
            [0.0; 3]
        };
        let pitch_a = s_a[(0, 0)] + s_a[(1, 1)];
        let pitch_b = s_b[(0, 0)] + s_b[(1, 1)];
        let (mx_b, my_b) = (first_b[0], first_b[1]);
        let mx_a = self.link2.mass * self.link2.com;

        let mut p = vec![
            self.link1.inertia[1] + dr[0] + s_a[(1, 1)] + s_a[(2, 2)] + s_b[(1, 1)] + s_b[(2, 2)],
            s_a[(0, 0)] - s_a[(1, 1)] + m_b * l2 * l2,
            s_b[(0, 0)] - s_b[(1, 1)],
            -s_b[(0, 1)],
            2.0 * l2 * mx_b,
            -2.0 * l2 * my_b,
            pitch_a + m_b * l2 * l2 + pitch_b + dr[1],
            pitch_b,
            pitch_b + dr[2],
            g0 * (mx_a + m_b * l2),
            g0 * mx_b,
            g0 * my_b,
            self.damping[0],
            self.damping[1],
            self.damping[2],
        ];
        debug_assert_eq!(p.len(), DYNAMIC_PARAMS);
        if let Some(d) = self.coulomb {
            p.extend_from_slice(&d);
            debug_assert_eq!(p.len(), DYNAMIC_PARAMS + FRICTION_PARAMS);
        }
        DVector::from_vec(p)
    }
}

fn solve_spd(m: Matrix3<f64>, rhs: Vector3<f64>) -> Vector3<f64> {
    match Cholesky::new(m) {
        Some(ch) => ch.solve(&rhs),
        None => m
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| Vector3::repeat(f64::NAN)),
    }
}
