//! Forward kinematics, Jacobian and kinematic regressor of the 3-DOF arm.
//!
//! Geometry: joint 1 is a base yaw about the vertical axis, joints 2 and 3
//! pitch about parallel horizontal axes, and a tool is rigidly attached to
//! link 3 at a fixed in-plane angle. At `q = 0` the arm points along `+Y`.
//!
//! The kinematic parameter vector `a_k` holds the three effective lengths
//! (link 2, link 3, tool). The base height and the tool angle are structure.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::dual::{seed, Dual, Real};

/// Known kinematic structure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmGeometry {
    /// Height of the joint-2 axis above the base (m).
    pub base_height: f64,
    /// In-plane angle between link 3 and the tool (rad).
    pub tool_angle: f64,
}

impl Default for ArmGeometry {
    fn default() -> Self {
        Self {
            base_height: 1.8,
            tool_angle: 30f64.to_radians(),
        }
    }
}

/// Effective lengths `[l2, l3, l_E]` (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicParams(pub [f64; 3]);

impl KinematicParams {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::from(self.0)
    }
}

impl From<Vector3<f64>> for KinematicParams {
    fn from(v: Vector3<f64>) -> Self {
        Self([v[0], v[1], v[2]])
    }
}

impl ArmGeometry {
    fn plane_angles<T: Real>(&self, q: &[T; 3]) -> [T; 3] {
        let a = q[1];
        let b = q[1] + q[2];
        [a, b, b + T::cst(self.tool_angle)]
    }

    /// `x = f(q)`.
    pub fn forward_kinematics(&self, q: &Vector3<f64>, a_k: &KinematicParams) -> Vector3<f64> {
        let phi = self.plane_angles(&[q[0], q[1], q[2]]);
        let mut r = 0.0;
        let mut h = 0.0;
        for i in 0..3 {
            r += a_k.0[i] * phi[i].cos();
            h += a_k.0[i] * phi[i].sin();
        }
        Vector3::new(-r * q[0].sin(), r * q[0].cos(), self.base_height + h)
    }

    fn jacobian_generic<T: Real>(&self, q: &[T; 3], a: &[T; 3]) -> [[T; 3]; 3] {
        let phi = self.plane_angles(q);
        let (s, c): (Vec<T>, Vec<T>) = phi.iter().map(|p| (p.sin(), p.cos())).unzip();
        let r = a[0] * c[0] + a[1] * c[1] + a[2] * c[2];
        let dr2 = -(a[0] * s[0] + a[1] * s[1] + a[2] * s[2]);
        let dr3 = -(a[1] * s[1] + a[2] * s[2]);
        let dh2 = a[0] * c[0] + a[1] * c[1] + a[2] * c[2];
        let dh3 = a[1] * c[1] + a[2] * c[2];
        let (s1, c1) = (q[0].sin(), q[0].cos());
        let zero = T::cst(0.0);
        [
            [-(r * c1), -(dr2 * s1), -(dr3 * s1)],
            [-(r * s1), dr2 * c1, dr3 * c1],
            [zero, dh2, dh3],
        ]
    }

    /// `J(q; a_k)` with `xdot = J qdot`.
    pub fn jacobian(&self, q: &Vector3<f64>, a_k: &KinematicParams) -> Matrix3<f64> {
        let j = self.jacobian_generic(&[q[0], q[1], q[2]], &a_k.0);
        Matrix3::from_fn(|r, c| j[r][c])
    }

    /// Time derivative of `J(q; a)` along `qdot` and `adot`.
    pub fn jacobian_rate(
        &self,
        q: &Vector3<f64>,
        qdot: &Vector3<f64>,
        a_k: &KinematicParams,
        a_k_rate: &Vector3<f64>,
    ) -> Matrix3<f64> {
        let qd: [Dual; 3] = seed(&[q[0], q[1], q[2]], &[qdot[0], qdot[1], qdot[2]]);
        let ad: [Dual; 3] = seed(&a_k.0, &[a_k_rate[0], a_k_rate[1], a_k_rate[2]]);
        let j = self.jacobian_generic(&qd, &ad);
        Matrix3::from_fn(|r, c| j[r][c].du)
    }

    /// `Y_k(q, psi)` such that `J(q; a) psi = Y_k(q, psi) a` for every `a`.
    pub fn kinematic_regressor(&self, q: &Vector3<f64>, psi: &Vector3<f64>) -> Matrix3<f64> {
        let phi = self.plane_angles(&[q[0], q[1], q[2]]);
        let rates = [psi[1], psi[1] + psi[2], psi[1] + psi[2]];
        let (s1, c1) = q[0].sin_cos();
        let mut y = Matrix3::zeros();
        for i in 0..3 {
            let (sp, cp) = phi[i].sin_cos();
            let r = cp;
            let rdot = -sp * rates[i];
            let hdot = cp * rates[i];
            y[(0, i)] = -rdot * s1 - r * c1 * psi[0];
            y[(1, i)] = rdot * c1 - r * s1 * psi[0];
            y[(2, i)] = hdot;
        }
        y
    }
}
