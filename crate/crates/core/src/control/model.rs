//! What an outer-loop controller needs to know about the arm: the structure
//! of its Jacobian and dynamics, never the parameter values.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::model::regressor::{self, param_count};
use crate::model::{ArmGeometry, KinematicParams};

/// Regressor structure consumed by the controllers. Vectors are in joint
/// space (`dof`) or task space (`task_dim`).
pub trait RegressorModel {
    fn dof(&self) -> usize;
    fn task_dim(&self) -> usize;
    fn kinematic_param_count(&self) -> usize;
    fn dynamic_param_count(&self) -> usize;

    /// `J(q; a_k)`.
    fn jacobian(&self, q: &DVector<f64>, a_k: &DVector<f64>) -> DMatrix<f64>;
    /// `d/dt J(q; a_k)` along `(qdot, a_k_rate)`.
    fn jacobian_rate(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        a_k: &DVector<f64>,
        a_k_rate: &DVector<f64>,
    ) -> DMatrix<f64>;
    /// `Y_k(q, psi)` with `J(q; a) psi = Y_k a`.
    fn kinematic_regressor(&self, q: &DVector<f64>, psi: &DVector<f64>) -> DMatrix<f64>;
    /// `Y_d(q, qdot, zeta, zeta_dot)`.
    fn dynamic_regressor(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        zeta: &DVector<f64>,
        zeta_dot: &DVector<f64>,
    ) -> DMatrix<f64>;
    /// `Y_M(q, v)` with `Y_M a_d = M(q) v`.
    fn inertia_regressor(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64>;
    /// Remainder once `M qdd` is written as `d/dt (M qdot) - Mdot qdot`.
    fn rest_regressor(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64>;
}

/// The 3-DOF arm with tool.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmRegressor {
    pub geometry: ArmGeometry,
    /// Append Coulomb friction columns to the dynamic regressor.
    pub friction: bool,
}

fn v3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn dyn_m(m: &nalgebra::Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

impl RegressorModel for ArmRegressor {
    fn dof(&self) -> usize {
        3
    }
    fn task_dim(&self) -> usize {
        3
    }
    fn kinematic_param_count(&self) -> usize {
        3
    }
    fn dynamic_param_count(&self) -> usize {
        param_count(self.friction)
    }

    fn jacobian(&self, q: &DVector<f64>, a_k: &DVector<f64>) -> DMatrix<f64> {
        dyn_m(
            &self
                .geometry
                .jacobian(&v3(q), &KinematicParams::from(v3(a_k))),
        )
    }

    fn jacobian_rate(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        a_k: &DVector<f64>,
        a_k_rate: &DVector<f64>,
    ) -> DMatrix<f64> {
        dyn_m(&self.geometry.jacobian_rate(
            &v3(q),
            &v3(qdot),
            &KinematicParams::from(v3(a_k)),
            &v3(a_k_rate),
        ))
    }

    fn kinematic_regressor(&self, q: &DVector<f64>, psi: &DVector<f64>) -> DMatrix<f64> {
        dyn_m(&self.geometry.kinematic_regressor(&v3(q), &v3(psi)))
    }

    fn dynamic_regressor(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        zeta: &DVector<f64>,
        zeta_dot: &DVector<f64>,
    ) -> DMatrix<f64> {
        regressor::dynamic_regressor(&v3(q), &v3(qdot), &v3(zeta), &v3(zeta_dot), self.friction)
    }

    fn inertia_regressor(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        regressor::inertia_regressor(&v3(q), &v3(v), self.friction)
    }

    fn rest_regressor(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
        regressor::rest_regressor(&v3(q), &v3(qdot), self.friction)
    }
}
