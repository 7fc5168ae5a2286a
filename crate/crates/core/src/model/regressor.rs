//! Closed-form dynamic regressor of the arm.
//!
//! The link inertia is written as `M(q) = sum_k p_k M_k(q)` over nine
//! trigonometric basis matrices; gravity over three basis vectors, viscous
//! damping over three diagonal columns and, optionally, Coulomb friction over
//! three more. The matching parameter vector is
//! [`super::plant::PlantModel::dynamic_params`].

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::dual::{seed, Dual, Real};
use super::plant::sgn;

/// Parameters without friction: 9 inertial, 3 gravity, 3 damping.
pub const DYNAMIC_PARAMS: usize = 15;
/// Extra Coulomb friction parameters.
pub const FRICTION_PARAMS: usize = 3;
const INERTIA_BASIS: usize = 9;
const GRAVITY_BASIS: usize = 3;

pub fn param_count(friction: bool) -> usize {
    if friction {
        DYNAMIC_PARAMS + FRICTION_PARAMS
    } else {
        DYNAMIC_PARAMS
    }
}

type Basis<T> = [[[T; 3]; 3]; INERTIA_BASIS];

fn inertia_basis<T: Real>(q: &[T; 3]) -> Basis<T> {
    let zero = T::cst(0.0);
    let one = T::cst(1.0);
    let half = T::cst(0.5);
    let a = q[1];
    let b = q[1] + q[2];
    let ca = a.cos();
    let (sb, cb) = (b.sin(), b.cos());
    let (s3, c3) = (q[2].sin(), q[2].cos());
    let mut m = [[[zero; 3]; 3]; INERTIA_BASIS];
    m[0][0][0] = one;
    m[1][0][0] = ca * ca;
    m[2][0][0] = cb * cb;
    m[3][0][0] = T::cst(2.0) * sb * cb;
    m[4][0][0] = ca * cb;
    m[4][1][1] = c3;
    m[4][1][2] = half * c3;
    m[4][2][1] = half * c3;
    m[5][0][0] = ca * sb;
    m[5][1][1] = s3;
    m[5][1][2] = half * s3;
    m[5][2][1] = half * s3;
    m[6][1][1] = one;
    m[7][1][2] = one;
    m[7][2][1] = one;
    m[8][2][2] = one;
    m
}

fn gravity_basis(q: &Vector3<f64>) -> [Vector3<f64>; GRAVITY_BASIS] {
    let a = q[1];
    let b = q[1] + q[2];
    [
        Vector3::new(0.0, a.cos(), 0.0),
        Vector3::new(0.0, b.cos(), b.cos()),
        Vector3::new(0.0, -b.sin(), -b.sin()),
    ]
}

fn to_mat(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[r][c])
}

/// Basis matrices `M_k(q)` and their Coriolis matrices `C_k(q, qd)`
/// (Christoffel form).
fn basis_with_coriolis(
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
) -> ([Matrix3<f64>; INERTIA_BASIS], [Matrix3<f64>; INERTIA_BASIS]) {
    let qa = [q[0], q[1], q[2]];
    let m: Vec<Matrix3<f64>> = inertia_basis(&qa).iter().map(to_mat).collect();
    // partials[i][k] = dM_k/dq_i
    let mut partials = [[Matrix3::zeros(); INERTIA_BASIS]; 3];
    for (i, slot) in partials.iter_mut().enumerate() {
        let mut dir = [0.0; 3];
        dir[i] = 1.0;
        let dq: [Dual; 3] = seed(&qa, &dir);
        let bd = inertia_basis(&dq);
        for k in 0..INERTIA_BASIS {
            slot[k] = Matrix3::from_fn(|r, c| bd[k][r][c].du);
        }
    }
    let mut mk = [Matrix3::zeros(); INERTIA_BASIS];
    let mut ck = [Matrix3::zeros(); INERTIA_BASIS];
    for k in 0..INERTIA_BASIS {
        mk[k] = m[k];
        for r in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for i in 0..3 {
                    acc += 0.5
                        * (partials[i][k][(r, j)] + partials[j][k][(r, i)]
                            - partials[r][k][(i, j)])
                        * qd[i];
                }
                ck[k][(r, j)] = acc;
            }
        }
    }
    (mk, ck)
}

/// `Y_d(q, qd, zeta, zeta_dot)` with
/// `Y_d a_d = M zeta_dot + C(q, qd) zeta + B zeta + g(q) [+ D sgn(zeta)]`.
pub fn dynamic_regressor(
    q: &Vector3<f64>,
    qd: &Vector3<f64>,
    zeta: &Vector3<f64>,
    zeta_dot: &Vector3<f64>,
    friction: bool,
) -> DMatrix<f64> {
    let (mk, ck) = basis_with_coriolis(q, qd);
    let mut y = DMatrix::zeros(3, param_count(friction));
    for k in 0..INERTIA_BASIS {
        y.set_column(k, &(mk[k] * zeta_dot + ck[k] * zeta));
    }
    for (k, g) in gravity_basis(q).iter().enumerate() {
        y.set_column(INERTIA_BASIS + k, g);
    }
    for i in 0..3 {
        y[(i, INERTIA_BASIS + GRAVITY_BASIS + i)] = zeta[i];
        if friction {
            y[(i, DYNAMIC_PARAMS + i)] = sgn(zeta[i]);
        }
    }
    y
}

/// `Y_M(q, v)` with `Y_M a_d = M(q) v`.
pub fn inertia_regressor(q: &Vector3<f64>, v: &Vector3<f64>, friction: bool) -> DMatrix<f64> {
    let m = inertia_basis(&[q[0], q[1], q[2]]);
    let mut y = DMatrix::zeros(3, param_count(friction));
    for k in 0..INERTIA_BASIS {
        y.set_column(k, &(to_mat(&m[k]) * v));
    }
    y
}

/// Remainder of the dynamics once the inertia term is written as a total
/// derivative: `tau = d/dt (Y_M(q, qd) a_d) + Y_rest(q, qd) a_d`, i.e.
/// `Y_rest a_d = -C^T qd + B qd + g [+ D sgn(qd)]`.
pub fn rest_regressor(q: &Vector3<f64>, qd: &Vector3<f64>, friction: bool) -> DMatrix<f64> {
    let (_, ck) = basis_with_coriolis(q, qd);
    let mut y = DMatrix::zeros(3, param_count(friction));
    for k in 0..INERTIA_BASIS {
        y.set_column(k, &(-ck[k].transpose() * qd));
    }
    for (k, g) in gravity_basis(q).iter().enumerate() {
        y.set_column(INERTIA_BASIS + k, g);
    }
    for i in 0..3 {
        y[(i, INERTIA_BASIS + GRAVITY_BASIS + i)] = qd[i];
        if friction {
            y[(i, DYNAMIC_PARAMS + i)] = sgn(qd[i]);
        }
    }
    y
}

/// `M(q) = sum_k a_k M_k(q)` from a parameter vector.
pub fn mass_from_params(q: &Vector3<f64>, params: &[f64]) -> Matrix3<f64> {
    inertia_basis(&[q[0], q[1], q[2]])
        .iter()
        .zip(params)
        .fold(Matrix3::zeros(), |acc, (m, p)| acc + to_mat(m) * *p)
}
