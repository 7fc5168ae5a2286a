//! Adaptive outer-loop command generator.
//!
//! Every law is written around a nominal reference velocity `v` and its
//! derivative. With a PI velocity servo `qdot_r = v`; with a PID position
//! servo `qdot_r = v + K_c (q - q_r)`, so that `v` is the starred reference
//! in both cases and the sliding vector is `qdot - v`.
//!
//! The internal ODEs (filter, observer, reference, command, estimates,
//! composite filters and gains) are advanced with RK4 over one outer period
//! while the measurement and the emitted command are held.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::config::{Adaptation, InitialEstimates, InnerLoop, OuterConfig, ReferenceLaw};
use super::error::ControlError;
use super::model::RegressorModel;
use super::projection::{limit_rate, project, project_rate};
use super::target::Target;

/// Sampled plant signals available to the outer loop.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    /// Task-space position; may be empty for joint-space laws.
    pub x: DVector<f64>,
}

/// Command sent to the servo and held until the next outer tick.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterCommand {
    pub q_c: DVector<f64>,
    pub qd_c: DVector<f64>,
}

/// Offsets of every block in the flat controller state.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub q_r: Range<usize>,
    pub q_c: Range<usize>,
    /// `int (q_c - q_r)`, PID servo only.
    pub int_c: Range<usize>,
    /// Passive filter state.
    pub y: Range<usize>,
    /// Task-space observer.
    pub x_o: Range<usize>,
    pub a_k: Range<usize>,
    pub w: Range<usize>,
    pub a_d: Range<usize>,
    pub w_i: Range<usize>,
    pub w_p: Range<usize>,
    /// Composite filter of `Y_M`, row-major `n x p_d`.
    pub filt_m: Range<usize>,
    /// Composite filter of the remainder regressor, row-major `n x p_d`.
    pub filt_r: Range<usize>,
    pub u_f: Range<usize>,
    pub h_f: Range<usize>,
    /// Time-varying composite gains.
    pub gain_w: Range<usize>,
    pub gain_d: Range<usize>,
    pub gain_i: Range<usize>,
    /// `int (q - q_r)`, used by the PID-mode Lyapunov candidate.
    pub int_e: Range<usize>,
    /// `int s^T s`.
    pub int_ss: Range<usize>,
    pub len: usize,
}

impl Layout {
    fn new(cfg: &OuterConfig, n: usize, m: usize, pk: usize, pd: usize) -> Self {
        let mut at = 0;
        let mut take = |size: usize| {
            let r = at..at + size;
            at += size;
            r
        };
        let pid = matches!(cfg.inner, InnerLoop::PidPosition { .. });
        let adaptive = cfg.adaptation != Adaptation::Kinematic;
        let composite = matches!(cfg.adaptation, Adaptation::Composite { .. });
        let cf = matches!(
            cfg.adaptation,
            Adaptation::Composite {
                forgetting: Some(_),
                ..
            }
        );
        let filter = matches!(cfg.law, ReferenceLaw::Filter { .. });
        let observer = matches!(cfg.law, ReferenceLaw::Observer { .. });
        let q_r = take(n);
        let q_c = take(n);
        let int_c = take(if pid && adaptive { n } else { 0 });
        let y = take(if filter { n } else { 0 });
        let x_o = take(if observer { m } else { 0 });
        let a_k = take(if cfg.law.adapts_kinematics() { pk } else { 0 });
        let w = take(if adaptive { n } else { 0 });
        let a_d = take(if adaptive { pd } else { 0 });
        let w_i = take(if adaptive { n } else { 0 });
        let w_p = take(if adaptive && pid { n } else { 0 });
        let filt_m = take(if composite { n * pd } else { 0 });
        let filt_r = take(if composite { n * pd } else { 0 });
        let u_f = take(if composite { n } else { 0 });
        let h_f = take(if composite { n } else { 0 });
        let gain_w = take(if cf { n } else { 0 });
        let gain_d = take(if cf { pd * pd } else { 0 });
        let gain_i = take(if cf { n } else { 0 });
        let int_e = take(n);
        let int_ss = take(1);
        Layout {
            q_r,
            q_c,
            int_c,
            y,
            x_o,
            a_k,
            w,
            a_d,
            w_i,
            w_p,
            filt_m,
            filt_r,
            u_f,
            h_f,
            gain_w,
            gain_d,
            gain_i,
            int_e,
            int_ss,
            len: at,
        }
    }

    fn named_blocks(&self) -> [(&'static str, &Range<usize>); 19] {
        [
            ("q_r", &self.q_r),
            ("q_c", &self.q_c),
            ("int_c", &self.int_c),
            ("y", &self.y),
            ("x_o", &self.x_o),
            ("a_k", &self.a_k),
            ("w", &self.w),
            ("a_d", &self.a_d),
            ("w_i", &self.w_i),
            ("w_p", &self.w_p),
            ("filt_m", &self.filt_m),
            ("filt_r", &self.filt_r),
            ("u_f", &self.u_f),
            ("h_f", &self.h_f),
            ("gain_w", &self.gain_w),
            ("gain_d", &self.gain_d),
            ("gain_i", &self.gain_i),
            ("int_e", &self.int_e),
            ("int_ss", &self.int_ss),
        ]
    }
}

/// Everything computed while evaluating the internal ODE right-hand side.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub deriv: DVector<f64>,
    /// Nominal reference velocity and its derivative.
    pub v: DVector<f64>,
    pub v_dot: DVector<f64>,
    /// Sliding vector `qdot - v`.
    pub sliding: DVector<f64>,
    /// Scaled-compensation argument before `diag(w)`.
    pub compensation: DVector<f64>,
    /// `x - x_d` for task laws, `q - q_d` for joint laws.
    pub tracking_error: DVector<f64>,
    /// `x_o - x` for the observer law.
    pub observer_error: Option<DVector<f64>>,
}

/// Adaptive outer-loop controller over any [`RegressorModel`].
#[derive(Clone, Debug)]
pub struct OuterController<R: RegressorModel> {
    model: R,
    config: OuterConfig,
    layout: Layout,
    state: DVector<f64>,
    n: usize,
    pd: usize,
}

fn seg(v: &DVector<f64>, r: &Range<usize>) -> DVector<f64> {
    DVector::from_column_slice(&v.as_slice()[r.clone()])
}

fn put(dst: &mut DVector<f64>, r: &Range<usize>, src: &DVector<f64>) {
    dst.as_mut_slice()[r.clone()].copy_from_slice(src.as_slice());
}

fn mat_rows(v: &DVector<f64>, r: &Range<usize>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, &v.as_slice()[r.clone()])
}

fn put_rows(dst: &mut DVector<f64>, r: &Range<usize>, m: &DMatrix<f64>) {
    let out = &mut dst.as_mut_slice()[r.clone()];
    let cols = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..cols {
            out[i * cols + j] = m[(i, j)];
        }
    }
}

/// Right pseudo-inverse `J^T (J J^T)^-1` and the inverse of `J J^T`.
pub fn pseudo_inverse(j: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let a = j * j.transpose();
    let a_inv = a.cholesky()?.inverse();
    Some((j.transpose() * &a_inv, a_inv))
}

/// Time derivative of `J^T (J J^T)^-1` given `Jdot`.
fn pseudo_inverse_rate(
    j: &DMatrix<f64>,
    j_dot: &DMatrix<f64>,
    a_inv: &DMatrix<f64>,
) -> DMatrix<f64> {
    let a_dot = j_dot * j.transpose() + j * j_dot.transpose();
    j_dot.transpose() * a_inv - j.transpose() * a_inv * a_dot * a_inv
}

fn smallest_singular_value(j: &DMatrix<f64>) -> f64 {
    j.singular_values().min()
}

impl<R: RegressorModel> OuterController<R> {
    /// Build a controller at the initial measurement. `q_r(0) = q_c(0) =
    /// q(0)`, the filter starts at zero and the observer at `x(0)`.
    pub fn new(
        model: R,
        config: OuterConfig,
        init: &InitialEstimates,
        meas: &Measurement,
    ) -> Result<Self, ControlError> {
        let n = model.dof();
        let m = model.task_dim();
        let pk = model.kinematic_param_count();
        let pd = model.dynamic_param_count();
        config.validate(n, m, pk, pd)?;
        let layout = Layout::new(&config, n, m, pk, pd);
        let mut state = DVector::zeros(layout.len);
        let check = |v: &DVector<f64>, len: usize, name: &str| {
            if v.len() == len {
                Ok(())
            } else {
                Err(ControlError::InvalidConfig(format!(
                    "initial `{name}` has {} entries, expected {len}",
                    v.len()
                )))
            }
        };
        check(&meas.q, n, "q")?;
        check(&meas.qd, n, "qd")?;
        put(&mut state, &layout.q_r, &meas.q);
        put(&mut state, &layout.q_c, &meas.q);
        if !layout.x_o.is_empty() {
            check(&meas.x, m, "x")?;
            put(&mut state, &layout.x_o, &meas.x);
        }
        if !layout.a_k.is_empty() {
            check(&init.a_k, pk, "a_k")?;
            put(&mut state, &layout.a_k, &init.a_k);
        }
        let (lo, hi) = config.projection;
        if !layout.w.is_empty() {
            check(&init.a_d, pd, "a_d")?;
            check(&init.w, n, "w")?;
            check(&init.w_i, n, "w_i")?;
            put(&mut state, &layout.w, &init.w);
            put(&mut state, &layout.a_d, &init.a_d);
            let mut wi = init.w_i.clone();
            project(wi.as_mut_slice(), lo, hi);
            put(&mut state, &layout.w_i, &wi);
        }
        if !layout.w_p.is_empty() {
            check(&init.w_p, n, "w_p")?;
            let mut wp = init.w_p.clone();
            project(wp.as_mut_slice(), lo, hi);
            put(&mut state, &layout.w_p, &wp);
        }
        if !layout.filt_m.is_empty() {
            // start the inertia filter at its input so the filtered
            // derivative starts at zero
            let ym = model.inertia_regressor(&meas.q, &meas.qd);
            put_rows(&mut state, &layout.filt_m, &ym);
        }
        if let Adaptation::Composite {
            forgetting: Some(_),
            ..
        } = &config.adaptation
        {
            put(&mut state, &layout.gain_w, &config.lambda);
            put_rows(&mut state, &layout.gain_d, &config.gamma_d);
            put(&mut state, &layout.gain_i, &config.lambda_i);
        }
        Ok(Self {
            model,
            config,
            layout,
            state,
            n,
            pd,
        })
    }

    pub fn config(&self) -> &OuterConfig {
        &self.config
    }

    pub fn model(&self) -> &R {
        &self.model
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.state
    }

    /// Overwrite the flat state (test and replay hook).
    pub fn set_state(&mut self, state: DVector<f64>) {
        assert_eq!(state.len(), self.layout.len);
        self.state = state;
    }

    pub fn block(&self, r: &Range<usize>) -> DVector<f64> {
        seg(&self.state, r)
    }

    /// `a_k` currently used for the Jacobian.
    pub fn kinematic_estimate(&self, state: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.config.law {
            ReferenceLaw::KnownKinematics { a_k, .. } => Some(a_k.clone()),
            _ if !self.layout.a_k.is_empty() => Some(seg(state, &self.layout.a_k)),
            _ => None,
        }
    }

    /// Effective composite/direct gains at a state: `(Lambda, Gamma_d, Lambda_I)`.
    pub fn adaptation_gains(
        &self,
        state: &DVector<f64>,
    ) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        if self.layout.gain_w.is_empty() {
            (
                self.config.lambda.clone(),
                self.config.gamma_d.clone(),
                self.config.lambda_i.clone(),
            )
        } else {
            (
                seg(state, &self.layout.gain_w),
                mat_rows(state, &self.layout.gain_d, self.pd, self.pd),
                seg(state, &self.layout.gain_i),
            )
        }
    }

    fn check_finite(&self, state: &DVector<f64>) -> Result<(), ControlError> {
        for (name, r) in self.layout.named_blocks() {
            if state.as_slice()[r.clone()].iter().any(|v| !v.is_finite()) {
                return Err(ControlError::NonFiniteState { block: name });
            }
        }
        Ok(())
    }

    /// Smallest singular value of the Jacobian the law inverts or
    /// transposes, if any.
    pub fn jacobian_margin(&self, q: &DVector<f64>) -> Option<f64> {
        self.kinematic_estimate(&self.state)
            .map(|a_k| smallest_singular_value(&self.model.jacobian(q, &a_k)))
    }

    /// Right-hand side of all internal ODEs at `state`, time `t`, with the
    /// measurement and servo command held.
    pub fn evaluate(
        &self,
        state: &DVector<f64>,
        t: f64,
        meas: &Measurement,
        held: &OuterCommand,
        target: &Target,
    ) -> Result<Evaluation, ControlError> {
        let l = &self.layout;
        let n = self.n;
        let q = &meas.q;
        let qd = &meas.qd;
        let goal = target.sample(t);
        let mut d = DVector::zeros(l.len);
        let mut comp_extra: Option<DVector<f64>> = None;
        let mut observer_error = None;

        let (v, v_dot, tracking_error) = match &self.config.law {
            ReferenceLaw::Filter { k1, k2, alpha } => {
                let a_k = seg(state, &l.a_k);
                let jh = self.model.jacobian(q, &a_k);
                let dx = &meas.x - &goal.pos;
                let y = seg(state, &l.y);
                let jt_dx = jh.transpose() * &dx;
                let y_dot = k1.component_mul(&(&jt_dx - &y));
                put(&mut d, &l.y, &y_dot);
                let a_k_dot =
                    &self.config.gamma_k * self.model.kinematic_regressor(q, qd).transpose() * &dx;
                put(&mut d, &l.a_k, &a_k_dot);
                comp_extra = Some(-jt_dx * *alpha);
                (-k2.component_mul(&y), -k2.component_mul(&y_dot), dx)
            }
            ReferenceLaw::Observer { beta, gamma } => {
                let a_k = seg(state, &l.a_k);
                let x_o = seg(state, &l.x_o);
                let jh = self.model.jacobian(q, &a_k);
                let dx = &meas.x - &goal.pos;
                let dxo = &x_o - &meas.x;
                let err = &x_o - &goal.pos;
                let feedforward = !goal.is_stationary();
                let pinv = if feedforward {
                    Some(
                        pseudo_inverse(&jh).ok_or(ControlError::SingularJacobianEstimate {
                            sigma: smallest_singular_value(&jh),
                            floor: self.config.sigma_min,
                        })?,
                    )
                } else {
                    None
                };
                let mut v = -(jh.transpose() * &err) * *gamma;
                if let Some((p, _)) = &pinv {
                    v += p * &goal.vel;
                }
                let x_o_dot = &jh * &v - (&jh * (jh.transpose() * &dxo)) * *beta;
                let a_k_dot = &self.config.gamma_k
                    * self.model.kinematic_regressor(q, qd).transpose()
                    * (&dx - &dxo);
                let j_dot = self.model.jacobian_rate(q, qd, &a_k, &a_k_dot);
                let mut v_dot =
                    -(j_dot.transpose() * &err + jh.transpose() * (&x_o_dot - &goal.vel)) * *gamma;
                if let Some((p, a_inv)) = &pinv {
                    v_dot += pseudo_inverse_rate(&jh, &j_dot, a_inv) * &goal.vel + p * &goal.acc;
                }
                put(&mut d, &l.x_o, &x_o_dot);
                put(&mut d, &l.a_k, &a_k_dot);
                observer_error = Some(dxo);
                (v, v_dot, dx)
            }
            ReferenceLaw::KnownKinematics { gamma, a_k } => {
                let j = self.model.jacobian(q, a_k);
                let dx = &meas.x - &goal.pos;
                let x_dot = &j * qd;
                let j_dot = self
                    .model
                    .jacobian_rate(q, qd, a_k, &DVector::zeros(a_k.len()));
                let mut v = -(j.transpose() * &dx) * *gamma;
                let mut v_dot =
                    -(j_dot.transpose() * &dx + j.transpose() * (&x_dot - &goal.vel)) * *gamma;
                if !goal.is_stationary() {
                    let (p, a_inv) =
                        pseudo_inverse(&j).ok_or(ControlError::SingularJacobianEstimate {
                            sigma: smallest_singular_value(&j),
                            floor: self.config.sigma_min,
                        })?;
                    v += &p * &goal.vel;
                    v_dot += pseudo_inverse_rate(&j, &j_dot, &a_inv) * &goal.vel + &p * &goal.acc;
                }
                (v, v_dot, dx)
            }
            ReferenceLaw::Joint { alpha_bar } => {
                let e = q - &goal.pos;
                let v = &goal.vel - &e * *alpha_bar;
                let v_dot = &goal.acc - (qd - &goal.vel) * *alpha_bar;
                (v, v_dot, e)
            }
        };

        let sliding = qd - &v;
        let q_r = seg(state, &l.q_r);
        let q_c = seg(state, &l.q_c);
        let q_r_dot = match &self.config.inner {
            InnerLoop::PiVelocity => v.clone(),
            InnerLoop::PidPosition { k_c } => &v + k_c.component_mul(&(q - &q_r)),
        };
        put(&mut d, &l.q_r, &q_r_dot);
        put(&mut d, &l.int_e, &(q - &q_r));
        d[l.int_ss.start] = sliding.dot(&sliding);

        if self.config.adaptation == Adaptation::Kinematic {
            put(&mut d, &l.q_c, &q_r_dot);
            return Ok(Evaluation {
                deriv: d,
                compensation: DVector::zeros(n),
                v,
                v_dot,
                sliding,
                tracking_error,
                observer_error,
            });
        }

        let a_d = seg(state, &l.a_d);
        let w = seg(state, &l.w);
        let w_i = seg(state, &l.w_i);
        let y_d = self.model.dynamic_regressor(q, qd, &v, &v_dot);
        let mut comp = &y_d * &a_d;
        if let Some(extra) = comp_extra {
            comp += extra;
        }
        let scaled = w.component_mul(&comp);
        let qc_minus_qr = &q_c - &q_r;

        let (q_c_dot, w_i_drive) = match &self.config.inner {
            InnerLoop::PiVelocity => (
                &q_r_dot - w_i.component_mul(&qc_minus_qr) + &scaled,
                qc_minus_qr.clone(),
            ),
            InnerLoop::PidPosition { .. } => {
                let w_p = seg(state, &l.w_p);
                let int_c = seg(state, &l.int_c);
                put(&mut d, &l.int_c, &qc_minus_qr);
                let dot =
                    &v - w_p.component_mul(&qc_minus_qr) - w_i.component_mul(&int_c) + &scaled;
                (dot, int_c)
            }
        };
        put(&mut d, &l.q_c, &q_c_dot);

        let (gain_w, gain_d, gain_i) = self.adaptation_gains(state);
        let mut w_drive = comp.component_mul(&sliding);
        let mut a_d_drive = y_d.transpose() * &sliding;
        let mut w_i_term = w_i_drive.component_mul(&sliding);

        if let Adaptation::Composite {
            gamma0,
            lambda_f,
            forgetting,
        } = &self.config.adaptation
        {
            let pd = self.pd;
            let lf = *lambda_f;
            let y_m = self.model.inertia_regressor(q, qd);
            let y_rest = self.model.rest_regressor(q, qd);
            let filt_m = mat_rows(state, &l.filt_m, n, pd);
            let filt_r = mat_rows(state, &l.filt_r, n, pd);
            let u_f = seg(state, &l.u_f);
            let h_f = seg(state, &l.h_f);
            let filt_m_dot = (&y_m - &filt_m) * lf;
            let y_f = &filt_m_dot + &filt_r;
            put_rows(&mut d, &l.filt_m, &filt_m_dot);
            put_rows(&mut d, &l.filt_r, &((&y_rest - &filt_r) * lf));
            put(&mut d, &l.u_f, &((-(qd - &held.qd_c) - &u_f) * lf));
            put(&mut d, &l.h_f, &((q - &held.q_c - &h_f) * lf));

            let yf_ad = &y_f * &a_d;
            let e_f = w.component_mul(&yf_ad) + h_f.component_mul(&w_i) - &u_f;
            w_drive += yf_ad.component_mul(&e_f) * *gamma0;
            a_d_drive += y_f.transpose() * &e_f * *gamma0;
            w_i_term -= h_f.component_mul(&e_f) * *gamma0;

            if let Some(f) = forgetting {
                let g2 = yf_ad.map(|v| v * v);
                let gw_dot = gain_w.zip_map(&f.lambda_bar, |g, b| f.lambda1 * (g - g * g / b))
                    - gain_w.component_mul(&gain_w).component_mul(&g2) * *gamma0;
                let bar_inv = DMatrix::from_diagonal(&f.gamma_d_bar.map(|b| 1.0 / b));
                let gd_dot = (&gain_d - &gain_d * &bar_inv * &gain_d) * f.lambda2
                    - &gain_d * y_f.transpose() * &y_f * &gain_d * *gamma0;
                let h2 = h_f.map(|v| v * v);
                let gi_dot = gain_i.zip_map(&f.lambda_i_bar, |g, b| f.lambda3 * (g - g * g / b))
                    - gain_i.component_mul(&gain_i).component_mul(&h2) * *gamma0;
                put(&mut d, &l.gain_w, &gw_dot);
                put_rows(&mut d, &l.gain_d, &gd_dot);
                put(&mut d, &l.gain_i, &gi_dot);
            }
        }

        put(&mut d, &l.w, &(-gain_w.component_mul(&w_drive)));
        put(&mut d, &l.a_d, &(-(&gain_d * a_d_drive)));

        let (lo, hi) = self.config.projection;
        let mut w_i_dot = gain_i.component_mul(&w_i_term);
        if let Some(rate) = self.config.w_rate_limit {
            limit_rate(w_i_dot.as_mut_slice(), rate);
        }
        project_rate(w_i.as_slice(), w_i_dot.as_mut_slice(), lo, hi);
        put(&mut d, &l.w_i, &w_i_dot);
        if !l.w_p.is_empty() {
            let w_p = seg(state, &l.w_p);
            let mut w_p_dot = self
                .config
                .lambda_p
                .component_mul(&qc_minus_qr)
                .component_mul(&sliding);
            if let Some(rate) = self.config.w_rate_limit {
                limit_rate(w_p_dot.as_mut_slice(), rate);
            }
            project_rate(w_p.as_slice(), w_p_dot.as_mut_slice(), lo, hi);
            put(&mut d, &l.w_p, &w_p_dot);
        }

        Ok(Evaluation {
            deriv: d,
            v,
            v_dot,
            sliding,
            compensation: comp,
            tracking_error,
            observer_error,
        })
    }

    /// Evaluate at the current state with the command about to be emitted.
    pub fn evaluate_now(
        &self,
        t: f64,
        meas: &Measurement,
        target: &Target,
    ) -> Result<Evaluation, ControlError> {
        let held = OuterCommand {
            q_c: seg(&self.state, &self.layout.q_c),
            qd_c: DVector::zeros(self.n),
        };
        self.evaluate(&self.state, t, meas, &held, target)
    }

    fn clamp_projected(&self, state: &mut DVector<f64>) {
        let (lo, hi) = self.config.projection;
        for r in [&self.layout.w_i, &self.layout.w_p] {
            project(&mut state.as_mut_slice()[r.clone()], lo, hi);
        }
    }

    fn check_gain_bounds(&self, state: &DVector<f64>) -> Result<(), ControlError> {
        let Adaptation::Composite {
            forgetting: Some(f),
            ..
        } = &self.config.adaptation
        else {
            return Ok(());
        };
        let tol = 1e-9;
        let (gw, gd, gi) = self.adaptation_gains(state);
        let within = |g: &DVector<f64>, b: &DVector<f64>| {
            g.iter()
                .zip(b.iter())
                .all(|(g, b)| *g > 0.0 && *g <= b * (1.0 + tol))
        };
        if !within(&gw, &f.lambda_bar) {
            return Err(ControlError::GainBoundViolated { name: "lambda" });
        }
        if !within(&gi, &f.lambda_i_bar) {
            return Err(ControlError::GainBoundViolated { name: "lambda_i" });
        }
        let sym = (&gd + gd.transpose()) * 0.5;
        let scale = DMatrix::from_diagonal(&f.gamma_d_bar.map(|b| 1.0 / b.sqrt()));
        let eig_rel = (&scale * &sym * &scale).symmetric_eigenvalues();
        if sym.symmetric_eigenvalues().min() <= 0.0 || eig_rel.max() > 1.0 + tol {
            return Err(ControlError::GainBoundViolated { name: "gamma_d" });
        }
        Ok(())
    }

    /// Emit the command for time `t` from the current state, then advance
    /// the internal state to `t + dt` holding `meas` and that command.
    pub fn step(
        &mut self,
        meas: &Measurement,
        target: &Target,
        t: f64,
        dt: f64,
    ) -> Result<OuterCommand, ControlError> {
        self.check_finite(&self.state)?;
        if let Some(a_k) = self.kinematic_estimate(&self.state) {
            let sigma = smallest_singular_value(&self.model.jacobian(&meas.q, &a_k));
            if !(sigma >= self.config.sigma_min) {
                return Err(ControlError::SingularJacobianEstimate {
                    sigma,
                    floor: self.config.sigma_min,
                });
            }
        }
        let now = self.evaluate_now(t, meas, target)?;
        let cmd = OuterCommand {
            q_c: seg(&self.state, &self.layout.q_c),
            qd_c: seg(&now.deriv, &self.layout.q_c),
        };
        let next = self.integrate(&self.state, meas, &cmd, target, t, dt, self.config.substeps)?;
        self.check_finite(&next)?;
        self.check_gain_bounds(&next)?;
        self.state = next;
        Ok(cmd)
    }

    /// RK4 over `[t, t + dt]` in `substeps` equal pieces, clamping the
    /// projected estimates after each piece.
    pub fn integrate(
        &self,
        start: &DVector<f64>,
        meas: &Measurement,
        held: &OuterCommand,
        target: &Target,
        t: f64,
        dt: f64,
        substeps: usize,
    ) -> Result<DVector<f64>, ControlError> {
        let h = dt / substeps as f64;
        let mut s = start.clone();
        for i in 0..substeps {
            let tau = t + i as f64 * h;
            let f = |x: &DVector<f64>, tt: f64| {
                self.evaluate(x, tt, meas, held, target).map(|e| e.deriv)
            };
            let k1 = f(&s, tau)?;
            let k2 = f(&(&s + &k1 * (0.5 * h)), tau + 0.5 * h)?;
            let k3 = f(&(&s + &k2 * (0.5 * h)), tau + 0.5 * h)?;
            let k4 = f(&(&s + &k3 * h), tau + h)?;
            s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            self.clamp_projected(&mut s);
        }
        Ok(s)
    }
}
