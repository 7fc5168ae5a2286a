//! Per-outer-tick trajectory record, CSV output and run comparison.

use std::fmt::Write as _;

use thiserror::Error;

/// Column names in CSV order.
pub const COLUMNS: &[&str] = &[
    "t", "q1", "q2", "q3", "dq1", "dq2", "dq3", "x1", "x2", "x3", "e1", "e2", "e3", "qc1", "qc2",
    "qc3", "dqc1", "dqc2", "dqc3", "u1", "u2", "u3", "w1", "w2", "w3", "wi1", "wi2", "wi3", "wp1",
    "wp2", "wp3", "qcqr1", "qcqr2", "qcqr3", "ad_norm", "ak_err", "V", "flags",
];

/// Lyapunov value rose more than the per-step allowance.
pub const FLAG_LYAPUNOV_INCREASE: u32 = 1;
/// An integral/proportional scale estimate sits on its projection bound.
pub const FLAG_PROJECTION_ACTIVE: u32 = 2;

/// One outer tick. Quantities that do not apply to the active controller
/// are `NaN`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: [f64; 3],
    pub dq: [f64; 3],
    pub x: [f64; 3],
    /// `x - x_d` for task-space laws, `q - q_d` for joint-space laws.
    pub e: [f64; 3],
    pub q_c: [f64; 3],
    pub dq_c: [f64; 3],
    /// Servo output over the last inner tick before `t`.
    pub u: [f64; 3],
    pub w: [f64; 3],
    pub w_i: [f64; 3],
    pub w_p: [f64; 3],
    pub qc_qr: [f64; 3],
    pub ad_norm: f64,
    pub ak_err: f64,
    pub lyapunov: f64,
    pub flags: u32,
}

impl LogRow {
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(COLUMNS.len());
        v.push(self.t);
        for block in [
            &self.q,
            &self.dq,
            &self.x,
            &self.e,
            &self.q_c,
            &self.dq_c,
            &self.u,
            &self.w,
            &self.w_i,
            &self.w_p,
            &self.qc_qr,
        ] {
            v.extend_from_slice(block);
        }
        v.push(self.ad_norm);
        v.push(self.ak_err);
        v.push(self.lyapunov);
        v.push(self.flags as f64);
        v
    }
}

/// Monitor outcomes over a whole run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MonitorSummary {
    pub lyapunov_enabled: bool,
    pub lyapunov_tolerance: f64,
    pub lyapunov_violations: usize,
    /// Largest single-step increase of the candidate.
    pub lyapunov_max_increase: f64,
    pub max_qc_qr: f64,
}

impl MonitorSummary {
    pub fn lyapunov_passed(&self) -> bool {
        !self.lyapunov_enabled || self.lyapunov_violations == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
    pub monitors: MonitorSummary,
}

fn fmt_value(out: &mut String, v: f64) {
    // 9 significant digits
    let _ = write!(out, "{v:.8e}");
}

impl TrajectoryLog {
    pub fn header() -> String {
        COLUMNS.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::header();
        out.push('\n');
        for row in &self.rows {
            let values = row.values();
            let last = values.len() - 1;
            for (i, v) in values[..last].iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                fmt_value(&mut out, *v);
            }
            let _ = write!(out, ",{}", row.flags);
            out.push('\n');
        }
        out
    }

    /// Column by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = COLUMNS.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r.values()[idx]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Metric {
    /// Euclidean norm of the selected columns at the last row.
    FinalNorm,
    /// Root mean square of the per-row norm over `t in [from, to]`.
    Rms { from: f64, to: f64 },
    /// Maximum of the per-row norm over `t in [from, to]`.
    Max { from: f64, to: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("logs have different time grids")]
    GridMismatch,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("no rows in the selected window")]
    EmptyWindow,
}

/// Metric of one log over the given columns.
pub fn metric(log: &TrajectoryLog, columns: &[&str], m: Metric) -> Result<f64, CompareError> {
    let cols: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            log.column(c)
                .ok_or_else(|| CompareError::UnknownColumn(c.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let norm_at = |i: usize| cols.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt();
    let times = log.times();
    let in_window = |from: f64, to: f64| -> Vec<usize> {
        (0..times.len())
            .filter(|i| times[*i] >= from - 1e-12 && times[*i] <= to + 1e-12)
            .collect()
    };
    match m {
        Metric::FinalNorm => {
            if times.is_empty() {
                return Err(CompareError::EmptyWindow);
            }
            Ok(norm_at(times.len() - 1))
        }
        Metric::Rms { from, to } => {
            let idx = in_window(from, to);
            if idx.is_empty() {
                return Err(CompareError::EmptyWindow);
            }
            let sum: f64 = idx.iter().map(|i| norm_at(*i).powi(2)).sum();
            Ok((sum / idx.len() as f64).sqrt())
        }
        Metric::Max { from, to } => {
            let idx = in_window(from, to);
            if idx.is_empty() {
                return Err(CompareError::EmptyWindow);
            }
            Ok(idx.iter().map(|i| norm_at(*i)).fold(0.0, f64::max))
        }
    }
}

/// `metric(a) - metric(b)` on identical time grids.
pub fn compare_runs(
    a: &TrajectoryLog,
    b: &TrajectoryLog,
    columns: &[&str],
    m: Metric,
) -> Result<f64, CompareError> {
    if a.times() != b.times() {
        return Err(CompareError::GridMismatch);
    }
    Ok(metric(a, columns, m)? - metric(b, columns, m)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, e: [f64; 3]) -> LogRow {
        LogRow {
            t,
            q: [0.0; 3],
            dq: [0.0; 3],
            x: [0.0; 3],
            e,
            q_c: [0.0; 3],
            dq_c: [0.0; 3],
            u: [0.0; 3],
            w: [0.0; 3],
            w_i: [0.0; 3],
            w_p: [f64::NAN; 3],
            qc_qr: [0.0; 3],
            ad_norm: 0.0,
            ak_err: f64::NAN,
            lyapunov: 1.5,
            flags: 0,
        }
    }

    fn log_of(rows: Vec<LogRow>) -> TrajectoryLog {
        TrajectoryLog {
            rows,
            monitors: MonitorSummary::default(),
        }
    }

    #[test]
    fn identical_logs_compare_to_zero() {
        let log = log_of(
            (0..10)
                .map(|i| row(i as f64 * 0.1, [0.1 * i as f64, 0.0, 0.0]))
                .collect(),
        );
        let d = compare_runs(
            &log,
            &log,
            &["e1", "e2", "e3"],
            Metric::Rms { from: 0.0, to: 1.0 },
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn rms_of_unit_error_is_one() {
        let log = log_of(
            (0..10)
                .map(|i| row(i as f64 * 0.1, [1.0, 0.0, 0.0]))
                .collect(),
        );
        let r = metric(&log, &["e1"], Metric::Rms { from: 0.3, to: 0.7 }).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grids_must_match() {
        let a = log_of(vec![row(0.0, [0.0; 3]), row(0.1, [0.0; 3])]);
        let b = log_of(vec![row(0.0, [0.0; 3]), row(0.2, [0.0; 3])]);
        assert_eq!(
            compare_runs(&a, &b, &["e1"], Metric::FinalNorm),
            Err(CompareError::GridMismatch)
        );
    }

    #[test]
    fn csv_shape() {
        let log = log_of(vec![row(0.0, [1.0, 2.0, 3.0])]);
        let csv = log.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), COLUMNS.len());
        assert_eq!(lines[1].split(',').count(), COLUMNS.len());
        assert!(lines[1].starts_with("0.00000000e0,"));
        assert!(lines[1].contains("NaN"));
        assert!(!csv.contains('\r'));
    }
}
