//! Command implementations behind the `outerloop` binary. Each command
//! writes its report to the given streams and returns a process exit code.

pub mod plotdata;
pub mod presets;
pub mod validate;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::sim::{parse_scenario, run_scenario, MonitorSummary, Scenario, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_CONTROLLER: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "OUTERLOOP_OUT_DIR";

/// Git-style object hash: SHA-256 over `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TimingStats {
    pub dt_inner: f64,
    pub dt_outer: f64,
    pub duration: f64,
    pub plant_substeps: usize,
    pub rows: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MonitorStats {
    pub lyapunov_enabled: bool,
    pub lyapunov_passed: bool,
    pub lyapunov_tolerance: f64,
    pub lyapunov_violations: usize,
    pub lyapunov_max_increase: f64,
    pub max_qc_minus_qr: f64,
}

impl From<&MonitorSummary> for MonitorStats {
    fn from(m: &MonitorSummary) -> Self {
        Self {
            lyapunov_enabled: m.lyapunov_enabled,
            lyapunov_passed: m.lyapunov_passed(),
            lyapunov_tolerance: m.lyapunov_tolerance,
            lyapunov_violations: m.lyapunov_violations,
            lyapunov_max_increase: m.lyapunov_max_increase,
            max_qc_minus_qr: m.max_qc_qr,
        }
    }
}

/// Summary written next to `trajectory.csv`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RunManifest {
    pub scenario: String,
    pub config_path: String,
    pub output_dir: String,
    pub config_hash: String,
    /// `ok`, `controller_error` or `divergence`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timing: TimingStats,
    pub monitors: MonitorStats,
}

#[derive(Clone, Debug, Default)]
pub struct SimulateOptions {
    /// Path to a scenario file, or the name of a bundled preset.
    pub config: String,
    pub out: Option<PathBuf>,
    pub plant_substeps: Option<usize>,
    pub duration: Option<f64>,
}

/// Scenario text and a display path. Files on disk take precedence over
/// preset names.
fn load_config(spec: &str) -> Result<(String, String, String), String> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{spec}: {e}"))?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        return Ok((text, spec.to_string(), stem));
    }
    if let Some(text) = presets::preset(spec) {
        let name = spec.strip_suffix(".toml").unwrap_or(spec);
        return Ok((text.to_string(), format!("preset:{name}"), name.to_string()));
    }
    Err(format!(
        "{spec}: no such file or preset (presets: {})",
        presets::names().collect::<Vec<_>>().join(", ")
    ))
}

fn out_dir_for(opts: &SimulateOptions, scenario: &Scenario) -> PathBuf {
    if let Some(d) = &opts.out {
        return d.clone();
    }
    let root = std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    root.join(&scenario.name)
}

/// `simulate`: run one scenario, write `trajectory.csv` and
/// `manifest.toml`.
pub fn cmd_simulate(opts: &SimulateOptions, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (text, shown, stem) = match load_config(&opts.config) {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut scenario = match parse_scenario(&text, &stem) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(err, "error: {shown}: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(n) = opts.plant_substeps {
        scenario.timing.plant_substeps = n;
    }
    if let Some(d) = opts.duration {
        scenario.timing.duration = d;
    }
    if let Err(e) = scenario.validate() {
        let _ = writeln!(err, "error: {shown}: {e}");
        return EXIT_CONFIG;
    }

    let dir = out_dir_for(opts, &scenario);
    let started = Instant::now();
    let result = run_scenario(&scenario);
    let wall = started.elapsed().as_secs_f64();
    let (log, status, error, code) = match result {
        Ok(log) => (log, "ok", None, EXIT_OK),
        Err(f) => {
            let (status, code) = match f.error {
                SimError::Controller { .. } => ("controller_error", EXIT_CONTROLLER),
                SimError::NumericalDivergence { .. } => ("divergence", EXIT_DIVERGENCE),
                SimError::InvalidConfig(_) => ("invalid_config", EXIT_CONFIG),
            };
            (f.log, status, Some(f.error.to_string()), code)
        }
    };

    let tm = scenario.timing;
    let manifest = RunManifest {
        scenario: scenario.name.clone(),
        config_path: shown,
        output_dir: dir.display().to_string(),
        config_hash: content_hash(text.as_bytes()),
        status: status.into(),
        error: error.clone(),
        timing: TimingStats {
            dt_inner: tm.dt_inner,
            dt_outer: tm.dt_outer,
            duration: tm.duration,
            plant_substeps: tm.plant_substeps,
            rows: log.rows.len(),
            wall_seconds: wall,
        },
        monitors: MonitorStats::from(&log.monitors),
    };
    let written = std::fs::create_dir_all(&dir)
        .and_then(|_| std::fs::write(dir.join("trajectory.csv"), log.to_csv()))
        .and_then(|_| {
            let body = toml::to_string(&manifest).map_err(std::io::Error::other)?;
            std::fs::write(dir.join("manifest.toml"), body)
        });
    if let Err(e) = written {
        let _ = writeln!(err, "error: writing {}: {e}", dir.display());
        return EXIT_CONFIG;
    }

    if let Some(e) = error {
        let _ = writeln!(err, "error: {e}");
    }
    let _ = writeln!(
        out,
        "{}: {} rows in {:.2} s -> {}",
        scenario.name,
        log.rows.len(),
        wall,
        dir.display()
    );
    if let Some(last) = log.rows.last() {
        let e = last.e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let _ = writeln!(out, "final |e| = {e:.3e}");
    }
    if log.monitors.lyapunov_enabled {
        let _ = writeln!(
            out,
            "lyapunov monitor: {} ({} violations)",
            if log.monitors.lyapunov_passed() {
                "pass"
            } else {
                "fail"
            },
            log.monitors.lyapunov_violations
        );
    }
    code
}

/// `validate`: run the self-checks and print a table.
pub fn cmd_validate(
    opts: &validate::ValidateOptions,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let checks = validate::run_checks(opts);
    let _ = write!(out, "{}", validate::render_table(&checks));
    if checks.is_empty() {
        let _ = writeln!(err, "error: no check matches the filter");
        return EXIT_VALIDATION;
    }
    match checks.iter().find(|c| !c.passed) {
        Some(c) => {
            let _ = writeln!(err, "first failing check: {}", c.name);
            EXIT_VALIDATION
        }
        None => {
            let _ = writeln!(out, "{} checks passed", checks.len());
            EXIT_OK
        }
    }
}

/// `plotdata`: extract one figure's series from a trajectory CSV.
pub fn cmd_plotdata(
    csv: &Path,
    figure: &str,
    dest: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    if plotdata::figure_columns(figure).is_none() {
        let _ = writeln!(
            err,
            "error: {}",
            plotdata::PlotError::UnknownFigure(figure.into())
        );
        return EXIT_CONFIG;
    }
    let text = match std::fs::read_to_string(csv) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", csv.display());
            return EXIT_CONFIG;
        }
    };
    let data = match plotdata::extract(&text, figure) {
        Ok(d) => d,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", csv.display());
            return EXIT_CONFIG;
        }
    };
    let written = match dest {
        Some(p) => std::fs::write(p, data),
        None => out.write_all(data.as_bytes()),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CONFIG
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_object_format() {
        // sha256 of "blob 0\0", as produced by a sha256 git repository
        assert_eq!(
            content_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }
}
