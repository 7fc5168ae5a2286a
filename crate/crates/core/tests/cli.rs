use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_outerloop"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn final_error_norm(csv: &str) -> f64 {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let last: Vec<&str> = lines.last().unwrap().split(',').collect();
    ["e1", "e2", "e3"]
        .iter()
        .map(|c| {
            let i = header.iter().position(|h| h == c).unwrap();
            last[i].parse::<f64>().unwrap().powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

#[test]
fn simulate_bundled_regulation_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "fig3_filter_regulation",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(final_error_norm(&csv) < 5e-3);
    assert!(!csv.contains('\r'));
    let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    let m: toml::Value = toml::from_str(&manifest).unwrap();
    assert_eq!(m["status"].as_str(), Some("ok"));
    assert_eq!(m["timing"]["rows"].as_integer(), Some(2001));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn malformed_timing_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = outerloop::cli::presets::preset("fig12_joint_direct")
        .unwrap()
        .replace("dt_outer = 0.02", "dt_outer = 0.0203");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let o = run(&[
        "simulate",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("timing.dt_outer") && e.contains("line "), "{e}");
}

#[test]
fn unknown_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = outerloop::cli::presets::preset("fig12_joint_direct")
        .unwrap()
        .replace("lambda_i =", "lambda_j =");
    let path = dir.path().join("typo.toml");
    std::fs::write(&path, text).unwrap();
    let o = run(&["simulate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lambda_j"));
}

#[test]
fn stiff_preset_needs_plant_substeps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "simulate",
        "fig20_high_stiffness",
        "--plant-substeps",
        "1",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(Path::new(out).join("trajectory.csv").exists());
    let o = run(&[
        "simulate",
        "fig20_high_stiffness",
        "--plant-substeps",
        "10",
        "--duration",
        "1",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn default_output_root_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["simulate", "fig12_joint_direct", "--duration", "0.2"])
        .env(outerloop::cli::OUT_DIR_ENV, dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir
        .path()
        .join("fig12_joint_direct/trajectory.csv")
        .exists());
}

#[test]
fn plotdata_copies_fields_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "simulate",
        "fig21_pid_inner",
        "--duration",
        "1",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv_path = dir.path().join("trajectory.csv");
    let fig_path = dir.path().join("fig22.csv");
    let o = run(&[
        "plotdata",
        csv_path.to_str().unwrap(),
        "--figure",
        "fig22",
        "--out",
        fig_path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let source = std::fs::read_to_string(&csv_path).unwrap();
    let fig = std::fs::read_to_string(&fig_path).unwrap();
    let header: Vec<&str> = source.lines().next().unwrap().split(',').collect();
    let picks: Vec<usize> = ["t", "qcqr1", "qcqr2", "qcqr3"]
        .iter()
        .map(|c| header.iter().position(|h| h == c).unwrap())
        .collect();
    assert_eq!(fig.lines().next(), Some("t,qcqr1,qcqr2,qcqr3"));
    for (src, got) in source.lines().skip(1).zip(fig.lines().skip(1)) {
        let fields: Vec<&str> = src.split(',').collect();
        let want: Vec<&str> = picks.iter().map(|i| fields[*i]).collect();
        assert_eq!(got, want.join(","));
    }
    assert_eq!(source.lines().count(), fig.lines().count());
}

#[test]
fn plotdata_handles_header_only_input() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(
        &path,
        format!("{}\n", outerloop::sim::TrajectoryLog::header()),
    )
    .unwrap();
    let o = run(&["plotdata", path.to_str().unwrap(), "--figure", "fig3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "t,e1,e2,e3\n");
}

#[test]
fn plotdata_rejects_unknown_figure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "t\n").unwrap();
    let o = run(&["plotdata", path.to_str().unwrap(), "--figure", "fig23"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("fig3") && e.contains("fig25"), "{e}");
}

#[test]
fn validate_anchors_pass() {
    let o = run(&["validate", "--filter", "anchor"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("anchor.link_inertia "));
    assert!(!table.contains("FAIL"));
}

#[test]
fn validate_detects_perturbed_dynamics() {
    let o = run(&["validate", "--filter", "regressor", "--perturb-dynamics"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("regressor.dynamic"));
}

#[test]
fn full_validate_passes() {
    let o = run(&["validate"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
}
