use std::fs;
use std::path::Path;
use std::process::Command;

use kse_synth::cli::{exit_code, resolve_gains, run, run_json, RunOptions, EXIT_ASSUMPTION, EXIT_INDETERMINATE, EXIT_NUMERICAL, EXIT_OK, EXIT_SCHEMA};
use kse_synth::config::{GainSpec, JobConfig};
use kse_synth::lmi::{assemble_stab_lmi, build_closed_loop};
use kse_synth::sdp::{solve_margin, SolverOptions, Status};
use kse_synth::spectral::SpectralModel;
use serde_json::Value;

fn opts(dir: &Path, threads: Option<usize>) -> RunOptions {
    RunOptions { outdir: Some(dir.to_path_buf()), threads }
}

fn run_in(text: &str, threads: Option<usize>) -> (tempfile::TempDir, kse_synth::cli::RunOutcome) {
    let dir = tempfile::tempdir().unwrap();
    let out = run_json(text, &opts(dir.path(), threads));
    (dir, out)
}

fn stabilize_json(delta: f64, gains: &str) -> String {
    format!(
        r#"{{"schema":1,"mode":"stabilize","n":4,"gains":{gains},
            "plant":{{"regime":"dirichlet","nu":10,"x_star":"1/pi","delta":{delta}}}}}"#
    )
}

#[test]
fn malformed_configs_exit_with_schema_code() {
    for text in [
        "{not json",
        r#"{"schema":2,"mode":"stabilize","n":4,"gains":{"preset":"dirichlet-stabilization"}}"#,
        r#"{"schema":1,"mode":"stabilize","n":4,"gains":{"preset":"dirichlet-stabilization"},"extra":1}"#,
        r#"{"schema":1,"mode":"stabilize","gains":{"preset":"dirichlet-stabilization"}}"#,
        r#"{"schema":1,"mode":"stabilize","n":4,"gains":{"preset":"neumann-l2"},
            "plant":{"regime":"dirichlet","nu":10,"x_star":0.3,"delta":1}}"#,
        r#"{"schema":1,"mode":"stabilize","n":4,"gains":{"preset":"dirichlet-stabilization"},
            "plant":{"regime":"dirichlet","nu":10,"x_star":"pi","delta":1}}"#,
        r#"{"schema":1,"mode":"reproduce-table"}"#,
    ] {
        let (_d, out) = run_in(text, Some(1));
        assert_eq!(out.exit_code, EXIT_SCHEMA, "{text}: {:?}", out.error);
        assert!(out.error.is_some());
    }
    let (_d, out) = run_in(&stabilize_json(1.0, r#"{"explicit":{"k0":[1.0],"l0":[1.0]}}"#), Some(1));
    assert_eq!(out.exit_code, EXIT_SCHEMA, "{:?}", out.error);
}

#[test]
fn uncertifiable_gains_exit_with_assumption_code() {
    let (_d, out) = run_in(&stabilize_json(1.0, r#"{"explicit":{"k0":[0.0,0.0],"l0":[2.3419]}}"#), Some(1));
    assert_eq!(out.exit_code, EXIT_ASSUMPTION, "{:?}", out.error);
}

#[test]
fn singular_lyapunov_operator_exits_with_numerical_code() {
    // With zero feedback and delta = 0 the controller loop keeps the eigenvalue 0.
    let (_d, out) = run_in(&stabilize_json(0.0, r#"{"explicit":{"k0":[0.0,0.0],"l0":[2.3419]}}"#), Some(1));
    assert_eq!(out.exit_code, EXIT_NUMERICAL, "{:?}", out.error);
}

#[test]
fn undecidable_certificate_exits_with_indeterminate_code() {
    // Bisect the decay rate onto the feasibility boundary of the LMI.
    let gains = r#"{"auto":{"delta0":3.0}}"#;
    let margin_at = |delta: f64| {
        let cfg = JobConfig::from_json(&stabilize_json(delta, gains)).unwrap();
        let plant = cfg.plant().unwrap();
        let sp = SpectralModel::new(&plant, 4, 4).unwrap();
        let g = resolve_gains(cfg.gains.as_ref().unwrap(), &plant, &sp).unwrap();
        let cl = build_closed_loop(&sp, &g.k0, &g.l0).unwrap();
        solve_margin(&assemble_stab_lmi(&cl, &sp, delta, 1.0), &SolverOptions::default()).unwrap()
    };
    let (mut lo, mut hi) = (0.5, 2.9);
    assert_eq!(margin_at(lo).status, Status::Feasible);
    assert_eq!(margin_at(hi).status, Status::Infeasible);
    let mut found = None;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let c = margin_at(mid);
        match c.status {
            Status::Indeterminate => {
                found = Some(mid);
                break;
            }
            Status::Feasible => lo = mid,
            Status::Infeasible => hi = mid,
        }
    }
    let delta = found.expect("bisection must land inside the undecided band");
    let (_d, out) = run_in(&stabilize_json(delta, gains), Some(1));
    assert_eq!(out.exit_code, EXIT_INDETERMINATE, "{:?}", out.error);
}

#[test]
fn exit_codes_cover_error_classes() {
    assert_eq!(exit_code(&kse_synth::Error::Config("x".into())), EXIT_SCHEMA);
    assert_eq!(exit_code(&kse_synth::Error::Observability("x".into())), EXIT_ASSUMPTION);
    assert_eq!(exit_code(&kse_synth::Error::Indeterminate("x".into())), EXIT_INDETERMINATE);
    assert_eq!(exit_code(&kse_synth::Error::DegenerateLyapunov), EXIT_NUMERICAL);
    assert_eq!(exit_code(&kse_synth::Error::InfeasibleAtUpper { gamma: 1.0 }), 1);
}

/// CSV body with the wall-clock column removed.
fn strip_wall(csv: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| header[i] != "wall_ms").collect();
    let pick = |l: &str| {
        let f: Vec<&str> = l.split(',').collect();
        keep.iter().map(|&i| f[i]).collect::<Vec<_>>().join(",")
    };
    std::iter::once(pick(&header.join(","))).chain(lines.map(pick)).collect::<Vec<_>>().join("\n")
}

fn certificate_digests(dir: &Path) -> Vec<String> {
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["certificates"].as_array().unwrap().iter().map(|c| c["sha256"].as_str().unwrap().to_string()).collect()
}

#[test]
fn sweeps_are_deterministic_across_runs_and_threads() {
    let text = r#"{"schema":1,"mode":"min-n","gains":{"preset":"neumann-stabilization"},
                   "sweep":{"n_from":1,"n_max":10,"confirm_above":3}}"#;
    let (a, ra) = run_in(text, Some(1));
    let (b, rb) = run_in(text, Some(1));
    let (c, rc) = run_in(text, Some(3));
    for r in [&ra, &rb, &rc] {
        assert_eq!(r.exit_code, EXIT_OK, "{:?}", r.error);
    }
    let sweep = |d: &tempfile::TempDir| strip_wall(&fs::read_to_string(d.path().join("sweep.csv")).unwrap());
    assert_eq!(sweep(&a), sweep(&b));
    assert_eq!(sweep(&a), sweep(&c));
    let cert = |d: &tempfile::TempDir| fs::read_to_string(d.path().join("certificate.json")).unwrap();
    assert_eq!(cert(&a), cert(&b));
    assert_eq!(cert(&a), cert(&c));
    assert_eq!(certificate_digests(a.path()), certificate_digests(c.path()));
}

#[test]
fn zero_simulation_writes_an_all_zero_trajectory() {
    let text = r#"{"schema":1,"mode":"simulate","n":4,"gains":{"preset":"dirichlet-stabilization"},
                   "simulation":{"m":20,"horizon":0.2}}"#;
    let (d, out) = run_in(text, Some(1));
    assert_eq!(out.exit_code, EXIT_OK, "{:?}", out.error);
    let csv = fs::read_to_string(d.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,u,v,zeta,normL2_w,normH1_w,normH2_w,normH1_z,V,J");
    let mut rows = 0;
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        assert!(f[1..8].iter().all(|v| *v == "0"), "{l}");
        assert_eq!(f[9], "0");
        rows += 1;
    }
    assert_eq!(rows, 201);
}

#[test]
fn manifest_lists_every_output() {
    let text = r#"{"schema":1,"mode":"simulate","n":4,"gains":{"preset":"dirichlet-stabilization"},
                   "simulation":{"m":30,"horizon":0.5,"initial":{"kind":"cubed_bump","amplitude":25},"lyapunov":true}}"#;
    let (d, out) = run_in(text, Some(1));
    assert_eq!(out.exit_code, EXIT_OK, "{:?}", out.error);
    let m: Value = serde_json::from_str(&fs::read_to_string(d.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["mode"], "simulate");
    assert_eq!(m["threads"], 1);
    let files = m["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["name"] == "trajectory.csv"));
    assert!(files.iter().any(|f| f["name"] == "summary.txt"));
    for f in files {
        let body = fs::read(d.path().join(f["name"].as_str().unwrap())).unwrap();
        assert!(!body.is_empty());
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, body.len());
    }
    assert!(!m["certificates"].as_array().unwrap().is_empty());
}

#[test]
fn config_file_and_x_star_literal() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("job.json");
    fs::write(&path, stabilize_json(1.0, r#"{"preset":"dirichlet-stabilization"}"#)).unwrap();
    let out = run(&path, &opts(&dir.path().join("out"), Some(1)));
    assert_eq!(out.exit_code, EXIT_OK, "{:?}", out.error);
    assert!(out.summary.contains("feasible"));
    let cfg = JobConfig::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(cfg.plant().unwrap().x_star, Some(1.0 / std::f64::consts::PI));
    assert!(matches!(cfg.gains, Some(GainSpec::Preset(_))));
    let missing = run(&dir.path().join("absent.json"), &opts(dir.path(), Some(1)));
    assert_eq!(missing.exit_code, EXIT_SCHEMA);
}

#[test]
fn binary_reports_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_kse-synth");
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    fs::write(&good, stabilize_json(1.0, r#"{"preset":"dirichlet-stabilization"}"#)).unwrap();
    let st = Command::new(exe).arg(&good).arg("--outdir").arg(dir.path().join("o")).arg("--threads").arg("1").output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(dir.path().join("o/manifest.json").exists());
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "[]").unwrap();
    let st = Command::new(exe).arg(&bad).arg("--outdir").arg(dir.path().join("p")).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let st = Command::new(exe).arg("--no-such-flag").output().unwrap();
    assert_eq!(st.status.code(), Some(2));
}
