//! Job runner behind the `kse-synth` binary: executes a configured pipeline and
//! writes CSVs, certificates, a summary and a manifest into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{GainSpec, JobConfig, Mode, Table};
use crate::error::{Error, Result};
use crate::gains::{GainSet, ReducedModel};
use crate::lmi::{assemble_gain_lmi, assemble_stab_lmi, build_closed_loop, AffineMatrixInequality};
use crate::presets::{table_grid, GainPreset};
use crate::sdp::{
    min_gamma, min_n, solve_margin, FeasibilityCertificate, GammaSearch, SolverOptions, Status, SweepReport,
    TOL_GAMMA,
};
use crate::sim::{fit_decay_rate, integrate, iss_check, FIT_WINDOW};
use crate::spectral::{PlantConfig, Regime, SpectralModel};

pub const THREADS_ENV: &str = "KSE_SYNTH_THREADS";
pub const DEFAULT_OUTDIR: &str = "kse-synth-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_INDETERMINATE: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

/// Process exit status for an error class.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) | Error::InvalidArgument(_) | Error::Dimension(_) | Error::InvalidIndex { .. } => {
            EXIT_SCHEMA
        }
        Error::Assumption(_) | Error::Observability(_) | Error::Controllability(_) => EXIT_ASSUMPTION,
        Error::Indeterminate(_) => EXIT_INDETERMINATE,
        Error::NumericalAbort { .. } | Error::DegenerateLyapunov | Error::Quadrature(_) | Error::NotSymmetric(_) => {
            EXIT_NUMERICAL
        }
        Error::Io(_) | Error::InfeasibleAtUpper { .. } => EXIT_OTHER,
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides the config's output directory.
    pub outdir: Option<PathBuf>,
    /// Worker threads; falls back to KSE_SYNTH_THREADS, then rayon's default.
    pub threads: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub outdir: Option<PathBuf>,
    pub files: Vec<String>,
    pub summary: String,
    pub error: Option<String>,
}

/// Everything a job produces before it is flushed to disk.
#[derive(Default)]
struct Artifacts {
    files: Vec<(String, String)>,
    summary: String,
    certificates: Vec<Value>,
    stages: Vec<Value>,
}

impl Artifacts {
    fn file(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.summary.push_str(s.as_ref());
        self.summary.push('\n');
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let v = f();
        self.stages.push(json!({ "name": name, "wall_ms": t0.elapsed().as_secs_f64() * 1e3 }));
        v
    }

    fn certificate(&mut self, label: &str, cert: &FeasibilityCertificate) {
        self.certificates.push(json!({
            "label": label,
            "status": cert.status,
            "sha256": certificate_digest(cert),
        }));
    }
}

/// SHA-256 over the status and the decision vector (little-endian f64).
pub fn certificate_digest(cert: &FeasibilityCertificate) -> String {
    let mut h = Sha256::new();
    h.update(cert.status.to_string().as_bytes());
    for v in &cert.x {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn certificate_json(label: &str, cert: &FeasibilityCertificate) -> Value {
    let p: Vec<Vec<f64>> = cert.p.row_iter().map(|r| r.iter().copied().collect()).collect();
    json!({
        "label": label,
        "status": cert.status,
        "margin": cert.margin,
        "alpha": cert.alpha,
        "iterations": cert.iterations,
        "converged": cert.converged,
        "sha256": certificate_digest(cert),
        "verification": cert.verification,
        "p": p,
    })
}

fn resolve_threads(requested: Option<usize>) -> Result<Option<usize>> {
    if let Some(k) = requested {
        return if k == 0 { Err(Error::Config("--threads must be at least 1".into())) } else { Ok(Some(k)) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) if !s.trim().is_empty() => match s.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{s}'"))),
        },
        _ => Ok(None),
    }
}

/// Runs the job described by the config file.
pub fn run(config_path: &Path, opts: &RunOptions) -> RunOutcome {
    match fs::read_to_string(config_path) {
        Ok(text) => run_json(&text, opts),
        Err(e) => failed(None, &Error::Config(format!("cannot read {}: {e}", config_path.display()))),
    }
}

fn failed(outdir: Option<PathBuf>, e: &Error) -> RunOutcome {
    RunOutcome {
        exit_code: exit_code(e),
        outdir,
        files: Vec::new(),
        summary: String::new(),
        error: Some(e.to_string()),
    }
}

/// Runs a job from its JSON text.
pub fn run_json(text: &str, opts: &RunOptions) -> RunOutcome {
    let started = SystemTime::now();
    let t0 = Instant::now();
    let raw: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return failed(opts.outdir.clone(), &Error::Config(e.to_string())),
    };
    let cfg = match JobConfig::from_json(text) {
        Ok(c) => c,
        Err(e) => return failed(opts.outdir.clone(), &e),
    };
    let outdir = opts
        .outdir
        .clone()
        .or_else(|| cfg.outdir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTDIR));
    let threads = match resolve_threads(opts.threads) {
        Ok(t) => t,
        Err(e) => return failed(Some(outdir), &e),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => return failed(Some(outdir), &Error::Config(format!("thread pool: {e}"))),
    };
    let mut art = Artifacts::default();
    let result = pool.install(|| execute(&cfg, &mut art));
    let (code, err) = match &result {
        Ok(()) => (EXIT_OK, None),
        Err(e) => {
            art.line(format!("error: {e}"));
            (exit_code(e), Some(e.to_string()))
        }
    };
    art.file("summary.txt", art.summary.clone());

    let written = match write_outputs(&outdir, &art) {
        Ok(w) => w,
        Err(e) => return failed(Some(outdir), &e),
    };
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "schema": cfg.schema,
        "mode": cfg.mode,
        "config": raw,
        "threads": pool.current_num_threads(),
        "started_unix_ms": unix_ms(started),
        "finished_unix_ms": unix_ms(SystemTime::now()),
        "wall_ms": t0.elapsed().as_secs_f64() * 1e3,
        "stages": art.stages,
        "exit_code": code,
        "error": err,
        "files": written,
        "certificates": art.certificates,
    });
    let manifest_text = serde_json::to_string_pretty(&manifest).unwrap_or_default() + "\n";
    if let Err(e) = fs::write(outdir.join("manifest.json"), manifest_text) {
        return failed(Some(outdir), &Error::Io(e));
    }
    let mut files: Vec<String> = art.files.iter().map(|(n, _)| n.clone()).collect();
    files.push("manifest.json".into());
    RunOutcome { exit_code: code, outdir: Some(outdir), files, summary: art.summary, error: err }
}

fn unix_ms(t: SystemTime) -> u128 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn write_outputs(outdir: &Path, art: &Artifacts) -> Result<Vec<Value>> {
    fs::create_dir_all(outdir)?;
    let mut listed = Vec::new();
    for (name, body) in &art.files {
        fs::write(outdir.join(name), body)?;
        listed.push(json!({
            "name": name,
            "bytes": body.len(),
            "sha256": hex(&Sha256::digest(body.as_bytes())),
        }));
    }
    Ok(listed)
}

fn execute(cfg: &JobConfig, art: &mut Artifacts) -> Result<()> {
    match cfg.mode {
        Mode::Stabilize => stabilize(cfg, art),
        Mode::MinN => min_n_job(cfg, art),
        Mode::MinGamma => min_gamma_job(cfg, art),
        Mode::Simulate => simulate(cfg, art),
        Mode::ReproduceTable => reproduce_table(cfg.table.expect("validated"), art),
    }
}

/// Resolves the gain specification against the plant's reduced model.
pub fn resolve_gains(spec: &GainSpec, plant: &PlantConfig, spectral: &SpectralModel) -> Result<GainSet> {
    let model = ReducedModel::build(spectral)?;
    match spec {
        GainSpec::Preset(p) => GainSet::certify(&model, p.k0(), p.l0(), plant.delta),
        GainSpec::Explicit { k0, l0 } => GainSet::certify(
            &model,
            nalgebra::DVector::from_column_slice(k0),
            nalgebra::DVector::from_column_slice(l0),
            plant.delta,
        ),
        GainSpec::Auto { delta0 } => GainSet::design(&model, *delta0, plant.delta),
    }
}

fn spectral_checked(plant: &PlantConfig, n: usize, m: usize) -> Result<SpectralModel> {
    let sp = SpectralModel::new(plant, n, m)?;
    sp.verify_assumptions()?;
    Ok(sp)
}

fn stab_ami(plant: &PlantConfig, gains: &GainSet, n: usize) -> Result<AffineMatrixInequality> {
    let sp = spectral_checked(plant, n, n)?;
    let cl = build_closed_loop(&sp, &gains.k0, &gains.l0)?;
    Ok(assemble_stab_lmi(&cl, &sp, plant.delta, plant.sobolev_split))
}

fn gain_ami(plant: &PlantConfig, gains: &GainSet, n: usize, gamma: f64) -> Result<AffineMatrixInequality> {
    let sp = spectral_checked(plant, n, n)?;
    let cl = build_closed_loop(&sp, &gains.k0, &gains.l0)?;
    Ok(assemble_gain_lmi(&cl, &sp, plant.delta, gamma, plant.rho_w, plant.rho_u, plant.sobolev_split))
}

fn describe_plant(plant: &PlantConfig, n0: usize, gains: &GainSet, art: &mut Artifacts) {
    let xs = plant.x_star.map(|x| format!(", x* = {x:.6}")).unwrap_or_default();
    art.line(format!(
        "plant: {:?}, nu = {}, delta = {}{xs}, N0 = {n0}",
        plant.regime, plant.nu, plant.delta
    ));
    art.line(format!("K0 = {:?}", gains.k0.as_slice()));
    art.line(format!("L0 = {:?}", gains.l0.as_slice()));
}

/// Spectral model at N = max(N0, n), M = N, used for gain resolution.
fn base_spectral(plant: &PlantConfig, n: usize) -> Result<SpectralModel> {
    plant.validate()?;
    let n0 = crate::spectral::unstable_mode_count(plant.nu, plant.delta, plant.regime);
    let n = n.max(n0).max(plant.regime.first_mode());
    spectral_checked(plant, n, n)
}

fn stabilize(cfg: &JobConfig, art: &mut Artifacts) -> Result<()> {
    let plant = cfg.plant()?;
    let n = cfg.n.expect("validated");
    let sp = spectral_checked(&plant, n, n)?;
    let gains = resolve_gains(cfg.gains.as_ref().expect("validated"), &plant, &sp)?;
    describe_plant(&plant, sp.n0, &gains, art);
    let ami = stab_ami(&plant, &gains, n)?;
    let t0 = Instant::now();
    let cert = art.stage("solve", || solve_margin(&ami, &SolverOptions::default()))?;
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    let mut report = SweepReport::default();
    report.push(crate::sdp::SweepRow { n, gamma: None, status: cert.status, margin: cert.margin, wall_ms: ms });
    art.file("sweep.csv", report.to_csv());
    art.line(format!("stabilization LMI at N = {n}: {} (margin {:.6e})", cert.status, cert.margin));
    let label = format!("stabilization N={n}");
    art.certificate(&label, &cert);
    art.file("certificate.json", pretty(&certificate_json(&label, &cert)));
    if cert.status == Status::Indeterminate {
        return Err(Error::Indeterminate(format!("stabilization LMI at N = {n}")));
    }
    Ok(())
}

fn min_n_job(cfg: &JobConfig, art: &mut Artifacts) -> Result<()> {
    let plant = cfg.plant()?;
    let sweep = cfg.sweep.as_ref().expect("validated");
    let sp = base_spectral(&plant, sweep.n_from)?;
    let gains = resolve_gains(cfg.gains.as_ref().expect("validated"), &plant, &sp)?;
    describe_plant(&plant, sp.n0, &gains, art);
    let n_from = sweep.n_from.max(sp.n0).max(1);
    if n_from > sweep.n_from {
        art.line(format!("N < {n_from} skipped (below N0)"));
    }
    if n_from > sweep.n_max {
        return Err(Error::Config(format!("n_max = {} is below N0 = {}", sweep.n_max, sp.n0)));
    }
    let opts = SolverOptions::deciding();
    let res = art.stage("scan", || min_n(|n| stab_ami(&plant, &gains, n), n_from, sweep.n_max, &opts))?;
    let mut report = res.report.clone();
    let undecided: Vec<usize> =
        report.rows.iter().filter(|r| r.status == Status::Indeterminate).map(|r| r.n).collect();
    match (res.n_star, &res.certificate) {
        (Some(ns), Some(cert)) => {
            art.line(format!("N* = {ns}"));
            let label = format!("stabilization N={ns}");
            art.certificate(&label, cert);
            art.file("certificate.json", pretty(&certificate_json(&label, cert)));
            if sweep.confirm_above > 0 {
                let above: Vec<usize> = (ns + 1..=ns + sweep.confirm_above).collect();
                let extra = art.stage("confirm", || {
                    above
                        .par_iter()
                        .map(|&n| {
                            let ami = stab_ami(&plant, &gains, n)?;
                            let t0 = Instant::now();
                            let c = solve_margin(&ami, &opts)?;
                            Ok(crate::sdp::SweepRow {
                                n,
                                gamma: None,
                                status: c.status,
                                margin: c.margin,
                                wall_ms: t0.elapsed().as_secs_f64() * 1e3,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                let violations: Vec<usize> =
                    extra.iter().filter(|r| r.status != Status::Feasible).map(|r| r.n).collect();
                art.line(format!(
                    "monotonicity N* + 1 ..= N* + {}: {} violation(s){}",
                    sweep.confirm_above,
                    violations.len(),
                    if violations.is_empty() { String::new() } else { format!(" at N = {violations:?}") }
                ));
                report.rows.extend(extra);
            }
        }
        _ => art.line(format!("no feasible N in {n_from} ..= {}", sweep.n_max)),
    }
    art.file("sweep.csv", report.to_csv());
    if !undecided.is_empty() {
        let msg = format!("stabilization LMI undecided at N = {undecided:?}");
        if res.n_star.is_none() {
            return Err(Error::Indeterminate(msg));
        }
        art.line(format!("{msg}; N* is an upper bound"));
    }
    Ok(())
}

/// Notes an undecided probe just below the answer: the reported gamma stays
/// certified but is only an upper bound on the grid minimum.
fn bracket_note(search: &GammaSearch, tol: f64) -> Option<String> {
    let below = search.gamma - tol;
    search
        .report
        .rows
        .iter()
        .find(|r| r.gamma.is_some_and(|g| (g - below).abs() < 1e-9 * tol.max(1.0)))
        .filter(|r| r.status == Status::Indeterminate)
        .map(|r| format!("N = {}: gamma = {below:.4} undecided (margin {:.3e}); {:.4} is an upper bound", r.n, r.margin, search.gamma))
}

fn min_gamma_job(cfg: &JobConfig, art: &mut Artifacts) -> Result<()> {
    let plant = cfg.plant()?;
    let n = cfg.n.expect("validated");
    let br = cfg.gamma.as_ref().expect("validated");
    let sp = spectral_checked(&plant, n, n)?;
    let gains = resolve_gains(cfg.gains.as_ref().expect("validated"), &plant, &sp)?;
    describe_plant(&plant, sp.n0, &gains, art);
    art.line(format!("weights: rho_w = {}, rho_u = {}", plant.rho_w, plant.rho_u));
    let opts = SolverOptions::deciding();
    let res = art.stage("bisection", || {
        min_gamma(|g| gain_ami(&plant, &gains, n, g), br.lo, br.hi, br.tol, n, &opts)
    });
    let search = match res {
        Ok(s) => s,
        Err(e @ Error::InfeasibleAtUpper { .. }) => {
            art.line(format!("N = {n}: infeasible at the upper bracket gamma = {}", br.hi));
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    art.file("sweep.csv", search.report.to_csv());
    art.line(format!("N = {n}: minimal gamma = {:.4} (tol {})", search.gamma, br.tol));
    let label = format!("gain N={n} gamma={:.4}", search.gamma);
    art.certificate(&label, &search.certificate);
    art.file("certificate.json", pretty(&certificate_json(&label, &search.certificate)));
    if let Some(note) = bracket_note(&search, br.tol) {
        art.line(note);
    }
    Ok(())
}

fn simulate(cfg: &JobConfig, art: &mut Artifacts) -> Result<()> {
    let plant = cfg.plant()?;
    let n = cfg.n.expect("validated");
    let s = cfg.simulation.as_ref().expect("validated");
    let sp = spectral_checked(&plant, n, s.m.max(n))?;
    let gains = resolve_gains(cfg.gains.as_ref().expect("validated"), &plant, &sp)?;
    describe_plant(&plant, sp.n0, &gains, art);
    let mut sc = s.scenario(&plant, n, gains.k0.clone(), gains.l0.clone())?;
    if s.lyapunov {
        let ami = stab_ami(&plant, &gains, n)?;
        let cert = art.stage("certify", || solve_margin(&ami, &SolverOptions::default()))?;
        let label = format!("stabilization N={n}");
        art.certificate(&label, &cert);
        art.file("certificate.json", pretty(&certificate_json(&label, &cert)));
        art.line(format!("stabilization LMI at N = {n}: {} (margin {:.6e})", cert.status, cert.margin));
        match cert.status {
            Status::Feasible => sc.lyapunov = Some(cert.p.clone()),
            Status::Indeterminate => {
                return Err(Error::Indeterminate(format!("stabilization LMI at N = {n}")));
            }
            Status::Infeasible => art.line("no Lyapunov certificate; V is reported as nan"),
        }
    }
    let traj = art.stage("integrate", || integrate(&sc))?;
    art.file("trajectory.csv", traj.to_csv(s.modes_in_csv));
    let last = traj.len() - 1;
    art.line(format!(
        "simulated {} samples on [0, {}] with h = {}, M = {}",
        traj.len(),
        s.horizon,
        s.step,
        s.m
    ));
    art.line(format!(
        "final: ||w||_L2 = {:.6e}, ||w||_H1 = {:.6e}, u = {:.6e}",
        traj.norms[last].l2_w, traj.norms[last].h1_w, traj.u[last]
    ));
    let jmax = traj.j.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    art.line(format!("max J(t) = {jmax:.6e} (gamma = {})", s.gamma));
    let ch = traj.decay_channel();
    if let Ok(rate) = fit_decay_rate(&traj.t, &ch, FIT_WINDOW.0, FIT_WINDOW.1) {
        art.line(format!("fitted decay rate of ||w||_H1 + |u| on [{}, {}]: {rate:.4}", FIT_WINDOW.0, FIT_WINDOW.1));
    }
    if sc.lyapunov.is_some() && plant.delta > 0.0 && s.gamma > 0.0 {
        let excess = iss_check(&traj, plant.delta, s.gamma)?;
        art.line(format!("ISS bound excess (<= 0 holds): {excess:.6e}"));
    }
    Ok(())
}

/// Upper gamma bracket for each published table row.
fn table_bracket(table: Table, preset: GainPreset) -> f64 {
    match (table, preset.is_l2()) {
        (Table::I, false) => 10.0,
        (Table::I, true) => 40.0,
        (Table::II, false) => 20.0,
        (Table::II, true) => 60.0,
    }
}

/// One table row kind over the N grid.
pub struct TableRow {
    pub preset: GainPreset,
    pub n: usize,
    pub outcome: Result<GammaSearch>,
}

/// Runs min_gamma for both rows of a published table over its N grid, in parallel.
pub fn table_sweeps(table: Table) -> Result<Vec<TableRow>> {
    let (iss, l2) = table.presets();
    let grid = table_grid(table.regime());
    let tasks: Vec<(GainPreset, usize)> =
        [iss, l2].into_iter().flat_map(|p| grid.iter().map(move |&n| (p, n))).collect();
    let mut gainsets = Vec::new();
    for p in [iss, l2] {
        let plant = p.plant();
        let sp = spectral_checked(&plant, grid[0], grid[0])?;
        gainsets.push((p, resolve_gains(&GainSpec::Preset(p), &plant, &sp)?));
    }
    let opts = SolverOptions::deciding();
    Ok(tasks
        .par_iter()
        .map(|&(p, n)| {
            let plant = p.plant();
            let gains = &gainsets.iter().find(|(q, _)| *q == p).expect("resolved").1;
            let hi = table_bracket(table, p);
            TableRow {
                preset: p,
                n,
                outcome: min_gamma(|g| gain_ami(&plant, gains, n, g), None, hi, TOL_GAMMA, n, &opts),
            }
        })
        .collect())
}

fn reproduce_table(table: Table, art: &mut Artifacts) -> Result<()> {
    let regime = table.regime();
    art.line(format!(
        "table {table:?} ({}): minimal gamma per N, tol {TOL_GAMMA}",
        match regime {
            Regime::Dirichlet => "Dirichlet",
            Regime::Neumann => "Neumann",
        }
    ));
    let rows = art.stage("sweeps", || table_sweeps(table))?;
    let grid = table_grid(regime);
    let (iss, l2) = table.presets();
    let mut csv = String::from("N,gamma_ISS,gamma_L2\n");
    let mut sweep = String::from("row,N,gamma,status,margin,wall_ms\n");
    let mut first_err: Option<Error> = None;
    let mut notes = Vec::new();
    for &n in &grid {
        let mut cells = Vec::new();
        for p in [iss, l2] {
            let row = rows.iter().find(|r| r.preset == p && r.n == n).expect("every task ran");
            let kind = if p.is_l2() { "L2" } else { "ISS" };
            match &row.outcome {
                Ok(s) => {
                    cells.push(format!("{:.4}", s.gamma));
                    for line in s.report.to_csv().lines().skip(1) {
                        let _ = writeln!(sweep, "{kind},{line}");
                    }
                    art.certificate(&format!("{kind} N={n} gamma={:.4}", s.gamma), &s.certificate);
                    if let Some(note) = bracket_note(s, TOL_GAMMA) {
                        notes.push(format!("{kind} {note}"));
                    }
                }
                Err(e) => {
                    cells.push(String::new());
                    art.line(format!("{kind} N = {n}: {e}"));
                    first_err.get_or_insert(clone_error(e));
                }
            }
        }
        let _ = writeln!(csv, "{n},{},{}", cells[0], cells[1]);
        art.line(format!("N = {n}: gamma_ISS = {}, gamma_L2 = {}", cells[0], cells[1]));
    }
    for note in notes {
        art.line(note);
    }
    art.file("table.csv", csv);
    art.file("sweep.csv", sweep);
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Error classes are plain data except for I/O and JSON, which are re-wrapped.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::InfeasibleAtUpper { gamma } => Error::InfeasibleAtUpper { gamma: *gamma },
        Error::Indeterminate(s) => Error::Indeterminate(s.clone()),
        Error::Assumption(s) => Error::Assumption(s.clone()),
        Error::NumericalAbort { time, reason } => Error::NumericalAbort { time: *time, reason: reason.clone() },
        other => match exit_code(other) {
            EXIT_SCHEMA => Error::Config(other.to_string()),
            EXIT_ASSUMPTION => Error::Assumption(other.to_string()),
            EXIT_NUMERICAL => Error::NumericalAbort { time: f64::NAN, reason: other.to_string() },
            _ => Error::InvalidArgument(other.to_string()),
        },
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).unwrap_or_default() + "\n"
}
