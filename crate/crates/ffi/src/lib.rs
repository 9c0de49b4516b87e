//! C ABI for kse-synth.
//!
//! Every entry point returns a `KseStatus`; on failure the message is
//! available from `kse_last_error_message` on the same thread. Handles are
//! opaque, created by `*_new`/producer functions and released by `*_free`.
//! Panics are caught at the boundary and reported as `KSE_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use kse_synth::cli::{self, RunOptions};
use kse_synth::config::SimulationSection;
use kse_synth::gains::{GainSet, ReducedModel};
use kse_synth::lmi::{assemble_gain_lmi, assemble_stab_lmi, build_closed_loop};
use kse_synth::sdp::{min_gamma, solve_margin, FeasibilityCertificate, SolverOptions, Status};
use kse_synth::sim::{integrate, Trajectory};
use kse_synth::spectral::{PlantConfig, SpectralModel};
use kse_synth::Error;
use nalgebra::DVector;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KseStatus {
    Ok = 0,
    Null = 1,
    InvalidArgument = 2,
    Schema = 3,
    Assumption = 4,
    Indeterminate = 5,
    Numerical = 6,
    InfeasibleAtUpper = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
    /// A job ran but failed for a reason outside the classes above.
    Failed = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KseVerdict {
    Feasible = 0,
    Infeasible = 1,
    Indeterminate = 2,
}

/// Plant parameters (regime, nu, delta, sensing point, weights).
pub struct KsePlant {
    inner: PlantConfig,
}

/// Result of an LMI solve.
pub struct KseCertificate {
    inner: FeasibilityCertificate,
    gamma: f64,
}

/// Sampled closed-loop run.
pub struct KseTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &Error) -> KseStatus {
    match e {
        Error::Config(_) | Error::Json(_) => KseStatus::Schema,
        Error::InvalidArgument(_) | Error::Dimension(_) | Error::InvalidIndex { .. } => KseStatus::InvalidArgument,
        Error::Assumption(_) | Error::Observability(_) | Error::Controllability(_) => KseStatus::Assumption,
        Error::Indeterminate(_) => KseStatus::Indeterminate,
        Error::NumericalAbort { .. } | Error::DegenerateLyapunov | Error::Quadrature(_) | Error::NotSymmetric(_) => {
            KseStatus::Numerical
        }
        Error::InfeasibleAtUpper { .. } => KseStatus::InfeasibleAtUpper,
        Error::Io(_) => KseStatus::Io,
    }
}

/// Runs `f` behind a panic guard and records any error message.
fn guard(f: impl FnOnce() -> Result<(), (KseStatus, String)>) -> KseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            KseStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            KseStatus::Panic
        }
    }
}

fn core(e: Error) -> (KseStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (KseStatus, String) {
    (KseStatus::Null, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (KseStatus, String) {
    (KseStatus::InvalidArgument, msg.into())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (KseStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (KseStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn plant_ref<'a>(p: *const KsePlant) -> Result<&'a PlantConfig, (KseStatus, String)> {
    p.as_ref().map(|p| &p.inner).ok_or_else(|| null("plant"))
}

/// Gains checked against the plant's reduced model at decay rate delta.
unsafe fn gains(
    plant: &PlantConfig,
    n: usize,
    k0: *const f64,
    k0_len: usize,
    l0: *const f64,
    l0_len: usize,
) -> Result<(SpectralModel, GainSet), (KseStatus, String)> {
    let k0 = DVector::from_column_slice(slice(k0, k0_len, "k0")?);
    let l0 = DVector::from_column_slice(slice(l0, l0_len, "l0")?);
    let sp = SpectralModel::new(plant, n, n).map_err(core)?;
    sp.verify_assumptions().map_err(core)?;
    let model = ReducedModel::build(&sp).map_err(core)?;
    let g = GainSet::certify(&model, k0, l0, plant.delta).map_err(core)?;
    Ok((sp, g))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread ("" after a success).
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn kse_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Dirichlet-actuated plant sensed at x_star.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn kse_plant_new_dirichlet(nu: f64, x_star: f64, delta: f64, out: *mut *mut KsePlant) -> KseStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = PlantConfig::dirichlet(nu, x_star, delta);
        p.validate().map_err(core)?;
        put(out, KsePlant { inner: p });
        Ok(())
    })
}

/// Neumann-actuated plant with the given Sobolev split.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn kse_plant_new_neumann(
    nu: f64,
    sobolev_split: f64,
    delta: f64,
    out: *mut *mut KsePlant,
) -> KseStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = PlantConfig::neumann(nu, sobolev_split, delta);
        p.validate().map_err(core)?;
        put(out, KsePlant { inner: p });
        Ok(())
    })
}

/// Sets the performance weights used by the gain LMI and J.
///
/// # Safety
/// `plant` must be a handle from `kse_plant_new_*` or null.
#[no_mangle]
pub unsafe extern "C" fn kse_plant_set_weights(plant: *mut KsePlant, rho_w: f64, rho_u: f64) -> KseStatus {
    guard(|| {
        let p = plant.as_mut().ok_or_else(|| null("plant"))?;
        let next = p.inner.clone().with_weights(rho_w, rho_u);
        next.validate().map_err(core)?;
        p.inner = next;
        Ok(())
    })
}

/// Gain lengths the plant expects: K0 acts on [u, w_low], L0 on w_low.
///
/// # Safety
/// `plant` must be live; `k0_len` and `l0_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kse_plant_gain_dims(plant: *const KsePlant, k0_len: *mut usize, l0_len: *mut usize) -> KseStatus {
    guard(|| {
        let p = plant_ref(plant)?;
        if k0_len.is_null() || l0_len.is_null() {
            return Err(null("out"));
        }
        let n0 = kse_synth::spectral::unstable_mode_count(p.nu, p.delta, p.regime).max(1);
        let model = ReducedModel::build(&SpectralModel::new(p, n0, n0).map_err(core)?).map_err(core)?;
        *k0_len = model.atilde0.nrows();
        *l0_len = model.a0.nrows();
        Ok(())
    })
}

/// # Safety
/// `plant` must be a handle from `kse_plant_new_*` that is not used again, or null.
#[no_mangle]
pub unsafe extern "C" fn kse_plant_free(plant: *mut KsePlant) {
    if !plant.is_null() {
        drop(Box::from_raw(plant));
    }
}

/// Solves the stabilization LMI at observer dimension n. A certificate is
/// returned for every verdict; inspect it with `kse_certificate_verdict`.
///
/// # Safety
/// `plant` must be live; `k0`/`l0` must point to `k0_len`/`l0_len` doubles;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kse_stab_check(
    plant: *const KsePlant,
    k0: *const f64,
    k0_len: usize,
    l0: *const f64,
    l0_len: usize,
    n: usize,
    out: *mut *mut KseCertificate,
) -> KseStatus {
    guard(|| {
        let p = plant_ref(plant)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let (sp, g) = gains(p, n, k0, k0_len, l0, l0_len)?;
        let cl = build_closed_loop(&sp, &g.k0, &g.l0).map_err(core)?;
        let ami = assemble_stab_lmi(&cl, &sp, p.delta, p.sobolev_split);
        let cert = solve_margin(&ami, &SolverOptions::default()).map_err(core)?;
        put(out, KseCertificate { inner: cert, gamma: f64::NAN });
        Ok(())
    })
}

/// Smallest gamma on the grid tol * k with a feasible gain LMI at dimension n.
/// Pass gamma_lo <= 0 to start the bracket at zero. `out_cert` may be null.
///
/// # Safety
/// As for `kse_stab_check`; `out_gamma` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kse_min_gamma(
    plant: *const KsePlant,
    k0: *const f64,
    k0_len: usize,
    l0: *const f64,
    l0_len: usize,
    n: usize,
    gamma_lo: f64,
    gamma_hi: f64,
    tol: f64,
    out_gamma: *mut f64,
    out_cert: *mut *mut KseCertificate,
) -> KseStatus {
    guard(|| {
        let p = plant_ref(plant)?;
        if out_gamma.is_null() {
            return Err(null("out_gamma"));
        }
        let (sp, g) = gains(p, n, k0, k0_len, l0, l0_len)?;
        let cl = build_closed_loop(&sp, &g.k0, &g.l0).map_err(core)?;
        let lo = (gamma_lo > 0.0).then_some(gamma_lo);
        let search = min_gamma(
            |gamma| Ok(assemble_gain_lmi(&cl, &sp, p.delta, gamma, p.rho_w, p.rho_u, p.sobolev_split)),
            lo,
            gamma_hi,
            tol,
            n,
            &SolverOptions::deciding(),
        )
        .map_err(core)?;
        *out_gamma = search.gamma;
        if !out_cert.is_null() {
            put(out_cert, KseCertificate { inner: search.certificate, gamma: search.gamma });
        }
        Ok(())
    })
}

unsafe fn cert_ref<'a>(c: *const KseCertificate) -> Result<&'a KseCertificate, (KseStatus, String)> {
    c.as_ref().ok_or_else(|| null("certificate"))
}

/// # Safety
/// `cert` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kse_certificate_verdict(cert: *const KseCertificate, out: *mut KseVerdict) -> KseStatus {
    guard(|| {
        let c = cert_ref(cert)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = match c.inner.status {
            Status::Feasible => KseVerdict::Feasible,
            Status::Infeasible => KseVerdict::Infeasible,
            Status::Indeterminate => KseVerdict::Indeterminate,
        };
        Ok(())
    })
}

/// Verified margin -lambda_max of the equilibrated LMI (positive when feasible).
///
/// # Safety
/// `cert` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kse_certificate_margin(cert: *const KseCertificate, out: *mut f64) -> KseStatus {
    guard(|| {
        let c = cert_ref(cert)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = c.inner.margin;
        Ok(())
    })
}

/// gamma the certificate was computed at (NaN for stabilization certificates).
///
/// # Safety
/// `cert` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kse_certificate_gamma(cert: *const KseCertificate, out: *mut f64) -> KseStatus {
    guard(|| {
        let c = cert_ref(cert)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = c.gamma;
        Ok(())
    })
}

/// Copies the Lyapunov matrix P (row-major, dim x dim) into `buf`.
/// `dim` is always written; KSE_STATUS_BUFFER_TOO_SMALL if len < dim * dim.
///
/// # Safety
/// `cert` must be live; `buf` must hold `len` doubles (may be null when len is 0);
/// `dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kse_certificate_p(
    cert: *const KseCertificate,
    buf: *mut f64,
    len: usize,
    dim: *mut usize,
) -> KseStatus {
    guard(|| {
        let c = cert_ref(cert)?;
        if dim.is_null() {
            return Err(null("dim"));
        }
        let p = &c.inner.p;
        *dim = p.nrows();
        let need = p.nrows() * p.ncols();
        if len < need {
            return Err((KseStatus::BufferTooSmall, format!("P needs {need} doubles, got {len}")));
        }
        if need > 0 && buf.is_null() {
            return Err(null("buf"));
        }
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                *buf.add(i * p.ncols() + j) = p[(i, j)];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `cert` must be a handle returned by this library that is not used again, or null.
#[no_mangle]
pub unsafe extern "C" fn kse_certificate_free(cert: *mut KseCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}

/// Simulates the closed loop. `simulation_json` uses the `simulation` section
/// of the job configuration (fields m, horizon, step, record_every, initial,
/// disturbance, noise, gamma); null means M = 60 with every input zero.
///
/// # Safety
/// As for `kse_stab_check`; `simulation_json` must be NUL-terminated or null.
#[no_mangle]
pub unsafe extern "C" fn kse_simulate(
    plant: *const KsePlant,
    k0: *const f64,
    k0_len: usize,
    l0: *const f64,
    l0_len: usize,
    n: usize,
    simulation_json: *const c_char,
    out: *mut *mut KseTrajectory,
) -> KseStatus {
    guard(|| {
        let p = plant_ref(plant)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let section: SimulationSection = if simulation_json.is_null() {
            serde_json::from_str(r#"{"m":60}"#).expect("default section parses")
        } else {
            serde_json::from_str(text(simulation_json, "simulation_json")?)
                .map_err(|e| (KseStatus::Schema, e.to_string()))?
        };
        let (_, g) = gains(p, n, k0, k0_len, l0, l0_len)?;
        let sc = section.scenario(p, n, g.k0, g.l0).map_err(core)?;
        let traj = integrate(&sc).map_err(core)?;
        put(out, KseTrajectory { inner: traj });
        Ok(())
    })
}

/// # Safety
/// `traj` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kse_trajectory_len(traj: *const KseTrajectory, out: *mut usize) -> KseStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = t.inner.len();
        Ok(())
    })
}

/// Copies a named channel (t, u, v, zeta, normL2_w, normH1_w, normH2_w,
/// normH1_z, V, J) into `buf`; KSE_STATUS_BUFFER_TOO_SMALL if len is short.
///
/// # Safety
/// `traj` must be live; `name` NUL-terminated; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kse_trajectory_column(
    traj: *const KseTrajectory,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> KseStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("trajectory"))?;
        let name = text(name, "name")?;
        let col = t.inner.column(name).ok_or_else(|| invalid(format!("unknown column '{name}'")))?;
        if len < col.len() {
            return Err((KseStatus::BufferTooSmall, format!("column needs {} doubles, got {len}", col.len())));
        }
        if buf.is_null() && !col.is_empty() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(col.as_ptr(), buf, col.len());
        Ok(())
    })
}

/// # Safety
/// `traj` must be a handle returned by this library that is not used again, or null.
#[no_mangle]
pub unsafe extern "C" fn kse_trajectory_free(traj: *mut KseTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Runs a full job from its JSON text, writing artifacts under `outdir`
/// (null: the config's own or the default). `exit_code` (nullable) receives
/// the command-line exit status of the job.
///
/// # Safety
/// `json` must be NUL-terminated; `outdir` NUL-terminated or null; `exit_code`
/// writable or null.
#[no_mangle]
pub unsafe extern "C" fn kse_run_config_json(
    json: *const c_char,
    outdir: *const c_char,
    exit_code: *mut c_int,
) -> KseStatus {
    guard(|| {
        let json = text(json, "json")?;
        let outdir = if outdir.is_null() { None } else { Some(PathBuf::from(text(outdir, "outdir")?)) };
        let out = cli::run_json(json, &RunOptions { outdir, threads: None });
        if !exit_code.is_null() {
            *exit_code = out.exit_code;
        }
        let status = match out.exit_code {
            cli::EXIT_OK => return Ok(()),
            cli::EXIT_SCHEMA => KseStatus::Schema,
            cli::EXIT_ASSUMPTION => KseStatus::Assumption,
            cli::EXIT_INDETERMINATE => KseStatus::Indeterminate,
            cli::EXIT_NUMERICAL => KseStatus::Numerical,
            _ => KseStatus::Failed,
        };
        Err((status, out.error.unwrap_or_default()))
    })
}
