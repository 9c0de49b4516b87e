//! Reduced-order model of the modes that need feedback, single-input pole
//! placement for the controller and observer gains, and their Lyapunov
//! certificates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_pd, diag, solve_lyapunov};
use crate::spectral::{Regime, SpectralModel};

/// Spacing between consecutive assigned poles below -delta0.
pub const POLE_SPACING: f64 = 1.0;

/// Pivot tolerance of the positive-definiteness test on the Jacobi-scaled
/// certificate, a small multiple of the Cholesky rounding bound. Lyapunov
/// solutions of non-normal loops at a tight margin are legitimately this
/// badly conditioned.
pub const PD_TOL: f64 = 1e-13;

/// Matrices of the modes handled by the finite-dimensional controller.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedModel {
    pub regime: Regime,
    /// Low mode indices (1..=N0 Dirichlet, 0..=N0 Neumann).
    pub modes: Vec<usize>,
    /// diag(-lambda_n^2 + nu lambda_n) over the low modes.
    pub a0: DMatrix<f64>,
    /// Controller-state matrix over [u, w_low]; Neumann adds the nu u -> w_0 entry.
    pub atilde0: DMatrix<f64>,
    /// [1, b_low].
    pub btilde0: DVector<f64>,
    /// Sensing coefficients of the low modes.
    pub c0: DVector<f64>,
}

impl ReducedModel {
    pub fn build(spectral: &SpectralModel) -> Result<Self> {
        spectral.verify_assumptions()?;
        let modes: Vec<usize> = spectral.low_modes().collect();
        let rates: Vec<f64> = modes.iter().map(|&k| spectral.rate(k)).collect();
        let nl = modes.len();
        let mut atilde0 = DMatrix::zeros(nl + 1, nl + 1);
        for (i, r) in rates.iter().enumerate() {
            atilde0[(i + 1, i + 1)] = *r;
        }
        if spectral.regime == Regime::Neumann {
            // Mode 0 is driven by nu * u through the shifted boundary profile.
            atilde0[(1, 0)] = spectral.nu;
        }
        let mut btilde0 = DVector::zeros(nl + 1);
        btilde0[0] = 1.0;
        let mut c0 = DVector::zeros(nl);
        for (i, &k) in modes.iter().enumerate() {
            btilde0[i + 1] = spectral.b[spectral.pos(k)];
            c0[i] = spectral.c[spectral.pos(k)];
        }
        Ok(ReducedModel { regime: spectral.regime, modes, a0: diag(&rates), atilde0, btilde0, c0 })
    }

    /// A0 - L0 C0.
    pub fn observer_matrix(&self, l0: &DVector<f64>) -> DMatrix<f64> {
        &self.a0 - l0 * self.c0.transpose()
    }

    /// Atilde0 + Btilde0 K0.
    pub fn controller_matrix(&self, k0: &DVector<f64>) -> DMatrix<f64> {
        &self.atilde0 + &self.btilde0 * k0.transpose()
    }
}

/// Assigned poles -delta0 - k * spacing, k = 0..n-1.
pub fn target_poles(n: usize, delta0: f64) -> Vec<f64> {
    (0..n).map(|k| -delta0 - k as f64 * POLE_SPACING).collect()
}

/// Single-input eigenvalue assignment (Ackermann): returns k with
/// spec(A - b k^T) equal to the given real poles.
pub fn place_siso(a: &DMatrix<f64>, b: &DVector<f64>, poles: &[f64]) -> Result<DVector<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n || poles.len() != n {
        return Err(Error::Dimension("pole placement operands".into()));
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = a * col;
    }
    let sv = ctrb.singular_values();
    if !(sv.min() > 1e-12 * sv.max()) {
        return Err(Error::Controllability("pair is not controllable".into()));
    }
    let mut pa = DMatrix::<f64>::identity(n, n);
    for &s in poles {
        pa = &pa * (a - DMatrix::<f64>::identity(n, n) * s);
    }
    let mut en = DVector::zeros(n);
    en[n - 1] = 1.0;
    let z = ctrb
        .transpose()
        .lu()
        .solve(&en)
        .ok_or_else(|| Error::Controllability("singular controllability matrix".into()))?;
    Ok(pa.transpose() * z)
}

fn check_distinct(values: &[f64]) -> bool {
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            let scale = values[i].abs().max(values[j].abs()).max(1.0);
            if (values[i] - values[j]).abs() <= 1e-12 * scale {
                return false;
            }
        }
    }
    true
}

/// L0 with spec(A0 - L0 C0) = {-delta0 - k}.
pub fn place_observer_gain(model: &ReducedModel, delta0: f64) -> Result<DVector<f64>> {
    let diag_a: Vec<f64> = model.a0.diagonal().iter().copied().collect();
    if !check_distinct(&diag_a) {
        return Err(Error::Observability("repeated modal rates in A0".into()));
    }
    if let Some(i) = model.c0.iter().position(|c| c.abs() <= crate::spectral::TOL_SENSING) {
        return Err(Error::Observability(format!("sensing coefficient of low mode {} vanishes", model.modes[i])));
    }
    let n = model.a0.nrows();
    place_siso(&model.a0.transpose(), &model.c0, &target_poles(n, delta0)).map_err(|e| match e {
        Error::Controllability(m) => Error::Observability(m),
        other => other,
    })
}

/// K0 with spec(Atilde0 + Btilde0 K0) = {-delta0 - k}.
pub fn place_controller_gain(model: &ReducedModel, delta0: f64) -> Result<DVector<f64>> {
    let n = model.atilde0.nrows();
    let k = place_siso(&model.atilde0, &model.btilde0, &target_poles(n, delta0))?;
    Ok(-k)
}

/// Result of certifying spec(Acl) < -delta.
#[derive(Clone, Debug, PartialEq)]
pub enum GainVerdict {
    /// Symmetric positive definite P with (Acl + delta I)^T P + P (Acl + delta I) = -I.
    Certified(DMatrix<f64>),
    Infeasible,
}

impl GainVerdict {
    pub fn certificate(&self) -> Option<&DMatrix<f64>> {
        match self {
            GainVerdict::Certified(p) => Some(p),
            GainVerdict::Infeasible => None,
        }
    }
}

pub fn verify_gain_inequality(acl: &DMatrix<f64>, delta: f64) -> Result<GainVerdict> {
    let n = acl.nrows();
    if acl.ncols() != n {
        return Err(Error::Dimension("closed-loop matrix must be square".into()));
    }
    let shifted = acl + DMatrix::<f64>::identity(n, n) * delta;
    let p = solve_lyapunov(&shifted, &(-DMatrix::<f64>::identity(n, n)))?;
    if cholesky_pd(&p, PD_TOL) {
        Ok(GainVerdict::Certified(p))
    } else {
        Ok(GainVerdict::Infeasible)
    }
}

/// Controller and observer gains with their certificates at a decay rate.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSet {
    /// Row gain over [u, w_low].
    pub k0: DVector<f64>,
    /// Column gain over the low modes.
    pub l0: DVector<f64>,
    /// Placement margin when the gains were designed here.
    pub delta0: Option<f64>,
    pub pc: DMatrix<f64>,
    pub po: DMatrix<f64>,
}

impl GainSet {
    /// Places both gains at -delta0 - k and certifies them at `delta`.
    pub fn design(model: &ReducedModel, delta0: f64, delta: f64) -> Result<Self> {
        let l0 = place_observer_gain(model, delta0)?;
        let k0 = place_controller_gain(model, delta0)?;
        let mut g = Self::certify(model, k0, l0, delta)?;
        g.delta0 = Some(delta0);
        Ok(g)
    }

    /// Accepts given gains after certifying them at `delta`.
    pub fn certify(model: &ReducedModel, k0: DVector<f64>, l0: DVector<f64>, delta: f64) -> Result<Self> {
        if k0.len() != model.atilde0.nrows() {
            return Err(Error::Dimension(format!(
                "K0 has {} entries, expected {}",
                k0.len(),
                model.atilde0.nrows()
            )));
        }
        if l0.len() != model.a0.nrows() {
            return Err(Error::Dimension(format!(
                "L0 has {} entries, expected {}",
                l0.len(),
                model.a0.nrows()
            )));
        }
        let pc = match verify_gain_inequality(&model.controller_matrix(&k0), delta)? {
            GainVerdict::Certified(p) => p,
            GainVerdict::Infeasible => {
                return Err(Error::Assumption(format!(
                    "controller loop is not stable with margin {delta}"
                )))
            }
        };
        let po = match verify_gain_inequality(&model.observer_matrix(&l0), delta)? {
            GainVerdict::Certified(p) => p,
            GainVerdict::Infeasible => {
                return Err(Error::Assumption(format!(
                    "observer error loop is not stable with margin {delta}"
                )))
            }
        };
        Ok(GainSet { k0, l0, delta0: None, pc, po })
    }
}
