//! Eigenstructure of the fourth-order operator on (0,1), projection
//! coefficients of the actuation profile and the sensing functional, tail
//! bounds, and the non-degeneracy checks the observer design relies on.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold below which |sin(n pi x*)| counts as a vanished sensing coefficient.
pub const TOL_SENSING: f64 = 1e-9;
/// Threshold for the anti-diffusion coefficient hitting a resonant value.
pub const TOL_NU: f64 = 1e-9;

/// Boundary conditions of the plant. Dirichlet modes start at n = 1,
/// Neumann modes at n = 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Dirichlet,
    Neumann,
}

impl Regime {
    pub fn first_mode(self) -> usize {
        match self {
            Regime::Dirichlet => 1,
            Regime::Neumann => 0,
        }
    }

    fn check(self, n: usize) -> Result<()> {
        if n < self.first_mode() {
            return Err(Error::InvalidIndex { index: n, regime: self });
        }
        Ok(())
    }
}

/// Physical and design parameters shared by every stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// Anti-diffusion coefficient.
    pub nu: f64,
    pub regime: Regime,
    /// In-domain sensing point, required for Dirichlet actuation.
    pub x_star: Option<f64>,
    /// Desired decay rate.
    pub delta: f64,
    /// Sobolev split parameter, used only in the Neumann regime.
    pub sobolev_split: f64,
    pub rho_w: f64,
    pub rho_u: f64,
}

impl PlantConfig {
    pub fn dirichlet(nu: f64, x_star: f64, delta: f64) -> Self {
        PlantConfig {
            nu,
            regime: Regime::Dirichlet,
            x_star: Some(x_star),
            delta,
            sobolev_split: 1.0,
            rho_w: 0.0,
            rho_u: 0.0,
        }
    }

    pub fn neumann(nu: f64, sobolev_split: f64, delta: f64) -> Self {
        PlantConfig {
            nu,
            regime: Regime::Neumann,
            x_star: None,
            delta,
            sobolev_split,
            rho_w: 0.0,
            rho_u: 0.0,
        }
    }

    pub fn with_weights(mut self, rho_w: f64, rho_u: f64) -> Self {
        self.rho_w = rho_w;
        self.rho_u = rho_u;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return bad("nu must be positive and finite");
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return bad("delta must be non-negative");
        }
        if !(self.rho_w >= 0.0 && self.rho_u >= 0.0) {
            return bad("performance weights must be non-negative");
        }
        match self.regime {
            Regime::Dirichlet => match self.x_star {
                Some(x) if x > 0.0 && x < 1.0 => {}
                Some(_) => return bad("x_star must lie in (0,1)"),
                None => return bad("x_star is required in the Dirichlet regime"),
            },
            Regime::Neumann => {
                if !(self.sobolev_split > 0.0) {
                    return bad("sobolev_split must be positive");
                }
            }
        }
        Ok(())
    }
}

/// lambda_n = n^2 pi^2.
pub fn eigenvalue(n: usize, regime: Regime) -> Result<f64> {
    regime.check(n)?;
    Ok(lambda(n))
}

#[inline]
pub(crate) fn lambda(n: usize) -> f64 {
    let k = n as f64 * PI;
    k * k
}

/// Orthonormal eigenfunction phi_n evaluated at x.
pub fn eigenfunction_value(n: usize, regime: Regime, x: f64) -> Result<f64> {
    regime.check(n)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("x = {x} outside [0,1]")));
    }
    Ok(match regime {
        Regime::Dirichlet => SQRT_2 * (n as f64 * PI * x).sin(),
        Regime::Neumann if n == 0 => 1.0,
        Regime::Neumann => SQRT_2 * (n as f64 * PI * x).cos(),
    })
}

/// b_n = -<r, phi_n> with r(x) = 1 - x (Dirichlet) or x - x^2/2 (Neumann).
pub fn actuation_coeff(n: usize, regime: Regime) -> Result<f64> {
    regime.check(n)?;
    Ok(match regime {
        Regime::Dirichlet => -(2.0 / lambda(n)).sqrt(),
        Regime::Neumann if n == 0 => -1.0 / 3.0,
        Regime::Neumann => SQRT_2 / lambda(n),
    })
}

/// c_n = phi_n(x*) for Dirichlet, phi_n(0) for Neumann.
pub fn sensing_coeff(n: usize, regime: Regime, x_star: Option<f64>) -> Result<f64> {
    regime.check(n)?;
    match regime {
        Regime::Dirichlet => {
            let x = x_star.ok_or_else(|| {
                Error::InvalidArgument("x_star is required in the Dirichlet regime".into())
            })?;
            Ok(SQRT_2 * (n as f64 * PI * x).sin())
        }
        Regime::Neumann if n == 0 => Ok(1.0),
        Regime::Neumann => Ok(SQRT_2),
    }
}

/// Open-loop modal rate -lambda_n^2 + nu lambda_n.
pub fn modal_rate(n: usize, nu: f64) -> f64 {
    let l = lambda(n);
    -l * l + nu * l
}

/// Smallest N0 with -lambda_n^2 + nu lambda_n < -delta for every n > N0.
///
/// The rate is a downward parabola in lambda, so once it is below -delta past
/// its vertex it stays there.
pub fn unstable_mode_count(nu: f64, delta: f64, regime: Regime) -> usize {
    let first = regime.first_mode();
    let mut last_bad: Option<usize> = None;
    let mut n = first;
    loop {
        let l = lambda(n);
        if modal_rate(n, nu) >= -delta {
            last_bad = Some(n);
        } else if l > nu / 2.0 {
            break;
        }
        n += 1;
    }
    last_bad.unwrap_or(0)
}

/// Upper bound on sum_{n>N} b_n^2.
pub fn tail_bound(n: usize, regime: Regime) -> f64 {
    let nf = n as f64;
    match regime {
        Regime::Dirichlet => 2.0 / (PI * PI * nf),
        Regime::Neumann => 2.0 / (3.0 * PI.powi(4) * nf.powi(3)),
    }
}

/// Outcome of a non-degeneracy check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionCheck {
    Pass,
    /// The sensing coefficient of mode `n` vanishes.
    SensingNull { n: usize },
    /// nu equals pi^2 (n^2 + m^2).
    Resonant { n: usize, m: usize },
}

impl AssumptionCheck {
    pub fn is_pass(&self) -> bool {
        matches!(self, AssumptionCheck::Pass)
    }
}

/// sin(n pi x*) must not vanish for the modes the observer has to see.
pub fn check_assumption1(x_star: f64, n0: usize) -> AssumptionCheck {
    for n in 1..=n0 {
        if (n as f64 * PI * x_star).sin().abs() <= TOL_SENSING {
            return AssumptionCheck::SensingNull { n };
        }
    }
    AssumptionCheck::Pass
}

/// nu must avoid pi^2 (n^2 + m^2) for 0 <= m < n <= n_max, otherwise two
/// modes share a rate and the single-output pair loses observability.
pub fn check_assumption2(nu: f64, n_max: usize) -> AssumptionCheck {
    for n in 1..=n_max {
        for m in 0..n {
            let forbidden = PI * PI * ((n * n + m * m) as f64);
            if (nu - forbidden).abs() <= TOL_NU {
                return AssumptionCheck::Resonant { n, m };
            }
        }
    }
    AssumptionCheck::Pass
}

/// Modal data for modes first..=m of one regime.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralModel {
    pub regime: Regime,
    pub nu: f64,
    pub x_star: Option<f64>,
    pub n0: usize,
    /// Observer dimension: highest mode index estimated by the observer.
    pub n: usize,
    /// Highest mode index kept in simulations.
    pub m: usize,
    /// Mode indices first..=m.
    pub modes: Vec<usize>,
    pub lambda: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl SpectralModel {
    pub fn new(plant: &PlantConfig, n: usize, m: usize) -> Result<Self> {
        plant.validate()?;
        let regime = plant.regime;
        let n0 = unstable_mode_count(plant.nu, plant.delta, regime);
        if n < n0 || n < regime.first_mode() {
            return Err(Error::InvalidArgument(format!(
                "observer dimension N = {n} is below N0 = {n0}"
            )));
        }
        if m < n {
            return Err(Error::InvalidArgument(format!(
                "truncation order M = {m} is below N = {n}"
            )));
        }
        let modes: Vec<usize> = (regime.first_mode()..=m).collect();
        let mut lam = Vec::with_capacity(modes.len());
        let mut b = Vec::with_capacity(modes.len());
        let mut c = Vec::with_capacity(modes.len());
        for &k in &modes {
            lam.push(eigenvalue(k, regime)?);
            b.push(actuation_coeff(k, regime)?);
            c.push(sensing_coeff(k, regime, plant.x_star)?);
        }
        Ok(SpectralModel {
            regime,
            nu: plant.nu,
            x_star: plant.x_star,
            n0,
            n,
            m,
            modes,
            lambda: lam,
            b,
            c,
        })
    }

    /// Position of mode `k` in the coefficient vectors.
    pub fn pos(&self, k: usize) -> usize {
        k - self.regime.first_mode()
    }

    pub fn rate(&self, k: usize) -> f64 {
        modal_rate(k, self.nu)
    }

    /// Modes handled by the controller and full-gain observer.
    pub fn low_modes(&self) -> std::ops::RangeInclusive<usize> {
        self.regime.first_mode()..=self.n0
    }

    /// Modes estimated by the observer without output injection.
    pub fn residual_modes(&self) -> std::ops::RangeInclusive<usize> {
        (self.n0 + 1).max(self.regime.first_mode())..=self.n
    }

    /// Modes present only in the simulated plant.
    pub fn tail_modes(&self) -> std::ops::RangeInclusive<usize> {
        (self.n + 1)..=self.m
    }

    pub fn low_count(&self) -> usize {
        self.low_modes().count()
    }

    pub fn residual_count(&self) -> usize {
        self.residual_modes().count()
    }

    /// Runs both non-degeneracy checks for this model.
    pub fn verify_assumptions(&self) -> Result<()> {
        if let (Regime::Dirichlet, Some(x)) = (self.regime, self.x_star) {
            if let AssumptionCheck::SensingNull { n } = check_assumption1(x, self.n0) {
                return Err(Error::Assumption(format!(
                    "sensing coefficient of mode {n} vanishes at x* = {x}"
                )));
            }
        }
        if let AssumptionCheck::Resonant { n, m } = check_assumption2(self.nu, self.n) {
            return Err(Error::Assumption(format!(
                "nu = {} equals pi^2 ({n}^2 + {m}^2)",
                self.nu
            )));
        }
        Ok(())
    }
}
