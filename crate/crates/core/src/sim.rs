//! Closed-loop simulation of the modal system truncated at M modes: plant
//! modes, observer, dynamic extension and disturbances, integrated by an
//! exact zero-order-hold discretization of the LTI generator.

use std::f64::consts::SQRT_2;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{build_closed_loop, ClosedLoopMatrices};
use crate::spectral::{PlantConfig, Regime, SpectralModel};

/// Default integration step.
pub const DEFAULT_STEP: f64 = 1e-4;
/// Default decay-fit window.
pub const FIT_WINDOW: (f64, f64) = (0.5, 3.0);

/// Distributed disturbance d(x, t).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialDisturbance {
    Zero,
    /// amplitude * sin(wavenumber x + frequency t).
    TravelingSine { amplitude: f64, wavenumber: f64, frequency: f64 },
}

/// Measurement disturbance sigma(t).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementNoise {
    Zero,
    /// amplitude * cos(frequency t).
    Cosine { amplitude: f64, frequency: f64 },
    /// amplitude * sin(frequency t).
    Sine { amplitude: f64, frequency: f64 },
}

impl MeasurementNoise {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            MeasurementNoise::Zero => 0.0,
            MeasurementNoise::Cosine { amplitude, frequency } => amplitude * (frequency * t).cos(),
            MeasurementNoise::Sine { amplitude, frequency } => amplitude * (frequency * t).sin(),
        }
    }
}

/// int_0^1 sin(a x) dx.
fn int_sin(a: f64) -> f64 {
    if a.abs() < 1e-12 {
        0.0
    } else {
        (1.0 - a.cos()) / a
    }
}

/// int_0^1 cos(a x) dx.
fn int_cos(a: f64) -> f64 {
    if a.abs() < 1e-12 {
        1.0
    } else {
        a.sin() / a
    }
}

/// (<sin(k x), phi_n>, <cos(k x), phi_n>) in closed form.
pub fn trig_projection(k: f64, n: usize, regime: Regime) -> (f64, f64) {
    let m = n as f64 * std::f64::consts::PI;
    match regime {
        Regime::Dirichlet => {
            // sin kx sin mx = (cos(k-m)x - cos(k+m)x)/2, cos kx sin mx = (sin(m+k)x + sin(m-k)x)/2
            let s = SQRT_2 * 0.5 * (int_cos(k - m) - int_cos(k + m));
            let c = SQRT_2 * 0.5 * (int_sin(m + k) + int_sin(m - k));
            (s, c)
        }
        Regime::Neumann if n == 0 => (int_sin(k), int_cos(k)),
        Regime::Neumann => {
            let s = SQRT_2 * 0.5 * (int_sin(k + m) + int_sin(k - m));
            let c = SQRT_2 * 0.5 * (int_cos(k - m) + int_cos(k + m));
            (s, c)
        }
    }
}

/// Modal coefficients d_n(t) = A (S_n cos(w t) + C_n sin(w t)).
#[derive(Clone, Debug, PartialEq)]
pub struct ModalDisturbance {
    amplitude: f64,
    frequency: f64,
    s: Vec<f64>,
    c: Vec<f64>,
}

impl ModalDisturbance {
    pub fn new(d: &SpatialDisturbance, spectral: &SpectralModel) -> Self {
        match *d {
            SpatialDisturbance::Zero => ModalDisturbance {
                amplitude: 0.0,
                frequency: 0.0,
                s: vec![0.0; spectral.modes.len()],
                c: vec![0.0; spectral.modes.len()],
            },
            SpatialDisturbance::TravelingSine { amplitude, wavenumber, frequency } => {
                let (s, c) = spectral.modes.iter().map(|&n| trig_projection(wavenumber, n, spectral.regime)).unzip();
                ModalDisturbance { amplitude, frequency, s, c }
            }
        }
    }

    pub fn at(&self, t: f64, out: &mut [f64]) {
        let (ct, st) = ((self.frequency * t).cos(), (self.frequency * t).sin());
        for i in 0..out.len() {
            out[i] = self.amplitude * (self.s[i] * ct + self.c[i] * st);
        }
    }
}

/// Composite Simpson rule on n (even) panels of f times each eigenfunction.
fn simpson_all(f: &dyn Fn(f64) -> f64, spectral: &SpectralModel, n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut acc = vec![0.0; spectral.modes.len()];
    for i in 0..=n {
        let x = i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let fx = f(x) * w;
        if fx == 0.0 {
            continue;
        }
        for (j, &k) in spectral.modes.iter().enumerate() {
            let phi = match spectral.regime {
                Regime::Dirichlet => SQRT_2 * (k as f64 * std::f64::consts::PI * x).sin(),
                Regime::Neumann if k == 0 => 1.0,
                Regime::Neumann => SQRT_2 * (k as f64 * std::f64::consts::PI * x).cos(),
            };
            acc[j] += fx * phi;
        }
    }
    acc.iter().map(|v| v * h / 3.0).collect()
}

/// Projections of a profile onto modes first..=M, by Simpson quadrature with
/// panel doubling until successive levels agree to 1e-8.
pub fn project_initial(profile: &dyn Fn(f64) -> f64, spectral: &SpectralModel) -> Result<DVector<f64>> {
    let mut n = 256;
    let mut prev = simpson_all(profile, spectral, n);
    while n < (1 << 20) {
        n *= 2;
        let cur = simpson_all(profile, spectral, n);
        let diff = prev.iter().zip(&cur).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if diff <= 1e-8 {
            return Ok(DVector::from_vec(cur));
        }
        prev = cur;
    }
    Err(Error::Quadrature(1e-8))
}

/// The stacked LTI system over [X_N; w_{N+1..M}] with input [d_first..d_M, sigma].
#[derive(Clone, Debug, PartialEq)]
pub struct FullGenerator {
    pub cl: ClosedLoopMatrices,
    pub g: DMatrix<f64>,
    pub input: DMatrix<f64>,
    pub n_x: usize,
    pub tail_modes: Vec<usize>,
}

impl FullGenerator {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

pub fn build_full_generator(spectral: &SpectralModel, k0: &DVector<f64>, l0: &DVector<f64>) -> Result<FullGenerator> {
    let cl = build_closed_loop(spectral, k0, l0)?;
    let n_x = cl.layout.dim();
    let tail_modes: Vec<usize> = spectral.tail_modes().collect();
    let nt = tail_modes.len();
    let dim = n_x + nt;
    let nm = spectral.modes.len();

    let mut g = DMatrix::zeros(dim, dim);
    g.view_mut((0, 0), (n_x, n_x)).copy_from(&cl.f);
    for (j, &k) in tail_modes.iter().enumerate() {
        let p = spectral.pos(k);
        let ck = spectral.c[p];
        for r in 0..n_x {
            g[(r, n_x + j)] = cl.lcal[r] * ck;
            g[(n_x + j, r)] = spectral.b[p] * cl.ktilde[r];
        }
        g[(n_x + j, n_x + j)] += spectral.rate(k);
    }

    let mut input = DMatrix::zeros(dim, nm + 1);
    let first = spectral.regime.first_mode();
    for (col, k) in cl.low_modes.iter().chain(cl.residual_modes.iter()).enumerate() {
        let target = cl.ed.column(col).iamax();
        input[(target, k - first)] = 1.0;
    }
    for (j, &k) in tail_modes.iter().enumerate() {
        input[(n_x + j, k - first)] = 1.0;
    }
    for r in 0..n_x {
        input[(r, nm)] = cl.lcal[r];
    }
    Ok(FullGenerator { cl, g, input, n_x, tail_modes })
}

/// Exact discretization: x+ = Phi x + Gamma u for u held over one step.
pub fn zoh(g: &DMatrix<f64>, b: &DMatrix<f64>, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = g.nrows();
    let m = b.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(g * h));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * h));
    let e = aug.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Norm channels of one modal state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Norms {
    pub l2_w: f64,
    pub h1_w: f64,
    pub h2_w: f64,
    pub h1_z: f64,
}

/// Norms of w (modes first..=M) and of z = w + r u.
pub fn compute_norms(spectral: &SpectralModel, w: &[f64], u: f64) -> Norms {
    let (mut l2, mut h1, mut h2) = (0.0, 0.0, 0.0);
    let mut wr = 0.0;
    let mut w_at0 = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        let l = spectral.lambda[i];
        let s = wi * wi;
        l2 += s;
        h1 += l * s;
        h2 += l * l * s;
        wr += -spectral.b[i] * wi;
        w_at0 += spectral.c[i] * wi;
    }
    let (r2, rp2, wprp) = match spectral.regime {
        Regime::Dirichlet => (1.0 / 3.0, 1.0, 0.0),
        Regime::Neumann => (2.0 / 15.0, 1.0 / 3.0, -w_at0 + w.first().copied().unwrap_or(0.0)),
    };
    let z2 = l2 + 2.0 * u * wr + u * u * r2;
    let zp2 = h1 + 2.0 * u * wprp + u * u * rp2;
    Norms {
        l2_w: l2.sqrt(),
        h1_w: (l2 + h1).sqrt(),
        h2_w: (l2 + h1 + h2).sqrt(),
        h1_z: (z2 + zp2).max(0.0).sqrt(),
    }
}

/// Initial state of the plant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    Zero,
    /// amplitude * (x - x^2)^3.
    CubedBump { amplitude: f64 },
    /// amplitude * phi_n.
    Mode { n: usize, amplitude: f64 },
}

impl InitialProfile {
    pub fn modal(&self, spectral: &SpectralModel) -> Result<DVector<f64>> {
        match *self {
            InitialProfile::Zero => Ok(DVector::zeros(spectral.modes.len())),
            InitialProfile::CubedBump { amplitude } => {
                project_initial(&|x: f64| amplitude * (x - x * x).powi(3), spectral)
            }
            InitialProfile::Mode { n, amplitude } => {
                if n < spectral.regime.first_mode() || n > spectral.m {
                    return Err(Error::InvalidArgument(format!("initial mode {n} outside the truncation")));
                }
                let mut v = DVector::zeros(spectral.modes.len());
                v[spectral.pos(n)] = amplitude;
                Ok(v)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimScenario {
    pub plant: PlantConfig,
    pub spectral: SpectralModel,
    pub k0: DVector<f64>,
    pub l0: DVector<f64>,
    /// w_n(0) for modes first..=M.
    pub w0: DVector<f64>,
    pub d: SpatialDisturbance,
    pub sigma: MeasurementNoise,
    pub horizon: f64,
    pub step: f64,
    /// Record every k-th step (the final step is always recorded).
    pub record_every: usize,
    /// Lyapunov matrix for V; V is reported as NaN without one.
    pub lyapunov: Option<DMatrix<f64>>,
    /// gamma of the performance index J.
    pub gamma: f64,
}

impl SimScenario {
    pub fn new(plant: PlantConfig, n: usize, m: usize, k0: DVector<f64>, l0: DVector<f64>) -> Result<Self> {
        let spectral = SpectralModel::new(&plant, n, m)?;
        let w0 = DVector::zeros(spectral.modes.len());
        Ok(SimScenario {
            plant,
            spectral,
            k0,
            l0,
            w0,
            d: SpatialDisturbance::Zero,
            sigma: MeasurementNoise::Zero,
            horizon: 3.5,
            step: DEFAULT_STEP,
            record_every: 10,
            lyapunov: None,
            gamma: 0.0,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.horizon > 0.0) || self.record_every == 0 {
            return Err(Error::InvalidArgument("step, horizon and record interval must be positive".into()));
        }
        if self.w0.len() != self.spectral.modes.len() {
            return Err(Error::Dimension("initial modal vector does not match M".into()));
        }
        Ok(())
    }
}

/// Sampled closed-loop trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub regime: Option<Regime>,
    pub modes: Vec<usize>,
    /// Mode indices carried by the observer (first..=N).
    pub observer_modes: Vec<usize>,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Plant modes w_n, first..=M.
    pub w: Vec<Vec<f64>>,
    /// Observer estimates, first..=N.
    pub w_hat: Vec<Vec<f64>>,
    /// Estimation errors e_n = w_n - w_hat_n, first..=N.
    pub e: Vec<Vec<f64>>,
    pub norms: Vec<Norms>,
    pub lyapunov: Vec<f64>,
    pub j: Vec<f64>,
    /// sum_n d_n^2 + sigma^2 at the sample.
    pub disturbance_energy: Vec<f64>,
    /// Running supremum of the disturbance energy over all steps so far.
    pub disturbance_sup: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// ||w||_H1 + |u|.
    pub fn decay_channel(&self) -> Vec<f64> {
        self.norms.iter().zip(&self.u).map(|(n, u)| n.h1_w + u.abs()).collect()
    }

    /// Named scalar channel, using the trajectory.csv column names.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let from_norms = |f: fn(&Norms) -> f64| self.norms.iter().map(f).collect();
        Some(match name {
            "t" => self.t.clone(),
            "u" => self.u.clone(),
            "v" => self.v.clone(),
            "zeta" => self.zeta.clone(),
            "normL2_w" => from_norms(|n| n.l2_w),
            "normH1_w" => from_norms(|n| n.h1_w),
            "normH2_w" => from_norms(|n| n.h2_w),
            "normH1_z" => from_norms(|n| n.h1_z),
            "V" => self.lyapunov.clone(),
            "J" => self.j.clone(),
            _ => return None,
        })
    }

    pub fn to_csv(&self, with_modes: bool) -> String {
        let mut s = String::from("t,u,v,zeta,normL2_w,normH1_w,normH2_w,normH1_z,V,J");
        if with_modes {
            for k in &self.modes {
                let _ = write!(s, ",w_{k}");
            }
            for k in &self.observer_modes {
                let _ = write!(s, ",what_{k}");
            }
        }
        s.push('\n');
        for i in 0..self.len() {
            let n = &self.norms[i];
            let row = [self.t[i], self.u[i], self.v[i], self.zeta[i], n.l2_w, n.h1_w, n.h2_w, n.h1_z, self.lyapunov[i], self.j[i]];
            let mut first = true;
            for v in row.iter().chain(if with_modes { self.w[i].iter() } else { [].iter() }).chain(if with_modes {
                self.w_hat[i].iter()
            } else {
                [].iter()
            }) {
                if !first {
                    s.push(',');
                }
                first = false;
                s.push_str(&fmt12(*v));
            }
            s.push('\n');
        }
        s
    }
}

/// 12 significant digits.
pub fn fmt12(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == 0.0 {
        "0".into()
    } else {
        format!("{:.11e}", v)
    }
}

/// State-space positions of the physical quantities.
struct Readout {
    n_x: usize,
    /// (position of w_hat, position of e) for each observer mode, first..=N.
    obs: Vec<(usize, usize)>,
}

impl Readout {
    fn new(cl: &ClosedLoopMatrices) -> Self {
        let l = cl.layout;
        let mut obs = Vec::new();
        for i in 0..l.n_low {
            obs.push((1 + i, l.err().start + i));
        }
        for j in 0..l.n_res {
            obs.push((l.res_hat().start + j, l.res_err().start + j));
        }
        Readout { n_x: l.dim(), obs }
    }
}

/// Exact-ZOH integration of the scenario.
pub fn integrate(sc: &SimScenario) -> Result<Trajectory> {
    sc.validate()?;
    let sp = &sc.spectral;
    let gen = build_full_generator(sp, &sc.k0, &sc.l0)?;
    let cl = &gen.cl;
    if let Some(p) = &sc.lyapunov {
        if p.nrows() != gen.n_x || p.ncols() != gen.n_x {
            return Err(Error::Dimension("Lyapunov matrix does not match the closed-loop state".into()));
        }
    }
    let ro = Readout::new(cl);
    let dim = gen.dim();
    let nm = sp.modes.len();
    let first = sp.regime.first_mode();
    let tail_c: Vec<f64> = gen.tail_modes.iter().map(|&k| sp.c[sp.pos(k)]).collect();
    let tail_weight: Vec<f64> = gen
        .tail_modes
        .iter()
        .map(|&k| {
            let l = sp.lambda[sp.pos(k)];
            match sp.regime {
                Regime::Dirichlet => l,
                Regime::Neumann => l * l,
            }
        })
        .collect();

    let (phi, gam) = zoh(&gen.g, &gen.input, sc.step);
    let dist = ModalDisturbance::new(&sc.d, sp);
    let rho_w2 = sc.plant.rho_w * sc.plant.rho_w;
    let rho_u2 = sc.plant.rho_u * sc.plant.rho_u;
    let g2 = sc.gamma * sc.gamma;

    let mut x = DVector::zeros(dim);
    for (i, &(_, pe)) in ro.obs.iter().enumerate() {
        x[pe] = sc.w0[i];
    }
    for (j, &k) in gen.tail_modes.iter().enumerate() {
        x[gen.n_x + j] = sc.w0[k - first];
    }

    let steps = (sc.horizon / sc.step).round() as usize;
    let mut traj = Trajectory {
        regime: Some(sp.regime),
        modes: sp.modes.clone(),
        observer_modes: (first..=sp.n).collect(),
        ..Default::default()
    };
    let mut input = DVector::zeros(nm + 1);
    let mut w = vec![0.0; nm];
    let mut j_acc = 0.0;
    let mut sup = 0.0f64;
    let mut prev_integrand: Option<f64> = None;

    for k in 0..=steps {
        let t = k as f64 * sc.step;
        dist.at(t, &mut input.as_mut_slice()[..nm]);
        let sigma = sc.sigma.at(t);
        input[nm] = sigma;
        let d2: f64 = input.as_slice()[..nm].iter().map(|v| v * v).sum();
        let energy = d2 + sigma * sigma;
        sup = sup.max(energy);

        // Physical modes.
        for (i, &(ph, pe)) in ro.obs.iter().enumerate() {
            w[i] = x[ph] + x[pe];
        }
        for j in 0..gen.tail_modes.len() {
            w[ro.obs.len() + j] = x[ro.n_x + j];
        }
        let u = x[0];
        let l2: f64 = w.iter().map(|v| v * v).sum();
        let integrand = rho_w2 * l2 + rho_u2 * u * u - g2 * energy;
        if let Some(p) = prev_integrand {
            j_acc += 0.5 * sc.step * (p + integrand);
        }
        prev_integrand = Some(integrand);

        if k % sc.record_every == 0 || k == steps {
            let xn = x.rows(0, ro.n_x);
            let v = cl.ktilde.dot(&xn);
            let zeta: f64 = tail_c.iter().enumerate().map(|(j, c)| c * x[ro.n_x + j]).sum();
            let lyap = match &sc.lyapunov {
                Some(p) => {
                    let tail: f64 = tail_weight.iter().enumerate().map(|(j, q)| q * x[ro.n_x + j].powi(2)).sum();
                    (p * xn).dot(&xn) + tail
                }
                None => f64::NAN,
            };
            traj.t.push(t);
            traj.u.push(u);
            traj.v.push(v);
            traj.zeta.push(zeta);
            traj.w.push(w.clone());
            traj.w_hat.push(ro.obs.iter().map(|&(ph, _)| x[ph]).collect());
            traj.e.push(ro.obs.iter().map(|&(_, pe)| x[pe]).collect());
            traj.norms.push(compute_norms(sp, &w, u));
            traj.lyapunov.push(lyap);
            traj.j.push(j_acc);
            traj.disturbance_energy.push(energy);
            traj.disturbance_sup.push(sup);
        }
        if k == steps {
            break;
        }
        x = &phi * &x + &gam * &input;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalAbort { time: t + sc.step, reason: "non-finite state".into() });
        }
    }
    Ok(traj)
}

/// J(t) recomputed from the recorded samples by the trapezoid rule.
pub fn performance_index(traj: &Trajectory, rho_w: f64, rho_u: f64, gamma: f64) -> Vec<f64> {
    let f = |i: usize| {
        rho_w * rho_w * traj.norms[i].l2_w.powi(2) + rho_u * rho_u * traj.u[i].powi(2)
            - gamma * gamma * traj.disturbance_energy[i]
    };
    let mut out = Vec::with_capacity(traj.len());
    let mut acc = 0.0;
    for i in 0..traj.len() {
        if i > 0 {
            acc += 0.5 * (traj.t[i] - traj.t[i - 1]) * (f(i - 1) + f(i));
        }
        out.push(acc);
    }
    out
}

/// max_T [V(T) - e^{-2 delta T} V(0) - gamma^2/(2 delta) sup_{t<=T} energy].
pub fn iss_check(traj: &Trajectory, delta: f64, gamma: f64) -> Result<f64> {
    if traj.is_empty() || traj.lyapunov.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("trajectory carries no Lyapunov channel".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("ISS check needs delta > 0".into()));
    }
    let v0 = traj.lyapunov[0];
    let c = gamma * gamma / (2.0 * delta);
    Ok((0..traj.len())
        .map(|i| traj.lyapunov[i] - (-2.0 * delta * traj.t[i]).exp() * v0 - c * traj.disturbance_sup[i])
        .fold(f64::NEG_INFINITY, f64::max))
}

/// -1/2 times the least-squares slope of log(channel^2) over [t1, t2].
pub fn fit_decay_rate(t: &[f64], channel: &[f64], t1: f64, t2: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = t.iter().zip(channel).filter(|(ti, _)| **ti >= t1 && **ti <= t2).map(|(a, b)| (*a, *b)).collect();
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("fewer than two samples in the fit window".into()));
    }
    if pts.iter().any(|(_, c)| !(*c > 0.0)) {
        return Err(Error::InvalidArgument("decay channel must be positive on the fit window".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| (p.1 * p.1).ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (ti, c) in &pts {
        let dy = (c * c).ln() - my;
        sxy += (ti - mt) * dy;
        sxx += (ti - mt) * (ti - mt);
    }
    Ok(-0.5 * sxy / sxx)
}
