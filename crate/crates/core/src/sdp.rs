//! Feasibility of affine matrix inequalities by margin maximization.
//!
//! max t  s.t.  D A(x) D + t I <= 0,  Pt(x) >= eps I,  bounds on x,  t <= t_cap
//!
//! is solved as a linear SDP in dual form with a dense primal-dual
//! interior-point method (HKM direction, Mehrotra predictor-corrector). The
//! congruence D and the state scaling P = T Pt T come from the AMI, so the
//! solver works on O(1) quantities. Every verdict is re-derived from the
//! returned decision vector by an independent dense eigensolve.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_pd, is_symmetric, lambda_max, lambda_min, symmetrize};
use crate::lmi::{AffineMatrixInequality, Term, VarLabel};

/// Relative feasibility tolerance on the equilibrated margin.
pub const TOL_FEAS_REL: f64 = 1e-7;
/// Default bisection width on gamma.
pub const TOL_GAMMA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Feasible,
    Infeasible,
    Indeterminate,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Feasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::Indeterminate => "indeterminate",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stopping tolerance on the relative duality gap.
    pub tol: f64,
    /// Stopping tolerance on the primal residual.
    pub tol_pinf: f64,
    /// Upper bound on t, which keeps the problem bounded.
    pub t_cap: f64,
    /// Stop as soon as the sign of the optimal margin is decided.
    pub early_stop: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iter: 200, tol: 1e-9, tol_pinf: 1e-7, t_cap: 1.0, early_stop: false }
    }
}

impl SolverOptions {
    pub fn deciding() -> Self {
        SolverOptions { early_stop: true, ..Self::default() }
    }
}

/// Independent check of a decision vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verification {
    /// -lambda_max(D A(x) D).
    pub margin: f64,
    pub tol_feas: f64,
    /// lambda_min of the state-scaled P (the quantity bounded below by eps).
    pub p_min_eig: f64,
    pub eps: f64,
    pub p_cholesky: bool,
    pub alpha: Option<f64>,
    pub within_bounds: bool,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityCertificate {
    pub status: Status,
    pub x: Vec<f64>,
    pub margin: f64,
    pub p: DMatrix<f64>,
    pub alpha: Option<f64>,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub gap: f64,
    /// Solver-side optimal t (dual objective) at exit.
    pub dual_objective: f64,
    pub primal_objective: f64,
    pub converged: bool,
    pub verification: Verification,
}

pub fn tol_feas(ami: &AffineMatrixInequality) -> f64 {
    TOL_FEAS_REL * ami.scale()
}

/// Recomputes margin, P definiteness and bounds from scratch.
pub fn verify(ami: &AffineMatrixInequality, x: &[f64]) -> Verification {
    let tol = tol_feas(ami);
    let a = ami.eval_equilibrated(x);
    let margin = -lambda_max(&a);
    let (p_min_eig, p_cholesky) = if ami.p_dim > 0 {
        let t = ami.state_scaling();
        let p = ami.p_matrix(x);
        let pt = DMatrix::from_fn(ami.p_dim, ami.p_dim, |i, j| p[(i, j)] / (t[i] * t[j]));
        (lambda_min(&pt), cholesky_pd(&pt, 1e-10))
    } else {
        (f64::INFINITY, true)
    };
    let alpha = ami.alpha_value(x);
    let within_bounds = x.iter().zip(&ami.bounds).all(|(&v, &(lo, hi))| {
        let slack = 1e-9 * (1.0 + v.abs());
        v >= lo - slack && v <= hi + slack
    });
    let p_ok = ami.p_dim == 0 || (p_cholesky && p_min_eig >= ami.eps * (1.0 - 1e-9));
    let feasible = margin.is_finite()
        && margin >= tol
        && p_ok
        && alpha.map_or(true, |a| a > 0.0)
        && within_bounds;
    Verification { margin, tol_feas: tol, p_min_eig, eps: ami.eps, p_cholesky, alpha, within_bounds, feasible }
}

/// One PSD block: Z = C - sum_i y_i F_i with F_i given by pool terms.
struct Block {
    pool: DMatrix<f64>,
    constant: DMatrix<f64>,
    terms: Vec<Vec<Term>>,
}

impl Block {
    fn dim(&self) -> usize {
        self.constant.nrows()
    }

    /// sum_i y_i F_i as a dense matrix.
    fn apply(&self, y: &[f64]) -> DMatrix<f64> {
        let q = self.pool.ncols();
        let mut cq = DMatrix::<f64>::zeros(q, q);
        for (i, ts) in self.terms.iter().enumerate() {
            if y[i] == 0.0 {
                continue;
            }
            for t in ts {
                cq[(t.a, t.b)] += y[i] * t.w;
            }
        }
        let s = &self.pool * cq * self.pool.transpose();
        &s + s.transpose()
    }

    /// Pool Gram matrix V^T X V.
    fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.pool.transpose() * x * &self.pool
    }

    /// <F_i, X> for every variable, accumulated into `out`.
    fn adjoint(&self, x: &DMatrix<f64>, out: &mut [f64]) {
        let g = self.gram(x);
        for (i, ts) in self.terms.iter().enumerate() {
            for t in ts {
                out[i] += 2.0 * t.w * g[(t.a, t.b)];
            }
        }
    }

    /// Adds tr(F_i X F_j W) to the Schur complement.
    fn schur(&self, x: &DMatrix<f64>, w: &DMatrix<f64>, m: &mut DMatrix<f64>) {
        let gx = self.gram(x);
        let gw = self.gram(w);
        let active: Vec<usize> = (0..self.terms.len()).filter(|&i| !self.terms[i].is_empty()).collect();
        for (ii, &i) in active.iter().enumerate() {
            for &j in &active[ii..] {
                let mut s = 0.0;
                for p in &self.terms[i] {
                    for r in &self.terms[j] {
                        let (a, b, c, d) = (p.a, p.b, r.a, r.b);
                        s += p.w
                            * r.w
                            * (gx[(b, c)] * gw[(d, a)]
                                + gx[(b, d)] * gw[(c, a)]
                                + gx[(a, c)] * gw[(d, b)]
                                + gx[(a, d)] * gw[(c, b)]);
                    }
                }
                m[(i, j)] += s;
                if i != j {
                    m[(j, i)] += s;
                }
            }
        }
    }
}

/// Scalar constraints z_r = c_r - coef_r * y_{var_r} >= 0.
struct LpRows {
    c: Vec<f64>,
    var: Vec<usize>,
    coef: Vec<f64>,
}

struct Problem {
    blocks: Vec<Block>,
    lp: LpRows,
    /// Number of y variables; the last one is t.
    m: usize,
    /// Raw value of variable i is scale[i] * y_i.
    scale: Vec<f64>,
}

impl Problem {
    fn build(ami: &AffineMatrixInequality, opts: &SolverOptions) -> Result<Self> {
        let nv = ami.num_vars();
        let m = nv + 1;
        let dim = ami.dim;
        let d = &ami.row_scaling;

        let tstate = ami.state_scaling();
        let mut scale = vec![1.0; m];
        for (i, lab) in ami.labels.iter().enumerate() {
            scale[i] = match *lab {
                VarLabel::P(k, l) => tstate[k] * tstate[l],
                _ => {
                    let a = ami.equilibrated_coeff_amax(i);
                    if a > 0.0 && a.is_finite() {
                        1.0 / a
                    } else {
                        1.0
                    }
                }
            };
        }

        // Main block: Z = -D C D - sum s_i y_i D A_i D - t I.
        let mut pool = DMatrix::zeros(dim, ami.pool.ncols() + dim);
        for c in 0..ami.pool.ncols() {
            for r in 0..dim {
                pool[(r, c)] = d[r] * ami.pool[(r, c)];
            }
        }
        let q0 = ami.pool.ncols();
        for k in 0..dim {
            pool[(k, q0 + k)] = 1.0;
        }
        let mut terms: Vec<Vec<Term>> = ami
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, ts)| ts.iter().map(|t| Term { a: t.a, b: t.b, w: t.w * scale[i] }).collect())
            .collect();
        terms.push((0..dim).map(|k| Term { a: q0 + k, b: q0 + k, w: 0.5 }).collect());
        let constant = -DMatrix::from_fn(dim, dim, |r, c| d[r] * ami.constant[(r, c)] * d[c]);
        let mut blocks = vec![Block { pool, constant, terms }];

        // Lyapunov block: Z = Pt - eps I.
        if ami.p_dim > 0 {
            let pd = ami.p_dim;
            let mut terms = vec![Vec::new(); m];
            for (i, lab) in ami.labels.iter().enumerate() {
                if let VarLabel::P(k, l) = *lab {
                    let w = if k == l { -0.5 } else { -1.0 };
                    terms[i].push(Term { a: k, b: l, w });
                }
            }
            blocks.push(Block {
                pool: DMatrix::identity(pd, pd),
                constant: -DMatrix::identity(pd, pd) * ami.eps,
                terms,
            });
        }

        let mut lp = LpRows { c: Vec::new(), var: Vec::new(), coef: Vec::new() };
        for (i, &(lo, hi)) in ami.bounds.iter().enumerate() {
            if hi.is_finite() {
                lp.c.push(hi / scale[i]);
                lp.var.push(i);
                lp.coef.push(1.0);
            }
            if lo.is_finite() {
                lp.c.push(-lo / scale[i]);
                lp.var.push(i);
                lp.coef.push(-1.0);
            }
        }
        lp.c.push(opts.t_cap);
        lp.var.push(nv);
        lp.coef.push(1.0);

        Ok(Problem { blocks, lp, m, scale })
    }

    fn raw(&self, y: &[f64]) -> Vec<f64> {
        y[..self.m - 1].iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    fn slack(&self, y: &[f64]) -> (Vec<DMatrix<f64>>, Vec<f64>) {
        let z = self.blocks.iter().map(|b| &b.constant - b.apply(y)).collect();
        let zl = (0..self.lp.c.len()).map(|r| self.lp.c[r] - self.lp.coef[r] * y[self.lp.var[r]]).collect();
        (z, zl)
    }

    fn direction(&self, dy: &[f64]) -> (Vec<DMatrix<f64>>, Vec<f64>) {
        let dz = self.blocks.iter().map(|b| -b.apply(dy)).collect();
        let dzl = (0..self.lp.c.len()).map(|r| -self.lp.coef[r] * dy[self.lp.var[r]]).collect();
        (dz, dzl)
    }

    fn adjoint(&self, x: &[DMatrix<f64>], xl: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (b, xb) in self.blocks.iter().zip(x) {
            b.adjoint(xb, &mut out);
        }
        for r in 0..xl.len() {
            out[self.lp.var[r]] += self.lp.coef[r] * xl[r];
        }
        out
    }

    fn barrier_size(&self) -> f64 {
        (self.blocks.iter().map(Block::dim).sum::<usize>() + self.lp.c.len()) as f64
    }
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn spd_inverse(z: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::new(z.clone()).map(|c| symmetrize(&c.inverse()))
}

/// Largest step a with X + a dX PSD (infinite if dX does not decrease it).
fn max_step_psd(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    if x.nrows() == 0 {
        return f64::INFINITY;
    }
    let Some(ch) = Cholesky::<f64, Dyn>::new(x.clone()) else {
        return 0.0;
    };
    let l = ch.l();
    let Some(a) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(b) = l.solve_lower_triangular(&a.transpose()) else {
        return 0.0;
    };
    let ev = SymmetricEigen::new(symmetrize(&b)).eigenvalues.min();
    if ev >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / ev
    }
}

fn max_step_lp(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
}

impl Factor {
    fn new(mut m: DMatrix<f64>) -> Option<Self> {
        let dmax = m.diagonal().amax().max(1e-300);
        let mut reg = 0.0;
        for _ in 0..12 {
            if let Some(chol) = Cholesky::new(m.clone()) {
                return Some(Factor { chol });
            }
            let add = if reg == 0.0 { 1e-14 * dmax } else { reg * 9.0 };
            for i in 0..m.nrows() {
                m[(i, i)] += add;
            }
            reg += add;
        }
        None
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec()
    }
}

/// Searches for the margin-maximizing decision vector.
pub fn solve_margin(ami: &AffineMatrixInequality, opts: &SolverOptions) -> Result<FeasibilityCertificate> {
    validate(ami)?;
    let prob = Problem::build(ami, opts)?;
    let m = prob.m;
    let it_t = m - 1;
    let tol_f = tol_feas(ami);

    // Dual-feasible start: Pt = I, other variables inside their boxes.
    let mut y = vec![0.0; m];
    for (i, lab) in ami.labels.iter().enumerate() {
        let (lo, hi) = (ami.bounds[i].0 / prob.scale[i], ami.bounds[i].1 / prob.scale[i]);
        y[i] = match *lab {
            VarLabel::P(k, l) if k == l => 1.0,
            _ if lo < 0.0 && 0.0 < hi => 0.0,
            _ if lo < 1.0 && 1.0 < hi => 1.0,
            _ if lo.is_finite() && hi.is_finite() => 0.5 * (lo + hi),
            _ if lo.is_finite() => lo + 1.0,
            _ => hi - 1.0,
        };
    }
    let a0 = ami.eval_equilibrated(&prob.raw(&y));
    y[it_t] = (-lambda_max(&a0) - 1.0).min(opts.t_cap - 1.0);

    let (mut z, mut zl) = prob.slack(&y);
    let mut w: Vec<DMatrix<f64>> = Vec::with_capacity(z.len());
    for zb in &z {
        w.push(spd_inverse(zb).ok_or_else(|| Error::InvalidArgument("starting slack is not definite".into()))?);
    }
    let trw: f64 = w[0].trace();
    let mu0 = if trw > 0.0 { 1.0 / trw } else { 1.0 };
    let mut x: Vec<DMatrix<f64>> = w.iter().map(|wb| wb * mu0).collect();
    let mut xl: Vec<f64> = zl.iter().map(|&v| mu0 / v).collect();

    let nbar = prob.barrier_size();
    let mut b = vec![0.0; m];
    b[it_t] = 1.0;

    let mut iterations = 0;
    let mut converged = false;
    let mut pinf;
    let mut gap;
    let mut pobj;
    let mut early: Option<Status> = None;
    let (mut best_gap, mut best_pinf, mut stalled) = (f64::INFINITY, f64::INFINITY, 0);
    loop {
        let ax = prob.adjoint(&x, &xl);
        let rp: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        pinf = rp.iter().map(|v| v * v).sum::<f64>().sqrt() / 2.0;
        gap = x.iter().zip(&z).map(|(a, c)| inner(a, c)).sum::<f64>()
            + xl.iter().zip(&zl).map(|(a, c)| a * c).sum::<f64>();
        pobj = prob.blocks.iter().zip(&x).map(|(bl, xb)| inner(&bl.constant, xb)).sum::<f64>()
            + prob.lp.c.iter().zip(&xl).map(|(c, v)| c * v).sum::<f64>();
        let dobj = y[it_t];
        let relgap = gap / (1.0 + pobj.abs() + dobj.abs());
        log::trace!("it {iterations}: t={dobj:.6e} pobj={pobj:.6e} pinf={pinf:.2e} gap={gap:.2e}");

        if opts.early_stop {
            if dobj >= tol_f && verify(ami, &prob.raw(&y)).feasible {
                early = Some(Status::Feasible);
                break;
            }
            if pinf < 1e-8 && pobj < -tol_f {
                early = Some(Status::Infeasible);
                break;
            }
        }
        if pinf < opts.tol_pinf && relgap < opts.tol {
            converged = true;
            break;
        }
        // Rounding floor: the iterate no longer improves.
        if gap < 0.99 * best_gap || pinf < 0.99 * best_pinf {
            best_gap = best_gap.min(gap);
            best_pinf = best_pinf.min(pinf);
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 5 {
                converged = pinf < 1e-6 && relgap < 1e-6;
                break;
            }
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let w: Vec<DMatrix<f64>> = match z.iter().map(spd_inverse).collect::<Option<Vec<_>>>() {
            Some(w) => w,
            None => break,
        };
        let wl: Vec<f64> = zl.iter().map(|v| 1.0 / v).collect();
        let mu = gap / nbar;

        let mut mm = DMatrix::<f64>::zeros(m, m);
        for ((bl, xb), wb) in prob.blocks.iter().zip(&x).zip(&w) {
            bl.schur(xb, wb, &mut mm);
        }
        for r in 0..xl.len() {
            let v = prob.lp.var[r];
            mm[(v, v)] += prob.lp.coef[r] * prob.lp.coef[r] * xl[r] * wl[r];
        }
        let Some(fac) = Factor::new(mm) else {
            log::debug!("Schur complement factorization failed at iteration {iterations}");
            break;
        };
        let aw = prob.adjoint(&w, &wl);

        let solve_dir = |sigma_mu: f64,
                         corr: Option<(&[DMatrix<f64>], &[f64])>|
         -> (Vec<f64>, Vec<DMatrix<f64>>, Vec<f64>, Vec<DMatrix<f64>>, Vec<f64>) {
            let mut rhs: Vec<f64> = b.iter().zip(&aw).map(|(bi, a)| bi - sigma_mu * a).collect();
            if let Some((r, rl)) = corr {
                let ar = prob.adjoint(r, rl);
                for i in 0..m {
                    rhs[i] += ar[i];
                }
            }
            let dy = fac.solve(&rhs);
            let (dz, dzl) = prob.direction(&dy);
            let mut dx = Vec::with_capacity(x.len());
            for k in 0..x.len() {
                let xdzw = &x[k] * &dz[k] * &w[k];
                let mut d = &w[k] * sigma_mu - &x[k] - symmetrize(&xdzw);
                if let Some((r, _)) = corr {
                    d -= &r[k];
                }
                dx.push(d);
            }
            let mut dxl = Vec::with_capacity(xl.len());
            for r in 0..xl.len() {
                let mut d = sigma_mu * wl[r] - xl[r] - xl[r] * dzl[r] * wl[r];
                if let Some((_, rl)) = corr {
                    d -= rl[r];
                }
                dxl.push(d);
            }
            (dy, dz, dzl, dx, dxl)
        };

        let steps = |dx: &[DMatrix<f64>], dxl: &[f64], dz: &[DMatrix<f64>], dzl: &[f64]| -> (f64, f64) {
            let mut ap = max_step_lp(&xl, dxl);
            let mut ad = max_step_lp(&zl, dzl);
            for k in 0..x.len() {
                ap = ap.min(max_step_psd(&x[k], &dx[k]));
                ad = ad.min(max_step_psd(&z[k], &dz[k]));
            }
            (ap, ad)
        };

        // Predictor.
        let (_, dza, dzla, dxa, dxla) = solve_dir(0.0, None);
        let (apa, ada) = steps(&dxa, &dxla, &dza, &dzla);
        let (apa, ada) = (apa.min(1.0), ada.min(1.0));
        let mut gap_aff = 0.0;
        for k in 0..x.len() {
            gap_aff += inner(&(&x[k] + &dxa[k] * apa), &(&z[k] + &dza[k] * ada));
        }
        for r in 0..xl.len() {
            gap_aff += (xl[r] + apa * dxla[r]) * (zl[r] + ada * dzla[r]);
        }
        let sigma = (gap_aff / gap).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let corr: Vec<DMatrix<f64>> =
            (0..x.len()).map(|k| symmetrize(&(&dxa[k] * &dza[k] * &w[k]))).collect();
        let corrl: Vec<f64> = (0..xl.len()).map(|r| dxla[r] * dzla[r] * wl[r]).collect();
        let (dy, dz, dzl, dx, dxl) = solve_dir(sigma * mu, Some((&corr, &corrl)));
        let (ap, ad) = steps(&dx, &dxl, &dz, &dzl);
        let tau = if mu < 1e-6 { 0.98 } else { 0.95 };
        let ap = (tau * ap).min(1.0);
        let mut ad = (tau * ad).min(1.0);

        for k in 0..x.len() {
            x[k] = symmetrize(&(&x[k] + &dx[k] * ap));
        }
        for r in 0..xl.len() {
            xl[r] += ap * dxl[r];
        }
        let y_old = y.clone();
        let mut accepted = false;
        for _ in 0..30 {
            for i in 0..m {
                y[i] = y_old[i] + ad * dy[i];
            }
            let (zn, zln) = prob.slack(&y);
            if zln.iter().all(|&v| v > 0.0) && zn.iter().all(|zb| Cholesky::new(zb.clone()).is_some()) {
                z = zn;
                zl = zln;
                accepted = true;
                break;
            }
            ad *= 0.5;
        }
        if !accepted {
            y = y_old;
            break;
        }
    }

    let xraw = prob.raw(&y);
    let verification = verify(ami, &xraw);
    let dobj = y[it_t];
    let status = if verification.feasible {
        Status::Feasible
    } else if early == Some(Status::Infeasible) || (converged && dobj < -tol_f && pobj < -tol_f) {
        Status::Infeasible
    } else {
        Status::Indeterminate
    };
    Ok(FeasibilityCertificate {
        status,
        p: ami.p_matrix(&xraw),
        alpha: ami.alpha_value(&xraw),
        margin: verification.margin,
        x: xraw,
        iterations,
        primal_infeasibility: pinf,
        gap,
        dual_objective: dobj,
        primal_objective: pobj,
        converged,
        verification,
    })
}

fn validate(ami: &AffineMatrixInequality) -> Result<()> {
    let n = ami.dim;
    if ami.constant.nrows() != n || ami.constant.ncols() != n || ami.pool.nrows() != n {
        return Err(Error::Dimension("AMI blocks do not match its dimension".into()));
    }
    if ami.row_scaling.len() != n || ami.row_scaling.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::InvalidArgument("row scaling must be positive and finite".into()));
    }
    if !is_symmetric(&ami.constant, 1e-12) {
        return Err(Error::NotSymmetric("constant block".into()));
    }
    if ami.labels.len() != ami.coeffs.len() || ami.bounds.len() != ami.coeffs.len() {
        return Err(Error::Dimension("labels/bounds must match the coefficient count".into()));
    }
    let q = ami.pool.ncols();
    for ts in &ami.coeffs {
        for t in ts {
            if t.a >= q || t.b >= q || !t.w.is_finite() {
                return Err(Error::InvalidArgument("coefficient term out of range".into()));
            }
        }
    }
    if ami.constant.iter().chain(ami.pool.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("AMI contains non-finite entries".into()));
    }
    for (i, &(lo, hi)) in ami.bounds.iter().enumerate() {
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("empty bounds for {}", ami.labels[i])));
        }
    }
    for lab in &ami.labels {
        if let VarLabel::P(k, l) = *lab {
            if k > l || l >= ami.p_dim {
                return Err(Error::InvalidArgument(format!("bad label {lab}")));
            }
        }
    }
    Ok(())
}

/// One probe of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub gamma: Option<f64>,
    pub status: Status,
    pub margin: f64,
    pub wall_ms: f64,
}

/// Rows ordered by N (and gamma within N).
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn push(&mut self, row: SweepRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: SweepReport) {
        self.rows.extend(other.rows);
    }

    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.n.cmp(&b.n).then(a.gamma.unwrap_or(0.0).total_cmp(&b.gamma.unwrap_or(0.0)))
        });
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,gamma,status,margin,wall_ms\n");
        for r in &self.rows {
            let g = r.gamma.map(|g| format!("{g:.4}")).unwrap_or_default();
            s.push_str(&format!("{},{},{},{:.6e},{:.3}\n", r.n, g, r.status, r.margin, r.wall_ms));
        }
        s
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t0 = Instant::now();
    let v = f();
    (v, t0.elapsed().as_secs_f64() * 1e3)
}

/// Result of a gamma bisection.
#[derive(Clone, Debug)]
pub struct GammaSearch {
    pub gamma: f64,
    pub certificate: FeasibilityCertificate,
    pub report: SweepReport,
}

/// Smallest feasible gamma on the grid tol * k, k >= 1, by bisection.
/// `gamma_lo` (if given) is probed first; otherwise gamma = 0 is taken as
/// infeasible without a probe.
pub fn min_gamma<F>(
    builder: F,
    gamma_lo: Option<f64>,
    gamma_hi: f64,
    tol: f64,
    n: usize,
    opts: &SolverOptions,
) -> Result<GammaSearch>
where
    F: Fn(f64) -> Result<AffineMatrixInequality>,
{
    if !(tol > 0.0) || !(gamma_hi > 0.0) {
        return Err(Error::InvalidArgument("gamma_hi and tol must be positive".into()));
    }
    let k_hi0 = (gamma_hi / tol - 1e-9).ceil().max(1.0) as u64;
    let mut k_lo = match gamma_lo {
        Some(g) if g > 0.0 => ((g / tol) + 1e-9).floor() as u64,
        _ => 0,
    };
    if k_lo >= k_hi0 {
        return Err(Error::InvalidArgument("gamma_lo must be below gamma_hi".into()));
    }
    let mut report = SweepReport::default();
    let mut probe = |k: u64| -> Result<FeasibilityCertificate> {
        let g = k as f64 * tol;
        let ami = builder(g)?;
        let (cert, ms) = timed(|| solve_margin(&ami, opts));
        let cert = cert?;
        log::debug!("N={n} gamma={g:.4}: {} (margin {:.3e})", cert.status, cert.margin);
        report.push(SweepRow { n, gamma: Some(g), status: cert.status, margin: cert.margin, wall_ms: ms });
        Ok(cert)
    };

    let mut best = probe(k_hi0)?;
    if best.status != Status::Feasible {
        return Err(Error::InfeasibleAtUpper { gamma: k_hi0 as f64 * tol });
    }
    let mut k_hi = k_hi0;
    if k_lo > 0 {
        let c = probe(k_lo)?;
        if c.status == Status::Feasible {
            return Ok(GammaSearch { gamma: k_lo as f64 * tol, certificate: c, report });
        }
    }
    while k_hi - k_lo > 1 {
        let mid = k_lo + (k_hi - k_lo) / 2;
        let c = probe(mid)?;
        if c.status == Status::Feasible {
            k_hi = mid;
            best = c;
        } else {
            k_lo = mid;
        }
    }
    Ok(GammaSearch { gamma: k_hi as f64 * tol, certificate: best, report })
}

/// Result of an upward N scan.
#[derive(Clone, Debug)]
pub struct MinNResult {
    pub n_star: Option<usize>,
    pub certificate: Option<FeasibilityCertificate>,
    pub report: SweepReport,
}

/// Smallest N in [n_from, n_max] whose AMI is feasible.
pub fn min_n<F>(builder: F, n_from: usize, n_max: usize, opts: &SolverOptions) -> Result<MinNResult>
where
    F: Fn(usize) -> Result<AffineMatrixInequality>,
{
    let mut report = SweepReport::default();
    for n in n_from..=n_max {
        let ami = builder(n)?;
        let (cert, ms) = timed(|| solve_margin(&ami, opts));
        let cert = cert?;
        log::debug!("N={n}: {} (margin {:.3e})", cert.status, cert.margin);
        report.push(SweepRow { n, gamma: None, status: cert.status, margin: cert.margin, wall_ms: ms });
        if cert.status == Status::Feasible {
            return Ok(MinNResult { n_star: Some(n), certificate: Some(cert), report });
        }
    }
    Ok(MinNResult { n_star: None, certificate: None, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(sign: f64) -> AffineMatrixInequality {
        AffineMatrixInequality::from_dense(
            DMatrix::from_element(1, 1, 1.0),
            &[DMatrix::from_element(1, 1, 2.0 * sign)],
            vec![VarLabel::P(0, 0)],
            1,
            vec![(-1e8, 1e8)],
        )
        .unwrap()
    }

    #[test]
    fn scalar_lyapunov_feasible() {
        let c = solve_margin(&scalar(-1.0), &SolverOptions::default()).unwrap();
        assert_eq!(c.status, Status::Feasible);
        assert!(c.margin >= 1.0 - 1e-6, "margin {}", c.margin);
        assert!(c.p[(0, 0)] > 0.0);
    }

    #[test]
    fn scalar_lyapunov_infeasible() {
        let c = solve_margin(&scalar(1.0), &SolverOptions::default()).unwrap();
        assert_eq!(c.status, Status::Infeasible);
        assert!(c.dual_objective < -0.9);
    }

    #[test]
    fn rejects_asymmetric_constant() {
        let mut ami = scalar(-1.0);
        ami.constant = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        ami.dim = 2;
        ami.pool = DMatrix::zeros(2, 1);
        ami.row_scaling = DVector::from_element(2, 1.0);
        assert!(matches!(solve_margin(&ami, &SolverOptions::default()), Err(Error::NotSymmetric(_))));
    }

    fn rand_sym(n: usize, seed: &mut u64) -> DMatrix<f64> {
        let mut next = || {
            *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(n, n, |_, _| next());
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn structured_schur_matches_dense() {
        let mut seed = 7u64;
        let n = 5;
        let pool = rand_sym(n, &mut seed).columns(0, 4).into_owned();
        let terms = vec![
            vec![Term { a: 0, b: 1, w: 0.7 }, Term { a: 2, b: 2, w: -0.3 }],
            vec![Term { a: 3, b: 1, w: 1.1 }],
            vec![Term { a: 0, b: 0, w: 0.5 }, Term { a: 1, b: 3, w: 0.2 }],
        ];
        let block = Block { pool, constant: DMatrix::zeros(n, n), terms };
        let x = rand_sym(n, &mut seed);
        let w = rand_sym(n, &mut seed);
        let mut m = DMatrix::zeros(3, 3);
        block.schur(&x, &w, &mut m);
        let f: Vec<DMatrix<f64>> = (0..3)
            .map(|i| {
                let mut y = vec![0.0; 3];
                y[i] = 1.0;
                block.apply(&y)
            })
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                let dense = (&f[i] * &x * &f[j] * &w).trace();
                assert!((m[(i, j)] - dense).abs() < 1e-10 * (1.0 + dense.abs()), "{i},{j}");
            }
        }
        let mut adj = vec![0.0; 3];
        block.adjoint(&x, &mut adj);
        for i in 0..3 {
            assert!((adj[i] - inner(&f[i], &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_header() {
        let mut r = SweepReport::default();
        r.push(SweepRow { n: 4, gamma: Some(0.8), status: Status::Feasible, margin: 1e-3, wall_ms: 1.0 });
        let s = r.to_csv();
        assert!(s.starts_with("N,gamma,status,margin,wall_ms\n4,0.8000,feasible,"));
    }
}
