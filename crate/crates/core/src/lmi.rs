//! Full-order closed-loop matrices and the stabilization / gain LMIs as affine
//! matrix inequalities in the decision variables (vech P, alpha).
//!
//! Coefficient blocks are stored as short sums of symmetric outer products
//! over a shared pool of vectors, w (v_a v_b^T + v_b v_a^T). For an entry of P
//! the coefficient of P -> R^T P S + S^T P R has two such terms, so the
//! interior-point solver can form its Schur complement from small pool Gram
//! matrices instead of dense block products.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::gains::ReducedModel;
use crate::linalg::{balance, is_symmetric};
use crate::spectral::{lambda, Regime, SpectralModel};

/// Default bound on |P_ij|.
pub const P_BOUND: f64 = 1e8;
/// Default bounds on alpha.
pub const ALPHA_BOUNDS: (f64, f64) = (1e-8, 1e8);
/// Relative lower bound on the equilibrated P.
pub const EPS_REL: f64 = 1e-6;

/// Block sizes of the stacked state [u, w_hat_low, e_low, w_hat_res, e_res].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_ctrl: usize,
    pub n_low: usize,
    pub n_res: usize,
}

impl Layout {
    pub fn ctrl(&self) -> Range<usize> {
        0..self.n_ctrl
    }
    pub fn err(&self) -> Range<usize> {
        self.n_ctrl..self.n_ctrl + self.n_low
    }
    pub fn res_hat(&self) -> Range<usize> {
        let s = self.n_ctrl + self.n_low;
        s..s + self.n_res
    }
    pub fn res_err(&self) -> Range<usize> {
        let s = self.n_ctrl + self.n_low + self.n_res;
        s..s + self.n_res
    }
    pub fn dim(&self) -> usize {
        self.n_ctrl + self.n_low + 2 * self.n_res
    }
}

/// Closed-loop data of the observer-based controller with N estimated modes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopMatrices {
    pub regime: Regime,
    pub n: usize,
    pub n0: usize,
    pub layout: Layout,
    pub low_modes: Vec<usize>,
    pub residual_modes: Vec<usize>,
    pub f: DMatrix<f64>,
    /// [K0, 0].
    pub ktilde: DVector<f64>,
    /// col(Ltilde0, -L0, 0).
    pub lcal: DVector<f64>,
    pub a1: DVector<f64>,
    pub b1: DVector<f64>,
    pub c1: DVector<f64>,
    /// Columns select the modal error coordinates (low then residual), the
    /// entry points of a distributed disturbance.
    pub ed: DMatrix<f64>,
    pub k0: DVector<f64>,
    pub l0: DVector<f64>,
}

pub fn build_closed_loop(
    spectral: &SpectralModel,
    k0: &DVector<f64>,
    l0: &DVector<f64>,
) -> Result<ClosedLoopMatrices> {
    let red = ReducedModel::build(spectral)?;
    let n_low = red.modes.len();
    let n_ctrl = n_low + 1;
    if k0.len() != n_ctrl || l0.len() != n_low {
        return Err(Error::Dimension(format!(
            "gains have sizes K0 {} / L0 {}, expected {} / {}",
            k0.len(),
            l0.len(),
            n_ctrl,
            n_low
        )));
    }
    let residual_modes: Vec<usize> = spectral.residual_modes().collect();
    let n_res = residual_modes.len();
    let layout = Layout { n_ctrl, n_low, n_res };
    let dim = layout.dim();

    let mut a1 = DVector::zeros(n_res);
    let mut b1 = DVector::zeros(n_res);
    let mut c1 = DVector::zeros(n_res);
    for (j, &k) in residual_modes.iter().enumerate() {
        a1[j] = spectral.rate(k);
        b1[j] = spectral.b[spectral.pos(k)];
        c1[j] = spectral.c[spectral.pos(k)];
    }
    let mut ltilde = DVector::zeros(n_ctrl);
    ltilde.rows_mut(1, n_low).copy_from(l0);

    let (c, e, rh, re) = (layout.ctrl(), layout.err(), layout.res_hat(), layout.res_err());
    let mut f = DMatrix::zeros(dim, dim);
    f.view_mut((c.start, c.start), (n_ctrl, n_ctrl)).copy_from(&red.controller_matrix(k0));
    f.view_mut((c.start, e.start), (n_ctrl, n_low)).copy_from(&(&ltilde * red.c0.transpose()));
    f.view_mut((c.start, re.start), (n_ctrl, n_res)).copy_from(&(&ltilde * c1.transpose()));
    f.view_mut((e.start, e.start), (n_low, n_low)).copy_from(&red.observer_matrix(l0));
    f.view_mut((e.start, re.start), (n_low, n_res)).copy_from(&(-(l0 * c1.transpose())));
    f.view_mut((rh.start, c.start), (n_res, n_ctrl)).copy_from(&(&b1 * k0.transpose()));
    for j in 0..n_res {
        f[(rh.start + j, rh.start + j)] = a1[j];
        f[(re.start + j, re.start + j)] = a1[j];
    }

    let mut ktilde = DVector::zeros(dim);
    ktilde.rows_mut(0, n_ctrl).copy_from(k0);
    let mut lcal = DVector::zeros(dim);
    lcal.rows_mut(0, n_ctrl).copy_from(&ltilde);
    lcal.rows_mut(e.start, n_low).copy_from(&(-l0));

    let mut ed = DMatrix::zeros(dim, n_low + n_res);
    for i in 0..n_low {
        ed[(e.start + i, i)] = 1.0;
    }
    for j in 0..n_res {
        ed[(re.start + j, n_low + j)] = 1.0;
    }

    Ok(ClosedLoopMatrices {
        regime: spectral.regime,
        n: spectral.n,
        n0: spectral.n0,
        layout,
        low_modes: red.modes,
        residual_modes,
        f,
        ktilde,
        lcal,
        a1,
        b1,
        c1,
        ed,
        k0: k0.clone(),
        l0: l0.clone(),
    })
}

/// Performance output matrix: rho_u u, and rho_w (w_hat_k + e_k) per estimated mode.
pub fn xi1(cl: &ClosedLoopMatrices, rho_w: f64, rho_u: f64) -> DMatrix<f64> {
    let l = cl.layout;
    let rows = 1 + l.n_low + l.n_res;
    let mut x = DMatrix::zeros(rows, l.dim());
    x[(0, 0)] = rho_u;
    for i in 0..l.n_low {
        x[(1 + i, 1 + i)] = rho_w;
        x[(1 + i, l.err().start + i)] = rho_w;
    }
    for j in 0..l.n_res {
        x[(1 + l.n_low + j, l.res_hat().start + j)] = rho_w;
        x[(1 + l.n_low + j, l.res_err().start + j)] = rho_w;
    }
    x
}

/// Which tail-gap expression sits in the zeta corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaKind {
    Stabilization,
    NeumannStabilization,
    Gain,
    NeumannGain,
}

/// Parameters entering the theta expressions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaParams {
    pub nu: f64,
    pub delta: f64,
    pub rho_w: f64,
    pub sobolev_split: f64,
}

pub fn mu(lambda: f64, sobolev_split: f64) -> f64 {
    1.0 + sobolev_split + lambda / sobolev_split
}

pub fn theta(kind: ThetaKind, l: f64, p: ThetaParams) -> f64 {
    let ThetaParams { nu, delta, rho_w, sobolev_split } = p;
    match kind {
        ThetaKind::Stabilization => l * l - nu * l - delta,
        ThetaKind::NeumannStabilization => {
            (l.powi(4) - nu * l.powi(3) - delta * l * l) / mu(l, sobolev_split)
        }
        ThetaKind::Gain => l * l - nu * l - delta - rho_w * rho_w / (2.0 * l),
        ThetaKind::NeumannGain => {
            (l.powi(3) - nu * l * l - delta * l - 0.5 * rho_w * rho_w) / mu(l, sobolev_split)
        }
    }
}

/// Name of a scalar decision variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarLabel {
    /// Entry (i, j), i <= j, of the symmetric Lyapunov matrix.
    P(usize, usize),
    Alpha,
    /// Unstructured scalar (generic AMIs).
    Free(usize),
}

impl std::fmt::Display for VarLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VarLabel::P(i, j) => write!(f, "P[{i},{j}]"),
            VarLabel::Alpha => write!(f, "alpha"),
            VarLabel::Free(i) => write!(f, "x{i}"),
        }
    }
}

/// One symmetric outer-product term w (v_a v_b^T + v_b v_a^T) over the pool.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub a: usize,
    pub b: usize,
    pub w: f64,
}

/// A(x) = C + sum_i x_i A_i required negative definite, with side
/// constraints P(x) >= eps I (in the equilibrated coordinates) and box bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMatrixInequality {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    /// dim x q matrix whose columns are the vectors referenced by the terms.
    pub pool: DMatrix<f64>,
    pub coeffs: Vec<Vec<Term>>,
    pub labels: Vec<VarLabel>,
    /// Size of the Lyapunov matrix (0 when the AMI has no P structure).
    pub p_dim: usize,
    /// Lower bound on lambda_min of the equilibrated P.
    pub eps: f64,
    pub bounds: Vec<(f64, f64)>,
    /// Diagonal congruence D applied before measuring definiteness; D A D is
    /// negative definite iff A is.
    pub row_scaling: DVector<f64>,
}

impl AffineMatrixInequality {
    /// Builds an AMI from dense symmetric blocks; each coefficient block is
    /// stored through its eigen-decomposition.
    pub fn from_dense(
        constant: DMatrix<f64>,
        blocks: &[DMatrix<f64>],
        labels: Vec<VarLabel>,
        p_dim: usize,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let dim = constant.nrows();
        if constant.ncols() != dim {
            return Err(Error::Dimension("constant block must be square".into()));
        }
        if !is_symmetric(&constant, 1e-14) {
            return Err(Error::NotSymmetric("constant block".into()));
        }
        if labels.len() != blocks.len() || bounds.len() != blocks.len() {
            return Err(Error::Dimension("labels/bounds must match the number of blocks".into()));
        }
        let mut cols: Vec<DVector<f64>> = Vec::new();
        let mut coeffs = Vec::with_capacity(blocks.len());
        for (i, blk) in blocks.iter().enumerate() {
            if blk.nrows() != dim || blk.ncols() != dim {
                return Err(Error::Dimension(format!("block {i} has the wrong size")));
            }
            if !is_symmetric(blk, 1e-14) {
                return Err(Error::NotSymmetric(format!("coefficient block {i}")));
            }
            let eig = nalgebra::SymmetricEigen::new(blk.clone());
            let mut terms = Vec::new();
            for k in 0..dim {
                let ev = eig.eigenvalues[k];
                if ev != 0.0 {
                    cols.push(eig.eigenvectors.column(k).into_owned());
                    let a = cols.len() - 1;
                    terms.push(Term { a, b: a, w: 0.5 * ev });
                }
            }
            coeffs.push(terms);
        }
        let pool = if cols.is_empty() { DMatrix::zeros(dim, 0) } else { DMatrix::from_columns(&cols) };
        Ok(AffineMatrixInequality {
            dim,
            constant,
            pool,
            coeffs,
            labels,
            p_dim,
            eps: 0.0,
            bounds,
            row_scaling: DVector::from_element(dim, 1.0),
        })
    }

    pub fn num_vars(&self) -> usize {
        self.coeffs.len()
    }

    /// Dense coefficient block of variable i.
    pub fn coeff_dense(&self, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for t in &self.coeffs[i] {
            let va = self.pool.column(t.a);
            let vb = self.pool.column(t.b);
            m.ger(t.w, &va, &vb, 1.0);
            m.ger(t.w, &vb, &va, 1.0);
        }
        // mirror so the block is symmetric bit for bit
        for r in 0..self.dim {
            for c in 0..r {
                m[(r, c)] = m[(c, r)];
            }
        }
        m
    }

    /// A(x), assembled densely block by block.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                m += self.coeff_dense(i) * xi;
            }
        }
        m
    }

    /// D A(x) D.
    pub fn eval_equilibrated(&self, x: &[f64]) -> DMatrix<f64> {
        let d = &self.row_scaling;
        let mut m = self.eval(x);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[(i, j)] *= d[i] * d[j];
            }
        }
        m
    }

    /// 1 + max |D C D|, the magnitude that tolerances are measured against.
    pub fn scale(&self) -> f64 {
        let d = &self.row_scaling;
        let mut s: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s = s.max((self.constant[(i, j)] * d[i] * d[j]).abs());
            }
        }
        1.0 + s
    }

    /// Per-state scaling T with P = T Pt T, chosen so that every diagonal P
    /// entry's equilibrated coefficient block has unit max-abs entry.
    pub fn state_scaling(&self) -> DVector<f64> {
        let mut t = DVector::from_element(self.p_dim, 1.0);
        for (i, lab) in self.labels.iter().enumerate() {
            if let VarLabel::P(k, l) = *lab {
                if k == l {
                    let m = self.equilibrated_coeff_amax(i);
                    if m > 0.0 && m.is_finite() {
                        t[k] = 1.0 / m.sqrt();
                    }
                }
            }
        }
        t
    }

    pub(crate) fn equilibrated_coeff_amax(&self, i: usize) -> f64 {
        let d = &self.row_scaling;
        let c = self.coeff_dense(i);
        let mut m: f64 = 0.0;
        for r in 0..self.dim {
            for s in 0..self.dim {
                m = m.max((c[(r, s)] * d[r] * d[s]).abs());
            }
        }
        m
    }

    /// Symmetric P built from the decision vector.
    pub fn p_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.p_dim, self.p_dim);
        for (i, lab) in self.labels.iter().enumerate() {
            if let VarLabel::P(k, l) = *lab {
                p[(k, l)] = x[i];
                p[(l, k)] = x[i];
            }
        }
        p
    }

    pub fn alpha_value(&self, x: &[f64]) -> Option<f64> {
        self.labels.iter().position(|l| *l == VarLabel::Alpha).map(|i| x[i])
    }

    /// Decision vector for a given (P, alpha).
    pub fn encode(&self, p: &DMatrix<f64>, alpha: f64) -> Vec<f64> {
        self.labels
            .iter()
            .map(|lab| match *lab {
                VarLabel::P(k, l) => p[(k, l)],
                VarLabel::Alpha => alpha,
                VarLabel::Free(_) => 0.0,
            })
            .collect()
    }

    /// Debug/diffing export: dense row-major blocks with labels.
    pub fn to_json(&self) -> serde_json::Value {
        let dense = |m: &DMatrix<f64>| -> Vec<f64> {
            let mut v = Vec::with_capacity(m.len());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    v.push(m[(i, j)]);
                }
            }
            v
        };
        let blocks: Vec<serde_json::Value> = (0..self.num_vars())
            .map(|i| {
                json!({
                    "label": self.labels[i].to_string(),
                    "matrix": dense(&self.coeff_dense(i)),
                    "bounds": [self.bounds[i].0, self.bounds[i].1],
                })
            })
            .collect();
        json!({
            "dim": self.dim,
            "constant": dense(&self.constant),
            "blocks": blocks,
            "p_dim": self.p_dim,
            "eps": self.eps,
            "row_scaling": self.row_scaling.as_slice(),
        })
    }
}

/// Accumulates the structured pieces of one LMI before emitting the AMI.
struct Assembly {
    dim: usize,
    n: usize,
    constant: DMatrix<f64>,
    /// n x dim: P appears as R^T P S + S^T P R with R = [I_n, 0].
    s: DMatrix<f64>,
    alpha_terms: Vec<(DVector<f64>, DVector<f64>, f64)>,
    row_scaling: DVector<f64>,
}

impl Assembly {
    fn new(n: usize, dim: usize, g: &DMatrix<f64>) -> Self {
        let mut s = DMatrix::zeros(n, dim);
        s.view_mut((0, 0), (n, n)).copy_from(g);
        Assembly {
            dim,
            n,
            constant: DMatrix::zeros(dim, dim),
            s,
            alpha_terms: Vec::new(),
            row_scaling: DVector::from_element(dim, 1.0),
        }
    }

    fn unit(&self, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        v[i] = 1.0;
        v
    }

    fn embed(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        v.rows_mut(0, x.len()).copy_from(x);
        v
    }

    fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.constant[(i, j)] = v;
        self.constant[(j, i)] = v;
    }

    /// Balances the state coordinates so the margin is not dominated by
    /// badly scaled states: X rows get congruence factor 1/b.
    fn balance_states(&mut self) {
        let n = self.n;
        let g = self.s.view((0, 0), (n, n)).into_owned();
        let extra: Vec<f64> = (0..n)
            .map(|k| (n..self.dim).map(|e| (self.s[(k, e)] * self.row_scaling[e]).abs()).sum())
            .collect();
        let b = balance(&g, &extra);
        for k in 0..n {
            self.row_scaling[k] = 1.0 / b[k];
        }
    }

    fn finish(mut self) -> AffineMatrixInequality {
        self.balance_states();
        let (n, dim) = (self.n, self.dim);
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(2 * n + 2 * self.alpha_terms.len());
        for k in 0..n {
            cols.push(self.unit(k));
        }
        for l in 0..n {
            cols.push(self.s.row(l).transpose());
        }
        let mut labels = Vec::new();
        let mut coeffs = Vec::new();
        let mut bounds = Vec::new();
        for k in 0..n {
            for l in k..n {
                labels.push(VarLabel::P(k, l));
                bounds.push((-P_BOUND, P_BOUND));
                if k == l {
                    coeffs.push(vec![Term { a: k, b: n + k, w: 1.0 }]);
                } else {
                    coeffs.push(vec![Term { a: k, b: n + l, w: 1.0 }, Term { a: l, b: n + k, w: 1.0 }]);
                }
            }
        }
        let mut alpha = Vec::new();
        for (a, b, w) in self.alpha_terms {
            cols.push(a);
            cols.push(b);
            let ia = cols.len() - 2;
            alpha.push(Term { a: ia, b: ia + 1, w });
        }
        labels.push(VarLabel::Alpha);
        bounds.push(ALPHA_BOUNDS);
        coeffs.push(alpha);
        let scale_const = {
            let d = &self.row_scaling;
            let mut s: f64 = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    s = s.max((self.constant[(i, j)] * d[i] * d[j]).abs());
                }
            }
            1.0 + s
        };
        AffineMatrixInequality {
            dim,
            constant: self.constant,
            pool: DMatrix::from_columns(&cols),
            coeffs,
            labels,
            p_dim: n,
            eps: EPS_REL * scale_const,
            bounds,
            row_scaling: self.row_scaling,
        }
    }
}

fn next_lambda(cl: &ClosedLoopMatrices) -> f64 {
    lambda(cl.n + 1)
}

/// Congruence factor for a row with constant diagonal c != 0.
fn inv_sqrt_abs(c: f64) -> f64 {
    if c != 0.0 && c.is_finite() {
        1.0 / c.abs().sqrt()
    } else {
        1.0
    }
}

/// Stabilization LMI in Schur form:
/// [[Phi, P L, 0], [*, -2 theta, 1], [*, *, -alpha kappa]] < 0 with
/// Phi = P F + F^T P + 2 delta P + (2 alpha / (pi^2 N)) Kt^T Kt.
pub fn assemble_stab_lmi(
    cl: &ClosedLoopMatrices,
    spectral: &SpectralModel,
    delta: f64,
    sobolev_split: f64,
) -> AffineMatrixInequality {
    let n = cl.layout.dim();
    let dim = n + 2;
    let (iz, is) = (n, n + 1);
    let l = next_lambda(cl);
    let params = ThetaParams { nu: spectral.nu, delta, rho_w: 0.0, sobolev_split };
    let (th, kappa) = match cl.regime {
        Regime::Dirichlet => (theta(ThetaKind::Stabilization, l, params), 1.0 / l),
        Regime::Neumann => (
            theta(ThetaKind::NeumannStabilization, l, params),
            mu(l, sobolev_split) / l.powi(3),
        ),
    };
    let g = &cl.f + DMatrix::<f64>::identity(n, n) * delta;
    let mut asm = Assembly::new(n, dim, &g);
    asm.s.set_column(iz, &cl.lcal);
    asm.set_sym(iz, iz, -2.0 * th);
    asm.set_sym(iz, is, 1.0);
    let c_tail = 2.0 / (PI * PI * cl.n as f64);
    let kt = asm.embed(&cl.ktilde);
    asm.alpha_terms.push((kt.clone(), kt, 0.5 * c_tail));
    let es = asm.unit(is);
    asm.alpha_terms.push((es.clone(), es, -0.5 * kappa));
    let dz = inv_sqrt_abs(2.0 * th);
    asm.row_scaling[iz] = dz;
    asm.row_scaling[is] = 1.0 / dz;
    asm.finish()
}

/// L2-gain / ISS LMI in Schur form with output rows Xi1, disturbance columns
/// P E_d (distributed) and P L (measurement), and alpha_1 = gamma^2.
#[allow(clippy::too_many_arguments)]
pub fn assemble_gain_lmi(
    cl: &ClosedLoopMatrices,
    spectral: &SpectralModel,
    delta: f64,
    gamma: f64,
    rho_w: f64,
    rho_u: f64,
    sobolev_split: f64,
) -> AffineMatrixInequality {
    let lay = cl.layout;
    let n = lay.dim();
    let nd = lay.n_low + lay.n_res;
    let xi = xi1(cl, rho_w, rho_u);
    let nout = xi.nrows();
    let (iz, is1, is2) = (n, n + 1, n + 2);
    let id0 = n + 3;
    let isig = id0 + nd;
    let io0 = isig + 1;
    let dim = io0 + nout;

    let l = next_lambda(cl);
    let params = ThetaParams { nu: spectral.nu, delta, rho_w, sobolev_split };
    let g2 = gamma * gamma;
    let (th, kappa1, kappa2) = match cl.regime {
        Regime::Dirichlet => (theta(ThetaKind::Gain, l, params), 1.0 / l, 1.0 / l),
        Regime::Neumann => {
            let m = mu(l, sobolev_split);
            (theta(ThetaKind::NeumannGain, l, params), m / l, m / (l * l))
        }
    };
    let g = &cl.f + DMatrix::<f64>::identity(n, n) * delta;
    let mut asm = Assembly::new(n, dim, &g);
    asm.s.set_column(iz, &cl.lcal);
    for k in 0..nd {
        asm.s.set_column(id0 + k, &cl.ed.column(k));
    }
    asm.s.set_column(isig, &cl.lcal);

    asm.set_sym(iz, iz, -2.0 * th);
    asm.set_sym(iz, is1, 1.0);
    asm.set_sym(iz, is2, 1.0);
    asm.set_sym(is2, is2, -g2 * kappa2);
    for k in 0..nd {
        asm.set_sym(id0 + k, id0 + k, -g2);
    }
    asm.set_sym(isig, isig, -g2);
    for r in 0..nout {
        asm.set_sym(io0 + r, io0 + r, -1.0);
        for c in 0..n {
            if xi[(r, c)] != 0.0 {
                asm.set_sym(c, io0 + r, xi[(r, c)]);
            }
        }
    }
    let c_tail = 2.0 / (PI * PI * cl.n as f64);
    let kt = asm.embed(&cl.ktilde);
    asm.alpha_terms.push((kt.clone(), kt, 0.5 * c_tail));
    let es = asm.unit(is1);
    asm.alpha_terms.push((es.clone(), es, -0.5 * kappa1));

    let dz = inv_sqrt_abs(2.0 * th);
    asm.row_scaling[iz] = dz;
    asm.row_scaling[is1] = 1.0 / dz;
    asm.row_scaling[is2] = inv_sqrt_abs(g2 * kappa2);
    for k in 0..nd {
        asm.row_scaling[id0 + k] = 1.0 / gamma;
    }
    asm.row_scaling[isig] = 1.0 / gamma;
    asm.finish()
}

/// Phi = P G + G^T P + c alpha Kt^T Kt with G = F + delta I.
fn phi(cl: &ClosedLoopMatrices, delta: f64, p: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let n = cl.layout.dim();
    let g = &cl.f + DMatrix::<f64>::identity(n, n) * delta;
    let c_tail = 2.0 / (PI * PI * cl.n as f64);
    p * &g + g.transpose() * p + &cl.ktilde * cl.ktilde.transpose() * (c_tail * alpha)
}

/// Stabilization LMI before the Schur step: [[Phi, P L], [*, -2 (theta - tail/alpha)]].
pub fn pre_schur_stab(
    cl: &ClosedLoopMatrices,
    spectral: &SpectralModel,
    delta: f64,
    sobolev_split: f64,
    p: &DMatrix<f64>,
    alpha: f64,
) -> DMatrix<f64> {
    let n = cl.layout.dim();
    let l = next_lambda(cl);
    let params = ThetaParams { nu: spectral.nu, delta, rho_w: 0.0, sobolev_split };
    let corner = match cl.regime {
        Regime::Dirichlet => -2.0 * (theta(ThetaKind::Stabilization, l, params) - l / (2.0 * alpha)),
        Regime::Neumann => {
            let m = mu(l, sobolev_split);
            -2.0 * (theta(ThetaKind::NeumannStabilization, l, params) - l.powi(3) / (2.0 * alpha * m))
        }
    };
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(&phi(cl, delta, p, alpha));
    let pl = p * &cl.lcal;
    out.view_mut((0, n), (n, 1)).copy_from(&pl);
    out.view_mut((n, 0), (1, n)).copy_from(&pl.transpose());
    out[(n, n)] = corner;
    out
}

/// Gain LMI before the Schur steps:
/// [[Phi + Xi1^T Xi1, P L, P E_d, P L], [*, corner, 0, 0], [*, *, -gamma^2 I]].
#[allow(clippy::too_many_arguments)]
pub fn pre_schur_gain(
    cl: &ClosedLoopMatrices,
    spectral: &SpectralModel,
    delta: f64,
    gamma: f64,
    rho_w: f64,
    rho_u: f64,
    sobolev_split: f64,
    p: &DMatrix<f64>,
    alpha: f64,
) -> DMatrix<f64> {
    let n = cl.layout.dim();
    let nd = cl.ed.ncols();
    let l = next_lambda(cl);
    let g2 = gamma * gamma;
    let params = ThetaParams { nu: spectral.nu, delta, rho_w, sobolev_split };
    let corner = match cl.regime {
        Regime::Dirichlet => {
            -2.0 * (theta(ThetaKind::Gain, l, params) - l / (2.0 * alpha) - l / (2.0 * g2))
        }
        Regime::Neumann => {
            let m = mu(l, sobolev_split);
            -2.0 * (theta(ThetaKind::NeumannGain, l, params) - l / (2.0 * alpha * m) - l * l / (2.0 * g2 * m))
        }
    };
    let xi = xi1(cl, rho_w, rho_u);
    let dim = n + 1 + nd + 1;
    let mut out = DMatrix::zeros(dim, dim);
    out.view_mut((0, 0), (n, n)).copy_from(&(phi(cl, delta, p, alpha) + xi.transpose() * &xi));
    let pl = p * &cl.lcal;
    let ped = p * &cl.ed;
    out.view_mut((0, n), (n, 1)).copy_from(&pl);
    out.view_mut((0, n + 1), (n, nd)).copy_from(&ped);
    out.view_mut((0, n + 1 + nd), (n, 1)).copy_from(&pl);
    let top = out.view((0, n), (n, 1 + nd + 1)).transpose();
    out.view_mut((n, 0), (1 + nd + 1, n)).copy_from(&top);
    out[(n, n)] = corner;
    for k in 0..(nd + 1) {
        out[(n + 1 + k, n + 1 + k)] = -g2;
    }
    out
}

/// Weights of the original-variable performance index expressed in the
/// shifted variables: (sqrt(2) rz, sqrt(2 rz^2 / 3 + ru^2)).
pub fn map_zbar_weights(rho_z: f64, rho_u: f64) -> (f64, f64) {
    (2f64.sqrt() * rho_z, (2.0 * rho_z * rho_z / 3.0 + rho_u * rho_u).sqrt())
}
