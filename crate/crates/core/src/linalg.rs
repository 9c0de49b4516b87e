//! Small dense helpers shared by the design, certification and simulation code.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Solves A^T P + P A = Q by a complex Schur (Bartels-Stewart) reduction:
/// with A = U T U^H the transformed unknown solves T^H X + X T = U^H Q U
/// column by column through forward substitution.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension("Lyapunov operands must be square and equal".into()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ac: DMatrix<Complex<f64>> = a.map(|v| Complex::new(v, 0.0));
    let (u, t) = ac.schur().unpack();
    let scale = (0..n).map(|i| t[(i, i)].norm()).fold(1.0, f64::max);
    let qt = u.adjoint() * q.map(|v| Complex::new(v, 0.0)) * &u;
    let mut x = DMatrix::<Complex<f64>>::zeros(n, n);
    for j in 0..n {
        let mut rhs: Vec<Complex<f64>> = (0..n).map(|i| qt[(i, j)]).collect();
        for k in 0..j {
            let tkj = t[(k, j)];
            for (i, r) in rhs.iter_mut().enumerate() {
                *r -= x[(i, k)] * tkj;
            }
        }
        // (T^H + t_jj I) is lower triangular.
        for i in 0..n {
            let mut v = rhs[i];
            for k in 0..i {
                v -= t[(k, i)].conj() * x[(k, j)];
            }
            let d = t[(i, i)].conj() + t[(j, j)];
            // The operator is singular exactly when two eigenvalues sum to zero.
            if d.norm() <= 1e-12 * scale {
                return Err(Error::DegenerateLyapunov);
            }
            x[(i, j)] = v / d;
        }
    }
    let p = (&u * x * u.adjoint()).map(|z| z.re);
    if !p.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateLyapunov);
    }
    Ok(symmetrize(&p))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    (a - a.transpose()).amax() <= rel_tol * scale
}

/// Cholesky test for positive definiteness after unit-diagonal (Jacobi)
/// scaling: every pivot must exceed `rel_tol`. The scaling is a congruence,
/// so it removes badly scaled coordinates without changing the verdict.
pub fn cholesky_pd(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    if !(0..n).all(|i| a[(i, i)] > 0.0 && a[(i, i)].is_finite()) {
        return false;
    }
    let s: Vec<f64> = (0..n).map(|i| 1.0 / a[(i, i)].sqrt()).collect();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] * s[j] * s[j];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > rel_tol) {
            return false;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut v = a[(i, j)] * s[i] * s[j];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / d;
        }
    }
    true
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn lambda_max(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn lambda_min(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(f64::INFINITY)
}

/// Eigenvalues of a general real matrix as (re, im) pairs.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
}

pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|z| z.0).fold(f64::NEG_INFINITY, f64::max)
}

/// Osborne balancing: positive b with B G B^-1 having comparable off-diagonal
/// row and column sums. `extra[k]` adds row-only weight that scales with b_k.
/// Normalized to unit geometric mean.
pub fn balance(g: &DMatrix<f64>, extra: &[f64]) -> DVector<f64> {
    let n = g.nrows();
    let mut b = DVector::from_element(n, 1.0);
    for _ in 0..100 {
        let mut changed = false;
        for k in 0..n {
            let mut r = extra.get(k).copied().unwrap_or(0.0) * b[k];
            let mut c = 0.0;
            for j in 0..n {
                if j != k {
                    r += g[(k, j)].abs() * b[k] / b[j];
                    c += g[(j, k)].abs() * b[j] / b[k];
                }
            }
            if r > 0.0 && c > 0.0 {
                let f = (c / r).sqrt().clamp(1e-4, 1e4);
                if (f - 1.0).abs() > 1e-3 {
                    b[k] *= f;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if n > 0 {
        let gm = (b.iter().map(|v| v.ln()).sum::<f64>() / n as f64).exp();
        b /= gm;
    }
    b
}

/// Diagonal matrix from a slice.
pub fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_lyapunov() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let p = solve_lyapunov(&a, &DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_residual_small() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 0.3, -1.0, 0.5, 0.0, -0.7, -3.0]);
        let q = -DMatrix::<f64>::identity(3, 3);
        let p = solve_lyapunov(&a, &q).unwrap();
        let r = a.transpose() * &p + &p * &a - &q;
        assert!(r.amax() < 1e-12);
        assert!(cholesky_pd(&p, 1e-10));
    }

    #[test]
    fn degenerate_lyapunov_detected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            solve_lyapunov(&a, &DMatrix::identity(2, 2)),
            Err(Error::DegenerateLyapunov)
        ));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(!cholesky_pd(&a, 1e-10));
        assert!(cholesky_pd(&DMatrix::identity(3, 3), 1e-10));
    }

    #[test]
    fn balancing_equalizes_couplings() {
        let g = DMatrix::from_row_slice(2, 2, &[-1.0, 1e4, 1.0, -2.0]);
        let b = balance(&g, &[]);
        let off1 = g[(0, 1)] * b[0] / b[1];
        let off2 = g[(1, 0)] * b[1] / b[0];
        assert!((off1 / off2 - 1.0).abs() < 1e-2);
        assert!((b[0] * b[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_helpers() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        assert!((max_real_eigenvalue(&a) + 1.0).abs() < 1e-12);
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((lambda_max(&s) - 3.0).abs() < 1e-12);
        assert!((lambda_min(&s) - 1.0).abs() < 1e-12);
    }
}
