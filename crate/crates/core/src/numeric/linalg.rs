//! Symmetric eigendecomposition by cyclic Jacobi rotations, and the PSD
//! square root built on it.

use crate::error::{Error, Result};
use crate::numeric::matrix::Matrix;

pub const MAX_SWEEPS: usize = 100;
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Eigenvalues below this are clamped to zero by [`sqrtm_psd`].
pub const PSD_CLAMP_TOL: f64 = 1e-9;
/// Eigenvalues below this make [`sqrtm_psd`] fail.
pub const PSD_REJECT_TOL: f64 = 1e-6;

/// `A = V diag(values) Vᵀ`, eigenvalues sorted descending, eigenvectors in
/// the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEig {
    /// Rebuilds `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let v = &self.vectors;
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += v[(i, k)] * fl[k] * v[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(|l| l)
    }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += a[i * n + j] * a[i * n + j];
        }
    }
    (2.0 * s).sqrt()
}

/// Eigendecomposition of a symmetric matrix.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    if !a.is_square() {
        return Err(Error::Contract(format!(
            "sym_eig needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let scale = a.max_abs().max(1.0);
    if !a.is_symmetric(SYMMETRY_TOL * scale) {
        return Err(Error::Contract("sym_eig input is not symmetric".into()));
    }
    let n = a.rows();
    let mut m = a.data().to_vec();
    // symmetrize so rotations act on an exactly symmetric array
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = avg;
            m[j * n + i] = avg;
        }
    }
    let mut v = Matrix::identity(n);
    let norm = a.frobenius_norm();

    let mut converged = norm == 0.0 || n < 2;
    for sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        if off_diagonal_norm(&m, n) <= OFF_DIAGONAL_TOL * norm {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                // Past the first few sweeps, drop entries too small to move the diagonal.
                if sweep > 3
                    && app.abs() + 100.0 * apq.abs() == app.abs()
                    && aqq.abs() + 100.0 * apq.abs() == aqq.abs()
                {
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, n, p, q, c, s);
                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                let vd = v.data_mut();
                for k in 0..n {
                    let vkp = vd[k * n + p];
                    let vkq = vd[k * n + q];
                    vd[k * n + p] = c * vkp - s * vkq;
                    vd[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&m, n) > OFF_DIAGONAL_TOL * norm {
        return Err(Error::Numeric(format!(
            "Jacobi did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEig { values, vectors })
}

/// Applies the Jacobi rotation to rows/columns `p`, `q` other than the
/// `(p, q)` block itself.
fn rotate(m: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[k * n + p];
        let akq = m[k * n + q];
        let new_p = c * akp - s * akq;
        let new_q = s * akp + c * akq;
        m[k * n + p] = new_p;
        m[p * n + k] = new_p;
        m[k * n + q] = new_q;
        m[q * n + k] = new_q;
    }
}

/// Symmetric PSD square root `X` with `X·X = A`.
pub fn sqrtm_psd(a: &Matrix) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    psd_root_from_eig(&eig)
}

pub(crate) fn check_psd(values: &[f64]) -> Result<()> {
    if let Some(&bad) = values.iter().find(|&&l| l < -PSD_REJECT_TOL) {
        return Err(Error::NotPsd(bad));
    }
    Ok(())
}

pub(crate) fn psd_root_from_eig(eig: &SymEig) -> Result<Matrix> {
    check_psd(&eig.values)?;
    Ok(eig.reconstruct_with(|l| if l < PSD_CLAMP_TOL { 0.0 } else { l.sqrt() }))
}
