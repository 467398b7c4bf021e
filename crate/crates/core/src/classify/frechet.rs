//! Fréchet distance between Gaussian fits of two sample sets, computed on
//! raw flattened pixels.

use crate::error::{Error, Result};
use crate::numeric::linalg::{check_psd, sym_eig};
use crate::numeric::{sqrtm_psd, Matrix};

/// Ridge added to both covariances.
pub const DEFAULT_SHRINKAGE: f64 = 1e-6;
/// Results above this negative value are rounding noise and clamp to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-6;

/// Mean and unbiased covariance of the rows of `samples`.
pub fn gaussian_fit(samples: &[Vec<f64>]) -> Result<(Vec<f64>, Matrix)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Numeric(format!("need at least 2 samples, got {n}")));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::Shape("samples differ in dimension".into()));
    }
    let mut mu = vec![0.0; d];
    for s in samples {
        for (m, v) in mu.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in &mut mu {
        *m /= n as f64;
    }
    let centered = Matrix::from_fn(n, d, |r, c| samples[r][c] - mu[c]);
    let mut cov = centered.transpose().matmul(&centered)?;
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok((mu, cov))
}

/// `‖μ_a − μ_b‖² + Tr(Σ_a + Σ_b − 2 (Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2})`.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    frechet_distance_with(a, b, DEFAULT_SHRINKAGE)
}

pub fn frechet_distance_with(a: &[Vec<f64>], b: &[Vec<f64>], shrinkage: f64) -> Result<f64> {
    let (mu_a, mut cov_a) = gaussian_fit(a)?;
    let (mu_b, mut cov_b) = gaussian_fit(b)?;
    let d = mu_a.len();
    if mu_b.len() != d {
        return Err(Error::Shape(format!("dimensions {d} and {}", mu_b.len())));
    }
    if shrinkage <= 0.0 && (a.len() <= d || b.len() <= d) {
        return Err(Error::Numeric(format!(
            "covariance is singular with {} / {} samples in {d} dimensions and no shrinkage",
            a.len(),
            b.len()
        )));
    }
    for i in 0..d {
        cov_a[(i, i)] += shrinkage;
        cov_b[(i, i)] += shrinkage;
    }
    let mean_term: f64 = mu_a.iter().zip(&mu_b).map(|(x, y)| (x - y) * (x - y)).sum();
    let root_a = sqrtm_psd(&cov_a)?;
    let mut middle = root_a.matmul(&cov_b)?.matmul(&root_a)?;
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (middle[(i, j)] + middle[(j, i)]);
            middle[(i, j)] = v;
            middle[(j, i)] = v;
        }
    }
    let eig = sym_eig(&middle)?;
    check_psd(&eig.values)?;
    let trace_root: f64 = eig.values.iter().map(|&l| l.max(0.0).sqrt()).sum();
    let fd = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * trace_root;
    if fd < -NEGATIVE_TOLERANCE {
        return Err(Error::Numeric(format!("negative Fréchet distance {fd:e}")));
    }
    Ok(fd.max(0.0))
}
