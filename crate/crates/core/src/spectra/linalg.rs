use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};

const CONDITION_LIMIT: f64 = 1e12;

/// Eigenvalues of a symmetric matrix (tridiagonal reduction + implicit QR),
/// sorted in descending order.
pub fn symmetric_eigenvalues_desc(m: DMatrix<f64>) -> Result<Vec<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigen-solver returned non-finite values".into()));
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Eigenvalues of `S₁S₂⁻¹` through the symmetric-definite pencil
/// `S₁v = λS₂v`: with `S₂ = LLᵀ` they are the eigenvalues of `L⁻¹S₁L⁻ᵀ`.
pub fn fisher_eigenvalues(s1: &DMatrix<f64>, s2: DMatrix<f64>) -> Result<Vec<f64>> {
    let p = s2.nrows();
    let chol = Cholesky::new(s2).ok_or(Error::Singular { condition: f64::INFINITY })?;
    let l = chol.l();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..p {
        let d = l[(i, i)];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    // (max Lᵢᵢ / min Lᵢᵢ)² is a lower bound on cond(S₂).
    let condition = (hi / lo).powi(2);
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::Singular { condition });
    }
    let w = l
        .solve_lower_triangular(s1)
        .ok_or(Error::Singular { condition })?;
    let c = l
        .solve_lower_triangular(&w.transpose())
        .ok_or(Error::Singular { condition })?;
    let sym = (&c + c.transpose()) * 0.5;
    symmetric_eigenvalues_desc(sym)
}

/// Eigenvalues of `Σ̂Σ̂ᵀ` for the lag-1 sample auto-covariance
/// `Σ̂ = Σ_t y_{t+1}y_tᵀ / T` of the `p × (T + 1)` panel `y`.
pub fn lag1_spectrum(y: &DMatrix<f64>) -> Result<Vec<f64>> {
    let t = y.ncols().checked_sub(1).filter(|&t| t > 0).ok_or_else(|| {
        Error::config("lag-1 auto-covariance needs at least two observations")
    })?;
    let lead = y.columns(1, t);
    let lag = y.columns(0, t);
    let sigma_hat = lead * lag.transpose() / t as f64;
    symmetric_eigenvalues_desc(&sigma_hat * sigma_hat.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_eigenvalues_sorted() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0, 2.0]));
        assert_eq!(symmetric_eigenvalues_desc(m).unwrap(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn singular_noise_is_rejected() {
        let s1 = DMatrix::identity(3, 3);
        let mut s2 = DMatrix::identity(3, 3);
        s2[(2, 2)] = 1e-14;
        assert!(matches!(fisher_eigenvalues(&s1, s2), Err(Error::Singular { .. })));
        let zero = DMatrix::zeros(3, 3);
        assert!(matches!(fisher_eigenvalues(&s1, zero), Err(Error::Singular { .. })));
    }
}
