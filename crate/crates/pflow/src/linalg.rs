//! Small dense linear-algebra helpers used throughout the flow kernels.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative diagonal jitter applied once when an SPD factorization fails.
pub(crate) const SPD_JITTER_REL: f64 = 1e-9;

/// Cholesky factorization with a single jittered retry.
///
/// Matrices that fail the SPD check by less than `1e-9 * trace / n` on the
/// diagonal are treated as roundoff casualties and factorized after adding
/// that jitter; anything worse is an error.
pub(crate) fn spd_cholesky(m: &DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    debug_assert_eq!(m.nrows(), m.ncols());
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol);
    }
    let n = m.nrows().max(1);
    let jitter = SPD_JITTER_REL * m.trace() / n as f64;
    if jitter > 0.0 {
        let mut mj = m.clone();
        for i in 0..m.nrows() {
            mj[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(mj) {
            return Ok(chol);
        }
    }
    Err(Error::NotSpd { context })
}

/// (A + Aᵀ)/2, removing antisymmetric roundoff.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Condition number σ_max/σ_min of a nonsingular matrix.
///
/// Fails when the smallest singular value is below the machine-scaled
/// threshold `σ_max * max(nrows, ncols) * ε`.
pub fn condition_number(a: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::Empty {
            context: "condition_number",
        });
    }
    let sv = a.clone().singular_values();
    let s_max = sv.max();
    let s_min = sv.min();
    let threshold = s_max * a.nrows().max(a.ncols()) as f64 * f64::EPSILON;
    if !(s_min > threshold) {
        return Err(Error::Singular {
            context: "condition_number",
        });
    }
    Ok(s_max / s_min)
}

/// Moduli of the (possibly complex) eigenvalues of a square matrix.
///
/// Imaginary parts below `1e-8 *` spectral radius are discarded as roundoff;
/// larger ones are logged as a numerical warning and the complex moduli are
/// used as-is.
pub(crate) fn eigenvalue_moduli(a: &DMatrix<f64>, context: &'static str) -> Vec<f64> {
    let eigs = a.clone().complex_eigenvalues();
    let moduli: Vec<f64> = eigs.iter().map(|c| c.norm()).collect();
    let radius = moduli.iter().cloned().fold(0.0_f64, f64::max);
    let max_imag = eigs.iter().map(|c| c.im.abs()).fold(0.0_f64, f64::max);
    if radius > 0.0 && max_imag > 1e-8 * radius {
        log::warn!(
            "{context}: eigenvalues have imaginary parts up to {max_imag:.3e} \
             (spectral radius {radius:.3e}); using complex moduli"
        );
    }
    moduli
}

/// log Σ exp(x_i), stable against overflow; −∞ for an empty or all-−∞ input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let sum: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + sum.ln()
}

/// A Gaussian with its covariance factorization cached for repeated
/// log-density evaluation.
pub(crate) struct CholGaussian {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl CholGaussian {
    pub(crate) fn new(
        mean: DVector<f64>,
        cov: &DMatrix<f64>,
        context: &'static str,
    ) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::dimension(format!(
                "{context}: mean has dim {n} but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let chol = spd_cholesky(cov, context)?;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let log_norm = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            mean,
            chol,
            log_norm,
        })
    }

    pub(crate) fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        let solved = self.chol.solve(&d);
        self.log_norm - 0.5 * d.dot(&solved)
    }

    /// Draw one sample `mean + L w` with `w ~ N(0, I)`.
    pub(crate) fn sample(&self, rng: &mut impl rand::Rng) -> DVector<f64> {
        use rand_distr::StandardNormal;
        let n = self.mean.len();
        let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + self.chol.l_dirty().lower_triangle() * w
    }
}
