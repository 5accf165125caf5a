//! Closed-form drift, diffusion, and diffusion-optimization kernels for
//! linearized Gaussian measurement models.
//!
//! All formulas are written against the homotopy Hessian
//! `M(λ) = P₀⁻¹ + λ HᵀR⁻¹H` of the log-homotopy
//! `φ(x, λ) = log N(x; μ₀, P₀) + λ log N(z_eff; Hx, R)`. Every inverse of
//! `M` is an SPD factorization and solve, never an explicit inversion.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalue_moduli, spd_cholesky, symmetrize};

pub use crate::linalg::condition_number;

/// Local affine measurement model `z ≈ H x + offset + v`, `v ~ N(0, R)`.
///
/// `offset = h(x_lin) − H·x_lin` centralizes the linearization so the flow
/// formulas written for a linear model apply verbatim through
/// [`LinearizedModel::z_eff`].
#[derive(Debug, Clone)]
pub struct LinearizedModel {
    /// Measurement Jacobian, M×N.
    pub h: DMatrix<f64>,
    /// Measurement-noise covariance, M×M, SPD.
    pub r: DMatrix<f64>,
    /// Measurement vector, length M.
    pub z: DVector<f64>,
    /// Linearization point, length N.
    pub x_lin: DVector<f64>,
    /// `h(x_lin) − H·x_lin`, length M.
    pub offset: DVector<f64>,
}

impl LinearizedModel {
    pub fn new(
        h: DMatrix<f64>,
        r: DMatrix<f64>,
        z: DVector<f64>,
        x_lin: DVector<f64>,
        offset: DVector<f64>,
    ) -> Result<Self> {
        let m = h.nrows();
        let n = h.ncols();
        if r.nrows() != m || r.ncols() != m || z.len() != m || offset.len() != m {
            return Err(Error::dimension(format!(
                "linearized model: H is {m}x{n} but R is {}x{}, z has {}, offset has {}",
                r.nrows(),
                r.ncols(),
                z.len(),
                offset.len()
            )));
        }
        if x_lin.len() != n {
            return Err(Error::dimension(format!(
                "linearized model: H has {n} columns but x_lin has {}",
                x_lin.len()
            )));
        }
        Ok(Self {
            h,
            r,
            z,
            x_lin,
            offset,
        })
    }

    /// A model that is already linear: zero offset, linearization at the
    /// origin.
    pub fn linear(h: DMatrix<f64>, r: DMatrix<f64>, z: DVector<f64>) -> Result<Self> {
        let n = h.ncols();
        let m = h.nrows();
        Self::new(h, r, z, DVector::zeros(n), DVector::zeros(m))
    }

    /// Measurement with the affine offset removed: `z − offset`.
    pub fn z_eff(&self) -> DVector<f64> {
        &self.z - &self.offset
    }

    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }
}

/// The Gaussian prior `N(μ₀, P₀)` a flow starts from.
#[derive(Debug, Clone)]
pub struct PriorGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl PriorGaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::dimension(format!(
                "prior: mean has dim {n} but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Affine drift `ζ(x) = A x + b` at pseudo-time `lambda`.
#[derive(Debug, Clone)]
pub struct AffineDrift {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lambda: f64,
}

impl AffineDrift {
    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

/// Which diffusion the flow uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionConfig {
    /// Zero diffusion: the deterministic flow obtained from Gromov's flow by
    /// removing its diffusion term.
    Deterministic,
    /// Gromov's closed-form diffusion `Q_g`.
    Gromov,
    /// Scaled-inverse-Hessian diffusion `Q = c*(λ) M(λ)⁻¹` with `c*`
    /// minimizing `κ(A_s(c)) + α c` at each pseudo-time.
    Optimized { alpha: f64 },
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        if let DiffusionConfig::Optimized { alpha } = self {
            if !(*alpha > 0.0) {
                return Err(Error::invalid(format!(
                    "diffusion alpha must be > 0, got {alpha}"
                )));
            }
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!(
            "pseudo-time lambda must be in [0, 1], got {lambda}"
        )));
    }
    Ok(())
}

fn check_dims(prior: &PriorGaussian, model: &LinearizedModel) -> Result<()> {
    if prior.dim() != model.state_dim() {
        return Err(Error::dimension(format!(
            "prior has dim {} but model expects {}",
            prior.dim(),
            model.state_dim()
        )));
    }
    Ok(())
}

/// Shared factorizations for one `(λ, prior, model)` triple.
///
/// All public flow operations are thin wrappers over this kernel; callers
/// that need several quantities at the same pseudo-time (the integrators)
/// build it once.
pub(crate) struct FlowKernel {
    lambda: f64,
    /// `M(λ) = P₀⁻¹ + λ HᵀR⁻¹H`.
    m: DMatrix<f64>,
    m_chol: Cholesky<f64, Dyn>,
    /// `S = HᵀR⁻¹H`.
    s: DMatrix<f64>,
    /// `HᵀR⁻¹ z_eff`.
    ht_rinv_zeff: DVector<f64>,
    /// `P₀⁻¹ μ₀`.
    p0_inv_mu0: DVector<f64>,
}

impl FlowKernel {
    pub(crate) fn new(
        lambda: f64,
        prior: &PriorGaussian,
        model: &LinearizedModel,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        check_dims(prior, model)?;
        let p0_chol = spd_cholesky(&prior.cov, "prior covariance")?;
        let r_chol = spd_cholesky(&model.r, "measurement noise covariance")?;

        let rinv_h = r_chol.solve(&model.h);
        let mut s = model.h.tr_mul(&rinv_h);
        symmetrize(&mut s);

        let mut m = p0_chol.inverse() + &s * lambda;
        symmetrize(&mut m);
        let m_chol = spd_cholesky(&m, "homotopy Hessian")?;

        let ht_rinv_zeff = model.h.tr_mul(&r_chol.solve(&model.z_eff()));
        let p0_inv_mu0 = p0_chol.solve(&prior.mean);

        Ok(Self {
            lambda,
            m,
            m_chol,
            s,
            ht_rinv_zeff,
            p0_inv_mu0,
        })
    }

    /// Drift of Gromov's flow: `A = −M⁻¹S`, `b = M⁻¹HᵀR⁻¹z_eff`.
    pub(crate) fn gromov_affine(&self) -> AffineDrift {
        AffineDrift {
            a: -self.m_chol.solve(&self.s),
            b: self.m_chol.solve(&self.ht_rinv_zeff),
            lambda: self.lambda,
        }
    }

    /// Gromov's diffusion `Q_g = M⁻¹ S M⁻¹`, symmetric PSD.
    pub(crate) fn gromov_diffusion(&self) -> DMatrix<f64> {
        let minv_s = self.m_chol.solve(&self.s);
        let mut q = self.m_chol.solve(&minv_s.transpose());
        symmetrize(&mut q);
        q
    }

    /// Diffusion scale minimizing `κ(A_s(c)) + α c` along `Q(c) = c M⁻¹`.
    ///
    /// The stochastic drift Jacobian for that family is
    /// `A_s(c) = −½(M⁻¹S + cI)`; its eigenvalue moduli are `(m_i + c)/2`
    /// where `m_i ≥ 0` are the moduli of `M⁻¹S`, so
    /// `κ(A_s(c)) = (m_max + c)/(m_min + c)` and the minimizer has the closed
    /// form below.
    pub(crate) fn optimized_diffusion(&self, alpha: f64) -> Result<(DMatrix<f64>, f64)> {
        if !(alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
        }
        let minv_s = self.m_chol.solve(&self.s);
        let moduli = eigenvalue_moduli(&minv_s, "diffusion optimization");
        let m_max = moduli.iter().cloned().fold(0.0_f64, f64::max);
        let m_min = moduli.iter().cloned().fold(f64::INFINITY, f64::min);
        let c_star = (((m_max - m_min) / alpha).sqrt() - m_min).max(0.0);
        let mut q = self.m_chol.inverse() * c_star;
        symmetrize(&mut q);
        Ok((q, c_star))
    }

    /// Stochastic drift for an arbitrary symmetric PSD diffusion `Q`:
    /// `A_s = −½M⁻¹S − ½QM`,
    /// `b_s = M⁻¹HᵀR⁻¹z_eff + ½(Q − Q_g)(P₀⁻¹μ₀ + λHᵀR⁻¹z_eff)`.
    pub(crate) fn stochastic_affine(&self, q: &DMatrix<f64>) -> Result<AffineDrift> {
        let n = self.m.nrows();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::dimension(format!(
                "diffusion Q is {}x{} but state dim is {n}",
                q.nrows(),
                q.ncols()
            )));
        }
        let a = self.m_chol.solve(&self.s) * -0.5 - q * &self.m * 0.5;
        let q_g = self.gromov_diffusion();
        let grad_at_zero = &self.p0_inv_mu0 + &self.ht_rinv_zeff * self.lambda;
        let b = self.m_chol.solve(&self.ht_rinv_zeff) + (q - q_g) * grad_at_zero * 0.5;
        Ok(AffineDrift {
            a,
            b,
            lambda: self.lambda,
        })
    }

    /// Diffusion matrix for a configured family, plus the scale `c*` when
    /// the family optimizes it.
    pub(crate) fn diffusion_for(
        &self,
        config: &DiffusionConfig,
    ) -> Result<(DMatrix<f64>, Option<f64>)> {
        match config {
            DiffusionConfig::Deterministic => {
                Ok((DMatrix::zeros(self.m.nrows(), self.m.nrows()), None))
            }
            DiffusionConfig::Gromov => Ok((self.gromov_diffusion(), None)),
            DiffusionConfig::Optimized { alpha } => {
                let (q, c) = self.optimized_diffusion(*alpha)?;
                Ok((q, Some(c)))
            }
        }
    }
}

/// Gradient of the log-homotopy:
/// `∇φ(x, λ) = P₀⁻¹(μ₀ − x) + λ HᵀR⁻¹(z_eff − Hx)`.
pub fn homotopy_gradient(
    x: &DVector<f64>,
    lambda: f64,
    prior: &PriorGaussian,
    model: &LinearizedModel,
) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    check_dims(prior, model)?;
    if x.len() != prior.dim() {
        return Err(Error::dimension(format!(
            "x has dim {} but prior has {}",
            x.len(),
            prior.dim()
        )));
    }
    let p0_chol = spd_cholesky(&prior.cov, "prior covariance")?;
    let r_chol = spd_cholesky(&model.r, "measurement noise covariance")?;
    let residual = model.z_eff() - &model.h * x;
    Ok(p0_chol.solve(&(&prior.mean - x)) + model.h.tr_mul(&r_chol.solve(&residual)) * lambda)
}

/// Affine form of Gromov's drift at pseudo-time `lambda`.
pub fn gromov_drift_affine(
    lambda: f64,
    prior: &PriorGaussian,
    model: &LinearizedModel,
) -> Result<AffineDrift> {
    Ok(FlowKernel::new(lambda, prior, model)?.gromov_affine())
}

/// Gromov's diffusion matrix at pseudo-time `lambda`.
pub fn gromov_diffusion(
    lambda: f64,
    prior: &PriorGaussian,
    model: &LinearizedModel,
) -> Result<DMatrix<f64>> {
    Ok(FlowKernel::new(lambda, prior, model)?.gromov_diffusion())
}

/// Optimal scaled-inverse-Hessian diffusion `(Q*, c*)` at pseudo-time
/// `lambda` for tradeoff weight `alpha`.
pub fn optimized_diffusion(
    lambda: f64,
    prior: &PriorGaussian,
    model: &LinearizedModel,
    alpha: f64,
) -> Result<(DMatrix<f64>, f64)> {
    FlowKernel::new(lambda, prior, model)?.optimized_diffusion(alpha)
}

/// Affine stochastic drift for an arbitrary symmetric PSD diffusion `q`.
pub fn stochastic_drift_affine(
    lambda: f64,
    prior: &PriorGaussian,
    model: &LinearizedModel,
    q: &DMatrix<f64>,
) -> Result<AffineDrift> {
    FlowKernel::new(lambda, prior, model)?.stochastic_affine(q)
}

/// A scalar measurement channel `z = h(x) + v`, `v ~ N(0, noise_var)`,
/// linearizable anywhere in the state space.
pub trait ScalarMeasurementModel {
    /// Predicted noise-free measurement at `x`.
    fn predict(&self, x: &DVector<f64>) -> f64;

    /// 1×N Jacobian of [`Self::predict`] at `x`.
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// Measurement noise variance.
    fn noise_var(&self) -> f64;

    /// Half-width of the physically feasible measurement interval; clutter
    /// is uniform over `[-half, +half]`.
    fn support_halfwidth(&self) -> f64;

    /// Linearized model for measurement `z` around `x_lin`.
    fn linearize(&self, z: f64, x_lin: &DVector<f64>) -> Result<LinearizedModel> {
        let h = self.jacobian(x_lin)?;
        let offset = DVector::from_element(1, self.predict(x_lin)) - &h * x_lin;
        LinearizedModel::new(
            h,
            DMatrix::from_element(1, 1, self.noise_var()),
            DVector::from_element(1, z),
            x_lin.clone(),
            offset,
        )
    }
}

/// An exactly linear scalar channel `z = hᵀx + offset + v`; useful as a
/// surrogate model in tests and demos.
#[derive(Debug, Clone)]
pub struct LinearScalarModel {
    pub h_row: DVector<f64>,
    pub offset: f64,
    pub noise_var: f64,
    pub support_halfwidth: f64,
}

impl ScalarMeasurementModel for LinearScalarModel {
    fn predict(&self, x: &DVector<f64>) -> f64 {
        self.h_row.dot(x) + self.offset
    }

    fn jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(
            1,
            self.h_row.len(),
            self.h_row.as_slice(),
        ))
    }

    fn noise_var(&self) -> f64 {
        self.noise_var
    }

    fn support_halfwidth(&self) -> f64 {
        self.support_halfwidth
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CholGaussian;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn scalar_model(h: f64, r: f64, z: f64) -> LinearizedModel {
        LinearizedModel::linear(
            DMatrix::from_element(1, 1, h),
            DMatrix::from_element(1, 1, r),
            DVector::from_element(1, z),
        )
        .unwrap()
    }

    fn scalar_prior(mu: f64, p: f64) -> PriorGaussian {
        PriorGaussian::new(DVector::from_element(1, mu), DMatrix::from_element(1, 1, p)).unwrap()
    }

    use crate::test_support::random_instance;

    #[test]
    fn homotopy_gradient_vanishes_at_prior_mean_lambda_zero() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let (prior, model) = random_instance(3, 2, &mut rng);
        let g = homotopy_gradient(&prior.mean, 0.0, &prior, &model).unwrap();
        assert!(g.norm() < 1e-12, "got {g}");
    }

    #[test]
    fn homotopy_gradient_scalar_hand_value() {
        // P₀=1, μ₀=0, H=1, R=1, z=2, x=1, λ=1 → (0−1) + 1·(2−1) = 0
        let prior = scalar_prior(0.0, 1.0);
        let model = scalar_model(1.0, 1.0, 2.0);
        let g = homotopy_gradient(&DVector::from_element(1, 1.0), 1.0, &prior, &model).unwrap();
        assert_relative_eq!(g[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn homotopy_gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let (prior, model) = random_instance(3, 2, &mut rng);
        let lambda = 0.63;
        let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));

        let prior_pdf = CholGaussian::new(prior.mean.clone(), &prior.cov, "fd").unwrap();
        let lik_mean = |x: &DVector<f64>| &model.h * x;
        let r = model.r.clone();
        let z_eff = model.z_eff();
        let phi = |x: &DVector<f64>| {
            let lik = CholGaussian::new(lik_mean(x), &r, "fd").unwrap();
            prior_pdf.log_density(x) + lambda * lik.log_density(&z_eff)
        };

        let g = homotopy_gradient(&x, lambda, &prior, &model).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (phi(&xp) - phi(&xm)) / (2.0 * h);
            assert_relative_eq!(g[i], fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn gromov_drift_zero_jacobian_means_no_motion() {
        let prior = scalar_prior(0.4, 2.0);
        let model = scalar_model(0.0, 1.0, 3.0);
        let d = gromov_drift_affine(0.5, &prior, &model).unwrap();
        assert_eq!(d.a[(0, 0)], 0.0);
        assert_eq!(d.b[0], 0.0);
    }

    #[test]
    fn gromov_drift_scalar_hand_value() {
        // P₀=1, H=1, R=1, z=0, λ=0 → A = −1, b = 0
        let prior = scalar_prior(0.0, 1.0);
        let model = scalar_model(1.0, 1.0, 0.0);
        let d = gromov_drift_affine(0.0, &prior, &model).unwrap();
        assert_relative_eq!(d.a[(0, 0)], -1.0, epsilon = 1e-14);
        assert_relative_eq!(d.b[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn gromov_drift_matches_hessian_solve_oracle() {
        // Ax + b must equal −(∇∇ᵀφ)⁻¹ ∇log h evaluated directly.
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..20 {
            let (prior, model) = random_instance(3, 3, &mut rng);
            let lambda: f64 = rng.random_range(0.0..1.0);
            let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));

            let drift = gromov_drift_affine(lambda, &prior, &model).unwrap();
            let value = drift.eval(&x);

            let p0_inv = prior.cov.clone().try_inverse().unwrap();
            let r_inv = model.r.clone().try_inverse().unwrap();
            let s = model.h.transpose() * &r_inv * &model.h;
            let hessian = -(&p0_inv + &s * lambda);
            let grad_log_h = model.h.transpose() * &r_inv * (model.z_eff() - &model.h * &x);
            let oracle = -hessian.try_inverse().unwrap() * grad_log_h;
            assert_relative_eq!(value, oracle, max_relative = 1e-9);
        }
    }

    #[test]
    fn gromov_diffusion_zero_jacobian() {
        let prior = scalar_prior(0.0, 1.0);
        let model = scalar_model(0.0, 1.0, 0.0);
        let q = gromov_diffusion(0.3, &prior, &model).unwrap();
        assert_eq!(q[(0, 0)], 0.0);
    }

    #[test]
    fn gromov_diffusion_scalar_hand_value() {
        // P₀=1, H=1, R=1, λ=0 → Q_g = 1
        let prior = scalar_prior(0.0, 1.0);
        let model = scalar_model(1.0, 1.0, 0.0);
        let q = gromov_diffusion(0.0, &prior, &model).unwrap();
        assert_relative_eq!(q[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gromov_diffusion_symmetric_psd() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..50 {
            let (prior, model) = random_instance(4, 2, &mut rng);
            let lambda: f64 = rng.random_range(0.0..1.0);
            let q = gromov_diffusion(lambda, &prior, &model).unwrap();
            assert!((&q - q.transpose()).amax() < 1e-10);
            let eigs = q.symmetric_eigen().eigenvalues;
            assert!(eigs.min() >= -1e-10, "min eigenvalue {}", eigs.min());
        }
    }

    #[test]
    fn optimized_diffusion_degenerate_scalar_state() {
        // N=1: max and min moduli coincide, so c* clamps to 0.
        let prior = scalar_prior(0.0, 1.0);
        let model = scalar_model(1.0, 1.0, 0.0);
        let (q, c) = optimized_diffusion(0.5, &prior, &model, 0.1).unwrap();
        assert_eq!(c, 0.0);
        assert_eq!(q[(0, 0)], 0.0);
    }

    #[test]
    fn optimized_diffusion_rejects_bad_alpha() {
        let prior = scalar_prior(0.0, 1.0);
        let model = scalar_model(1.0, 1.0, 0.0);
        assert!(optimized_diffusion(0.5, &prior, &model, 0.0).is_err());
        assert!(optimized_diffusion(0.5, &prior, &model, -1.0).is_err());
    }

    /// Grid search of J(c) = κ(A_s(c)) + αc, where A_s(c) is built through
    /// `stochastic_drift_affine` with Q = c·M⁻¹ and κ is the eigenvalue-
    /// moduli ratio. J is convex in c, so staged refinement is an exact
    /// grid search at the final resolution.
    pub(crate) fn grid_search_c_star(
        lambda: f64,
        prior: &PriorGaussian,
        model: &LinearizedModel,
        alpha: f64,
        step: f64,
    ) -> f64 {
        let p0_inv = prior.cov.clone().try_inverse().unwrap();
        let r_inv = model.r.clone().try_inverse().unwrap();
        let m = &p0_inv + model.h.transpose() * &r_inv * &model.h * lambda;
        let m_inv = m.clone().try_inverse().unwrap();

        let objective = |c: f64| -> f64 {
            let q = &m_inv * c;
            let drift = stochastic_drift_affine(lambda, prior, model, &q).unwrap();
            let moduli = drift
                .a
                .complex_eigenvalues()
                .iter()
                .map(|e| e.norm())
                .collect::<Vec<_>>();
            let hi = moduli.iter().cloned().fold(0.0_f64, f64::max);
            let lo = moduli.iter().cloned().fold(f64::INFINITY, f64::min);
            let kappa = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            kappa + alpha * c
        };

        // Bracket on a coarse grid, then refine down to `step`.
        let mut lo = 0.0;
        let mut hi = 2.0e3;
        let mut width = (hi - lo) / 200.0;
        while width > step {
            let mut best = f64::INFINITY;
            let mut best_c = lo;
            let mut c = lo;
            while c <= hi + 1e-12 {
                let j = objective(c);
                if j < best {
                    best = j;
                    best_c = c;
                }
                c += width;
            }
            lo = (best_c - width).max(0.0);
            hi = best_c + width;
            width /= 20.0;
        }
        let mut best = f64::INFINITY;
        let mut best_c = lo;
        let mut c = lo;
        while c <= hi + 1e-12 {
            let j = objective(c);
            if j < best {
                best = j;
                best_c = c;
            }
            c += step;
        }
        best_c
    }

    #[test]
    fn optimized_diffusion_matches_grid_search_on_spread_instance() {
        // Diagonal instance with M⁻¹S eigenvalue moduli {2, 8} at λ=0:
        // grid search of J over c (step 1e-3) lands on sqrt((8−2)/0.1) − 2.
        let prior = PriorGaussian::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![
            2.0_f64.sqrt(),
            8.0_f64.sqrt(),
        ]));
        let model =
            LinearizedModel::linear(h, DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let (_, c_star) = optimized_diffusion(0.0, &prior, &model, 0.1).unwrap();
        let expected = (6.0_f64 / 0.1).sqrt() - 2.0;
        assert_relative_eq!(c_star, expected, epsilon = 1e-9);
        let grid = grid_search_c_star(0.0, &prior, &model, 0.1, 1e-3);
        assert!(
            (c_star - grid).abs() <= 1e-3 + 1e-9,
            "closed form {c_star} vs grid {grid}"
        );
    }

    #[test]
    fn optimized_diffusion_matches_grid_search_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(97);
        for _ in 0..10 {
            let n = rng.random_range(2..5usize);
            let (prior, model) = random_instance(n, n + 1, &mut rng);
            let lambda: f64 = rng.random_range(0.0..1.0);
            for alpha in [0.01, 0.1, 0.5] {
                let (_, c_star) =
                    optimized_diffusion(lambda, &prior, &model, alpha).unwrap();
                let grid = grid_search_c_star(lambda, &prior, &model, alpha, 1e-3);
                assert!(
                    (c_star - grid).abs() <= 1e-3 + 1e-9,
                    "alpha {alpha}: closed form {c_star} vs grid {grid}"
                );
            }
        }
    }

    #[test]
    fn stochastic_drift_with_gromov_diffusion_recovers_gromov() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        for _ in 0..100 {
            let n = rng.random_range(1..5usize);
            let m = rng.random_range(1..4usize);
            let (prior, model) = random_instance(n, m, &mut rng);
            let lambda: f64 = rng.random_range(0.0..1.0);
            let q_g = gromov_diffusion(lambda, &prior, &model).unwrap();
            let s = stochastic_drift_affine(lambda, &prior, &model, &q_g).unwrap();
            let g = gromov_drift_affine(lambda, &prior, &model).unwrap();
            let scale = g.a.amax().max(1.0);
            assert!(
                (&s.a - &g.a).amax() <= 1e-9 * scale,
                "A mismatch {}",
                (&s.a - &g.a).amax()
            );
            let bscale = g.b.amax().max(1.0);
            assert!((&s.b - &g.b).amax() <= 1e-9 * bscale);
        }
    }

    #[test]
    fn stochastic_drift_with_zero_diffusion_is_half_gromov_jacobian() {
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let (prior, model) = random_instance(3, 2, &mut rng);
        let lambda = 0.4;
        let q = DMatrix::zeros(3, 3);
        let s = stochastic_drift_affine(lambda, &prior, &model, &q).unwrap();
        let g = gromov_drift_affine(lambda, &prior, &model).unwrap();
        assert_relative_eq!(s.a, g.a * 0.5, max_relative = 1e-12);
    }

    #[test]
    fn stochastic_drift_scalar_hand_value() {
        // P₀=1, μ₀=0, H=1, R=1, z=0, λ=0, Q=2 → Q_g=1, A_s=−1.5, b_s=0
        let prior = scalar_prior(0.0, 1.0);
        let model = scalar_model(1.0, 1.0, 0.0);
        let q = DMatrix::from_element(1, 1, 2.0);
        let s = stochastic_drift_affine(0.0, &prior, &model, &q).unwrap();
        assert_relative_eq!(s.a[(0, 0)], -1.5, epsilon = 1e-14);
        assert_relative_eq!(s.b[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn kappa_approaches_one_for_huge_diffusion_scale() {
        let mut rng = ChaCha12Rng::seed_from_u64(53);
        for _ in 0..20 {
            let (prior, model) = random_instance(3, 4, &mut rng);
            let lambda: f64 = rng.random_range(0.0..1.0);
            let p0_inv = prior.cov.clone().try_inverse().unwrap();
            let r_inv = model.r.clone().try_inverse().unwrap();
            let m = &p0_inv + model.h.transpose() * &r_inv * &model.h * lambda;
            let q = m.try_inverse().unwrap() * 1.0e6;
            let drift = stochastic_drift_affine(lambda, &prior, &model, &q).unwrap();
            let kappa = condition_number(&drift.a).unwrap();
            assert!(kappa <= 1.0 + 1e-3, "kappa {kappa}");
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let prior = scalar_prior(0.0, 1.0);
        let model = LinearizedModel::linear(
            DMatrix::from_element(1, 2, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 0.0),
        )
        .unwrap();
        assert!(matches!(
            gromov_drift_affine(0.5, &prior, &model),
            Err(Error::Dimension { .. })
        ));
    }
}
