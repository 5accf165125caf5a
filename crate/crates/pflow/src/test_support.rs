//! Random problem instances shared by unit tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::flow::{LinearizedModel, PriorGaussian};
use crate::linalg::symmetrize;

pub(crate) fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut spd = &a * a.transpose() + DMatrix::identity(n, n) * 0.3;
    symmetrize(&mut spd);
    spd
}

pub(crate) fn random_instance(
    n: usize,
    m: usize,
    rng: &mut impl Rng,
) -> (PriorGaussian, LinearizedModel) {
    let prior = PriorGaussian::new(
        DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
        random_spd(n, rng),
    )
    .unwrap();
    let model = LinearizedModel::linear(
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.5..1.5)),
        random_spd(m, rng),
        DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0)),
    )
    .unwrap();
    (prior, model)
}

/// Conjugate (Kalman) posterior of a linear-Gaussian update; the oracle the
/// flow integrators are checked against.
pub(crate) fn kalman_posterior(
    prior: &PriorGaussian,
    model: &LinearizedModel,
) -> (DVector<f64>, DMatrix<f64>) {
    let s = &model.h * &prior.cov * model.h.transpose() + &model.r;
    let k = &prior.cov * model.h.transpose() * s.try_inverse().unwrap();
    let mean = &prior.mean + &k * (model.z_eff() - &model.h * &prior.mean);
    let n = prior.dim();
    let cov = (DMatrix::identity(n, n) - &k * &model.h) * &prior.cov;
    (mean, cov)
}
