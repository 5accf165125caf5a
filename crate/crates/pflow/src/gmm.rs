//! Gaussian mixtures, flow-induced proposal construction, importance
//! weighting, and mixture reduction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::flow::{DiffusionConfig, ScalarMeasurementModel};
use crate::linalg::{logsumexp, spd_cholesky, symmetrize, CholGaussian};
use crate::migrate::{migrate_component, GaussianComponent};
use crate::schedule::FlowSchedule;

/// A normalized Gaussian mixture.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
    dim: usize,
}

impl GaussianMixture {
    /// Builds a mixture and normalizes its weights.
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let dim = components
            .first()
            .ok_or(Error::Empty {
                context: "gaussian mixture",
            })?
            .dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::dimension(
                "mixture components have inconsistent dimensions".to_string(),
            ));
        }
        let mut mixture = Self { components, dim };
        mixture.normalize()?;
        Ok(mixture)
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Renormalizes so that `logsumexp(log_weights) = 0`.
    pub fn normalize(&mut self) -> Result<()> {
        let lse = logsumexp(
            &self
                .components
                .iter()
                .map(|c| c.log_weight)
                .collect::<Vec<_>>(),
        );
        if !lse.is_finite() {
            return Err(Error::DegenerateWeights);
        }
        for c in &mut self.components {
            c.log_weight -= lse;
        }
        Ok(())
    }

    /// Overall mean and covariance of the mixture.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let mut mean = DVector::zeros(self.dim);
        for c in &self.components {
            mean += &c.mean * c.log_weight.exp();
        }
        let mut cov = DMatrix::zeros(self.dim, self.dim);
        for c in &self.components {
            let w = c.log_weight.exp();
            let d = &c.mean - &mean;
            cov += (&c.cov + &d * d.transpose()) * w;
        }
        symmetrize(&mut cov);
        (mean, cov)
    }

    pub(crate) fn prepared(&self, context: &'static str) -> Result<PreparedMixture> {
        PreparedMixture::new(self, context)
    }
}

/// Mixture with per-component factorizations cached for repeated density
/// evaluation and sampling.
pub(crate) struct PreparedMixture {
    gaussians: Vec<CholGaussian>,
    log_weights: Vec<f64>,
}

impl PreparedMixture {
    fn new(mixture: &GaussianMixture, context: &'static str) -> Result<Self> {
        let gaussians = mixture
            .components
            .iter()
            .map(|c| CholGaussian::new(c.mean.clone(), &c.cov, context))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            gaussians,
            log_weights: mixture.components.iter().map(|c| c.log_weight).collect(),
        })
    }

    pub(crate) fn log_density(&self, x: &DVector<f64>) -> f64 {
        let terms: Vec<f64> = self
            .gaussians
            .iter()
            .zip(&self.log_weights)
            .map(|(g, lw)| lw + g.log_density(x))
            .collect();
        logsumexp(&terms)
    }

    pub(crate) fn sample_component(&self, k: usize, rng: &mut impl Rng) -> DVector<f64> {
        self.gaussians[k].sample(rng)
    }
}

/// log Σ_k w_k N(x; μ_k, P_k), via log-sum-exp.
pub fn evaluate_log_gmm(mixture: &GaussianMixture, x: &DVector<f64>) -> Result<f64> {
    if x.len() != mixture.dim() {
        return Err(Error::dimension(format!(
            "x has dim {} but mixture has {}",
            x.len(),
            mixture.dim()
        )));
    }
    Ok(mixture.prepared("mixture evaluation")?.log_density(x))
}

/// Self-normalized importance-sampling weights over `samples`.
#[derive(Debug, Clone)]
pub struct WeightedSamples {
    pub states: Vec<DVector<f64>>,
    /// Normalized: `logsumexp(log_weights) = 0`.
    pub log_weights: Vec<f64>,
}

impl WeightedSamples {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Effective sample size `1/Σ w_i²`, in `[1, len]`.
    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(&self.log_weights)
    }

    /// Self-normalized estimate of the posterior mean.
    pub fn posterior_mean(&self) -> DVector<f64> {
        let dim = self.states[0].len();
        let mut mean = DVector::zeros(dim);
        for (x, lw) in self.states.iter().zip(&self.log_weights) {
            mean += x * lw.exp();
        }
        mean
    }
}

/// `1/Σ w_i²` for normalized log-weights.
pub fn effective_sample_size(normalized_log_weights: &[f64]) -> f64 {
    let doubled: Vec<f64> = normalized_log_weights.iter().map(|lw| 2.0 * lw).collect();
    (-logsumexp(&doubled)).exp()
}

/// Migrates every (component, measurement) pairing through the flow and
/// returns the flow-induced proposal mixture.
///
/// Component weights are the prior log-weight plus the log predictive
/// likelihood `log N(z; h(μ₀), H P₀ Hᵀ + R)` of the pairing, normalized.
/// An empty measurement list returns the prior unchanged.
pub fn build_proposal<M>(
    prior: &GaussianMixture,
    measurements: &[f64],
    model: &M,
    schedule: &FlowSchedule,
    diffusion: &DiffusionConfig,
) -> Result<GaussianMixture>
where
    M: ScalarMeasurementModel + ?Sized,
{
    if measurements.is_empty() {
        return Ok(prior.clone());
    }
    let mut components = Vec::with_capacity(prior.len() * measurements.len());
    for (k, component) in prior.components().iter().enumerate() {
        for (m, &z) in measurements.iter().enumerate() {
            let wrap = |source: Error| Error::Proposal {
                component: k,
                measurement: m,
                source: Box::new(source),
            };
            let predictive = log_predictive_likelihood(component, z, model).map_err(wrap)?;
            let mut migrated = migrate_component(
                component,
                |x| model.linearize(z, x),
                schedule,
                diffusion,
            )
            .map_err(wrap)?;
            migrated.log_weight = component.log_weight + predictive;
            components.push(migrated);
        }
    }
    GaussianMixture::new(components)
}

/// `log N(z; h(μ₀), H P₀ Hᵀ + R)` under the model linearized at the
/// component mean.
pub(crate) fn log_predictive_likelihood<M>(
    component: &GaussianComponent,
    z: f64,
    model: &M,
) -> Result<f64>
where
    M: ScalarMeasurementModel + ?Sized,
{
    let linearized = model.linearize(z, &component.mean)?;
    let predicted = linearized.h.clone() * &component.mean + &linearized.offset;
    let variance =
        (&linearized.h * &component.cov * linearized.h.transpose())[(0, 0)] + model.noise_var();
    let residual = z - predicted[0];
    Ok(-0.5 * ((2.0 * std::f64::consts::PI * variance).ln() + residual * residual / variance))
}

/// Importance weights `log w_i = log prior(x_i) + log_likelihood(x_i) −
/// log proposal(x_i)`, self-normalized.
pub fn importance_weights<L>(
    samples: Vec<DVector<f64>>,
    prior: &GaussianMixture,
    log_likelihood: L,
    proposal: &GaussianMixture,
) -> Result<WeightedSamples>
where
    L: Fn(&DVector<f64>) -> f64,
{
    let prior_eval = prior.prepared("importance prior")?;
    let proposal_eval = proposal.prepared("importance proposal")?;
    let mut log_weights: Vec<f64> = samples
        .iter()
        .map(|x| prior_eval.log_density(x) + log_likelihood(x) - proposal_eval.log_density(x))
        .collect();
    normalize_log_weights(&mut log_weights)?;
    Ok(WeightedSamples {
        states: samples,
        log_weights,
    })
}

pub(crate) fn normalize_log_weights(log_weights: &mut [f64]) -> Result<()> {
    for lw in log_weights.iter_mut() {
        if lw.is_nan() {
            *lw = f64::NEG_INFINITY;
        }
    }
    let lse = logsumexp(log_weights);
    if !lse.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    for lw in log_weights.iter_mut() {
        *lw -= lse;
    }
    Ok(())
}

/// Draws `total` samples from the mixture, stratified by component weight
/// (largest-remainder allocation), returning each sample's originating
/// component index alongside it.
pub fn sample_stratified(
    mixture: &GaussianMixture,
    total: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<DVector<f64>>, Vec<usize>)> {
    if total == 0 {
        return Err(Error::invalid("sample count must be positive".to_string()));
    }
    let prepared = mixture.prepared("proposal sampling")?;
    let weights: Vec<f64> = mixture
        .components()
        .iter()
        .map(|c| c.log_weight.exp())
        .collect();

    let mut counts: Vec<usize> = weights
        .iter()
        .map(|w| (w * total as f64).floor() as usize)
        .collect();
    let mut remainders: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(k, w)| (w * total as f64 - counts[k] as f64, k))
        .collect();
    // Distribute the remainder deterministically: largest fraction first,
    // component index as the tiebreak.
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let assigned: usize = counts.iter().sum();
    for (_, k) in remainders.iter().take(total.saturating_sub(assigned)) {
        counts[*k] += 1;
    }

    let mut states = Vec::with_capacity(total);
    let mut origins = Vec::with_capacity(total);
    for (k, count) in counts.iter().enumerate() {
        for _ in 0..*count {
            states.push(prepared.sample_component(k, rng));
            origins.push(k);
        }
    }
    Ok((states, origins))
}

/// Symmetrized KL divergence between two Gaussian components.
///
/// `KL(p‖q) + KL(q‖p) = ½[tr(Σq⁻¹Σp) + tr(Σp⁻¹Σq) + dᵀ(Σp⁻¹+Σq⁻¹)d − 2n]`
/// (the log-determinant terms cancel).
fn symmetric_kl(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    let chol_a = spd_cholesky(&a.cov, "mixture reduction")?;
    let chol_b = spd_cholesky(&b.cov, "mixture reduction")?;
    let n = a.dim() as f64;
    let d = &a.mean - &b.mean;
    let trace_ba = chol_b.solve(&a.cov).trace();
    let trace_ab = chol_a.solve(&b.cov).trace();
    let quad = d.dot(&chol_a.solve(&d)) + d.dot(&chol_b.solve(&d));
    Ok(0.5 * (trace_ba + trace_ab + quad - 2.0 * n))
}

/// Moment-matching merge of two weighted components.
fn merge_pair(a: &GaussianComponent, b: &GaussianComponent) -> GaussianComponent {
    let log_w = logsumexp(&[a.log_weight, b.log_weight]);
    let wa = (a.log_weight - log_w).exp();
    let wb = (b.log_weight - log_w).exp();
    let mean = &a.mean * wa + &b.mean * wb;
    let da = &a.mean - &mean;
    let db = &b.mean - &mean;
    let mut cov = (&a.cov + &da * da.transpose()) * wa + (&b.cov + &db * db.transpose()) * wb;
    symmetrize(&mut cov);
    GaussianComponent {
        mean,
        cov,
        log_weight: log_w,
    }
}

/// Reduces a mixture to at most `target` components by greedily merging the
/// pair with minimal symmetrized KL cost (moment matching), after dropping
/// components with weight below `1e-6 / target`.
///
/// Merging preserves the overall mean and covariance of the merged mass
/// exactly; only the dropped tail (≤ 1e-6 of total weight) is discarded.
pub fn reduce_mixture(mixture: &GaussianMixture, target: usize) -> Result<GaussianMixture> {
    if target == 0 {
        return Err(Error::invalid("reduction target must be >= 1".to_string()));
    }
    let drop_threshold = (1e-6 / target as f64).ln();
    let mut kept: Vec<GaussianComponent> = mixture
        .components()
        .iter()
        .filter(|c| c.log_weight >= drop_threshold)
        .cloned()
        .collect();
    if kept.is_empty() {
        // Degenerate normalization; keep the single heaviest component.
        let best = mixture
            .components()
            .iter()
            .max_by(|a, b| a.log_weight.total_cmp(&b.log_weight))
            .unwrap();
        kept.push(best.clone());
    }
    if kept.len() <= target {
        return GaussianMixture::new(kept);
    }

    // Upper-triangular cost cache; refreshed lazily after merges.
    let mut alive: Vec<bool> = vec![true; kept.len()];
    let n = kept.len();
    let mut cost = vec![f64::INFINITY; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            cost[i * n + j] = symmetric_kl(&kept[i], &kept[j])?;
        }
    }

    let mut remaining = n;
    while remaining > target {
        let mut best = f64::INFINITY;
        let mut pair = (0, 0);
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if alive[j] && cost[i * n + j] < best {
                    best = cost[i * n + j];
                    pair = (i, j);
                }
            }
        }
        let (i, j) = pair;
        kept[i] = merge_pair(&kept[i], &kept[j]);
        alive[j] = false;
        remaining -= 1;
        for k in 0..n {
            if k == i || !alive[k] {
                continue;
            }
            let (lo, hi) = if k < i { (k, i) } else { (i, k) };
            cost[lo * n + hi] = symmetric_kl(&kept[i], &kept[k])?;
        }
    }

    GaussianMixture::new(
        kept.into_iter()
            .zip(alive)
            .filter_map(|(c, keep)| keep.then_some(c))
            .collect(),
    )
}

/// Refits one posterior component per originating proposal component from
/// globally normalized weighted samples.
///
/// A component's weight is the sum of its samples' weights; its moments are
/// the weighted sample moments. Components whose weighted sample covariance
/// cannot be factorized (or with fewer than `dim + 1` effective samples)
/// keep the fallback component's covariance around the refit mean.
pub fn mixture_from_weighted_samples(
    samples: &WeightedSamples,
    origins: &[usize],
    fallback: &GaussianMixture,
) -> Result<GaussianMixture> {
    if samples.len() != origins.len() {
        return Err(Error::dimension(format!(
            "{} samples but {} origins",
            samples.len(),
            origins.len()
        )));
    }
    let dim = fallback.dim();
    let k = fallback.len();
    let mut grouped: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (idx, &origin) in origins.iter().enumerate() {
        grouped[origin].push(idx);
    }

    let mut components = Vec::new();
    for (origin, indices) in grouped.iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        let local: Vec<f64> = indices.iter().map(|&i| samples.log_weights[i]).collect();
        let log_mass = logsumexp(&local);
        if !log_mass.is_finite() {
            continue;
        }
        let mut mean = DVector::zeros(dim);
        for (&i, lw) in indices.iter().zip(&local) {
            mean += &samples.states[i] * (lw - log_mass).exp();
        }
        let mut cov = DMatrix::zeros(dim, dim);
        for (&i, lw) in indices.iter().zip(&local) {
            let d = &samples.states[i] - &mean;
            cov += &d * d.transpose() * (lw - log_mass).exp();
        }
        symmetrize(&mut cov);

        let fallback_cov = &fallback.components()[origin].cov;
        let enough = indices.len() > dim;
        let cov = if enough && spd_cholesky(&cov, "sample covariance").is_ok() {
            cov
        } else {
            fallback_cov.clone()
        };
        components.push(GaussianComponent {
            mean,
            cov,
            log_weight: log_mass,
        });
    }
    GaussianMixture::new(components)
}
