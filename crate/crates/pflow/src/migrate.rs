//! Euler–Maruyama migration of Gaussian components and particle sets across
//! a pseudo-time schedule, with per-step re-linearization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::flow::{AffineDrift, DiffusionConfig, FlowKernel, LinearizedModel, PriorGaussian};
use crate::linalg::{condition_number, spd_cholesky, symmetrize};
use crate::schedule::FlowSchedule;

/// One Gaussian mixture component; the unit of flow migration.
#[derive(Debug, Clone)]
pub struct GaussianComponent {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_weight: f64,
}

impl GaussianComponent {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, log_weight: f64) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::dimension(format!(
                "component: mean has dim {} but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if !log_weight.is_finite() {
            return Err(Error::NonFinite {
                context: "component log-weight",
            });
        }
        Ok(Self {
            mean,
            cov,
            log_weight,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A set of equally-dimensioned particles with log-weights.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    pub states: Vec<DVector<f64>>,
    pub log_weights: Vec<f64>,
}

impl ParticleSet {
    pub fn new(states: Vec<DVector<f64>>, log_weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty {
                context: "particle set",
            });
        }
        if states.len() != log_weights.len() {
            return Err(Error::dimension(format!(
                "{} states but {} log-weights",
                states.len(),
                log_weights.len()
            )));
        }
        if log_weights.iter().any(|w| w.is_nan())
            || states.iter().any(|s| s.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite {
                context: "particle set",
            });
        }
        Ok(Self {
            states,
            log_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Drift and diffusion wired together for one pseudo-time step.
struct StepOperators {
    drift: AffineDrift,
    diffusion: DMatrix<f64>,
}

fn step_operators(
    lambda: f64,
    prior: &PriorGaussian,
    model: &LinearizedModel,
    diffusion: &DiffusionConfig,
) -> Result<StepOperators> {
    let kernel = FlowKernel::new(lambda, prior, model)?;
    let (q, _c_star) = kernel.diffusion_for(diffusion)?;
    let drift = kernel.stochastic_affine(&q)?;
    Ok(StepOperators {
        drift,
        diffusion: q,
    })
}

fn migrate_component_impl<F>(
    component: &GaussianComponent,
    mut relinearize: F,
    schedule: &FlowSchedule,
    diffusion: &DiffusionConfig,
    mut kappas: Option<&mut Vec<f64>>,
) -> Result<GaussianComponent>
where
    F: FnMut(&DVector<f64>) -> Result<LinearizedModel>,
{
    diffusion.validate()?;
    // The prior entering the flow formulas is frozen at the component's
    // state when the flow starts.
    let prior = PriorGaussian::new(component.mean.clone(), component.cov.clone())?;
    let n = component.dim();
    let identity = DMatrix::<f64>::identity(n, n);

    let mut mean = component.mean.clone();
    let mut cov = component.cov.clone();
    for (index, (lambda, delta)) in schedule.steps().enumerate() {
        let step = index + 1;
        let wrap = |source: Error| Error::FlowStep {
            step,
            source: Box::new(source),
        };
        let model = relinearize(&mean).map_err(wrap)?;
        let ops = step_operators(lambda, &prior, &model, diffusion).map_err(wrap)?;
        if let Some(trace) = kappas.as_deref_mut() {
            trace.push(condition_number(&ops.drift.a).unwrap_or(f64::INFINITY));
        }
        mean += ops.drift.eval(&mean) * delta;
        let transition = &identity + &ops.drift.a * delta;
        cov = &transition * cov * transition.transpose() + ops.diffusion * delta;
        symmetrize(&mut cov);
    }
    GaussianComponent::new(mean, cov, component.log_weight)
}

/// Migrates a Gaussian component from λ = 0 to λ = 1.
///
/// Per step: re-linearize at the current mean, evaluate drift and diffusion
/// at `λ_l`, then
/// `μ_l = μ_{l−1} + ζ(μ_{l−1})Δ_l` and
/// `P_l = (I + Δ_l A)P_{l−1}(I + Δ_l A)ᵀ + Δ_l Q`, symmetrized.
/// The log-weight is unchanged.
pub fn migrate_component<F>(
    component: &GaussianComponent,
    relinearize: F,
    schedule: &FlowSchedule,
    diffusion: &DiffusionConfig,
) -> Result<GaussianComponent>
where
    F: FnMut(&DVector<f64>) -> Result<LinearizedModel>,
{
    migrate_component_impl(component, relinearize, schedule, diffusion, None)
}

/// Same as [`migrate_component`], also returning κ(A_s) per pseudo-time step
/// (∞ where the drift Jacobian is singular).
pub fn migrate_component_traced<F>(
    component: &GaussianComponent,
    relinearize: F,
    schedule: &FlowSchedule,
    diffusion: &DiffusionConfig,
) -> Result<(GaussianComponent, Vec<f64>)>
where
    F: FnMut(&DVector<f64>) -> Result<LinearizedModel>,
{
    let mut kappas = Vec::with_capacity(schedule.num_steps());
    let migrated =
        migrate_component_impl(component, relinearize, schedule, diffusion, Some(&mut kappas))?;
    Ok((migrated, kappas))
}

/// One Euler–Maruyama step `x ← x + ζ(x)Δ + √Δ L w` applied to every state,
/// where `L Lᵀ = Q` via (jittered) Cholesky and `w ~ N(0, I)`.
///
/// A zero diffusion matrix skips noise generation entirely, so deterministic
/// flows consume no randomness.
pub fn euler_maruyama_step(
    states: &mut [DVector<f64>],
    drift: &AffineDrift,
    diffusion: &DMatrix<f64>,
    delta: f64,
    rng: &mut impl Rng,
) -> Result<()> {
    let noise_free = diffusion.iter().all(|v| *v == 0.0);
    let scale = if noise_free {
        None
    } else {
        Some(spd_cholesky(diffusion, "diffusion matrix")?.l() * delta.sqrt())
    };
    let n = diffusion.nrows();
    for state in states.iter_mut() {
        let mut next = &*state + drift.eval(state) * delta;
        if let Some(l) = &scale {
            let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            next += l * w;
        }
        *state = next;
    }
    Ok(())
}

/// Migrates particles across the schedule (baseline particle-flow mode).
///
/// Particles share one linearization per step, taken at the deterministic
/// mean path that starts at `prior.mean`; weights are unchanged.
pub fn migrate_particles<F>(
    particles: &ParticleSet,
    prior: &PriorGaussian,
    mut relinearize: F,
    schedule: &FlowSchedule,
    diffusion: &DiffusionConfig,
    rng: &mut impl Rng,
) -> Result<ParticleSet>
where
    F: FnMut(&DVector<f64>) -> Result<LinearizedModel>,
{
    diffusion.validate()?;
    let mut states = particles.states.clone();
    let mut lin_mean = prior.mean.clone();
    for (index, (lambda, delta)) in schedule.steps().enumerate() {
        let step = index + 1;
        let wrap = |source: Error| Error::FlowStep {
            step,
            source: Box::new(source),
        };
        let model = relinearize(&lin_mean).map_err(wrap)?;
        let ops = step_operators(lambda, prior, &model, diffusion).map_err(wrap)?;
        euler_maruyama_step(&mut states, &ops.drift, &ops.diffusion, delta, rng).map_err(wrap)?;
        lin_mean += ops.drift.eval(&lin_mean) * delta;
    }
    ParticleSet::new(states, particles.log_weights.clone())
}
