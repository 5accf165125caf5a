//! Pseudo-time grids for flow integration.

use crate::error::{Error, Result};

/// Hard cap on materialized steps; `(delta1, beta)` pairs that would exceed
/// it (e.g. beta = 1 with delta1 = 1e-13) are rejected rather than allocated.
const MAX_STEPS: usize = 10_000_000;

/// Strictly increasing pseudo-time grid `0 = λ₀ < λ₁ < … < λ_N = 1` with
/// geometrically growing step sizes `Δ_l = β·Δ_{l−1}` and the final step
/// clamped so the grid ends exactly at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSchedule {
    lambdas: Vec<f64>,
    deltas: Vec<f64>,
    delta1: f64,
    beta: f64,
}

impl FlowSchedule {
    pub fn build(delta1: f64, beta: f64) -> Result<Self> {
        if !(delta1 > 0.0 && delta1 <= 1.0) {
            return Err(Error::invalid(format!(
                "schedule delta1 must be in (0, 1], got {delta1}"
            )));
        }
        if !(beta >= 1.0) {
            return Err(Error::invalid(format!(
                "schedule beta must be >= 1, got {beta}"
            )));
        }
        if beta == 1.0 && 1.0 / delta1 > MAX_STEPS as f64 {
            return Err(Error::invalid(format!(
                "schedule ({delta1}, {beta}) would need more than {MAX_STEPS} steps"
            )));
        }

        let mut lambdas = vec![0.0];
        let mut step = delta1;
        let mut lambda = 0.0_f64;
        while lambda + step < 1.0 {
            lambda += step;
            if lambda <= *lambdas.last().unwrap() {
                return Err(Error::invalid(format!(
                    "schedule step underflowed at lambda {lambda}"
                )));
            }
            lambdas.push(lambda);
            if lambdas.len() > MAX_STEPS {
                return Err(Error::invalid(format!(
                    "schedule ({delta1}, {beta}) exceeds {MAX_STEPS} steps"
                )));
            }
            step *= beta;
        }
        lambdas.push(1.0);

        let deltas = lambdas.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            lambdas,
            deltas,
            delta1,
            beta,
        })
    }

    /// Number of integration steps `N_λ`.
    pub fn num_steps(&self) -> usize {
        self.deltas.len()
    }

    /// Grid points including the endpoints 0 and 1.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Iterates `(λ_l, Δ_l)` for l = 1..N_λ.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lambdas[1..].iter().copied().zip(self.deltas.iter().copied())
    }
}
