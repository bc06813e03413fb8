//! Gradient-based MCMC over caller-supplied log-densities.
//!
//! [`nuts_sample`] runs the No-U-Turn sampler with an identity mass matrix and
//! dual-averaging step size adaptation during warmup. Each chain owns its own
//! random stream, so results do not depend on how chains are scheduled.

mod adapt;
mod diagnostics;
mod hamiltonian;
mod nuts;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adapt::{adapt_step_size, DualAveraging, DualAveragingSettings, StepSizeSchedule, STEP_SIZE_RANGE};
pub use diagnostics::{diagnostics, split_rhat, ParameterSummary, SamplerSummary};
pub use hamiltonian::{leapfrog, LeapfrogStep, PhasePoint, DIVERGENCE_THRESHOLD};

use crate::rng::RngState;
use crate::{Error, Result};

/// A differentiable log-density over an unconstrained real vector.
///
/// Implementations must be pure. A non-finite return value marks the point
/// as divergent; the gradient is then ignored.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log-density.
    fn log_density_grad(&self, position: &[f64], grad: &mut [f64]) -> f64;
}

impl<T: LogDensity + ?Sized> LogDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density_grad(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_density_grad(position, grad)
    }
}

/// Wraps a closure as a [`LogDensity`].
pub struct FnDensity<F> {
    dim: usize,
    f: F,
}

impl<F> FnDensity<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnDensity { dim, f }
    }
}

impl<F> LogDensity for FnDensity<F>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, position: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(position, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NutsConfig {
    pub warmup: usize,
    pub samples: usize,
    pub chains: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    /// Starting step size; `None` picks one with the usual doubling/halving
    /// heuristic.
    pub initial_step_size: Option<f64>,
}

impl Default for NutsConfig {
    fn default() -> Self {
        NutsConfig {
            warmup: 500,
            samples: 500,
            chains: 1,
            target_accept: 0.8,
            max_tree_depth: 10,
            initial_step_size: None,
        }
    }
}

impl NutsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.warmup < 10 {
            return bad(format!("warmup must be at least 10, got {}", self.warmup));
        }
        if self.samples < 1 {
            return bad("samples must be at least 1".into());
        }
        if self.chains < 1 {
            return bad("chains must be at least 1".into());
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad(format!("target_accept {} is outside (0, 1)", self.target_accept));
        }
        if !(1..=15).contains(&self.max_tree_depth) {
            return bad(format!("max_tree_depth {} is outside 1..=15", self.max_tree_depth));
        }
        if let Some(step) = self.initial_step_size {
            if !(step > 0.0 && step.is_finite()) {
                return bad(format!("initial_step_size {step} must be positive"));
            }
        }
        Ok(())
    }
}

/// Kept draws of one chain plus its sampling statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleChain {
    /// `samples x dim` unconstrained positions.
    pub draws: Vec<Vec<f64>>,
    pub accept_stat_mean: f64,
    /// Divergent transitions after warmup.
    pub divergence_count: usize,
    pub warmup_divergence_count: usize,
    pub adapted_step_size: f64,
    /// Leapfrog steps taken by each kept transition.
    pub n_leapfrog: Vec<usize>,
    pub tree_depths: Vec<usize>,
}

/// Hoffman & Gelman's heuristic: double or halve the step until a single
/// leapfrog step's acceptance ratio crosses one half.
pub fn find_reasonable_step_size<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    position: &[f64],
    rng: &mut R,
) -> f64 {
    let momentum: Vec<f64> = (0..position.len()).map(|_| rng.sample(StandardNormal)).collect();
    let start = PhasePoint::new(target, position.to_vec(), momentum);
    let h0 = start.energy();
    let log_ratio = |step: f64| {
        let mut p = start.clone();
        p.leapfrog_in_place(target, step);
        let d = h0 - p.energy();
        if d.is_nan() {
            f64::NEG_INFINITY
        } else {
            d
        }
    };
    let mut step = 1.0;
    let up = log_ratio(step) > 0.5f64.ln();
    for _ in 0..100 {
        let next = if up { step * 2.0 } else { step * 0.5 };
        if next < STEP_SIZE_RANGE.0 || next > STEP_SIZE_RANGE.1 {
            break;
        }
        let crossed = (log_ratio(next) > 0.5f64.ln()) != up;
        if crossed {
            // Keep the last step on the acceptable side.
            return if up { step } else { next };
        }
        step = next;
    }
    step.clamp(STEP_SIZE_RANGE.0, STEP_SIZE_RANGE.1)
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    cfg: &NutsConfig,
    stream: RngState,
) -> Result<SampleChain> {
    let mut rng = stream.rng();
    let mut current = PhasePoint::new(target, init.to_vec(), vec![0.0; init.len()]);
    if !current.log_density.is_finite() || current.grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Sampler("log-density is not finite at the initial point".into()));
    }

    let initial_step = match cfg.initial_step_size {
        Some(step) => step,
        None => find_reasonable_step_size(target, init, &mut rng),
    };
    let mut adaptation = DualAveraging::new(initial_step, cfg.target_accept);
    let mut step = adaptation.current();
    let mut warmup_divergence_count = 0;

    for _ in 0..cfg.warmup {
        let t = nuts::transition(target, &current, step, cfg.max_tree_depth, &mut rng);
        warmup_divergence_count += t.divergent as usize;
        current = t.point;
        step = adaptation.update(t.accept_stat);
    }
    let step = adaptation.adapted();

    let mut draws = Vec::with_capacity(cfg.samples);
    let mut n_leapfrog = Vec::with_capacity(cfg.samples);
    let mut tree_depths = Vec::with_capacity(cfg.samples);
    let mut accept_sum = 0.0;
    let mut divergence_count = 0;
    for _ in 0..cfg.samples {
        let t = nuts::transition(target, &current, step, cfg.max_tree_depth, &mut rng);
        divergence_count += t.divergent as usize;
        accept_sum += t.accept_stat;
        n_leapfrog.push(t.n_leapfrog);
        tree_depths.push(t.depth);
        current = t.point;
        draws.push(current.position.clone());
    }

    if 2 * divergence_count > cfg.samples {
        return Err(Error::TooManyDivergences {
            divergent: divergence_count,
            total: cfg.samples,
        });
    }

    Ok(SampleChain {
        draws,
        accept_stat_mean: accept_sum / cfg.samples as f64,
        divergence_count,
        warmup_divergence_count,
        adapted_step_size: step,
        n_leapfrog,
        tree_depths,
    })
}

/// Runs `cfg.chains` chains, all started from `init`.
pub fn nuts_sample<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    cfg: &NutsConfig,
    seed: RngState,
) -> Result<Vec<SampleChain>> {
    let inits = vec![init.to_vec(); cfg.chains];
    nuts_sample_from(target, &inits, cfg, seed)
}

/// Runs one chain per entry of `inits`. Chain `i` draws from the child stream
/// `("chain", i)` of `seed`; results come back in chain order.
pub fn nuts_sample_from<T: LogDensity + ?Sized>(
    target: &T,
    inits: &[Vec<f64>],
    cfg: &NutsConfig,
    seed: RngState,
) -> Result<Vec<SampleChain>> {
    cfg.validate()?;
    if inits.len() != cfg.chains {
        return Err(Error::InvalidConfig(format!(
            "{} initial points for {} chains",
            inits.len(),
            cfg.chains
        )));
    }
    for init in inits {
        if init.len() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                actual: init.len(),
            });
        }
        if init.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampler("initial point is not finite".into()));
        }
    }
    inits
        .par_iter()
        .enumerate()
        .map(|(i, init)| run_chain(target, init, cfg, seed.child("chain", i as u64)))
        .collect()
}

#[cfg(test)]
mod tests;
