//! Gaussian-process surrogate with a Matérn 5/2 kernel.
//!
//! Hyperparameters are one lengthscale per input dimension, an output scale
//! `s^2` and the observation noise `sigma`. The sampler works on
//! `z = [log l_1, .., log l_d, log s^2, log sigma]`. Lengthscales and the
//! output scale carry Log-Normal(0, 1) priors; the noise prior is shared with
//! the network surrogate.
//!
//! Each posterior draw caches the Cholesky factor of `K + sigma^2 I` and
//! `alpha = (K + sigma^2 I)^{-1} y`, so predictions cost one triangular solve
//! per point and draw.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnn::NoisePrior;
use crate::data::{Dataset, Standardizer};
use crate::grid::within_bounds;
use crate::linalg;
use crate::predictive::{DrawPredictions, PredictiveSummary, UncertaintyRule};
use crate::rng::RngState;
use crate::sampler::{self, diagnostics, LogDensity, NutsConfig, SamplerSummary};
use crate::{Error, Result};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;
const SQRT5: f64 = 2.236_067_977_499_79;

/// Number of prior draws the MAP search starts from.
pub const MAP_RESTARTS: usize = 10;

/// Matérn 5/2 covariance from the scaled distance `r`.
#[inline]
fn matern52_r(r: f64, output_scale: f64) -> f64 {
    let sr = SQRT5 * r;
    output_scale * (1.0 + sr + sr * sr / 3.0) * (-sr).exp()
}

/// `s^2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r)` with `r` the distance
/// between `x` and `y` after dividing each coordinate by its lengthscale.
pub fn matern52(x: &[f64], y: &[f64], lengthscales: &[f64], output_scale: f64) -> f64 {
    let r2: f64 = x
        .iter()
        .zip(y)
        .zip(lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    matern52_r(r2.sqrt(), output_scale)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparameters {
    pub lengthscales: Vec<f64>,
    pub output_scale: f64,
    pub noise_scale: f64,
}

impl GpHyperparameters {
    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut z: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        z.push(self.output_scale.ln());
        z.push(self.noise_scale.ln());
        z
    }

    pub fn from_unconstrained(z: &[f64]) -> Self {
        let d = z.len() - 2;
        GpHyperparameters {
            lengthscales: z[..d].iter().map(|u| u.exp()).collect(),
            output_scale: z[d].exp(),
            noise_scale: z[d + 1].exp(),
        }
    }

    pub fn sample_prior<R: Rng + ?Sized>(dim: usize, noise: &NoisePrior, rng: &mut R) -> Self {
        let mut log_normal = || rng.sample::<f64, _>(StandardNormal).exp();
        let lengthscales = (0..dim).map(|_| log_normal()).collect();
        let output_scale = log_normal();
        GpHyperparameters {
            lengthscales,
            output_scale,
            noise_scale: noise.sample(rng).max(1e-6),
        }
    }

    fn is_valid(&self, dim: usize) -> bool {
        self.lengthscales.len() == dim
            && self
                .lengthscales
                .iter()
                .chain([&self.output_scale, &self.noise_scale])
                .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Covariance of the training inputs under `hp`, noise excluded.
fn kernel_matrix(x: &[Vec<f64>], hp: &GpHyperparameters) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = hp.output_scale;
        for j in 0..i {
            let v = matern52(&x[i], &x[j], &hp.lengthscales, hp.output_scale);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Cholesky factor of `K + sigma^2 I` (jitter added if needed) and `alpha`.
#[derive(Clone)]
struct Factorization {
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
}

fn factorize(k: &[f64], n: usize, noise_var: f64, y: &[f64]) -> Option<Factorization> {
    let mut ky = k.to_vec();
    for i in 0..n {
        ky[i * n + i] += noise_var;
    }
    let (chol, jitter) = linalg::cholesky_with_jitter(&ky, n)?;
    let mut alpha = y.to_vec();
    linalg::cholesky_solve(&chol, n, &mut alpha);
    Some(Factorization { chol, alpha, jitter })
}

/// Log-posterior of the hyperparameters given standardized data.
#[derive(Debug, Clone)]
pub struct GpTarget {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    noise_prior: NoisePrior,
    /// `(x_ik - x_jk)^2` for every pair, `sq_diff[(i * n + j) * d + k]`.
    sq_diff: Vec<f64>,
}

impl GpTarget {
    pub fn new(inputs: &[Vec<f64>], targets: &[f64], noise_prior: NoisePrior) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidData(format!(
                "need matching non-empty inputs and targets, got {} and {}",
                inputs.len(),
                targets.len()
            )));
        }
        let d = inputs[0].len();
        if let Some(bad) = inputs.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        let n = inputs.len();
        let mut sq_diff = vec![0.0; n * n * d];
        for i in 0..n {
            for j in 0..n {
                for k in 0..d {
                    sq_diff[(i * n + j) * d + k] = (inputs[i][k] - inputs[j][k]).powi(2);
                }
            }
        }
        Ok(GpTarget {
            x: inputs.to_vec(),
            y: targets.to_vec(),
            noise_prior,
            sq_diff,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.x[0].len()
    }

    /// `log N(y | 0, K + sigma^2 I)`, or `-inf` when the covariance cannot be
    /// factorized even with the largest jitter.
    pub fn log_marginal_likelihood(&self, hp: &GpHyperparameters) -> f64 {
        let n = self.y.len();
        let k = kernel_matrix(&self.x, hp);
        match factorize(&k, n, hp.noise_scale * hp.noise_scale, &self.y) {
            Some(f) => self.marginal_from(&f),
            None => f64::NEG_INFINITY,
        }
    }

    fn marginal_from(&self, f: &Factorization) -> f64 {
        let n = self.y.len();
        let quad: f64 = self.y.iter().zip(&f.alpha).map(|(a, b)| a * b).sum();
        -0.5 * quad - 0.5 * linalg::log_det_from_cholesky(&f.chol, n) - n as f64 * HALF_LOG_2PI
    }

    /// Log-Normal(0, 1) on each lengthscale and the output scale and the noise
    /// prior on sigma, each including the Jacobian of its log transform.
    pub fn log_prior(&self, hp: &GpHyperparameters) -> f64 {
        let std_normal = |u: f64| -0.5 * u * u - HALF_LOG_2PI;
        hp.lengthscales.iter().map(|l| std_normal(l.ln())).sum::<f64>()
            + std_normal(hp.output_scale.ln())
            + self.noise_prior.log_density_log_scale(hp.noise_scale.ln()).0
    }

    pub fn log_joint(&self, hp: &GpHyperparameters) -> f64 {
        let value = self.log_marginal_likelihood(hp) + self.log_prior(hp);
        if value.is_finite() {
            value
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl LogDensity for GpTarget {
    fn dim(&self) -> usize {
        self.input_dim() + 2
    }

    fn log_density_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.input_dim();
        let n = self.y.len();
        let hp = GpHyperparameters::from_unconstrained(z);
        if !hp.is_valid(d) {
            grad.fill(0.0);
            return f64::NEG_INFINITY;
        }
        let k = kernel_matrix(&self.x, &hp);
        let noise_var = hp.noise_scale * hp.noise_scale;
        let Some(f) = factorize(&k, n, noise_var, &self.y) else {
            grad.fill(0.0);
            return f64::NEG_INFINITY;
        };
        let value = self.marginal_from(&f) + self.log_prior(&hp);

        // d/dphi of the marginal is tr(W dK/dphi) / 2 with W = aa^T - K_y^{-1}.
        let mut w = linalg::cholesky_inverse(&f.chol, n);
        for i in 0..n {
            for j in 0..n {
                w[i * n + j] = f.alpha[i] * f.alpha[j] - w[i * n + j];
            }
        }

        grad.fill(0.0);
        let inv_l2: Vec<f64> = hp.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut trace_k = 0.0;
        let mut trace_w = 0.0;
        for i in 0..n {
            trace_w += w[i * n + i];
            trace_k += w[i * n + i] * k[i * n + i];
            for j in 0..i {
                let diffs = &self.sq_diff[(i * n + j) * d..(i * n + j + 1) * d];
                let r = diffs.iter().zip(&inv_l2).map(|(s, il)| s * il).sum::<f64>().sqrt();
                let wij = w[i * n + j];
                trace_k += 2.0 * wij * k[i * n + j];
                let common = hp.output_scale * (-SQRT5 * r).exp() * (5.0 / 3.0) * (1.0 + SQRT5 * r);
                for ((g, s), il) in grad[..d].iter_mut().zip(diffs).zip(&inv_l2) {
                    *g += wij * common * s * il;
                }
            }
        }
        // Off-diagonal pairs were visited once; the symmetric twin doubles
        // them, which cancels the 1/2 of the trace identity.
        grad[d] = 0.5 * trace_k;
        grad[d + 1] = noise_var * trace_w;

        for (g, u) in grad[..=d].iter_mut().zip(z) {
            *g -= u;
        }
        grad[d + 1] += self.noise_prior.log_density_log_scale(z[d + 1]).1;

        if value.is_finite() {
            value
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpInference {
    /// Full posterior over hyperparameters by NUTS.
    #[default]
    Nuts,
    /// A single maximum a posteriori draw.
    Map,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpConfig {
    pub inference: GpInference,
    pub noise_prior: NoisePrior,
    pub nuts: NutsConfig,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            inference: GpInference::Nuts,
            noise_prior: NoisePrior::default(),
            nuts: NutsConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct GpDraw {
    hp: GpHyperparameters,
    fact: Factorization,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization").field("jitter", &self.jitter).finish_non_exhaustive()
    }
}

/// Hyperparameter draws with their cached factorizations.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    draws: Vec<GpDraw>,
    inputs: Vec<Vec<f64>>,
    standardizer: Standardizer,
    bounds: Vec<(f64, f64)>,
    summary: Option<SamplerSummary>,
}

impl GpPosterior {
    /// Factorizes every draw against `data` standardized by `standardizer`.
    pub fn from_draws(data: &Dataset, standardizer: Standardizer, draws: Vec<GpHyperparameters>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Model("a posterior needs at least one draw".into()));
        }
        let inputs = standardizer.standardize_inputs(data.inputs());
        let targets = standardizer.standardize_targets(data.targets());
        let factored: Vec<GpDraw> = draws
            .into_par_iter()
            .map(|hp| {
                if !hp.is_valid(data.dim()) {
                    return Err(Error::Model(format!("invalid GP hyperparameters {hp:?}")));
                }
                let k = kernel_matrix(&inputs, &hp);
                let fact = factorize(&k, inputs.len(), hp.noise_scale * hp.noise_scale, &targets)
                    .ok_or_else(|| Error::Model(format!("covariance not positive definite for {hp:?}")))?;
                Ok(GpDraw { hp, fact })
            })
            .collect::<Result<_>>()?;
        Ok(GpPosterior {
            draws: factored,
            inputs,
            standardizer,
            bounds: data.bounds().to_vec(),
            summary: None,
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn hyperparameters(&self) -> impl Iterator<Item = &GpHyperparameters> {
        self.draws.iter().map(|d| &d.hp)
    }

    /// Largest diagonal jitter any draw needed.
    pub fn max_jitter(&self) -> f64 {
        self.draws.iter().map(|d| d.fact.jitter).fold(0.0, f64::max)
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn sampler_summary(&self) -> Option<&SamplerSummary> {
        self.summary.as_ref()
    }

    /// Posterior mean and latent variance of draw `j` at a standardized input.
    /// The variance is clamped at zero.
    fn latent(&self, j: usize, x: &[f64], kstar: &mut [f64]) -> (f64, f64) {
        let draw = &self.draws[j];
        let n = self.inputs.len();
        for (k, xi) in kstar.iter_mut().zip(&self.inputs) {
            *k = matern52(x, xi, &draw.hp.lengthscales, draw.hp.output_scale);
        }
        let mean: f64 = kstar.iter().zip(&draw.fact.alpha).map(|(a, b)| a * b).sum();
        linalg::solve_lower(&draw.fact.chol, n, kstar);
        let explained: f64 = kstar.iter().map(|v| v * v).sum();
        (mean, (draw.hp.output_scale - explained).max(0.0))
    }

    fn check_points(&self, points: &[Vec<f64>]) -> Result<()> {
        match points.iter().find(|p| !within_bounds(&self.bounds, p)) {
            Some(p) => Err(Error::OutOfBounds(p.clone())),
            None => Ok(()),
        }
    }

    /// Mean and latent variance of draw `j` at `x`, in raw units.
    pub fn predict_single(&self, j: usize, x: &[f64]) -> Result<(f64, f64)> {
        if j >= self.draws.len() {
            return Err(Error::Model(format!("draw {j} out of range for {} draws", self.draws.len())));
        }
        self.check_points(std::slice::from_ref(&x.to_vec()))?;
        let s = &self.standardizer;
        let mut kstar = vec![0.0; self.inputs.len()];
        let (m, v) = self.latent(j, &s.standardize_input(x), &mut kstar);
        Ok((s.unstandardize_target(m), s.unstandardize_variance(v)))
    }

    pub fn draw_predictions(&self, points: &[Vec<f64>]) -> Result<DrawPredictions> {
        self.check_points(points)?;
        let s = &self.standardizer;
        let xs = s.standardize_inputs(points);
        let per_draw: Vec<Vec<(f64, f64)>> = (0..self.draws.len())
            .into_par_iter()
            .map(|j| {
                let mut kstar = vec![0.0; self.inputs.len()];
                xs.iter().map(|x| self.latent(j, x, &mut kstar)).collect()
            })
            .collect();
        let (m, n) = (points.len(), self.draws.len());
        let mut means = vec![0.0; m * n];
        let mut latent_var = vec![0.0; m * n];
        for (j, preds) in per_draw.iter().enumerate() {
            for (i, &(mu, var)) in preds.iter().enumerate() {
                means[i * n + j] = s.unstandardize_target(mu);
                latent_var[i * n + j] = s.unstandardize_variance(var);
            }
        }
        Ok(DrawPredictions {
            n_points: m,
            n_draws: n,
            means,
            latent_var,
            noise_var: self
                .draws
                .iter()
                .map(|d| s.unstandardize_variance(d.hp.noise_scale * d.hp.noise_scale))
                .collect(),
        })
    }

    /// Ensemble mean of the draw means; uncertainty is the mean latent
    /// variance plus the spread of the draw means. Observation noise is not
    /// included.
    pub fn predict(&self, points: &[Vec<f64>]) -> Result<PredictiveSummary> {
        Ok(self.draw_predictions(points)?.summarize(UncertaintyRule::LatentPlusSpread))
    }
}

fn prepare(data: &Dataset, cfg: &GpConfig) -> Result<(Standardizer, GpTarget)> {
    let standardizer = Standardizer::for_domain(data);
    let inputs = standardizer.standardize_inputs(data.inputs());
    let targets = standardizer.standardize_targets(data.targets());
    let target = GpTarget::new(&inputs, &targets, cfg.noise_prior)?;
    Ok((standardizer, target))
}

/// Fits the GP to `data` with the configured inference mode.
pub fn fit(data: &Dataset, cfg: &GpConfig, seed: RngState) -> Result<GpPosterior> {
    if cfg.inference == GpInference::Map {
        return fit_map(data, cfg, seed);
    }
    let (standardizer, target) = prepare(data, cfg)?;
    let inits: Vec<Vec<f64>> = (0..cfg.nuts.chains)
        .map(|c| {
            let mut rng = seed.child("init", c as u64).rng();
            GpHyperparameters::sample_prior(data.dim(), &cfg.noise_prior, &mut rng).to_unconstrained()
        })
        .collect();
    let chains = sampler::nuts_sample_from(&target, &inits, &cfg.nuts, seed)?;
    let summary = diagnostics(&chains);
    let draws = chains
        .iter()
        .flat_map(|c| c.draws.iter().map(|z| GpHyperparameters::from_unconstrained(z)))
        .collect();
    let mut posterior = GpPosterior::from_draws(data, standardizer, draws)?;
    posterior.summary = Some(summary);
    Ok(posterior)
}

/// Gradient ascent with a backtracking (Armijo) line search.
pub(crate) fn ascend<T: LogDensity>(target: &T, start: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let mut z = start.to_vec();
    let mut grad = vec![0.0; z.len()];
    let mut f = target.log_density_grad(&z, &mut grad);
    if !f.is_finite() {
        return (z, f);
    }
    let mut step = 0.1;
    let mut trial = vec![0.0; z.len()];
    let mut trial_grad = vec![0.0; z.len()];
    for _ in 0..max_iter {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if g2.sqrt() < 1e-9 {
            break;
        }
        let mut accepted = None;
        while step > 1e-14 {
            for ((t, zi), gi) in trial.iter_mut().zip(&z).zip(&grad) {
                *t = zi + step * gi;
            }
            let ft = target.log_density_grad(&trial, &mut trial_grad);
            if ft.is_finite() && ft >= f + 1e-4 * step * g2 {
                accepted = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(ft) = accepted else { break };
        let gain = ft - f;
        z.copy_from_slice(&trial);
        grad.copy_from_slice(&trial_grad);
        f = ft;
        step *= 2.0;
        if gain <= 1e-13 * (1.0 + f.abs()) {
            break;
        }
    }
    (z, f)
}

/// Maximum a posteriori hyperparameters from the best of
/// [`MAP_RESTARTS`] ascents started at prior draws, as a one-draw posterior.
pub fn fit_map(data: &Dataset, cfg: &GpConfig, seed: RngState) -> Result<GpPosterior> {
    let (standardizer, target) = prepare(data, cfg)?;
    let best = (0..MAP_RESTARTS)
        .map(|r| {
            let mut rng = seed.child("restart", r as u64).rng();
            let start = GpHyperparameters::sample_prior(data.dim(), &cfg.noise_prior, &mut rng).to_unconstrained();
            ascend(&target, &start, 1000)
        })
        .filter(|(_, f)| f.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Model("every MAP restart failed to factorize".into()))?;
    GpPosterior::from_draws(data, standardizer, vec![GpHyperparameters::from_unconstrained(&best.0)])
}
