//! Fully Bayesian neural network surrogate.
//!
//! A tanh multilayer perceptron `g(x; w)` with a linear scalar output,
//! Normal(0, 1) priors on every weight and bias, and Gaussian observation
//! noise whose scale carries its own prior:
//!
//! ```text
//! w ~ Normal(0, 1)      sigma ~ NoisePrior      y ~ Normal(g(x; w), sigma^2)
//! ```
//!
//! The sampler works on `(w, log sigma)`; the log-Jacobian of that transform
//! is part of the target. Data are standardized with
//! [`Standardizer::for_domain`] before fitting.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Standardizer};
use crate::grid::within_bounds;
use crate::predictive::{DrawPredictions, PredictiveSummary, UncertaintyRule};
use crate::rng::RngState;
use crate::sampler::{self, diagnostics, LogDensity, NutsConfig, SamplerSummary};
use crate::{Error, Result};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Hidden widths of the default network.
pub const DEFAULT_HIDDEN: [usize; 3] = [32, 16, 8];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    input_dim: usize,
    hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the `fan_in x fan_out` weight block; the biases follow it.
    offset: usize,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        if input_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer widths must be positive, got input {input_dim} and hidden {hidden:?}"
            )));
        }
        Ok(MlpArchitecture { input_dim, hidden })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    fn layers(&self) -> Vec<Layer> {
        let widths: Vec<usize> = std::iter::once(self.input_dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let mut offset = 0;
        widths
            .windows(2)
            .map(|w| {
                let layer = Layer {
                    fan_in: w[0],
                    fan_out: w[1],
                    offset,
                };
                offset += (w[0] + 1) * w[1];
                layer
            })
            .collect()
    }

    /// Number of weights and biases, `sum (fan_in + 1) * fan_out`.
    pub fn n_params(&self) -> usize {
        self.layers().iter().map(|l| (l.fan_in + 1) * l.fan_out).sum()
    }

    fn max_width(&self) -> usize {
        self.hidden.iter().copied().chain([self.input_dim, 1]).max().unwrap_or(1)
    }
}

/// Prior on the observation noise scale `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NoisePrior {
    HalfNormal { scale: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl Default for NoisePrior {
    fn default() -> Self {
        NoisePrior::HalfNormal { scale: 1.0 }
    }
}

impl fmt::Display for NoisePrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoisePrior::HalfNormal { scale } => write!(f, "half-normal-{scale}"),
            NoisePrior::LogNormal { mu, sigma } => write!(f, "log-normal-{mu}-{sigma}"),
        }
    }
}

impl FromStr for NoisePrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown noise prior {s:?}"));
        let positive = |v: &str| v.parse::<f64>().ok().filter(|x| *x > 0.0 && x.is_finite());
        if let Some(scale) = s.strip_prefix("half-normal-") {
            return Ok(NoisePrior::HalfNormal {
                scale: positive(scale).ok_or_else(bad)?,
            });
        }
        if let Some(rest) = s.strip_prefix("log-normal-") {
            // The location may itself be negative, so split at the last '-'.
            let (mu, sigma) = rest.rsplit_once('-').ok_or_else(bad)?;
            let mu = mu.parse::<f64>().ok().filter(|m| m.is_finite()).ok_or_else(bad)?;
            return Ok(NoisePrior::LogNormal {
                mu,
                sigma: positive(sigma).ok_or_else(bad)?,
            });
        }
        Err(bad())
    }
}

impl TryFrom<String> for NoisePrior {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NoisePrior> for String {
    fn from(p: NoisePrior) -> String {
        p.to_string()
    }
}

impl NoisePrior {
    /// Log-density of `log sigma = u` (Jacobian included) and its derivative.
    pub fn log_density_log_scale(&self, u: f64) -> (f64, f64) {
        match *self {
            NoisePrior::HalfNormal { scale } => {
                let s2 = (2.0 * u).exp() / (scale * scale);
                let value = 0.5 * (2.0 / std::f64::consts::PI).ln() - scale.ln() - 0.5 * s2 + u;
                (value, 1.0 - s2)
            }
            NoisePrior::LogNormal { mu, sigma } => {
                let z = (u - mu) / sigma;
                (-sigma.ln() - HALF_LOG_2PI - 0.5 * z * z, -z / sigma)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match *self {
            NoisePrior::HalfNormal { scale } => scale * z.abs(),
            NoisePrior::LogNormal { mu, sigma } => (mu + sigma * z).exp(),
        }
    }
}

/// One posterior draw: flat weights/biases and the noise scale, both in
/// standardized target units.
#[derive(Debug, Clone, PartialEq)]
pub struct BnnParameters {
    pub weights: Vec<f64>,
    pub noise_scale: f64,
}

impl BnnParameters {
    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut z = self.weights.clone();
        z.push(self.noise_scale.ln());
        z
    }

    pub fn from_unconstrained(z: &[f64]) -> Self {
        let (w, u) = z.split_at(z.len() - 1);
        BnnParameters {
            weights: w.to_vec(),
            noise_scale: u[0].exp(),
        }
    }

    pub fn sample_prior<R: Rng + ?Sized>(arch: &MlpArchitecture, prior: &NoisePrior, rng: &mut R) -> Self {
        let weights = (0..arch.n_params()).map(|_| rng.sample(StandardNormal)).collect();
        let noise_scale = prior.sample(rng).max(1e-6);
        BnnParameters {
            weights,
            noise_scale,
        }
    }
}

/// `exp(t)` for `t` in `[-40, 0]`, branch free so that loops over it
/// vectorize. Range reduction by `ln 2` and a degree 12 Taylor polynomial
/// keep the relative error near one ulp.
#[inline(always)]
fn exp_nonpositive(t: f64) -> f64 {
    const ROUND: f64 = 6755399441055744.0; // 1.5 * 2^52
    const LN2_HI: f64 = 0.693_147_180_369_123_816_49;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let shifted = t * std::f64::consts::LOG2_E + ROUND;
    let k = shifted - ROUND;
    let r = (t - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    for c in [
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    let ki = shifted.to_bits() as i64 as i32 as i64;
    p * f64::from_bits(((ki + 1023) as u64) << 52)
}

/// `tanh` through a single exponential. Absolute error stays within a few
/// ulps of 1; beyond |x| = 20 the result is exactly +-1.
#[inline(always)]
fn tanh(x: f64) -> f64 {
    let e = exp_nonpositive(-2.0 * x.abs().min(20.0));
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// Dot product with four interleaved accumulators, a fixed summation order
/// the compiler can vectorize.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

fn dense_layer(input: &[f64], rows: usize, layer: Layer, w: &[f64], out: &mut [f64], activate: bool) {
    let Layer {
        fan_in,
        fan_out,
        offset,
    } = layer;
    let weights = &w[offset..offset + fan_in * fan_out];
    let bias = &w[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
    for r in 0..rows {
        let o = &mut out[r * fan_out..(r + 1) * fan_out];
        o.copy_from_slice(bias);
        for (k, &a) in input[r * fan_in..(r + 1) * fan_in].iter().enumerate() {
            for (oj, wj) in o.iter_mut().zip(&weights[k * fan_out..(k + 1) * fan_out]) {
                *oj += a * wj;
            }
        }
        if activate {
            o.iter_mut().for_each(|v| *v = tanh(*v));
        }
    }
}

/// Network outputs for `rows` inputs stored row-major in `x`.
fn forward_batch(arch: &MlpArchitecture, w: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let layers = arch.layers();
    let mut current = x.to_vec();
    let mut next = vec![0.0; rows * arch.max_width()];
    for (l, &layer) in layers.iter().enumerate() {
        let out = &mut next[..rows * layer.fan_out];
        dense_layer(&current, rows, layer, w, out, l + 1 < layers.len());
        current.clear();
        current.extend_from_slice(out);
    }
    current
}

/// `g(x; w)` for a single standardized input.
pub fn forward(arch: &MlpArchitecture, w: &[f64], x: &[f64]) -> Result<f64> {
    if w.len() != arch.n_params() {
        return Err(Error::DimensionMismatch {
            expected: arch.n_params(),
            actual: w.len(),
        });
    }
    if x.len() != arch.input_dim {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim,
            actual: x.len(),
        });
    }
    Ok(forward_batch(arch, w, x, 1)[0])
}

/// The joint log-density of a network over standardized data, as a sampler
/// target over `(w, log sigma)`.
#[derive(Debug, Clone)]
pub struct BnnTarget {
    arch: MlpArchitecture,
    prior: NoisePrior,
    x: Vec<f64>,
    /// Inputs stored feature-major, `x_cols[k * rows + r]`.
    x_cols: Vec<f64>,
    y: Vec<f64>,
    layers: Vec<Layer>,
}

impl BnnTarget {
    pub fn new(arch: MlpArchitecture, prior: NoisePrior, inputs: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::InvalidData(format!(
                "need matching non-empty inputs and targets, got {} and {}",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(bad) = inputs.iter().find(|x| x.len() != arch.input_dim) {
            return Err(Error::DimensionMismatch {
                expected: arch.input_dim,
                actual: bad.len(),
            });
        }
        let rows = inputs.len();
        let mut x_cols = vec![0.0; rows * arch.input_dim];
        for (r, x) in inputs.iter().enumerate() {
            for (k, &v) in x.iter().enumerate() {
                x_cols[k * rows + r] = v;
            }
        }
        Ok(BnnTarget {
            x: inputs.concat(),
            x_cols,
            y: targets.to_vec(),
            layers: arch.layers(),
            arch,
            prior,
        })
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    fn rows(&self) -> usize {
        self.y.len()
    }

    /// `sum_i log N(y_i | g(x_i; w), sigma^2)`.
    pub fn log_likelihood(&self, params: &BnnParameters) -> f64 {
        let out = forward_batch(&self.arch, &params.weights, &self.x, self.rows());
        let s2 = params.noise_scale * params.noise_scale;
        let sse: f64 = out.iter().zip(&self.y).map(|(g, y)| (y - g) * (y - g)).sum();
        let n = self.rows() as f64;
        -n * (HALF_LOG_2PI + params.noise_scale.ln()) - 0.5 * sse / s2
    }

    /// Weight prior plus the noise prior on `log sigma` (Jacobian included).
    pub fn log_prior(&self, params: &BnnParameters) -> f64 {
        let p = params.weights.len() as f64;
        let weights = -p * HALF_LOG_2PI - 0.5 * params.weights.iter().map(|w| w * w).sum::<f64>();
        weights + self.prior.log_density_log_scale(params.noise_scale.ln()).0
    }

    pub fn log_joint(&self, params: &BnnParameters) -> f64 {
        let value = self.log_likelihood(params) + self.log_prior(params);
        if value.is_finite() {
            value
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Gradient of [`Self::log_prior`] alone, written into `grad`.
    fn prior_score(&self, z: &[f64], grad: &mut [f64]) {
        let n_params = z.len() - 1;
        for (g, &wi) in grad[..n_params].iter_mut().zip(z) {
            *g = -wi;
        }
        grad[n_params] = self.prior.log_density_log_scale(z[n_params]).1;
    }

    /// Gradient of [`Self::log_joint`] with respect to `(w, log sigma)`.
    pub fn grad_log_joint(&self, params: &BnnParameters) -> Vec<f64> {
        let z = params.to_unconstrained();
        let mut grad = vec![0.0; z.len()];
        self.log_density_grad(&z, &mut grad);
        grad
    }
}

impl LogDensity for BnnTarget {
    fn dim(&self) -> usize {
        self.arch.n_params() + 1
    }

    fn log_density_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let n_params = self.arch.n_params();
        let (w, u) = (&z[..n_params], z[n_params]);
        let rows = self.rows();
        let layers = &self.layers;
        let last = layers.len() - 1;

        // Forward pass in feature-major layout, keeping every layer's activations.
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        for (l, &Layer { fan_in, fan_out, offset }) in layers.iter().enumerate() {
            let input = if l == 0 { &self.x_cols } else { &acts[l - 1] };
            let weights = &w[offset..offset + fan_in * fan_out];
            let bias = &w[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            let mut out = vec![0.0; rows * fan_out];
            for (j, col) in out.chunks_exact_mut(rows).enumerate() {
                col.fill(bias[j]);
                for (k, a) in input.chunks_exact(rows).enumerate() {
                    let wkj = weights[k * fan_out + j];
                    for (o, a) in col.iter_mut().zip(a) {
                        *o += wkj * a;
                    }
                }
                if l < last {
                    col.iter_mut().for_each(|v| *v = tanh(*v));
                }
            }
            acts.push(out);
        }

        let sigma2 = (2.0 * u).exp();
        let output = &acts[last];
        let mut delta: Vec<f64> = output.iter().zip(&self.y).map(|(g, y)| (y - g) / sigma2).collect();
        let sse: f64 = output.iter().zip(&self.y).map(|(g, y)| (y - g) * (y - g)).sum();

        let prior_u = self.prior.log_density_log_scale(u).0;
        let n = rows as f64;
        let w2: f64 = w.iter().map(|v| v * v).sum();
        let value = -n * (HALF_LOG_2PI + u) - 0.5 * sse / sigma2 - n_params as f64 * HALF_LOG_2PI - 0.5 * w2
            + prior_u;

        // Prior score, then backpropagate the likelihood into it.
        self.prior_score(z, grad);
        grad[n_params] += -n + sse / sigma2;

        for l in (0..layers.len()).rev() {
            let Layer {
                fan_in,
                fan_out,
                offset,
            } = layers[l];
            let input = if l == 0 { &self.x_cols } else { &acts[l - 1] };
            let weights = &w[offset..offset + fan_in * fan_out];
            let (gw, gb) = grad[offset..offset + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
            for (j, d) in delta.chunks_exact(rows).enumerate() {
                gb[j] += d.iter().sum::<f64>();
                for (k, a) in input.chunks_exact(rows).enumerate() {
                    gw[k * fan_out + j] += dot(a, d);
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; rows * fan_in];
                for (k, (p, a)) in prev.chunks_exact_mut(rows).zip(input.chunks_exact(rows)).enumerate() {
                    for (j, d) in delta.chunks_exact(rows).enumerate() {
                        let wkj = weights[k * fan_out + j];
                        for (pv, dv) in p.iter_mut().zip(d) {
                            *pv += wkj * dv;
                        }
                    }
                    for (pv, av) in p.iter_mut().zip(a) {
                        *pv *= 1.0 - av * av;
                    }
                }
                delta = prev;
            }
        }

        if value.is_finite() {
            value
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Network settings of an FBNN surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BnnConfig {
    pub hidden: Vec<usize>,
    pub noise_prior: NoisePrior,
    pub nuts: NutsConfig,
}

impl Default for BnnConfig {
    fn default() -> Self {
        BnnConfig {
            hidden: DEFAULT_HIDDEN.to_vec(),
            noise_prior: NoisePrior::default(),
            nuts: NutsConfig::default(),
        }
    }
}

/// Posterior ensemble of a fitted network.
#[derive(Debug, Clone)]
pub struct BnnPosterior {
    arch: MlpArchitecture,
    draws: Vec<BnnParameters>,
    standardizer: Standardizer,
    bounds: Vec<(f64, f64)>,
    summary: Option<SamplerSummary>,
}

impl BnnPosterior {
    /// An ensemble assembled from explicit draws (standardized units).
    pub fn from_draws(
        arch: MlpArchitecture,
        draws: Vec<BnnParameters>,
        standardizer: Standardizer,
        bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Model("a posterior needs at least one draw".into()));
        }
        if let Some(d) = draws.iter().find(|d| d.weights.len() != arch.n_params()) {
            return Err(Error::DimensionMismatch {
                expected: arch.n_params(),
                actual: d.weights.len(),
            });
        }
        Ok(BnnPosterior {
            arch,
            draws,
            standardizer,
            bounds,
            summary: None,
        })
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn draws(&self) -> &[BnnParameters] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn sampler_summary(&self) -> Option<&SamplerSummary> {
        self.summary.as_ref()
    }

    /// Every member's output at `points` (raw coordinates), in raw target
    /// units.
    pub fn draw_predictions(&self, points: &[Vec<f64>]) -> Result<DrawPredictions> {
        if let Some(p) = points.iter().find(|p| !within_bounds(&self.bounds, p)) {
            return Err(Error::OutOfBounds(p.clone()));
        }
        let x: Vec<f64> = points.iter().flat_map(|p| self.standardizer.standardize_input(p)).collect();
        let m = points.len();
        let per_draw: Vec<Vec<f64>> = self
            .draws
            .par_iter()
            .map(|d| forward_batch(&self.arch, &d.weights, &x, m))
            .collect();
        let n = self.draws.len();
        let s = &self.standardizer;
        let mut means = vec![0.0; m * n];
        for (j, outputs) in per_draw.iter().enumerate() {
            for (i, g) in outputs.iter().enumerate() {
                means[i * n + j] = s.unstandardize_target(*g);
            }
        }
        Ok(DrawPredictions {
            n_points: m,
            n_draws: n,
            means,
            latent_var: vec![0.0; m * n],
            noise_var: self
                .draws
                .iter()
                .map(|d| s.unstandardize_variance(d.noise_scale * d.noise_scale))
                .collect(),
        })
    }

    /// Ensemble mean of the network outputs, and the spread of those outputs
    /// plus the mean noise variance as the uncertainty.
    pub fn predict(&self, points: &[Vec<f64>]) -> Result<PredictiveSummary> {
        Ok(self.draw_predictions(points)?.summarize(UncertaintyRule::MeansPlusNoise))
    }
}

/// Standardizes `data`, samples the network posterior with NUTS and keeps
/// `chains x samples` draws. Each chain starts from its own prior draw.
pub fn fit(data: &Dataset, cfg: &BnnConfig, seed: RngState) -> Result<BnnPosterior> {
    let arch = MlpArchitecture::new(data.dim(), cfg.hidden.clone())?;
    let standardizer = Standardizer::for_domain(data);
    let inputs = standardizer.standardize_inputs(data.inputs());
    let targets = standardizer.standardize_targets(data.targets());
    let target = BnnTarget::new(arch.clone(), cfg.noise_prior, &inputs, &targets)?;

    let inits: Vec<Vec<f64>> = (0..cfg.nuts.chains)
        .map(|c| {
            let mut rng = seed.child("init", c as u64).rng();
            BnnParameters::sample_prior(&arch, &cfg.noise_prior, &mut rng).to_unconstrained()
        })
        .collect();
    let chains = sampler::nuts_sample_from(&target, &inits, &cfg.nuts, seed)?;
    let summary = diagnostics(&chains);
    let draws = chains
        .iter()
        .flat_map(|c| c.draws.iter().map(|z| BnnParameters::from_unconstrained(z)))
        .collect();
    let mut posterior = BnnPosterior::from_draws(arch, draws, standardizer, data.bounds().to_vec())?;
    posterior.summary = Some(summary);
    Ok(posterior)
}

#[cfg(test)]
mod tests;
