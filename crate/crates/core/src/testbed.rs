//! Benchmark functions: six 1D curves with discontinuities or nonstationary
//! behaviour, two synthetic 2D maps and a 2D Ising model simulated by
//! Metropolis sampling.
//!
//! Synthetic functions are observed with additive Gaussian noise whose
//! standard deviation is 2% of the function's range on its grid. Ising
//! observations carry their own Monte Carlo fluctuation instead.
//!
//! ```
//! use activebayes::testbed;
//!
//! let f = testbed::lookup("discontinuous-1").unwrap();
//! assert_eq!(f.evaluate(&[0.5]).unwrap(), 2.0 * 0.5f64.powf(1.5));
//! assert_eq!(testbed::catalog().len(), 10);
//! ```

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{within_bounds, Bounds, EvaluationGrid};
use crate::rng::RngState;
use crate::{Error, Result};

/// Additive noise standard deviation as a fraction of the range over the grid.
pub const NOISE_FRACTION: f64 = 0.02;

/// Seed of the streams behind Ising ground-truth maps.
const ISING_TRUTH_SEED: u64 = 0x1517_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Latency {
    /// Closed-form evaluation.
    Instant,
    /// Each measurement runs a simulation.
    Simulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Mean absolute magnetization per spin.
    Magnetization,
    /// Energy fluctuation per spin, `(<E^2> - <E>^2) / (L^2 T^2)`.
    HeatCapacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsingConfig {
    pub lattice: usize,
    pub coupling: f64,
    pub warmup_sweeps: usize,
    pub measurement_sweeps: usize,
    pub observable: Observable,
}

impl IsingConfig {
    pub fn new(observable: Observable) -> Self {
        IsingConfig {
            lattice: 16,
            coupling: 1.0,
            warmup_sweeps: 500,
            measurement_sweeps: 2000,
            observable,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lattice < 4 {
            return Err(Error::InvalidConfig(format!("Ising lattice {} is below 4", self.lattice)));
        }
        if self.warmup_sweeps < 1 || self.measurement_sweeps < 1 {
            return Err(Error::InvalidConfig("Ising sweep counts must be at least 1".into()));
        }
        if !self.coupling.is_finite() {
            return Err(Error::InvalidConfig("Ising coupling must be finite".into()));
        }
        Ok(())
    }

    fn key(&self) -> [u64; 5] {
        [
            self.lattice as u64,
            self.coupling.to_bits(),
            self.warmup_sweeps as u64,
            self.measurement_sweeps as u64,
            self.observable as u64,
        ]
    }
}

/// Metropolis single-spin-flip simulation of an `L x L` periodic lattice with
/// energy `-J sum_<ij> s_i s_j - h sum_i s_i`. The lattice starts fully
/// aligned with the field (up for `h = 0`). A sweep is `L^2` flip attempts at
/// uniformly random sites; one sample is taken after each measurement sweep.
pub fn ising_measure<R: Rng + ?Sized>(cfg: &IsingConfig, temperature: f64, field: f64, rng: &mut R) -> Result<f64> {
    cfg.validate()?;
    if !(temperature > 0.0) || !temperature.is_finite() || !field.is_finite() {
        return Err(Error::InvalidData(format!(
            "Ising needs T > 0 and finite h, got T = {temperature}, h = {field}"
        )));
    }
    let l = cfg.lattice;
    let n = l * l;
    let start: i8 = if field < 0.0 { -1 } else { 1 };
    let mut spins = vec![start; n];

    // Acceptance probability for spin s with neighbour sum m: index by
    // (s > 0, (m + 4) / 2).
    let mut accept = [[0.0f64; 5]; 2];
    for (si, s) in [-1.0f64, 1.0].iter().enumerate() {
        for (mi, row) in accept[si].iter_mut().enumerate() {
            let m = 2.0 * mi as f64 - 4.0;
            let delta = 2.0 * s * (cfg.coupling * m + field);
            *row = (-delta / temperature).exp().min(1.0);
        }
    }

    let neighbour_sum = |spins: &[i8], i: usize| -> i32 {
        let (r, c) = (i / l, i % l);
        let up = ((r + l - 1) % l) * l + c;
        let down = ((r + 1) % l) * l + c;
        let left = r * l + (c + l - 1) % l;
        let right = r * l + (c + 1) % l;
        (spins[up] + spins[down] + spins[left] + spins[right]) as i32
    };
    let sweep = |spins: &mut Vec<i8>, rng: &mut R| {
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            let m = neighbour_sum(spins, i);
            let p = accept[(spins[i] > 0) as usize][((m + 4) / 2) as usize];
            if p >= 1.0 || rng.gen::<f64>() < p {
                spins[i] = -spins[i];
            }
        }
    };

    for _ in 0..cfg.warmup_sweeps {
        sweep(&mut spins, rng);
    }
    let mut samples = Vec::with_capacity(cfg.measurement_sweeps);
    for _ in 0..cfg.measurement_sweeps {
        sweep(&mut spins, rng);
        let total: i64 = spins.iter().map(|&s| s as i64).sum();
        let sample = match cfg.observable {
            Observable::Magnetization => (total.abs() as f64) / n as f64,
            Observable::HeatCapacity => {
                // Each bond counted once through the right and down neighbours.
                let bonds: i64 = (0..n)
                    .map(|i| {
                        let (r, c) = (i / l, i % l);
                        let s = spins[i] as i64;
                        s * (spins[r * l + (c + 1) % l] as i64 + spins[((r + 1) % l) * l + c] as i64)
                    })
                    .sum();
                -cfg.coupling * bonds as f64 - field * total as f64
            }
        };
        samples.push(sample);
    }
    let count = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / count;
    Ok(match cfg.observable {
        Observable::Magnetization => mean,
        Observable::HeatCapacity => {
            let var = samples.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / count;
            var / (n as f64 * temperature * temperature)
        }
    })
}

type CacheKey = ([u64; 5], [u64; 2], RngState);

fn measurement_cache() -> &'static Mutex<HashMap<CacheKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Ising measurement memoized per configuration, control point and stream.
fn ising_cached(cfg: &IsingConfig, x: &[f64], seed: RngState) -> Result<f64> {
    let key = (cfg.key(), [x[0].to_bits(), x[1].to_bits()], seed);
    if let Some(v) = measurement_cache().lock().expect("cache poisoned").get(&key) {
        return Ok(*v);
    }
    let v = ising_measure(cfg, x[0], x[1], &mut seed.rng())?;
    measurement_cache().lock().expect("cache poisoned").insert(key, v);
    Ok(v)
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Formula(fn(&[f64]) -> f64),
    Ising(IsingConfig),
}

impl PartialEq for Kind {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Kind::Formula(a), Kind::Formula(b)) => *a as usize == *b as usize,
            (Kind::Ising(a), Kind::Ising(b)) => a == b,
            _ => false,
        }
    }
}

/// One benchmark: domain, default grid, ground truth and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionSpec {
    pub name: String,
    pub bounds: Vec<Bounds>,
    pub resolution: Vec<usize>,
    /// Additive observation noise in raw target units (zero for Ising).
    pub noise_sigma: f64,
    pub latency: Latency,
    kind: Kind,
}

fn discontinuous_1(x: &[f64]) -> f64 {
    let x = x[0];
    if x < 1.0 {
        2.0 * x.powf(1.5)
    } else {
        0.5 + x * x
    }
}

fn discontinuous_2(x: &[f64]) -> f64 {
    let x = x[0];
    (2.0 * x).sin() + if x < 5.0 { 0.0 } else { 2.0 }
}

fn discontinuous_3(x: &[f64]) -> f64 {
    let x = x[0];
    if x < 1.0 {
        x.powi(3)
    } else if x < 2.0 {
        x - 0.5
    } else {
        (x - 2.0).exp()
    }
}

fn nonstationary_1(x: &[f64]) -> f64 {
    let x = x[0];
    if x < 10.0 {
        (PI * x / 5.0).sin() + 0.2 * (4.0 * PI * x / 5.0).cos()
    } else {
        x / 10.0 - 1.0
    }
}

fn nonstationary_2(x: &[f64]) -> f64 {
    let x = x[0];
    if (4.0..=6.0).contains(&x) {
        (25.0 * x).sin() * (-2.0 * (x - 4.0)).exp()
    } else {
        (2.0 * x).sin()
    }
}

fn nonstationary_3(x: &[f64]) -> f64 {
    let x = x[0];
    let spikes: f64 = [(2.2, 2.5), (5.7, -2.0), (8.3, 3.0)]
        .iter()
        .map(|(c, a)| a * (-(x - c).powi(2) / (2.0 * 0.08 * 0.08)).exp())
        .sum();
    (2.0 * x).sin() + spikes
}

fn phases2d(p: &[f64]) -> f64 {
    let (x, y) = (p[0], p[1]);
    let boundary = 0.5 + 0.2 * (2.0 * PI * x).sin();
    if y > boundary {
        1.0 + 0.3 * x
    } else {
        -1.0 + 0.4 * y
    }
}

/// Angles of the rays through the origin, in degrees.
pub const RAY_ANGLES: [f64; 4] = [15.0, 30.0, 50.0, 75.0];
const RAY_WIDTH: f64 = 0.02;

fn rays2d(p: &[f64]) -> f64 {
    RAY_ANGLES
        .iter()
        .map(|deg| {
            let phi = deg.to_radians();
            let d = p[0] * phi.sin() - p[1] * phi.cos();
            (-d * d / (2.0 * RAY_WIDTH * RAY_WIDTH)).exp()
        })
        .sum()
}

impl TestFunctionSpec {
    fn formula(name: &str, bounds: Vec<Bounds>, resolution: Vec<usize>, f: fn(&[f64]) -> f64) -> Self {
        let mut spec = TestFunctionSpec {
            name: name.to_string(),
            bounds,
            resolution,
            noise_sigma: 0.0,
            latency: Latency::Instant,
            kind: Kind::Formula(f),
        };
        spec.noise_sigma = spec.range_noise().expect("built-in grids are valid");
        spec
    }

    /// A user-supplied closed-form benchmark with an explicit noise level.
    pub fn custom(
        name: &str,
        bounds: Vec<Bounds>,
        resolution: Vec<usize>,
        noise_sigma: f64,
        f: fn(&[f64]) -> f64,
    ) -> Result<Self> {
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("noise sigma {noise_sigma} must be finite and >= 0")));
        }
        let spec = TestFunctionSpec {
            name: name.to_string(),
            bounds,
            resolution,
            noise_sigma,
            latency: Latency::Instant,
            kind: Kind::Formula(f),
        };
        spec.grid()?;
        Ok(spec)
    }

    fn ising(name: &str, observable: Observable) -> Self {
        TestFunctionSpec {
            name: name.to_string(),
            bounds: vec![(1.5, 3.5), (-1.0, 1.0)],
            resolution: vec![30, 30],
            noise_sigma: 0.0,
            latency: Latency::Simulated,
            kind: Kind::Ising(IsingConfig::new(observable)),
        }
    }

    fn range_noise(&self) -> Result<f64> {
        let Kind::Formula(f) = self.kind else { return Ok(0.0) };
        let grid = self.grid()?;
        let values = grid.points().iter().map(|p| f(p));
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Ok(NOISE_FRACTION * (hi - lo))
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn grid(&self) -> Result<EvaluationGrid> {
        EvaluationGrid::new(&self.bounds, &self.resolution)
    }

    /// The same function on a different grid; the noise level is recomputed
    /// from the range over the new grid.
    pub fn with_resolution(&self, resolution: &[usize]) -> Result<Self> {
        if resolution.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: resolution.len(),
            });
        }
        let mut spec = self.clone();
        spec.resolution = resolution.to_vec();
        spec.noise_sigma = spec.range_noise()?;
        Ok(spec)
    }

    pub fn ising_config(&self) -> Option<&IsingConfig> {
        match &self.kind {
            Kind::Ising(cfg) => Some(cfg),
            Kind::Formula(_) => None,
        }
    }

    /// Replaces the simulation settings of an Ising benchmark.
    pub fn with_ising_config(&self, cfg: IsingConfig) -> Result<Self> {
        cfg.validate()?;
        match self.kind {
            Kind::Ising(old) if old.observable == cfg.observable => {
                let mut spec = self.clone();
                spec.kind = Kind::Ising(cfg);
                Ok(spec)
            }
            _ => Err(Error::InvalidConfig(format!(
                "{} does not accept this Ising configuration",
                self.name
            ))),
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        if !within_bounds(&self.bounds, x) {
            return Err(Error::OutOfBounds(x.to_vec()));
        }
        Ok(())
    }

    /// Noiseless ground truth. For Ising this is a measurement on a stream
    /// fixed by the control point, so repeated calls agree.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        match &self.kind {
            Kind::Formula(f) => Ok(f(x)),
            Kind::Ising(cfg) => {
                let index = x[0].to_bits().rotate_left(32) ^ x[1].to_bits();
                ising_cached(cfg, x, RngState::for_role(ISING_TRUTH_SEED, "ising-truth", index))
            }
        }
    }

    /// A measurement at `x` drawn from the stream `seed`: ground truth plus
    /// `N(0, noise_sigma^2)` noise, or an independent Ising simulation.
    pub fn observe(&self, x: &[f64], seed: RngState) -> Result<f64> {
        self.check(x)?;
        match &self.kind {
            Kind::Formula(f) => {
                let eps: f64 = seed.rng().sample(StandardNormal);
                Ok(f(x) + self.noise_sigma * eps)
            }
            Kind::Ising(cfg) => ising_cached(cfg, x, seed),
        }
    }

    /// Ground truth at every grid point.
    pub fn ground_truth(&self, grid: &EvaluationGrid) -> Result<Vec<f64>> {
        grid.points().par_iter().map(|p| self.evaluate(p)).collect()
    }
}

/// All benchmarks, in a fixed order.
pub fn catalog() -> Vec<TestFunctionSpec> {
    let unit = vec![(0.0, 1.0), (0.0, 1.0)];
    vec![
        TestFunctionSpec::formula("discontinuous-1", vec![(0.0, 2.0)], vec![200], discontinuous_1),
        TestFunctionSpec::formula("discontinuous-2", vec![(0.0, 10.0)], vec![200], discontinuous_2),
        TestFunctionSpec::formula("discontinuous-3", vec![(0.0, 3.0)], vec![200], discontinuous_3),
        TestFunctionSpec::formula("nonstationary-1", vec![(0.0, 20.0)], vec![200], nonstationary_1),
        TestFunctionSpec::formula("nonstationary-2", vec![(0.0, 10.0)], vec![200], nonstationary_2),
        TestFunctionSpec::formula("nonstationary-3", vec![(0.0, 10.0)], vec![200], nonstationary_3),
        TestFunctionSpec::formula("phases2d", unit.clone(), vec![50, 50], phases2d),
        TestFunctionSpec::formula("rays2d", unit, vec![50, 50], rays2d),
        TestFunctionSpec::ising("ising2d-magnetization", Observable::Magnetization),
        TestFunctionSpec::ising("ising2d-heatcapacity", Observable::HeatCapacity),
    ]
}

pub fn lookup(name: &str) -> Result<TestFunctionSpec> {
    catalog()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownFunction(name.to_string()))
}
