//! The acquisition loop: fit, predict on the whole grid, measure where the
//! surrogate is least certain, repeat.
//!
//! ```no_run
//! use activebayes::active::{run_campaign, CampaignConfig, SurrogateConfig};
//! use activebayes::gp::GpConfig;
//! use activebayes::testbed;
//!
//! let spec = testbed::lookup("discontinuous-1").unwrap();
//! let cfg = CampaignConfig::new(20, SurrogateConfig::Gp(GpConfig::default()));
//! let record = run_campaign(&spec, &cfg, 1, &mut |step| println!("{step:?}")).unwrap();
//! println!("final MSE {}", record.steps.last().unwrap().mse);
//! ```

use std::time::Instant;

use rand::seq::index;

use crate::bnn::{self, BnnConfig, BnnPosterior};
use crate::data::Dataset;
use crate::gp::{self, GpConfig, GpPosterior};
use crate::grid::{linspace, EvaluationGrid};
use crate::metrics;
use crate::predictive::{DrawPredictions, PredictiveSummary, UncertaintyRule};
use crate::rng::RngState;
use crate::sampler::SamplerSummary;
use crate::testbed::TestFunctionSpec;
use crate::{Error, Result};

/// Size of the random initial design for inputs of two or more dimensions.
pub const INITIAL_POINTS_2D: usize = 10;
/// Size of the evenly spaced initial design in one dimension.
pub const INITIAL_POINTS_1D: usize = 4;

/// Which grid points may still be selected, and the selection history.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionState {
    mask: Vec<bool>,
    measured: Vec<usize>,
    allow_remeasure: bool,
}

impl AcquisitionState {
    pub fn new(grid_len: usize, allow_remeasure: bool) -> Self {
        AcquisitionState {
            mask: vec![true; grid_len],
            measured: Vec::new(),
            allow_remeasure,
        }
    }

    pub fn is_candidate(&self, index: usize) -> bool {
        self.mask.get(index).copied().unwrap_or(false)
    }

    pub fn candidates(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Indices in the order they were measured.
    pub fn measured(&self) -> &[usize] {
        &self.measured
    }

    /// Times `index` has been measured so far.
    pub fn times_measured(&self, index: usize) -> usize {
        self.measured.iter().filter(|&&m| m == index).count()
    }

    pub fn mark_measured(&mut self, index: usize) -> Result<()> {
        if !self.is_candidate(index) {
            return Err(Error::InvalidData(format!("grid index {index} is not a candidate")));
        }
        self.measured.push(index);
        if !self.allow_remeasure {
            self.mask[index] = false;
        }
        Ok(())
    }
}

/// The candidate with the largest uncertainty; ties go to the lowest index.
/// NaN uncertainties are never selected.
pub fn select_next(summary: &PredictiveSummary, state: &AcquisitionState) -> Result<usize> {
    if summary.uncertainty.len() != state.mask.len() {
        return Err(Error::DimensionMismatch {
            expected: state.mask.len(),
            actual: summary.uncertainty.len(),
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, &u) in summary.uncertainty.iter().enumerate() {
        if !state.mask[i] || u.is_nan() {
            continue;
        }
        if best.map_or(true, |(_, b)| u > b) {
            best = Some((i, u));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::CandidatesExhausted)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateConfig {
    Fbnn(BnnConfig),
    Gp(GpConfig),
}

#[derive(Debug, Clone)]
pub enum Posterior {
    Fbnn(BnnPosterior),
    Gp(GpPosterior),
}

impl Posterior {
    pub fn draw_predictions(&self, points: &[Vec<f64>]) -> Result<DrawPredictions> {
        match self {
            Posterior::Fbnn(p) => p.draw_predictions(points),
            Posterior::Gp(p) => p.draw_predictions(points),
        }
    }

    pub fn uncertainty_rule(&self) -> UncertaintyRule {
        match self {
            Posterior::Fbnn(_) => UncertaintyRule::MeansPlusNoise,
            Posterior::Gp(_) => UncertaintyRule::LatentPlusSpread,
        }
    }

    pub fn predict(&self, points: &[Vec<f64>]) -> Result<PredictiveSummary> {
        Ok(self.draw_predictions(points)?.summarize(self.uncertainty_rule()))
    }

    pub fn sampler_summary(&self) -> Option<&SamplerSummary> {
        match self {
            Posterior::Fbnn(p) => p.sampler_summary(),
            Posterior::Gp(p) => p.sampler_summary(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Posterior::Fbnn(p) => p.len(),
            Posterior::Gp(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn fit_surrogate(cfg: &SurrogateConfig, data: &Dataset, seed: RngState) -> Result<Posterior> {
    match cfg {
        SurrogateConfig::Fbnn(c) => bnn::fit(data, c, seed).map(Posterior::Fbnn),
        SurrogateConfig::Gp(c) => gp::fit(data, c, seed).map(Posterior::Gp),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    /// Number of acquisitions after the initial design.
    pub steps: usize,
    pub surrogate: SurrogateConfig,
    /// Keep measured points selectable.
    pub allow_remeasure: bool,
}

impl CampaignConfig {
    pub fn new(steps: usize, surrogate: SurrogateConfig) -> Self {
        CampaignConfig {
            steps,
            surrogate,
            allow_remeasure: false,
        }
    }
}

/// One acquisition. Selection fields come from the posterior before the new
/// point; `mse`, `nlpd` and `fit_seconds` describe the refit that includes it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub selected_index: usize,
    pub x: Vec<f64>,
    pub y_observed: f64,
    pub max_uncertainty: f64,
    pub mse: f64,
    pub nlpd: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub index: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub grid: EvaluationGrid,
    pub ground_truth: Vec<f64>,
    pub initial: Vec<Measurement>,
    /// Metrics of the fit on the initial design alone.
    pub initial_mse: f64,
    pub initial_nlpd: f64,
    pub steps: Vec<StepRecord>,
    pub final_prediction: PredictiveSummary,
    pub final_diagnostics: Option<SamplerSummary>,
}

/// Grid indices of the initial design: evenly spaced points snapped to the
/// grid in 1D, distinct uniformly random grid points otherwise.
pub fn initial_design(grid: &EvaluationGrid, seed: u64) -> Vec<usize> {
    if grid.dim() == 1 {
        let (lo, hi) = grid.bounds()[0];
        let mut picks: Vec<usize> = linspace(lo, hi, INITIAL_POINTS_1D)
            .into_iter()
            .map(|x| grid.nearest_index(&[x]))
            .collect();
        picks.dedup();
        picks
    } else {
        let mut rng = RngState::for_role(seed, "design", 0).rng();
        index::sample(&mut rng, grid.len(), INITIAL_POINTS_2D.min(grid.len())).into_vec()
    }
}

/// Stream for the `repeat`-th measurement of grid point `index`.
pub fn measurement_stream(seed: u64, index: usize, repeat: usize) -> RngState {
    RngState::for_role(seed, "measure", index as u64).child("repeat", repeat as u64)
}

/// Stream for the surrogate fit after `step` acquisitions (0 is the fit on
/// the initial design).
pub fn fit_stream(seed: u64, step: usize) -> RngState {
    RngState::for_role(seed, "fit", step as u64)
}

/// Predictive summary and NLPD/MSE of a posterior over the grid.
fn evaluate(post: &Posterior, grid: &EvaluationGrid, truth: &[f64]) -> Result<(PredictiveSummary, f64, f64)> {
    let preds = post.draw_predictions(grid.points())?;
    let summary = preds.summarize(post.uncertainty_rule());
    let mse = metrics::mse(&summary.mean, truth)?;
    let nlpd = metrics::nlpd(&preds, truth)?;
    Ok((summary, mse, nlpd))
}

/// Runs the acquisition loop for `cfg.steps` steps. `on_step` sees every
/// record as soon as it is complete, so callers can persist progress. A
/// failing fit is reported as [`Error::CampaignStep`] with its step (0 for
/// the initial fit).
pub fn run_campaign(
    spec: &TestFunctionSpec,
    cfg: &CampaignConfig,
    seed: u64,
    on_step: &mut dyn FnMut(&StepRecord),
) -> Result<RunRecord> {
    if cfg.steps == 0 {
        return Err(Error::InvalidConfig("a campaign needs at least one step".into()));
    }
    let grid = spec.grid()?;
    let truth = spec.ground_truth(&grid)?;
    let mut state = AcquisitionState::new(grid.len(), cfg.allow_remeasure);
    let at_step = |step: usize| move |e: Error| Error::CampaignStep { step, source: Box::new(e) };

    let mut initial = Vec::new();
    for index in initial_design(&grid, seed) {
        let x = grid.point(index).to_vec();
        let y = spec.observe(&x, measurement_stream(seed, index, 0))?;
        state.mark_measured(index)?;
        initial.push(Measurement { index, x, y });
    }
    let mut data = Dataset::new(
        grid.bounds().to_vec(),
        initial.iter().map(|m| m.x.clone()).collect(),
        initial.iter().map(|m| m.y).collect(),
    )?;

    let mut post = fit_surrogate(&cfg.surrogate, &data, fit_stream(seed, 0)).map_err(at_step(0))?;
    let (mut summary, initial_mse, initial_nlpd) = evaluate(&post, &grid, &truth).map_err(at_step(0))?;

    let mut steps = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let index = select_next(&summary, &state).map_err(at_step(step))?;
        let max_uncertainty = summary.uncertainty[index];
        let x = grid.point(index).to_vec();
        let y = spec.observe(&x, measurement_stream(seed, index, state.times_measured(index)))?;
        state.mark_measured(index)?;
        data.append(x.clone(), y)?;

        let started = Instant::now();
        post = fit_surrogate(&cfg.surrogate, &data, fit_stream(seed, step)).map_err(at_step(step))?;
        let fit_seconds = started.elapsed().as_secs_f64();
        let (next, mse, nlpd) = evaluate(&post, &grid, &truth).map_err(at_step(step))?;
        summary = next;

        let record = StepRecord {
            step,
            selected_index: index,
            x,
            y_observed: y,
            max_uncertainty,
            mse,
            nlpd,
            fit_seconds,
        };
        on_step(&record);
        steps.push(record);
    }

    Ok(RunRecord {
        grid,
        ground_truth: truth,
        initial,
        initial_mse,
        initial_nlpd,
        steps,
        final_prediction: summary,
        final_diagnostics: post.sampler_summary().cloned(),
    })
}
