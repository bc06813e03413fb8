use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Plan, ResolvedCell, SCHEMA_VERSION};
use crate::active::{run_campaign, RunRecord, StepRecord};
use crate::sampler::SamplerSummary;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const STEPS_FILE: &str = "steps.csv";
pub const FINAL_FILE: &str = "final_prediction.csv";
pub const PROGRESS_FILE: &str = "progress.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPoint {
    pub index: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

/// Sampler health of the last fit. `max_rhat` is absent when it is not finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub chains: usize,
    pub draws_per_chain: usize,
    pub divergences: usize,
    pub mean_accept_stat: f64,
    pub max_rhat: Option<f64>,
}

impl From<&SamplerSummary> for Diagnostics {
    fn from(s: &SamplerSummary) -> Self {
        Diagnostics {
            chains: s.chains,
            draws_per_chain: s.draws_per_chain,
            divergences: s.divergences,
            mean_accept_stat: s.mean_accept_stat,
            max_rhat: s.max_rhat.is_finite().then_some(s.max_rhat),
        }
    }
}

/// Contents of `manifest.json`. The cell alone determines every number in
/// `steps.csv` and `final_prediction.csv`; timings are informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub software_version: String,
    pub cell: ResolvedCell,
    pub status: CellStatus,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub failed_step: Option<usize>,
    #[serde(default)]
    pub initial_design: Vec<InitialPoint>,
    #[serde(default)]
    pub initial_mse: Option<f64>,
    #[serde(default)]
    pub initial_nlpd: Option<f64>,
    pub completed_steps: usize,
    pub wall_seconds: f64,
    #[serde(default)]
    pub fit_seconds: Vec<f64>,
    #[serde(default)]
    pub diagnostics: Option<Diagnostics>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let m: Manifest = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema {
                path: "schema_version".into(),
                message: format!("expected {SCHEMA_VERSION}, got {}", m.schema_version),
            });
        }
        Ok(m)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Manifest::from_json(&text)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Completed,
    /// A complete run with the same cell was already on disk.
    Skipped,
    Failed { step: Option<usize>, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub cells: Vec<(PathBuf, CellOutcome)>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|(_, o)| matches!(o, CellOutcome::Failed { .. })).count()
    }

    pub fn dirs(&self) -> impl Iterator<Item = &Path> {
        self.cells.iter().map(|(d, _)| d.as_path())
    }
}

fn steps_header(dim: usize) -> String {
    let xs: String = (0..dim).map(|d| format!("x{d},")).collect();
    format!("step,selected_index,{xs}y_observed,mse,nlpd,max_uncertainty,fit_seconds\n")
}

fn steps_row(s: &StepRecord, record_timings: bool) -> String {
    let mut row = format!("{},{},", s.step, s.selected_index);
    for x in &s.x {
        let _ = write!(row, "{x},");
    }
    let _ = write!(row, "{},{},{},{},", s.y_observed, s.mse, s.nlpd, s.max_uncertainty);
    if record_timings {
        let _ = write!(row, "{}", s.fit_seconds);
    }
    row.push('\n');
    row
}

fn final_csv(record: &RunRecord) -> String {
    let dim = record.grid.dim();
    let mut out: String = (0..dim).map(|d| format!("x{d},")).collect();
    out.push_str("mean,uncertainty,ground_truth\n");
    let p = &record.final_prediction;
    for (i, x) in record.grid.points().iter().enumerate() {
        for v in x {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{},{},{}", p.mean[i], p.uncertainty[i], record.ground_truth[i]);
    }
    out
}

/// Row-at-a-time writer for `steps.csv`, flushed after every step so an
/// interrupted run keeps its progress.
struct StepsWriter {
    out: BufWriter<File>,
    path: PathBuf,
    error: Option<Error>,
}

impl StepsWriter {
    fn create(path: PathBuf, dim: usize) -> Result<Self> {
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = StepsWriter {
            out: BufWriter::new(file),
            path,
            error: None,
        };
        w.put(&steps_header(dim));
        w.error.take().map_or(Ok(w), Err)
    }

    fn put(&mut self, text: &str) {
        if self.error.is_none() {
            if let Err(e) = self.out.write_all(text.as_bytes()).and_then(|_| self.out.flush()) {
                self.error = Some(Error::io(&self.path, e));
            }
        }
    }
}

fn software_version() -> String {
    format!("activebayes {}", env!("CARGO_PKG_VERSION"))
}

/// Runs one cell into `dir`, writing all of its files. A campaign failure is
/// recorded in the manifest and returned as [`CellOutcome::Failed`]; only
/// I/O failures are errors.
pub fn run_cell(cell: &ResolvedCell, dir: &Path) -> Result<CellOutcome> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let started = Instant::now();
    let mut manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        software_version: software_version(),
        cell: cell.clone(),
        status: CellStatus::Failed,
        error: None,
        failed_step: None,
        initial_design: Vec::new(),
        initial_mse: None,
        initial_nlpd: None,
        completed_steps: 0,
        wall_seconds: 0.0,
        fit_seconds: Vec::new(),
        diagnostics: None,
    };
    let spec = cell.test_function()?;
    let mut writer = StepsWriter::create(dir.join(STEPS_FILE), spec.dim())?;
    let _ = fs::remove_file(dir.join(FINAL_FILE));

    let mut fit_seconds = Vec::new();
    let result = run_campaign(&spec, &cell.campaign(), cell.seed, &mut |s| {
        writer.put(&steps_row(s, cell.record_timings));
        fit_seconds.push(s.fit_seconds);
    });
    if let Some(e) = writer.error.take() {
        return Err(e);
    }
    manifest.completed_steps = fit_seconds.len();
    manifest.fit_seconds = fit_seconds;

    let outcome = match result {
        Ok(record) => {
            let path = dir.join(FINAL_FILE);
            fs::write(&path, final_csv(&record)).map_err(|e| Error::io(&path, e))?;
            manifest.status = CellStatus::Ok;
            manifest.initial_design = record
                .initial
                .iter()
                .map(|m| InitialPoint {
                    index: m.index,
                    x: m.x.clone(),
                    y: m.y,
                })
                .collect();
            manifest.initial_mse = Some(record.initial_mse);
            manifest.initial_nlpd = Some(record.initial_nlpd);
            manifest.diagnostics = record.final_diagnostics.as_ref().map(Diagnostics::from);
            CellOutcome::Completed
        }
        Err(e) => {
            let step = match &e {
                Error::CampaignStep { step, .. } => Some(*step),
                _ => None,
            };
            manifest.error = Some(e.to_string());
            manifest.failed_step = step;
            CellOutcome::Failed {
                step,
                message: e.to_string(),
            }
        }
    };
    manifest.wall_seconds = started.elapsed().as_secs_f64();
    manifest.write(dir)?;
    Ok(outcome)
}

fn already_done(cell: &ResolvedCell, dir: &Path) -> bool {
    dir.join(FINAL_FILE).is_file()
        && Manifest::read(dir).is_ok_and(|m| m.status == CellStatus::Ok && &m.cell == cell)
}

struct ProgressLog(Mutex<File>);

impl ProgressLog {
    fn line(&self, text: &str) {
        let mut f = self.0.lock().unwrap_or_else(|p| p.into_inner());
        let _ = writeln!(f, "{text}");
    }
}

/// Runs every cell of `plan` with at most `jobs` cells at a time. Cells that
/// are already complete on disk are skipped unless `force` is set. Errors
/// only if the output directory cannot be prepared; campaign failures are
/// reported per cell.
pub fn execute(plan: &Plan, jobs: usize, force: bool) -> Result<SweepOutcome> {
    let root = &plan.output_dir;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let log_path = root.join(PROGRESS_FILE);
    let log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let log = ProgressLog(Mutex::new(log));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let cells = pool.install(|| {
        plan.cells
            .par_iter()
            .with_max_len(1)
            .map(|cell| {
                let name = cell.dir_name();
                let dir = root.join(&name);
                if !force && already_done(cell, &dir) {
                    log.line(&format!("skip {name}"));
                    return (dir, CellOutcome::Skipped);
                }
                log.line(&format!("start {name}"));
                let started = Instant::now();
                let outcome = run_cell(cell, &dir).unwrap_or_else(|e| CellOutcome::Failed {
                    step: None,
                    message: e.to_string(),
                });
                let secs = started.elapsed().as_secs_f64();
                match &outcome {
                    CellOutcome::Failed { message, .. } => log.line(&format!("failed {name} after {secs:.1}s: {message}")),
                    _ => log.line(&format!("done {name} in {secs:.1}s")),
                }
                (dir, outcome)
            })
            .collect()
    });
    Ok(SweepOutcome { cells })
}

#[cfg(test)]
pub(super) fn format_row(s: &StepRecord, record_timings: bool) -> String {
    steps_row(s, record_timings)
}
