//! Aggregation of finished run directories into tidy CSV tables and
//! FBNN-versus-GP win tallies.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::persist::{CellStatus, Manifest, MANIFEST_FILE, STEPS_FILE};
use super::{architecture_name, IsingSettings, ResolvedCell, SurrogateKind};
use crate::{Error, Result};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CURVES_FILE: &str = "learning_curves.csv";
pub const TALLY_FILE: &str = "tally.txt";

/// Number of trailing steps averaged for the late-stage NLPD.
pub const LATE_STEPS: usize = 10;

/// Per-step metrics of one run, read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub dir: PathBuf,
    pub cell: ResolvedCell,
    pub ok: bool,
    pub mse: Vec<f64>,
    pub nlpd: Vec<f64>,
}

impl RunData {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::read(dir)?;
        let path = dir.join(STEPS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
        let col = |name: &str| {
            header.iter().position(|h| *h == name).ok_or_else(|| Error::Schema {
                path: format!("{}:{name}", path.display()),
                message: "missing column".into(),
            })
        };
        let (mse_col, nlpd_col) = (col("mse")?, col("nlpd")?);
        let (mut mse, mut nlpd) = (Vec::new(), Vec::new());
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            let parse = |c: usize| {
                fields.get(c).and_then(|f| f.parse::<f64>().ok()).ok_or_else(|| Error::Schema {
                    path: format!("{}:{}", path.display(), row + 2),
                    message: format!("unreadable row {line:?}"),
                })
            };
            mse.push(parse(mse_col)?);
            nlpd.push(parse(nlpd_col)?);
        }
        Ok(RunData {
            dir: dir.to_path_buf(),
            ok: manifest.status == CellStatus::Ok,
            cell: manifest.cell,
            mse,
            nlpd,
        })
    }
}

/// Run directories named by `paths`: each path is either a run directory or
/// a directory whose immediate subdirectories are runs.
pub fn collect_runs(paths: &[PathBuf]) -> Result<Vec<RunData>> {
    let mut dirs = Vec::new();
    for p in paths {
        if p.join(MANIFEST_FILE).is_file() {
            dirs.push(p.clone());
            continue;
        }
        let entries = fs::read_dir(p).map_err(|e| Error::io(p, e))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join(MANIFEST_FILE).is_file())
            .collect();
        if found.is_empty() {
            return Err(Error::InvalidData(format!("no run directories under {}", p.display())));
        }
        found.sort();
        dirs.extend(found);
    }
    dirs.dedup();
    dirs.iter().map(|d| RunData::load(d)).collect()
}

/// Aggregate of all runs sharing a function and surrogate variant.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub function: String,
    pub label: String,
    pub surrogate: SurrogateKind,
    pub architecture: Option<String>,
    pub noise_prior: String,
    pub runs: usize,
    pub failed: usize,
    pub steps: usize,
    /// Means over successful runs; `None` when there are none.
    pub final_mse: Option<f64>,
    pub final_nlpd: Option<f64>,
    pub late_nlpd: Option<f64>,
    /// Per-step means, `None` where no successful run reached the step.
    pub curve_mse: Vec<Option<f64>>,
    pub curve_nlpd: Vec<Option<f64>>,
}

/// Functions won by one FBNN variant against the GP baseline on one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Tally {
    pub metric: &'static str,
    pub variant: String,
    pub baseline: String,
    pub fbnn_wins: usize,
    pub baseline_wins: usize,
    /// Functions where both sides have a value.
    pub compared: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub groups: Vec<GroupSummary>,
    pub tallies: Vec<Tally>,
}

/// Mean taken relative to the first value, so identical inputs average to
/// exactly themselves.
fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    let first = *v.first()?;
    Some(first + v.iter().map(|x| x - first).sum::<f64>() / v.len() as f64)
}

fn grid_signature(cell: &ResolvedCell) -> (Vec<usize>, Option<IsingSettings>) {
    (cell.resolution.clone(), cell.ising)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Report {
    pub fn from_runs(runs: &[RunData]) -> Result<Self> {
        let mut grids: BTreeMap<&str, &RunData> = BTreeMap::new();
        for r in runs {
            let first = *grids.entry(&r.cell.function).or_insert(r);
            if grid_signature(&first.cell) != grid_signature(&r.cell) {
                return Err(Error::IncompatibleRuns(format!(
                    "{} was run on different grids in {} and {}",
                    r.cell.function,
                    first.dir.display(),
                    r.dir.display()
                )));
            }
        }

        let mut by_group: BTreeMap<(String, String), Vec<&RunData>> = BTreeMap::new();
        for r in runs {
            by_group.entry((r.cell.function.clone(), r.cell.label())).or_default().push(r);
        }
        let groups: Vec<GroupSummary> = by_group
            .into_iter()
            .map(|((function, label), members)| {
                let cell = &members[0].cell;
                let ok: Vec<&&RunData> = members.iter().filter(|r| r.ok).collect();
                let steps = members.iter().map(|r| r.cell.steps).max().unwrap_or(0);
                let at = |pick: fn(&RunData) -> &Vec<f64>, k: usize| mean(ok.iter().filter_map(|r| pick(r).get(k).copied()));
                GroupSummary {
                    function,
                    label,
                    surrogate: cell.surrogate,
                    architecture: cell.hidden.as_deref().map(architecture_name),
                    noise_prior: cell.noise_prior.to_string(),
                    runs: ok.len(),
                    failed: members.len() - ok.len(),
                    steps,
                    final_mse: mean(ok.iter().filter_map(|r| r.mse.last().copied())),
                    final_nlpd: mean(ok.iter().filter_map(|r| r.nlpd.last().copied())),
                    late_nlpd: mean(ok.iter().filter_map(|r| {
                        let tail = &r.nlpd[r.nlpd.len().saturating_sub(LATE_STEPS)..];
                        mean(tail.iter().copied())
                    })),
                    curve_mse: (0..steps).map(|k| at(|r| &r.mse, k)).collect(),
                    curve_nlpd: (0..steps).map(|k| at(|r| &r.nlpd, k)).collect(),
                }
            })
            .collect();
        let tallies = tally(&groups);
        Ok(Report { groups, tallies })
    }

    pub fn load(paths: &[PathBuf]) -> Result<Self> {
        Report::from_runs(&collect_runs(paths)?)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "function,surrogate,architecture,noise_prior,runs,failed,steps,final_mse_mean,final_nlpd_mean,last10_nlpd_mean\n",
        );
        for g in &self.groups {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                g.function,
                g.label,
                g.architecture.as_deref().unwrap_or(""),
                g.noise_prior,
                g.runs,
                g.failed,
                g.steps,
                fmt_opt(g.final_mse),
                fmt_opt(g.final_nlpd),
                fmt_opt(g.late_nlpd)
            );
        }
        out
    }

    /// One row per (function, surrogate variant, step).
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("function,surrogate,step,mse_mean,nlpd_mean\n");
        for g in &self.groups {
            for (k, (m, n)) in g.curve_mse.iter().zip(&g.curve_nlpd).enumerate() {
                let _ = writeln!(out, "{},{},{},{},{}", g.function, g.label, k + 1, fmt_opt(*m), fmt_opt(*n));
            }
        }
        out
    }

    /// Lines such as `mse: fbnn 5 / gp 1`. With several FBNN variants the
    /// variant is named in brackets after the metric.
    pub fn tally_text(&self) -> String {
        let variants: std::collections::BTreeSet<&str> = self.tallies.iter().map(|t| t.variant.as_str()).collect();
        let mut out = String::new();
        for t in &self.tallies {
            let metric = if variants.len() > 1 {
                format!("{} [{}]", t.metric, t.variant)
            } else {
                t.metric.to_string()
            };
            let _ = writeln!(out, "{metric}: fbnn {} / {} {}", t.fbnn_wins, t.baseline, t.baseline_wins);
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            (SUMMARY_FILE, self.summary_csv()),
            (CURVES_FILE, self.curves_csv()),
            (TALLY_FILE, self.tally_text()),
        ] {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Win counts per FBNN variant on final MSE, final NLPD and the mean NLPD of
/// the last [`LATE_STEPS`] steps. The baseline is the NUTS GP, or the MAP GP
/// when no NUTS GP runs are present. Ties count for neither side.
fn tally(groups: &[GroupSummary]) -> Vec<Tally> {
    let has = |kind| groups.iter().any(|g| g.surrogate == kind);
    let baseline = if has(SurrogateKind::Gp) {
        SurrogateKind::Gp
    } else if has(SurrogateKind::GpMap) {
        SurrogateKind::GpMap
    } else {
        return Vec::new();
    };
    let base: BTreeMap<&str, &GroupSummary> = groups
        .iter()
        .filter(|g| g.surrogate == baseline)
        .map(|g| (g.function.as_str(), g))
        .collect();
    let mut variants: Vec<&str> = groups
        .iter()
        .filter(|g| g.surrogate == SurrogateKind::Fbnn)
        .map(|g| g.label.as_str())
        .collect();
    variants.sort_unstable();
    variants.dedup();

    let metrics: [(&'static str, fn(&GroupSummary) -> Option<f64>); 3] = [
        ("mse", |g| g.final_mse),
        ("nlpd", |g| g.final_nlpd),
        ("nlpd-last10", |g| g.late_nlpd),
    ];
    let mut out = Vec::new();
    for variant in variants {
        for (metric, value) in metrics {
            let mut t = Tally {
                metric,
                variant: variant.to_string(),
                baseline: baseline.as_str().to_string(),
                fbnn_wins: 0,
                baseline_wins: 0,
                compared: 0,
            };
            for g in groups.iter().filter(|g| g.label == variant) {
                let Some(b) = base.get(g.function.as_str()) else { continue };
                let (Some(f), Some(b)) = (value(g), value(b)) else { continue };
                t.compared += 1;
                if f < b {
                    t.fbnn_wins += 1;
                } else if b < f {
                    t.baseline_wins += 1;
                }
            }
            out.push(t);
        }
    }
    out
}
