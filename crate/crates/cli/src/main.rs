use std::path::{Path, PathBuf};
use std::process::ExitCode;

use activebayes::experiment::{self, report::Report, CellOutcome, Plan, PresetOverrides, SweepOutcome};
use activebayes::testbed::{self, Latency};
use clap::{Parser, Subcommand};

/// Active learning with fully Bayesian surrogates.
#[derive(Debug, Parser)]
#[command(name = "activebayes", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the benchmark catalog.
    List {
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run every cell of a sweep configuration or of a run manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Cells run at the same time (default: half the hardware threads).
        #[arg(long)]
        jobs: Option<usize>,
        /// Print the cells without running them.
        #[arg(long)]
        dry_run: bool,
        /// Output root, overriding the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Re-run cells that are already complete on disk.
        #[arg(long)]
        force: bool,
    },
    /// Run one of the built-in benchmark sweeps and summarize it.
    Bench {
        /// fig3, fig4, fig5a, fig5b or fig6.
        preset: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        dry_run: bool,
        /// Acquisition steps per campaign instead of the benchmark default.
        #[arg(long)]
        steps: Option<usize>,
        /// NUTS warmup iterations per fit.
        #[arg(long)]
        warmup: Option<usize>,
        /// NUTS draws kept per fit.
        #[arg(long)]
        samples: Option<usize>,
        /// Comma-separated seeds instead of 0,1,2.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        force: bool,
    },
    /// Aggregate run directories (or sweep roots) into summary tables.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Directory for summary.csv, learning_curves.csv and tally.txt.
        /// Without it the summary is printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const USAGE_ERROR: u8 = 2;

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get() / 2).max(1)
}

fn fail(err: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code)
}

fn list(json: bool) -> ExitCode {
    let catalog = testbed::catalog();
    if json {
        let rows: Vec<serde_json::Value> = catalog
            .iter()
            .map(|f| {
                serde_json::json!({
                    "name": f.name,
                    "dim": f.dim(),
                    "bounds": f.bounds,
                    "resolution": f.resolution,
                    "noise_sigma": f.noise_sigma,
                    "simulated": f.latency == Latency::Simulated,
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&rows).expect("catalog serializes"));
        return ExitCode::SUCCESS;
    }
    for f in &catalog {
        let grid: Vec<String> = f.resolution.iter().map(|r| r.to_string()).collect();
        let noise = match f.latency {
            Latency::Simulated => "Metropolis".to_string(),
            Latency::Instant => format!("{:.6}", f.noise_sigma),
        };
        println!("{} | {}D | {} | {}", f.name, f.dim(), grid.join("x"), noise);
    }
    ExitCode::SUCCESS
}

fn print_outcome(outcome: &SweepOutcome) {
    for (dir, o) in &outcome.cells {
        match o {
            CellOutcome::Completed => println!("ok       {}", dir.display()),
            CellOutcome::Skipped => println!("skipped  {}", dir.display()),
            CellOutcome::Failed { message, .. } => println!("FAILED   {}: {message}", dir.display()),
        }
    }
}

fn run_plan(plan: &Plan, jobs: Option<usize>, dry_run: bool, force: bool) -> Result<SweepOutcome, ExitCode> {
    if dry_run {
        print!("{}", plan.describe());
        return Err(ExitCode::SUCCESS);
    }
    let outcome = experiment::execute(plan, jobs.unwrap_or_else(default_jobs), force).map_err(|e| fail(e, USAGE_ERROR))?;
    print_outcome(&outcome);
    Ok(outcome)
}

fn finish(outcome: &SweepOutcome) -> ExitCode {
    match outcome.failures() {
        0 => ExitCode::SUCCESS,
        n => {
            eprintln!("{n} of {} cells failed", outcome.cells.len());
            ExitCode::from(1)
        }
    }
}

fn report(dirs: &[PathBuf], out: Option<&Path>) -> ExitCode {
    let report = match Report::load(dirs) {
        Ok(r) => r,
        Err(e) => return fail(e, USAGE_ERROR),
    };
    match out {
        Some(dir) => {
            if let Err(e) = report.write(dir) {
                return fail(e, USAGE_ERROR);
            }
            println!("wrote {}", dir.display());
        }
        None => print!("{}", report.summary_csv()),
    }
    print!("{}", report.tally_text());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List { json } => list(json),
        Command::Run {
            config,
            jobs,
            dry_run,
            out,
            force,
        } => {
            let plan = match experiment::load_plan(&config, out.as_deref()) {
                Ok(p) => p,
                Err(e) => return fail(e, USAGE_ERROR),
            };
            match run_plan(&plan, jobs, dry_run, force) {
                Ok(outcome) => finish(&outcome),
                Err(code) => code,
            }
        }
        Command::Bench {
            preset,
            out,
            jobs,
            dry_run,
            steps,
            warmup,
            samples,
            seeds,
            force,
        } => {
            let overrides = PresetOverrides {
                steps,
                warmup,
                samples,
                seeds,
                output_dir: out,
            };
            let plan = match experiment::preset(&preset, &overrides).and_then(|c| c.plan()) {
                Ok(p) => p,
                Err(e) => return fail(e, USAGE_ERROR),
            };
            let outcome = match run_plan(&plan, jobs, dry_run, force) {
                Ok(o) => o,
                Err(code) => return code,
            };
            let dirs: Vec<PathBuf> = outcome
                .dirs()
                .filter(|d| d.join(experiment::MANIFEST_FILE).is_file())
                .map(Path::to_path_buf)
                .collect();
            let code = report(&dirs, Some(&plan.output_dir));
            if code != ExitCode::SUCCESS {
                return code;
            }
            finish(&outcome)
        }
        Command::Report { dirs, out } => report(&dirs, out.as_deref()),
    }
}
