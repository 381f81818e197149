use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cmaes_cli::{bench, fuzz, plot, runner};

#[derive(Parser)]
#[command(name = "cmaes-cli", about = "CMA-ES benchmark and testing harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ProblemArgs {
    /// Benchmark function name.
    #[arg(long = "fn")]
    function: String,

    /// Problem dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,

    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Population size (defaults to 4 + floor(3 ln d)).
    #[arg(long)]
    popsize: Option<usize>,

    /// Initial step size.
    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,

    /// Initial mean: one value (broadcast) or d comma-separated values.
    #[arg(long, value_delimiter = ',')]
    mean0: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization and emit a per-generation CSV record.
    Run {
        #[command(flatten)]
        problem: ProblemArgs,

        /// Generations (plain runs) or total evaluations (--restart ipop).
        #[arg(long, default_value_t = 100)]
        budget: u64,

        /// Box bounds as d comma-separated lo:hi pairs.
        #[arg(long, value_delimiter = ',')]
        bounds: Vec<String>,

        /// Discretization steps (0 = continuous); enables the
        /// mixed-integer optimizer.
        #[arg(long, value_delimiter = ',')]
        steps: Vec<f64>,

        /// Enable learning-rate adaptation.
        #[arg(long)]
        lr_adapt: bool,

        /// Restart strategy; only "ipop" is available.
        #[arg(long)]
        restart: Option<String>,

        /// Write the optimizer state here after the run.
        #[arg(long)]
        save_state: Option<PathBuf>,

        /// Resume from a previously saved state file.
        #[arg(long)]
        resume_state: Option<PathBuf>,

        /// CSV output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the current build against a stored benchmark baseline.
    Bench {
        /// Baseline JSON path.
        #[arg(long, default_value = "bench-baseline.json")]
        baseline: PathBuf,

        /// Directory for the text + SVG report.
        #[arg(long)]
        out: Option<PathBuf>,

        /// Cripple covariance learning (c_1 = c_mu = 0) to verify the gate
        /// catches regressions.
        #[arg(long, hide = true)]
        sabotage: bool,
    },
    /// Record a fresh benchmark baseline for the default suite.
    RecordBaseline {
        /// Baseline JSON path.
        #[arg(long, default_value = "bench-baseline.json")]
        baseline: PathBuf,
    },
    /// Stress the optimizer with randomized and malformed inputs.
    Fuzz {
        #[arg(long, default_value_t = 10_000)]
        iterations: u64,

        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render 2-D trajectory frames and an animated SVG.
    Plot {
        #[command(flatten)]
        problem: ProblemArgs,

        /// Generations to render.
        #[arg(long, default_value_t = 30)]
        budget: u64,

        /// Plot window half-width around the origin.
        #[arg(long, default_value_t = 4.0)]
        window: f64,

        /// Output directory for the SVG files.
        #[arg(long, default_value = "trajectory")]
        out: PathBuf,
    },
}

fn parse_bounds(raw: &[String]) -> Result<Option<Vec<(f64, f64)>>> {
    if raw.is_empty() {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(raw.len());
    for item in raw {
        let (lo, hi) = item
            .split_once(':')
            .with_context(|| format!("bound '{item}' is not of the form lo:hi"))?;
        let parse = |s: &str| -> Result<f64> {
            match s {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" => Ok(f64::INFINITY),
                _ => s.parse().with_context(|| format!("bad bound value '{s}'")),
            }
        };
        out.push((parse(lo)?, parse(hi)?));
    }
    Ok(Some(out))
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(2);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            problem,
            budget,
            bounds,
            steps,
            lr_adapt,
            restart,
            save_state,
            resume_state,
            out,
        } => {
            let restart_ipop = match restart.as_deref() {
                None => false,
                Some("ipop") => true,
                Some(other) => bail!("unknown restart strategy '{other}'; available: ipop"),
            };
            let config = runner::RunConfig {
                function: problem.function,
                dim: problem.dim,
                seed: problem.seed,
                budget,
                popsize: problem.popsize,
                sigma0: problem.sigma0,
                mean0: problem.mean0,
                bounds: parse_bounds(&bounds)?,
                steps: if steps.is_empty() { None } else { Some(steps) },
                lr_adapt,
                restart_ipop,
                save_state,
                resume_state,
                hyperparams: None,
            };
            let record = runner::run(&config)?;
            match out {
                Some(path) => {
                    let mut file = std::fs::File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    runner::write_csv(&record, config.dim, &mut file)?;
                }
                None => {
                    let stdout = std::io::stdout();
                    runner::write_csv(&record, config.dim, &mut stdout.lock())?;
                }
            }
            eprintln!(
                "best value {:.6e} after {} evaluations{}",
                record.best_value,
                record.evaluations,
                record
                    .termination
                    .as_deref()
                    .map(|t| format!(" (stopped: {t})"))
                    .unwrap_or_default()
            );
        }
        Command::Bench {
            baseline,
            out,
            sabotage,
        } => {
            let suite = bench::default_suite();
            let base = bench::load_baseline(&baseline)?;
            let hp = sabotage.then(|| bench::sabotaged_hyperparams(2));
            let report = bench::quick_benchmark(&suite, &base, hp.as_ref())?;
            print!("{}", report.text());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("bench-report.txt"), report.text())?;
                std::fs::write(dir.join("bench-report.svg"), report.svg())?;
            }
            if !report.passed {
                std::process::exit(1);
            }
        }
        Command::RecordBaseline { baseline } => {
            let recorded = bench::record_baseline(&bench::default_suite(), &baseline)?;
            println!(
                "recorded baseline for {} functions to {}",
                recorded.entries.len(),
                baseline.display()
            );
        }
        Command::Fuzz { iterations, seed } => {
            let report = fuzz::fuzz(iterations, seed);
            print!("{}", report.text());
            if !report.crashes.is_empty() {
                std::process::exit(1);
            }
        }
        Command::Plot {
            problem,
            budget,
            window,
            out,
        } => {
            if problem.dim != 2 {
                bail!("trajectory plots are 2-D only");
            }
            let mean0 = match problem.mean0.len() {
                0 => vec![0.0, 0.0],
                1 => vec![problem.mean0[0]; 2],
                2 => problem.mean0.clone(),
                n => bail!("mean0 has {n} entries, expected up to 2"),
            };
            let config = plot::PlotConfig {
                function: problem.function,
                seed: problem.seed,
                generations: budget,
                sigma0: problem.sigma0,
                mean0,
                popsize: problem.popsize,
                window: (-window, window),
            };
            let frames = plot::collect_frames(&config)?;
            let files = plot::render_frames(&config, &frames, &out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
    }
    Ok(())
}
