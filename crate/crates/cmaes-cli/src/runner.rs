//! Seeded ask/evaluate/tell runs producing per-generation CSV records.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use cmaes::{
    restart_loop_observed, BoxBounds, CmaEs, CmaWm, DiscretizationSpec, EvaluatedSolution,
    HyperParams, RestartPolicy,
};
use crate::functions::BenchmarkFunction;

/// Offset separating the observation-noise RNG stream from the sampler's,
/// so noisy objectives stay trajectory-reproducible.
const NOISE_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub function: String,
    pub dim: usize,
    pub seed: u64,
    /// Generations for plain runs; total evaluations when `restart_ipop`.
    pub budget: u64,
    pub popsize: Option<usize>,
    pub sigma0: f64,
    /// Initial mean; empty means the origin.
    pub mean0: Vec<f64>,
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Discretization steps; enables the mixed-integer optimizer.
    pub steps: Option<Vec<f64>>,
    pub lr_adapt: bool,
    pub restart_ipop: bool,
    pub save_state: Option<PathBuf>,
    pub resume_state: Option<PathBuf>,
    /// Expert override of the strategy constants (used by the benchmark
    /// gate to simulate regressions).
    pub hyperparams: Option<HyperParams>,
}

impl RunConfig {
    pub fn new(function: &str, dim: usize) -> Self {
        RunConfig {
            function: function.into(),
            dim,
            seed: 0,
            budget: 100,
            popsize: None,
            sigma0: 1.0,
            mean0: Vec::new(),
            bounds: None,
            steps: None,
            lr_adapt: false,
            restart_ipop: false,
            save_state: None,
            resume_state: None,
            hyperparams: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunRow {
    pub generation: u64,
    pub evaluations: u64,
    pub best_value: f64,
    pub sigma: f64,
    pub eig_min: f64,
    pub eig_max: f64,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub evaluations: u64,
    pub best_value: f64,
    pub best_x: Vec<f64>,
    pub termination: Option<String>,
}

fn mean0_vector(config: &RunConfig) -> Result<Vec<f64>> {
    if config.mean0.is_empty() {
        return Ok(vec![0.0; config.dim]);
    }
    if config.mean0.len() == 1 {
        return Ok(vec![config.mean0[0]; config.dim]);
    }
    if config.mean0.len() != config.dim {
        bail!(
            "mean0 has {} entries but dim is {}",
            config.mean0.len(),
            config.dim
        );
    }
    Ok(config.mean0.clone())
}

pub fn run(config: &RunConfig) -> Result<RunRecord> {
    let mut function =
        BenchmarkFunction::by_name(&config.function, config.dim, config.seed ^ NOISE_SEED_OFFSET)?;
    // Mixed-integer functions bring their own discretization by default.
    let steps = config.steps.clone().or_else(|| function.default_steps());
    let bounds = config.bounds.clone().or_else(|| {
        if config.steps.is_none() {
            function.default_bounds()
        } else {
            None
        }
    });

    if config.restart_ipop {
        if steps.is_some() {
            bail!("--restart ipop does not support discretized (mixed-integer) runs");
        }
        if config.save_state.is_some() || config.resume_state.is_some() {
            bail!("--restart ipop does not support state snapshots");
        }
        return run_ipop(config, &mut function, bounds);
    }

    match steps {
        None => run_plain(config, &mut function, bounds),
        Some(steps) => run_wm(config, &mut function, bounds, steps),
    }
}

fn run_ipop(
    config: &RunConfig,
    function: &mut BenchmarkFunction,
    bounds: Option<Vec<(f64, f64)>>,
) -> Result<RunRecord> {
    let mut policy = RestartPolicy::new(config.dim, config.budget);
    policy.sigma = config.sigma0;
    policy.seed = config.seed;
    policy.lr_adapt = config.lr_adapt;
    policy.initial_popsize = config.popsize;
    if let Some(b) = bounds {
        policy.bounds = Some(BoxBounds::from_pairs(&b)?);
    }
    let mut rows = Vec::new();
    let outcome = restart_loop_observed(
        &policy,
        |x| function.eval(x),
        |info| {
            rows.push(RunRow {
                generation: info.generation,
                evaluations: info.evaluations,
                best_value: info.best_value,
                sigma: info.sigma,
                eig_min: info.eig_min,
                eig_max: info.eig_max,
                mean: info.mean.clone(),
            });
        },
    )?;
    Ok(RunRecord {
        rows,
        evaluations: outcome.evaluations,
        best_value: outcome.best.value,
        best_x: outcome.best.x.iter().copied().collect(),
        termination: Some(if outcome.target_reached {
            "target".into()
        } else {
            "budget".into()
        }),
    })
}

fn build_options(config: &RunConfig, bounds: Option<Vec<(f64, f64)>>) -> Result<cmaes::CmaEsOptions> {
    let mut opts = CmaEs::options(mean0_vector(config)?, config.sigma0)
        .seed(config.seed)
        .lr_adapt(config.lr_adapt);
    if let Some(p) = config.popsize {
        opts = opts.population_size(p);
    }
    if let Some(b) = bounds {
        opts = opts.bounds(BoxBounds::from_pairs(&b)?);
    }
    if let Some(hp) = &config.hyperparams {
        opts = opts.hyperparams(hp.clone());
    }
    Ok(opts)
}

fn snapshot_row(
    es: &mut CmaEs,
    generation: u64,
    evaluations: u64,
) -> RunRow {
    let (eig_min, eig_max) = es.eigenvalue_extremes().unwrap_or((f64::NAN, f64::NAN));
    RunRow {
        generation,
        evaluations,
        best_value: es.best().map_or(f64::NAN, |b| b.value),
        sigma: es.sigma(),
        eig_min,
        eig_max,
        mean: es.mean().iter().copied().collect(),
    }
}

fn finish_record(rows: Vec<RunRow>, evaluations: u64, best: Option<&EvaluatedSolution>, termination: Option<String>) -> Result<RunRecord> {
    Ok(RunRecord {
        rows,
        evaluations,
        best_value: best.map_or(f64::NAN, |b| b.value),
        best_x: best.map_or_else(Vec::new, |b| b.x.iter().copied().collect()),
        termination,
    })
}

fn run_plain(
    config: &RunConfig,
    function: &mut BenchmarkFunction,
    bounds: Option<Vec<(f64, f64)>>,
) -> Result<RunRecord> {
    let mut es = match &config.resume_state {
        Some(path) => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("reading state file {}", path.display()))?;
            CmaEs::from_snapshot(&bytes)?
        }
        None => build_options(config, bounds)?.build()?,
    };
    if es.dim() != config.dim {
        bail!("resumed state has dim {}, expected {}", es.dim(), config.dim);
    }

    let lambda = es.population_size() as u64;
    let start_gen = es.generation();
    let mut evaluations = start_gen * lambda;
    let mut rows = Vec::new();
    let mut termination = None;
    for _ in 0..config.budget {
        if let Some(reason) = es.should_stop() {
            termination = Some(format!("{reason:?}"));
            break;
        }
        let sols: Result<Vec<EvaluatedSolution>> = (0..es.population_size())
            .map(|_| {
                let x = es.ask()?;
                let v = function.eval(&x);
                Ok(EvaluatedSolution::new(x, v))
            })
            .collect();
        es.tell(&sols?)?;
        evaluations += lambda;
        let generation = es.generation();
        rows.push(snapshot_row(&mut es, generation, evaluations));
    }

    if let Some(path) = &config.save_state {
        std::fs::write(path, es.to_snapshot())
            .with_context(|| format!("writing state file {}", path.display()))?;
    }
    finish_record(rows, evaluations, es.best(), termination)
}

fn run_wm(
    config: &RunConfig,
    function: &mut BenchmarkFunction,
    bounds: Option<Vec<(f64, f64)>>,
    steps: Vec<f64>,
) -> Result<RunRecord> {
    let mut wm = match &config.resume_state {
        Some(path) => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("reading state file {}", path.display()))?;
            CmaWm::from_snapshot(&bytes)?
        }
        None => {
            let spec_bounds = bounds
                .or_else(|| function.default_bounds())
                .unwrap_or_else(|| vec![(f64::NEG_INFINITY, f64::INFINITY); config.dim]);
            let spec = DiscretizationSpec::new(spec_bounds, steps)?;
            // Box bounds are enforced through the encoding, not by inner
            // resampling, so the options carry no bounds here.
            CmaWm::new(build_options(config, None)?, spec, None)?
        }
    };
    if wm.engine().dim() != config.dim {
        bail!(
            "resumed state has dim {}, expected {}",
            wm.engine().dim(),
            config.dim
        );
    }

    let lambda = wm.population_size() as u64;
    let start_gen = wm.generation();
    let mut evaluations = start_gen * lambda;
    let mut rows = Vec::new();
    let mut termination = None;
    for _ in 0..config.budget {
        if let Some(reason) = wm.should_stop() {
            termination = Some(format!("{reason:?}"));
            break;
        }
        let sols: Result<Vec<EvaluatedSolution>> = (0..wm.population_size())
            .map(|_| {
                let (x_eval, x_tell) = wm.ask_wm()?;
                let v = function.eval(&x_eval);
                Ok(EvaluatedSolution::new(x_tell, v))
            })
            .collect();
        wm.tell_wm(&sols?)?;
        evaluations += lambda;
        let (eig_min, eig_max) = wm.eigenvalue_extremes().unwrap_or((f64::NAN, f64::NAN));
        rows.push(RunRow {
            generation: wm.generation(),
            evaluations,
            best_value: wm.best().map_or(f64::NAN, |b| b.value),
            sigma: wm.engine().sigma(),
            eig_min,
            eig_max,
            mean: wm.engine().mean().iter().copied().collect(),
        });
    }

    if let Some(path) = &config.save_state {
        std::fs::write(path, wm.to_snapshot())
            .with_context(|| format!("writing state file {}", path.display()))?;
    }
    let best = wm.best().cloned();
    finish_record(rows, evaluations, best.as_ref(), termination)
}

/// 17-significant-digit float formatting for lossless CSV round trips.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(record: &RunRecord, dim: usize, out: &mut W) -> Result<()> {
    write!(out, "generation,evaluations,best_value,sigma,eig_min,eig_max")?;
    for i in 0..dim {
        write!(out, ",m_{i}")?;
    }
    writeln!(out)?;
    for row in &record.rows {
        write!(
            out,
            "{},{},{},{},{},{}",
            row.generation,
            row.evaluations,
            fmt(row.best_value),
            fmt(row.sigma),
            fmt(row.eig_min),
            fmt(row.eig_max)
        )?;
        for &m in &row.mean {
            write!(out, ",{}", fmt(m))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
