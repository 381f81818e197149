//! IPOP restarts: rerun the optimizer with a doubled population size each
//! time it stalls, until the evaluation budget runs out or the target is hit.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::constraints::BoxBounds;
use crate::engine::{CmaEsOptions, EvaluatedSolution, TerminationReason};
use crate::error::{CmaError, Result};

/// Configuration of the restart loop.
#[derive(Debug, Clone)]
pub struct RestartPolicy {
    pub dim: usize,
    /// Total objective-evaluation budget across all runs.
    pub max_evaluations: u64,
    /// Stop as soon as a solution at or below this value is found.
    pub target_value: Option<f64>,
    /// Multiplier applied to the population size at each restart.
    pub popsize_multiplier: usize,
    /// Initial population size; `None` uses the dimension default.
    pub initial_popsize: Option<usize>,
    /// Initial step-size of every run.
    pub sigma: f64,
    /// Box from which each run's initial mean is drawn uniformly.
    pub mean_box: (f64, f64),
    pub bounds: Option<BoxBounds>,
    pub lr_adapt: bool,
    pub seed: u64,
}

impl RestartPolicy {
    pub fn new(dim: usize, max_evaluations: u64) -> Self {
        RestartPolicy {
            dim,
            max_evaluations,
            target_value: None,
            popsize_multiplier: 2,
            initial_popsize: None,
            sigma: 3.0,
            mean_box: (-5.0, 5.0),
            bounds: None,
            lr_adapt: false,
            seed: 0,
        }
    }
}

/// Per-generation progress reported to the observer callback.
#[derive(Debug, Clone)]
pub struct GenerationInfo {
    pub run_index: usize,
    pub population_size: usize,
    pub generation: u64,
    pub evaluations: u64,
    pub best_value: f64,
    pub sigma: f64,
    pub mean: Vec<f64>,
    /// (min, max) covariance eigenvalues; NaN when the decomposition failed.
    pub eig_min: f64,
    pub eig_max: f64,
}

/// Result of a full restart loop.
#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub best: EvaluatedSolution,
    pub evaluations: u64,
    /// Population size of each completed or truncated run, in order.
    pub popsizes: Vec<usize>,
    /// Termination reason of each finished run (`None` for the final run if
    /// it was cut short by the budget or the target).
    pub run_terminations: Vec<Option<TerminationReason>>,
    /// True when the loop ended because the budget was exhausted.
    pub budget_exhausted: bool,
    /// True when `target_value` was reached.
    pub target_reached: bool,
}

/// Runs independent CMA-ES instances with increasing population size until
/// the budget is spent or the target value is reached.
pub fn restart_loop<F>(policy: &RestartPolicy, objective: F) -> Result<RestartOutcome>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    restart_loop_observed(policy, objective, |_| {})
}

/// Like [`restart_loop`] but invokes `observe` after every generation.
pub fn restart_loop_observed<F, O>(
    policy: &RestartPolicy,
    mut objective: F,
    mut observe: O,
) -> Result<RestartOutcome>
where
    F: FnMut(&DVector<f64>) -> f64,
    O: FnMut(&GenerationInfo),
{
    if policy.dim == 0 {
        return Err(CmaError::InvalidParam("dim must be >= 1".into()));
    }
    if policy.popsize_multiplier < 2 {
        return Err(CmaError::InvalidParam(
            "popsize multiplier must be >= 2".into(),
        ));
    }
    if !(policy.mean_box.0 < policy.mean_box.1) {
        return Err(CmaError::InvalidParam(format!(
            "mean box must satisfy lo < hi, got [{}, {}]",
            policy.mean_box.0, policy.mean_box.1
        )));
    }

    // Each run gets an independent seed drawn from a master stream, so a
    // restart never resumes the previous run's RNG state.
    let mut master = ChaCha20Rng::seed_from_u64(policy.seed);

    let mut popsize = policy
        .initial_popsize
        .unwrap_or_else(|| crate::params::default_population_size(policy.dim));
    let mut evaluations: u64 = 0;
    let mut best: Option<EvaluatedSolution> = None;
    let mut popsizes = Vec::new();
    let mut run_terminations = Vec::new();
    let mut budget_exhausted = false;
    let mut target_reached = false;
    let mut run_index = 0usize;

    'runs: while evaluations + popsize as u64 <= policy.max_evaluations {
        let mean: Vec<f64> = (0..policy.dim)
            .map(|_| master.gen_range(policy.mean_box.0..policy.mean_box.1))
            .collect();
        let run_seed: u64 = master.gen();
        let mut opts = CmaEsOptions::new(mean, policy.sigma)
            .population_size(popsize)
            .seed(run_seed)
            .lr_adapt(policy.lr_adapt);
        if let Some(b) = &policy.bounds {
            opts = opts.bounds(b.clone());
        }
        let mut es = opts.build()?;
        popsizes.push(popsize);
        let run_termination;

        loop {
            if evaluations + popsize as u64 > policy.max_evaluations {
                budget_exhausted = true;
                run_terminations.push(None);
                break 'runs;
            }
            let mut sols = Vec::with_capacity(popsize);
            let mut tell_ok = true;
            for _ in 0..popsize {
                let x = match es.ask() {
                    Ok(x) => x,
                    // A degenerated distribution ends the run; the loop
                    // restarts instead of failing.
                    Err(CmaError::CovarianceBlowUp(_)) => {
                        tell_ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                };
                let v = objective(&x);
                evaluations += 1;
                sols.push(EvaluatedSolution::new(x, v));
            }
            if tell_ok {
                match es.tell(&sols) {
                    Ok(()) => {}
                    Err(CmaError::CovarianceBlowUp(_)) => tell_ok = false,
                    Err(e) => return Err(e),
                }
            }
            if let Some(b) = es.best() {
                if best.as_ref().map_or(true, |cur| b.value < cur.value) {
                    best = Some(b.clone());
                }
            }
            if let Some(b) = &best {
                let (eig_min, eig_max) = es.eigenvalue_extremes().unwrap_or((f64::NAN, f64::NAN));
                observe(&GenerationInfo {
                    run_index,
                    population_size: popsize,
                    generation: es.generation(),
                    evaluations,
                    best_value: b.value,
                    sigma: es.sigma(),
                    mean: es.mean().iter().copied().collect(),
                    eig_min,
                    eig_max,
                });
                if policy.target_value.map_or(false, |t| b.value <= t) {
                    target_reached = true;
                    run_terminations.push(None);
                    break 'runs;
                }
            }
            if !tell_ok {
                run_termination = Some(TerminationReason::ConditionCov);
                break;
            }
            if let Some(reason) = es.should_stop() {
                run_termination = Some(reason);
                break;
            }
        }

        run_terminations.push(run_termination);
        run_index += 1;
        popsize = popsize.saturating_mul(policy.popsize_multiplier);
    }
    if !target_reached && evaluations + popsize as u64 > policy.max_evaluations {
        budget_exhausted = true;
    }

    let best = best.ok_or_else(|| {
        CmaError::InvalidParam(format!(
            "budget {} too small for even one generation of lambda = {}",
            policy.max_evaluations,
            popsizes.first().copied().unwrap_or(popsize)
        ))
    })?;
    Ok(RestartOutcome {
        best,
        evaluations,
        popsizes,
        run_terminations,
        budget_exhausted,
        target_reached,
    })
}
