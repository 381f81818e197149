//! Quick benchmarking: fixed-seed evaluations-to-target medians compared
//! against a stored baseline, with a generous 25% regression band.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use cmaes::{CmaEs, EvaluatedSolution, HyperParams};
use serde::{Deserialize, Serialize};

use crate::functions::BenchmarkFunction;

/// Median must not exceed baseline by more than this factor.
pub const REGRESSION_BAND: f64 = 1.25;
const BENCH_SEEDS: [u64; 7] = [101, 202, 303, 404, 505, 606, 707];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub function: String,
    pub dim: usize,
    pub popsize: Option<usize>,
    pub sigma0: f64,
    pub mean0: f64,
    pub target: f64,
    pub max_evals: u64,
}

pub fn default_suite() -> Vec<SuiteEntry> {
    vec![
        SuiteEntry {
            function: "sphere".into(),
            dim: 10,
            popsize: None,
            sigma0: 1.0,
            mean0: 1.0,
            target: 1e-8,
            max_evals: 50_000,
        },
        SuiteEntry {
            function: "ellipsoid".into(),
            dim: 10,
            popsize: None,
            sigma0: 1.0,
            mean0: 1.0,
            target: 1e-8,
            max_evals: 200_000,
        },
        SuiteEntry {
            function: "rot-ellipsoid".into(),
            dim: 2,
            popsize: Some(15),
            sigma0: 1.0,
            mean0: 1.0,
            target: 1e-10,
            max_evals: 30_000,
        },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub function: String,
    pub dim: usize,
    pub median_evals: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Baseline {
    pub seeds: Vec<u64>,
    pub entries: Vec<BaselineEntry>,
}

/// Evaluations spent to reach `entry.target`, capped at `max_evals` when
/// the target is never reached.
fn evals_to_target(
    entry: &SuiteEntry,
    seed: u64,
    hp_override: Option<&HyperParams>,
) -> Result<u64> {
    let mut f = BenchmarkFunction::by_name(&entry.function, entry.dim, seed)?;
    let mut opts = CmaEs::options(vec![entry.mean0; entry.dim], entry.sigma0).seed(seed);
    if let Some(hp) = hp_override {
        let mut hp = hp.clone();
        hp.dim = entry.dim;
        // Keep the override's learning rates but rebuild the size-dependent
        // parts for this entry's dimension and population.
        let base = HyperParams::default_for(entry.dim, entry.popsize)?;
        hp.lambda = base.lambda;
        hp.mu = base.mu;
        hp.weights = base.weights;
        hp.mu_w = base.mu_w;
        hp.c_sigma = base.c_sigma;
        hp.d_sigma = base.d_sigma;
        hp.c_c = base.c_c;
        opts = opts.hyperparams(hp);
    } else if let Some(p) = entry.popsize {
        opts = opts.population_size(p);
    }
    let mut es = opts.build()?;
    let lambda = es.population_size() as u64;
    let mut evals = 0u64;
    while evals + lambda <= entry.max_evals {
        let sols: cmaes::Result<Vec<EvaluatedSolution>> = (0..es.population_size())
            .map(|_| {
                let x = es.ask()?;
                let v = f.eval(&x);
                Ok(EvaluatedSolution::new(x, v))
            })
            .collect();
        let sols = match sols {
            Ok(s) => s,
            Err(_) => return Ok(entry.max_evals),
        };
        if es.tell(&sols).is_err() {
            return Ok(entry.max_evals);
        }
        evals += lambda;
        if es.best().map_or(false, |b| b.value <= entry.target) {
            return Ok(evals);
        }
        if es.should_stop().is_some() {
            break;
        }
    }
    Ok(entry.max_evals)
}

fn median(mut v: Vec<u64>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

pub fn median_evals(entry: &SuiteEntry, hp_override: Option<&HyperParams>) -> Result<f64> {
    let evals: Result<Vec<u64>> = BENCH_SEEDS
        .iter()
        .map(|&s| evals_to_target(entry, s, hp_override))
        .collect();
    Ok(median(evals?))
}

pub fn record_baseline(suite: &[SuiteEntry], path: &Path) -> Result<Baseline> {
    let mut entries = Vec::new();
    for entry in suite {
        entries.push(BaselineEntry {
            function: entry.function.clone(),
            dim: entry.dim,
            median_evals: median_evals(entry, None)?,
        });
    }
    let baseline = Baseline {
        seeds: BENCH_SEEDS.to_vec(),
        entries,
    };
    std::fs::write(path, serde_json::to_string_pretty(&baseline)?)
        .with_context(|| format!("writing baseline to {}", path.display()))?;
    Ok(baseline)
}

pub fn load_baseline(path: &Path) -> Result<Baseline> {
    let text = std::fs::read_to_string(path).map_err(|_| {
        anyhow!(
            "no baseline found at {}; record one first with the record-baseline subcommand",
            path.display()
        )
    })?;
    serde_json::from_str(&text).with_context(|| format!("parsing baseline {}", path.display()))
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub function: String,
    pub dim: usize,
    pub baseline_median: f64,
    pub current_median: f64,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub results: Vec<BenchResult>,
    pub passed: bool,
    pub warnings: Vec<String>,
}

impl BenchReport {
    pub fn text(&self) -> String {
        let mut s = String::new();
        s.push_str("quick benchmark report\n");
        s.push_str("function            dim  baseline    current     ratio  verdict\n");
        for r in &self.results {
            s.push_str(&format!(
                "{:<18} {:>4}  {:>9.0}  {:>9.0}  {:>7.3}  {}\n",
                r.function,
                r.dim,
                r.baseline_median,
                r.current_median,
                r.ratio,
                if r.pass { "pass" } else { "FAIL" }
            ));
        }
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        s.push_str(if self.passed { "PASSED\n" } else { "FAILED\n" });
        s
    }

    /// Simple bar chart: baseline vs current median evaluations.
    pub fn svg(&self) -> String {
        let n = self.results.len().max(1);
        let width = 640;
        let row_h = 48;
        let height = 40 + n * row_h;
        let max_val = self
            .results
            .iter()
            .map(|r| r.baseline_median.max(r.current_median))
            .fold(1.0f64, f64::max);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
             viewBox=\"0 0 {width} {height}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <text x=\"10\" y=\"20\" font-size=\"14\">median evaluations to target \
             (gray = baseline, blue = current)</text>\n"
        );
        for (i, r) in self.results.iter().enumerate() {
            let y = 40 + i * row_h;
            let scale = 420.0 / max_val;
            let wb = (r.baseline_median * scale).max(1.0);
            let wc = (r.current_median * scale).max(1.0);
            let color = if r.pass { "#4477cc" } else { "#cc4444" };
            s.push_str(&format!(
                "<text x=\"10\" y=\"{}\" font-size=\"12\">{} (d={})</text>\n",
                y + 14,
                r.function,
                r.dim
            ));
            s.push_str(&format!(
                "<rect x=\"160\" y=\"{}\" width=\"{wb:.1}\" height=\"12\" fill=\"#999999\"/>\n",
                y + 4
            ));
            s.push_str(&format!(
                "<rect x=\"160\" y=\"{}\" width=\"{wc:.1}\" height=\"12\" fill=\"{color}\"/>\n",
                y + 20
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"11\">x{:.2}</text>\n",
                165.0 + wc,
                y + 30,
                r.ratio
            ));
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Runs the suite and compares against the stored baseline; a function
/// fails when its median exceeds the baseline by more than 25%.
pub fn quick_benchmark(
    suite: &[SuiteEntry],
    baseline: &Baseline,
    hp_override: Option<&HyperParams>,
) -> Result<BenchReport> {
    let mut results = Vec::new();
    let mut warnings = Vec::new();
    if suite.is_empty() {
        warnings.push("benchmark suite is empty; nothing was checked".into());
    }
    for entry in suite {
        let base = baseline
            .entries
            .iter()
            .find(|b| b.function == entry.function && b.dim == entry.dim)
            .ok_or_else(|| {
                anyhow!(
                    "baseline has no entry for {} (d={}); re-record it",
                    entry.function,
                    entry.dim
                )
            })?;
        let current = median_evals(entry, hp_override)?;
        let ratio = current / base.median_evals;
        results.push(BenchResult {
            function: entry.function.clone(),
            dim: entry.dim,
            baseline_median: base.median_evals,
            current_median: current,
            ratio,
            pass: ratio <= REGRESSION_BAND,
        });
    }
    let passed = results.iter().all(|r| r.pass);
    Ok(BenchReport {
        results,
        passed,
        warnings,
    })
}

/// Strategy constants with covariance learning disabled (`c_1 = c_mu = 0`);
/// used to verify that the regression gate actually catches a broken
/// optimizer.
pub fn sabotaged_hyperparams(dim: usize) -> HyperParams {
    let mut hp = HyperParams::default_for(dim, None).unwrap();
    hp.c_1 = 0.0;
    hp.c_mu = 0.0;
    hp
}
