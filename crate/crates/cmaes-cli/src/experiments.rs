//! Multi-seed behavioral comparisons backing the benchmark stories:
//! learning-rate adaptation on multimodal Rastrigin and margin correction
//! on a mixed continuous/binary problem. Seeds run on separate threads.

use cmaes::{CmaEs, CmaWm, DiscretizationSpec, EvaluatedSolution};
use nalgebra::DVector;

use crate::functions::rastrigin;

/// Best value after running 40-D Rastrigin (`m0 = 3, sigma0 = 2,
/// lambda = 15`) for `max_evals` evaluations, with or without
/// learning-rate adaptation.
fn rastrigin_best(seed: u64, lr_adapt: bool, max_evals: u64) -> f64 {
    let dim = 40;
    let mut es = CmaEs::options(vec![3.0; dim], 2.0)
        .population_size(15)
        .seed(seed)
        .lr_adapt(lr_adapt)
        .build()
        .unwrap();
    let lambda = es.population_size() as u64;
    let mut evals = 0;
    while evals + lambda <= max_evals {
        let sols: Vec<EvaluatedSolution> = (0..es.population_size())
            .map(|_| {
                let x = es.ask().unwrap();
                let v = rastrigin(&x);
                EvaluatedSolution::new(x, v)
            })
            .collect();
        if es.tell(&sols).is_err() {
            break;
        }
        evals += lambda;
    }
    es.best().map_or(f64::INFINITY, |b| b.value)
}

#[derive(Debug, Clone)]
pub struct LraComparison {
    pub vanilla_best: Vec<f64>,
    pub lra_best: Vec<f64>,
}

impl LraComparison {
    pub fn success_rate(values: &[f64], threshold: f64) -> f64 {
        values.iter().filter(|&&v| v < threshold).count() as f64 / values.len() as f64
    }
}

/// Runs vanilla and LRA side by side on the same seeds, one thread per
/// (seed, arm) pair.
pub fn lra_rastrigin_comparison(seeds: &[u64], max_evals: u64) -> LraComparison {
    let spawn = |lr_adapt: bool| -> Vec<std::thread::JoinHandle<f64>> {
        seeds
            .iter()
            .map(|&s| std::thread::spawn(move || rastrigin_best(s, lr_adapt, max_evals)))
            .collect()
    };
    let vanilla_handles = spawn(false);
    let lra_handles = spawn(true);
    LraComparison {
        vanilla_best: vanilla_handles.into_iter().map(|h| h.join().unwrap()).collect(),
        lra_best: lra_handles.into_iter().map(|h| h.join().unwrap()).collect(),
    }
}

fn pad_curve(curve: &mut Vec<f64>, generations: u64) {
    let last = curve.last().copied().unwrap_or(f64::INFINITY);
    while curve.len() < generations as usize {
        curve.push(last);
    }
}

/// One 40-D EllipsoidOneMax trajectory (20 continuous + 20 binary
/// dimensions, `m0 = 0.5, sigma0 = 2, lambda = 15`). Returns the best value
/// after every generation.
///
/// `with_margin = false` is the vanilla arm: a plain engine that sees the
/// same encoded evaluations but applies no margin correction.
fn onemax_curve(seed: u64, with_margin: bool, generations: u64) -> Vec<f64> {
    let d_co = 20;
    let d_bi = 20;
    let dim = d_co + d_bi;
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); d_co];
    bounds.extend(vec![(0.0, 1.0); d_bi]);
    let mut steps = vec![0.0; d_co];
    steps.extend(vec![1.0; d_bi]);
    let spec = DiscretizationSpec::new(bounds, steps).unwrap();
    let opts = CmaEs::options(vec![0.5; dim], 2.0)
        .population_size(15)
        .seed(seed);

    let mut curve = Vec::with_capacity(generations as usize);
    if with_margin {
        let mut wm = CmaWm::new(opts, spec, None).unwrap();
        for _ in 0..generations {
            let sols: cmaes::Result<Vec<EvaluatedSolution>> = (0..wm.population_size())
                .map(|_| {
                    let (x_eval, x_tell) = wm.ask_wm()?;
                    let v = cmaes::ellipsoid_onemax(&x_eval, d_co, d_bi);
                    Ok(EvaluatedSolution::new(x_tell, v))
                })
                .collect();
            let ok = sols.and_then(|s| wm.tell_wm(&s)).is_ok();
            if !ok {
                break;
            }
            curve.push(wm.best().map_or(f64::INFINITY, |b| b.value));
            if wm.should_stop().is_some() {
                break;
            }
        }
    } else {
        let mut es = opts.build().unwrap();
        for _ in 0..generations {
            let sols: cmaes::Result<Vec<EvaluatedSolution>> = (0..es.population_size())
                .map(|_| {
                    let x: DVector<f64> = es.ask()?;
                    let v = cmaes::ellipsoid_onemax(&spec.encode(&x), d_co, d_bi);
                    Ok(EvaluatedSolution::new(x, v))
                })
                .collect();
            let ok = sols.and_then(|s| es.tell(&s)).is_ok();
            if !ok {
                break;
            }
            curve.push(es.best().map_or(f64::INFINITY, |b| b.value));
            if es.should_stop().is_some() {
                break;
            }
        }
    }
    pad_curve(&mut curve, generations);
    curve
}

#[derive(Debug, Clone)]
pub struct MarginComparison {
    /// Per-seed best-value curves, one entry per generation.
    pub vanilla_curves: Vec<Vec<f64>>,
    pub margin_curves: Vec<Vec<f64>>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

impl MarginComparison {
    pub fn final_medians(&self) -> (f64, f64) {
        let mut v: Vec<f64> = self
            .vanilla_curves
            .iter()
            .map(|c| *c.last().unwrap())
            .collect();
        let mut m: Vec<f64> = self
            .margin_curves
            .iter()
            .map(|c| *c.last().unwrap())
            .collect();
        (median(&mut v), median(&mut m))
    }

    /// Median improvement of the vanilla arm over the final half of the
    /// budget (midpoint best minus final best).
    pub fn vanilla_late_improvement(&self) -> f64 {
        let mut imps: Vec<f64> = self
            .vanilla_curves
            .iter()
            .map(|c| c[c.len() / 2] - *c.last().unwrap())
            .collect();
        median(&mut imps)
    }
}

/// Margin-corrected vs margin-free runs of 40-D EllipsoidOneMax on the
/// same seeds, in parallel.
pub fn onemax_margin_comparison(seeds: &[u64], generations: u64) -> MarginComparison {
    let spawn_all = |with_margin: bool, seeds: Vec<u64>| {
        std::thread::spawn(move || {
            let handles: Vec<_> = seeds
                .iter()
                .map(|&s| {
                    std::thread::spawn(move || onemax_curve(s, with_margin, generations))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap())
                .collect::<Vec<_>>()
        })
    };
    let vanilla = spawn_all(false, seeds.to_vec());
    let margin = spawn_all(true, seeds.to_vec());
    MarginComparison {
        vanilla_curves: vanilla.join().unwrap(),
        margin_curves: margin.join().unwrap(),
    }
}
