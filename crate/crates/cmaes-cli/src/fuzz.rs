//! Randomized robustness testing: throw extreme and malformed inputs at
//! the optimizer and verify every outcome is a documented error, never a
//! panic.

use std::panic::{catch_unwind, AssertUnwindSafe};

use cmaes::{BoxBounds, CmaEs, CmaWm, DiscretizationSpec, EvaluatedSolution};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct Crash {
    pub iteration: u64,
    pub seed: u64,
    pub description: String,
}

#[derive(Debug, Clone)]
pub struct FuzzReport {
    pub iterations: u64,
    pub successful_ops: u64,
    pub handled_errors: u64,
    pub crashes: Vec<Crash>,
}

impl FuzzReport {
    pub fn text(&self) -> String {
        let mut s = format!(
            "fuzz: {} iterations, {} ops ok, {} handled errors, {} crashes\n",
            self.iterations,
            self.successful_ops,
            self.handled_errors,
            self.crashes.len()
        );
        for c in &self.crashes {
            s.push_str(&format!(
                "CRASH at iteration {} (seed {}): {}\n",
                c.iteration, c.seed, c.description
            ));
        }
        s
    }
}

/// Log-uniform magnitude in `[10^lo, 10^hi]`, with random sign when
/// `signed`.
fn wild_value(rng: &mut ChaCha20Rng, lo: f64, hi: f64, signed: bool) -> f64 {
    let v = 10f64.powf(rng.gen_range(lo..hi));
    if signed && rng.gen_bool(0.5) {
        -v
    } else {
        v
    }
}

/// Sometimes-poisoned value: finite most of the time, NaN/inf otherwise.
fn maybe_poisoned(rng: &mut ChaCha20Rng) -> f64 {
    match rng.gen_range(0..20) {
        0 => f64::NAN,
        1 => f64::INFINITY,
        2 => f64::NEG_INFINITY,
        _ => wild_value(rng, -20.0, 20.0, true),
    }
}

fn run_one(iteration: u64, seed: u64, report: &mut FuzzReport) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let dim = rng.gen_range(1usize..8);

    // Construction with occasionally hostile parameters.
    let mean: Vec<f64> = (0..dim).map(|_| maybe_poisoned(&mut rng)).collect();
    let sigma = match rng.gen_range(0..10) {
        0 => 0.0,
        1 => -1.0,
        2 => f64::NAN,
        3 => 1e-16, // smallest value the harness is required to accept
        _ => wild_value(&mut rng, -16.0, 3.0, false),
    };
    let mut opts = CmaEs::options(mean, sigma).seed(rng.gen());
    if rng.gen_bool(0.3) {
        let lambda = rng.gen_range(0usize..30);
        opts = opts.population_size(lambda);
    }
    if rng.gen_bool(0.2) {
        let pairs: Vec<(f64, f64)> = (0..dim)
            .map(|_| {
                let a = maybe_poisoned(&mut rng);
                let b = maybe_poisoned(&mut rng);
                (a, b)
            })
            .collect();
        match BoxBounds::from_pairs(&pairs) {
            Ok(b) => opts = opts.bounds(b),
            Err(_) => report.handled_errors += 1,
        }
    }
    if rng.gen_bool(0.2) {
        opts = opts.lr_adapt(true);
    }

    let built = catch_unwind(AssertUnwindSafe(|| opts.build()));
    let mut es = match built {
        Err(p) => {
            report.crashes.push(Crash {
                iteration,
                seed,
                description: format!("panic in build: {}", panic_text(&p)),
            });
            return;
        }
        Ok(Err(_)) => {
            report.handled_errors += 1;
            return;
        }
        Ok(Ok(es)) => {
            report.successful_ops += 1;
            es
        }
    };

    // A short randomized op sequence against the built optimizer.
    let ops = rng.gen_range(1..6);
    for _ in 0..ops {
        match rng.gen_range(0..6) {
            // ask
            0 | 1 => {
                let r = catch_unwind(AssertUnwindSafe(|| es.ask()));
                match r {
                    Err(p) => {
                        report.crashes.push(Crash {
                            iteration,
                            seed,
                            description: format!("panic in ask: {}", panic_text(&p)),
                        });
                        return;
                    }
                    Ok(Err(_)) => report.handled_errors += 1,
                    Ok(Ok(_)) => report.successful_ops += 1,
                }
            }
            // tell with a batch that is sometimes malformed
            2 | 3 | 4 => {
                let lambda = es.population_size();
                let count = match rng.gen_range(0..5) {
                    0 => lambda.saturating_sub(1), // wrong size
                    1 => lambda + 1,               // wrong size
                    _ => lambda,
                };
                let duplicate = rng.gen_bool(0.2);
                let first: DVector<f64> =
                    DVector::from_fn(dim, |_, _| maybe_poisoned(&mut rng));
                let sols: Vec<EvaluatedSolution> = (0..count)
                    .map(|_| {
                        let x = if duplicate {
                            first.clone()
                        } else {
                            DVector::from_fn(dim, |_, _| maybe_poisoned(&mut rng))
                        };
                        let v = maybe_poisoned(&mut rng);
                        EvaluatedSolution::new(x, v)
                    })
                    .collect();
                let r = catch_unwind(AssertUnwindSafe(|| es.tell(&sols)));
                match r {
                    Err(p) => {
                        report.crashes.push(Crash {
                            iteration,
                            seed,
                            description: format!("panic in tell: {}", panic_text(&p)),
                        });
                        return;
                    }
                    Ok(Err(_)) => report.handled_errors += 1,
                    Ok(Ok(())) => report.successful_ops += 1,
                }
            }
            // snapshot roundtrip, sometimes corrupted
            _ => {
                let r = catch_unwind(AssertUnwindSafe(|| {
                    let mut bytes = es.to_snapshot();
                    if !bytes.is_empty() && rng.gen_bool(0.5) {
                        let pos = rng.gen_range(0..bytes.len());
                        bytes[pos] ^= 1 << rng.gen_range(0..8);
                    }
                    CmaEs::from_snapshot(&bytes).map(|_| ())
                }));
                match r {
                    Err(p) => {
                        report.crashes.push(Crash {
                            iteration,
                            seed,
                            description: format!("panic in snapshot: {}", panic_text(&p)),
                        });
                        return;
                    }
                    Ok(Err(_)) => report.handled_errors += 1,
                    Ok(Ok(())) => report.successful_ops += 1,
                }
            }
        }
        if should_stop_panicked(&mut es, iteration, seed, report) {
            return;
        }
    }

    // Occasionally exercise the mixed-integer layer too.
    if rng.gen_bool(0.15) {
        fuzz_wm(iteration, seed, &mut rng, report);
    }
}

fn should_stop_panicked(
    es: &mut CmaEs,
    iteration: u64,
    seed: u64,
    report: &mut FuzzReport,
) -> bool {
    match catch_unwind(AssertUnwindSafe(|| es.should_stop())) {
        Err(p) => {
            report.crashes.push(Crash {
                iteration,
                seed,
                description: format!("panic in should_stop: {}", panic_text(&p)),
            });
            true
        }
        Ok(_) => {
            report.successful_ops += 1;
            false
        }
    }
}

fn fuzz_wm(iteration: u64, seed: u64, rng: &mut ChaCha20Rng, report: &mut FuzzReport) {
    let dim = rng.gen_range(1usize..5);
    let bounds: Vec<(f64, f64)> = (0..dim)
        .map(|_| {
            let a = maybe_poisoned(rng);
            (a, a + wild_value(rng, -2.0, 2.0, false))
        })
        .collect();
    let steps: Vec<f64> = (0..dim)
        .map(|_| match rng.gen_range(0..4) {
            0 => 0.0,
            1 => -1.0,
            _ => wild_value(rng, -2.0, 1.0, false),
        })
        .collect();
    let r = catch_unwind(AssertUnwindSafe(|| {
        let spec = DiscretizationSpec::new(bounds, steps)?;
        let mean: Vec<f64> = (0..dim).map(|_| wild_value(rng, -3.0, 3.0, true)).collect();
        let mut wm = CmaWm::new(CmaEs::options(mean, 1.0).seed(rng.gen()), spec, None)?;
        for _ in 0..3 {
            let sols: cmaes::Result<Vec<EvaluatedSolution>> = (0..wm.population_size())
                .map(|_| {
                    let (x_eval, x_tell) = wm.ask_wm()?;
                    Ok(EvaluatedSolution::new(x_tell, x_eval.norm_squared()))
                })
                .collect();
            wm.tell_wm(&sols?)?;
        }
        cmaes::Result::Ok(())
    }));
    match r {
        Err(p) => report.crashes.push(Crash {
            iteration,
            seed,
            description: format!("panic in mixed-integer ops: {}", panic_text(&p)),
        }),
        Ok(Err(_)) => report.handled_errors += 1,
        Ok(Ok(())) => report.successful_ops += 1,
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).into()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

/// Runs `iterations` randomized construction/ask/tell/snapshot sequences.
/// Every crash is reported with the per-iteration seed that reproduces it.
pub fn fuzz(iterations: u64, seed: u64) -> FuzzReport {
    let mut master = ChaCha20Rng::seed_from_u64(seed);
    let mut report = FuzzReport {
        iterations,
        successful_ops: 0,
        handled_errors: 0,
        crashes: Vec::new(),
    };
    for i in 0..iterations {
        let iter_seed: u64 = master.gen();
        run_one(i, iter_seed, &mut report);
    }
    report
}
