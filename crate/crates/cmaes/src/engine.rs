//! The CMA-ES engine: sampling (`ask`), ranking and distribution update
//! (`tell`), and termination detection (`should_stop`).

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constraints::BoxBounds;
use crate::error::{CmaError, Result};
use crate::lra::LraState;
use crate::params::{expected_norm, HyperParams};

/// A candidate point paired with its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedSolution {
    pub x: DVector<f64>,
    pub value: f64,
}

impl EvaluatedSolution {
    pub fn new(x: DVector<f64>, value: f64) -> Self {
        EvaluatedSolution { x, value }
    }
}

/// Why the optimizer decided to stop. At most one reason is reported per
/// stop event, following a fixed evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    TolFun,
    TolX,
    TolXUp,
    ConditionCov,
    NoEffectAxis,
    NoEffectCoord,
    Stagnation,
    MaxGenerations,
}

const TOL_FUN: f64 = 1e-12;
const TOL_X_REL: f64 = 1e-12;
const TOL_X_UP_REL: f64 = 1e4;
const TOL_CONDITION_COV: f64 = 1e14;
const DEFAULT_MAX_RESAMPLES: u32 = 100;

/// Builder for [`CmaEs`].
#[derive(Debug, Clone)]
pub struct CmaEsOptions {
    mean: Vec<f64>,
    sigma: f64,
    population_size: Option<usize>,
    cov: Option<DMatrix<f64>>,
    seed: u64,
    bounds: Option<BoxBounds>,
    max_resamples: u32,
    lr_adapt: bool,
    max_generations: Option<u64>,
    hyperparams: Option<HyperParams>,
}

impl CmaEsOptions {
    pub fn new(mean: Vec<f64>, sigma: f64) -> Self {
        CmaEsOptions {
            mean,
            sigma,
            population_size: None,
            cov: None,
            seed: 0,
            bounds: None,
            max_resamples: DEFAULT_MAX_RESAMPLES,
            lr_adapt: false,
            max_generations: None,
            hyperparams: None,
        }
    }

    pub fn population_size(mut self, lambda: usize) -> Self {
        self.population_size = Some(lambda);
        self
    }

    /// Initial covariance matrix (defaults to the identity).
    pub fn cov(mut self, cov: DMatrix<f64>) -> Self {
        self.cov = Some(cov);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn bounds(mut self, bounds: BoxBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    /// Resampling attempts per `ask` before the clip fallback.
    pub fn max_resamples(mut self, n: u32) -> Self {
        self.max_resamples = n;
        self
    }

    /// Enables learning-rate adaptation.
    pub fn lr_adapt(mut self, on: bool) -> Self {
        self.lr_adapt = on;
        self
    }

    pub fn max_generations(mut self, g: u64) -> Self {
        self.max_generations = Some(g);
        self
    }

    /// Expert override of every strategy constant. `population_size` is
    /// ignored when this is set.
    pub fn hyperparams(mut self, hp: HyperParams) -> Self {
        self.hyperparams = Some(hp);
        self
    }

    pub fn build(self) -> Result<CmaEs> {
        let dim = self.mean.len();
        if dim == 0 {
            return Err(CmaError::InvalidParam("mean must be non-empty".into()));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(CmaError::InvalidParam("mean entries must be finite".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(CmaError::InvalidParam(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        let hp = match self.hyperparams {
            Some(hp) => {
                hp.validate()?;
                if hp.dim != dim {
                    return Err(CmaError::InvalidParam(format!(
                        "hyperparams dim {} does not match mean dim {dim}",
                        hp.dim
                    )));
                }
                hp
            }
            None => HyperParams::default_for(dim, self.population_size)?,
        };
        let cov = match self.cov {
            Some(c) => {
                if c.nrows() != dim || c.ncols() != dim {
                    return Err(CmaError::InvalidParam(format!(
                        "cov must be {dim}x{dim}, got {}x{}",
                        c.nrows(),
                        c.ncols()
                    )));
                }
                let scale = c.amax().max(1.0);
                if (&c - c.transpose()).amax() > 1e-10 * scale {
                    return Err(CmaError::InvalidParam("cov must be symmetric".into()));
                }
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(CmaError::InvalidParam("cov entries must be finite".into()));
                }
                c
            }
            None => DMatrix::identity(dim, dim),
        };
        if let Some(b) = &self.bounds {
            if b.dim() != dim {
                return Err(CmaError::InvalidParam(format!(
                    "bounds dim {} does not match mean dim {dim}",
                    b.dim()
                )));
            }
        }
        let tolfun_cap = tolfun_window(dim, hp.lambda);
        let stag_cap = stagnation_window(dim, hp.lambda, 0);
        let lra = self.lr_adapt.then(|| LraState::new(dim));
        let mut es = CmaEs {
            hp,
            mean: DVector::from_vec(self.mean),
            sigma: self.sigma,
            cov,
            eigen_basis: DMatrix::identity(dim, dim),
            eigen_sqrt: DVector::from_element(dim, 1.0),
            eigen_fresh: false,
            p_sigma: DVector::zeros(dim),
            p_c: DVector::zeros(dim),
            generation: 0,
            sigma0: self.sigma,
            rng: ChaCha20Rng::seed_from_u64(self.seed),
            bounds: self.bounds,
            max_resamples: self.max_resamples.max(1),
            resample_overflows: 0,
            max_generations: self.max_generations,
            tolfun_hist: VecDeque::with_capacity(tolfun_cap),
            stag_hist: VecDeque::with_capacity(stag_cap),
            best: None,
            lra,
        };
        // Fail fast on a non-positive-definite initial covariance.
        es.refresh_eigen()
            .map_err(|_| CmaError::InvalidParam("cov must be positive definite".into()))?;
        Ok(es)
    }
}

pub(crate) fn tolfun_window(dim: usize, lambda: usize) -> usize {
    10 + (30.0 * dim as f64 / lambda as f64).ceil() as usize
}

/// Grows with elapsed generations (20% of them) so that slow but genuine
/// progress in long runs is not mistaken for stagnation, with a hard cap to
/// keep the stored history bounded.
pub(crate) fn stagnation_window(dim: usize, lambda: usize, generation: u64) -> usize {
    let base = 120 + (30.0 * dim as f64 / lambda as f64).ceil() as usize;
    (base + (generation / 5) as usize).min(20_000)
}

/// CMA-ES optimizer with an ask-and-tell interface.
///
/// Single-instance mutation contract: `ask`/`tell` must not be called
/// concurrently on one instance, but the caller is free to evaluate the
/// sampled candidates in parallel between the two calls.
#[derive(Debug, Clone)]
pub struct CmaEs {
    pub(crate) hp: HyperParams,
    pub(crate) mean: DVector<f64>,
    pub(crate) sigma: f64,
    pub(crate) cov: DMatrix<f64>,
    /// Orthonormal basis B with C = B diag(eigen_sqrt^2) B^T.
    pub(crate) eigen_basis: DMatrix<f64>,
    pub(crate) eigen_sqrt: DVector<f64>,
    pub(crate) eigen_fresh: bool,
    pub(crate) p_sigma: DVector<f64>,
    pub(crate) p_c: DVector<f64>,
    pub(crate) generation: u64,
    pub(crate) sigma0: f64,
    pub(crate) rng: ChaCha20Rng,
    pub(crate) bounds: Option<BoxBounds>,
    pub(crate) max_resamples: u32,
    pub(crate) resample_overflows: u64,
    pub(crate) max_generations: Option<u64>,
    /// Best value per generation, bounded by the TolFun window.
    pub(crate) tolfun_hist: VecDeque<f64>,
    /// (best, median) value per generation, bounded by the stagnation window.
    pub(crate) stag_hist: VecDeque<(f64, f64)>,
    pub(crate) best: Option<EvaluatedSolution>,
    pub(crate) lra: Option<LraState>,
}

impl CmaEs {
    pub fn options(mean: Vec<f64>, sigma: f64) -> CmaEsOptions {
        CmaEsOptions::new(mean, sigma)
    }

    pub fn dim(&self) -> usize {
        self.hp.dim
    }

    pub fn population_size(&self) -> usize {
        self.hp.lambda
    }

    pub fn hyperparams(&self) -> &HyperParams {
        &self.hp
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn p_sigma(&self) -> &DVector<f64> {
        &self.p_sigma
    }

    pub fn p_c(&self) -> &DVector<f64> {
        &self.p_c
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Best solution seen so far across all generations.
    pub fn best(&self) -> Option<&EvaluatedSolution> {
        self.best.as_ref()
    }

    /// How often `ask` exhausted its resampling budget and clipped.
    pub fn resample_overflows(&self) -> u64 {
        self.resample_overflows
    }

    pub fn lra_state(&self) -> Option<&LraState> {
        self.lra.as_ref()
    }

    /// (min, max) eigenvalues of the current covariance matrix.
    pub fn eigenvalue_extremes(&mut self) -> Result<(f64, f64)> {
        self.ensure_fresh_eigen()?;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &s in self.eigen_sqrt.iter() {
            lo = lo.min(s * s);
            hi = hi.max(s * s);
        }
        Ok((lo, hi))
    }

    /// Current eigendecomposition `(B, sqrt-eigenvalues)` of C.
    pub fn sampling_basis(&mut self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.ensure_fresh_eigen()?;
        Ok((self.eigen_basis.clone(), self.eigen_sqrt.clone()))
    }

    fn refresh_eigen(&mut self) -> Result<()> {
        let sym = 0.5 * (&self.cov + self.cov.transpose());
        let mut eig = nalgebra::SymmetricEigen::new(sym);
        let largest = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
        if !(largest > 0.0 && largest.is_finite()) {
            return Err(CmaError::CovarianceBlowUp(format!(
                "largest covariance eigenvalue {largest} is not positive and finite"
            )));
        }
        for v in eig.eigenvalues.iter_mut() {
            if !v.is_finite() || *v < -1e-3 * largest {
                return Err(CmaError::CovarianceBlowUp(format!(
                    "covariance eigenvalue {v} is not positive and finite"
                )));
            }
            // Mildly non-positive eigenvalues (active-weight updates can
            // push a degenerate axis slightly indefinite) mean a
            // numerically singular C; floor them and let the
            // condition-number stopping criterion take it from there.
            if *v <= 0.0 {
                *v = 1e-16 * largest;
            }
        }
        self.eigen_sqrt = eig.eigenvalues.map(f64::sqrt);
        self.eigen_basis = eig.eigenvectors;
        self.eigen_fresh = true;
        Ok(())
    }

    pub(crate) fn ensure_fresh_eigen(&mut self) -> Result<()> {
        if !self.eigen_fresh {
            self.refresh_eigen()?;
        }
        Ok(())
    }

    /// `x = m + sigma * B D z` for the given standard-normal draw.
    pub(crate) fn transform(&self, z: &DVector<f64>) -> DVector<f64> {
        let scaled = z.component_mul(&self.eigen_sqrt);
        &self.mean + self.sigma * (&self.eigen_basis * scaled)
    }

    /// `C^{-1/2} = B D^{-1} B^T` as a dense matrix.
    fn cov_inv_sqrt(&self) -> DMatrix<f64> {
        let inv = self.eigen_sqrt.map(|s| 1.0 / s);
        &self.eigen_basis * DMatrix::from_diagonal(&inv) * self.eigen_basis.transpose()
    }

    fn sample_one(&mut self) -> Result<DVector<f64>> {
        let d = self.hp.dim;
        let mut z = DVector::zeros(d);
        for i in 0..d {
            z[i] = StandardNormal.sample(&mut self.rng);
        }
        let x = self.transform(&z);
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(CmaError::CovarianceBlowUp(
                "sample is not finite; the distribution has degenerated".into(),
            ))
        }
    }

    /// Samples one candidate from `N(m, sigma^2 C)`.
    ///
    /// With box bounds configured, infeasible samples are redrawn up to the
    /// resampling budget and the last draw is clipped on exhaustion, so a
    /// feasible point is always returned.
    pub fn ask(&mut self) -> Result<DVector<f64>> {
        self.ensure_fresh_eigen()?;
        let Some(bounds) = self.bounds.clone() else {
            return self.sample_one();
        };
        let mut last = None;
        for _ in 0..self.max_resamples {
            let x = self.sample_one()?;
            if bounds.contains(&x) {
                return Ok(x);
            }
            last = Some(x);
        }
        self.resample_overflows += 1;
        Ok(bounds.clip(last.expect("max_resamples >= 1")))
    }

    fn validate_solutions(&self, solutions: &[EvaluatedSolution]) -> Result<()> {
        let lambda = self.hp.lambda;
        if solutions.len() != lambda {
            return Err(CmaError::InvalidSolutions(format!(
                "expected exactly {lambda} solutions, got {}",
                solutions.len()
            )));
        }
        for (i, s) in solutions.iter().enumerate() {
            if s.x.len() != self.hp.dim {
                return Err(CmaError::InvalidSolutions(format!(
                    "solution {i} has dimension {}, expected {}",
                    s.x.len(),
                    self.hp.dim
                )));
            }
            if !s.value.is_finite() {
                return Err(CmaError::InvalidSolutions(format!(
                    "solution {i} has non-finite value {}",
                    s.value
                )));
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return Err(CmaError::InvalidSolutions(format!(
                    "solution {i} has non-finite coordinates"
                )));
            }
        }
        Ok(())
    }

    /// Ranks the batch and updates m, sigma, C and both evolution paths.
    ///
    /// Candidates need not come from `ask`; arbitrary points are accepted
    /// and their displacement is reconstructed as `y = (x - m) / sigma`.
    pub fn tell(&mut self, solutions: &[EvaluatedSolution]) -> Result<()> {
        self.validate_solutions(solutions)?;
        self.ensure_fresh_eigen()?;

        let hp = self.hp.clone();
        let d = hp.dim as f64;
        let lambda = hp.lambda;

        // Ties broken by submission order (stable sort) for determinism.
        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| solutions[a].value.total_cmp(&solutions[b].value));

        let ys: Vec<DVector<f64>> = order
            .iter()
            .map(|&i| (&solutions[i].x - &self.mean) / self.sigma)
            .collect();
        let mut dy = DVector::zeros(hp.dim);
        for i in 0..hp.mu {
            dy.axpy(hp.weights[i], &ys[i], 1.0);
        }

        let c_inv_sqrt = self.cov_inv_sqrt();
        let e_norm = expected_norm(hp.dim);

        let p_sigma_new = (1.0 - hp.c_sigma) * &self.p_sigma
            + (hp.c_sigma * (2.0 - hp.c_sigma) * hp.mu_w).sqrt() * (&c_inv_sqrt * &dy);

        let g1 = (self.generation + 1) as f64;
        let decay = (1.0 - (1.0 - hp.c_sigma).powf(2.0 * g1)).sqrt();
        let h_sigma = if p_sigma_new.norm() / (decay * e_norm) < 1.4 + 2.0 / (d + 1.0) {
            1.0
        } else {
            0.0
        };

        let p_c_new = (1.0 - hp.c_c) * &self.p_c
            + h_sigma * (hp.c_c * (2.0 - hp.c_c) * hp.mu_w).sqrt() * &dy;

        let mean_cand = &self.mean + hp.c_m * self.sigma * &dy;
        let sigma_cand = self.sigma
            * ((hp.c_sigma / hp.d_sigma) * (p_sigma_new.norm() / e_norm - 1.0)).exp();

        // C' = (1 + (1 - h_sigma) c_1 c_c (2 - c_c)) C
        //      + c_1 (p_c p_c^T - C) + c_mu sum_i (w_i^o y_i y_i^T - w_i C)
        let w_sum: f64 = hp.weights.iter().sum();
        let lead = 1.0 + (1.0 - h_sigma) * hp.c_1 * hp.c_c * (2.0 - hp.c_c);
        let mut cov_cand = (lead - hp.c_1 - hp.c_mu * w_sum) * &self.cov;
        cov_cand.ger(hp.c_1, &p_c_new, &p_c_new, 1.0);
        for i in 0..lambda {
            let w = hp.weights[i];
            if w == 0.0 {
                continue;
            }
            let wo = if w >= 0.0 {
                w
            } else {
                let n2 = (&c_inv_sqrt * &ys[i]).norm_squared();
                if n2 == 0.0 {
                    continue; // zero displacement contributes nothing
                }
                w * d / n2
            };
            cov_cand.ger(hp.c_mu * wo, &ys[i], &ys[i], 1.0);
        }
        cov_cand = 0.5 * (&cov_cand + cov_cand.transpose());

        let (new_mean, new_sigma, new_cov) = match &mut self.lra {
            None => (mean_cand, sigma_cand, cov_cand),
            Some(lra) => {
                let (m, s, c) = lra.scaled_updates(
                    &self.mean, self.sigma, &self.cov, mean_cand, sigma_cand, cov_cand,
                );
                lra.observe(&self.mean, self.sigma, &self.cov, &c_inv_sqrt, &m, s, &c);
                (m, s, c)
            }
        };

        if !(new_sigma > 0.0 && new_sigma.is_finite())
            || new_mean.iter().any(|v| !v.is_finite())
            || new_cov.iter().any(|v| !v.is_finite())
            || p_sigma_new.iter().any(|v| !v.is_finite())
            || p_c_new.iter().any(|v| !v.is_finite())
        {
            return Err(CmaError::CovarianceBlowUp(
                "distribution update produced non-finite parameters".into(),
            ));
        }

        self.mean = new_mean;
        self.sigma = new_sigma;
        self.cov = new_cov;
        self.p_sigma = p_sigma_new;
        self.p_c = p_c_new;
        self.eigen_fresh = false;
        self.generation += 1;

        let best_in_gen = &solutions[order[0]];
        let median_in_gen = solutions[order[lambda / 2]].value;
        self.push_history(best_in_gen.value, median_in_gen);
        if self.best.as_ref().map_or(true, |b| best_in_gen.value < b.value) {
            self.best = Some(best_in_gen.clone());
        }
        Ok(())
    }

    fn push_history(&mut self, best: f64, median: f64) {
        let tolfun_cap = tolfun_window(self.hp.dim, self.hp.lambda);
        self.tolfun_hist.push_back(best);
        while self.tolfun_hist.len() > tolfun_cap {
            self.tolfun_hist.pop_front();
        }
        let stag_cap = stagnation_window(self.hp.dim, self.hp.lambda, self.generation);
        self.stag_hist.push_back((best, median));
        while self.stag_hist.len() > stag_cap {
            self.stag_hist.pop_front();
        }
    }

    /// Returns the first triggered termination reason, or `None` while the
    /// run is healthy. Evaluation order: TolFun, TolX, TolXUp, ConditionCov,
    /// NoEffectAxis, NoEffectCoord, Stagnation, MaxGenerations.
    pub fn should_stop(&mut self) -> Option<TerminationReason> {
        let dim = self.hp.dim;

        if self.tolfun_hist.len() >= tolfun_window(dim, self.hp.lambda) {
            let max = self.tolfun_hist.iter().cloned().fold(f64::MIN, f64::max);
            let min = self.tolfun_hist.iter().cloned().fold(f64::MAX, f64::min);
            if max - min < TOL_FUN {
                return Some(TerminationReason::TolFun);
            }
        }

        let tol_x = TOL_X_REL * self.sigma0;
        let tolx_hit = (0..dim).all(|i| {
            self.sigma * self.cov[(i, i)].max(0.0).sqrt() < tol_x
                && self.sigma * self.p_c[i].abs() < tol_x
        });
        if tolx_hit {
            return Some(TerminationReason::TolX);
        }

        // The remaining checks need the eigendecomposition; a covariance
        // that no longer decomposes counts as degenerate.
        if self.ensure_fresh_eigen().is_err() {
            return Some(TerminationReason::ConditionCov);
        }
        let max_sqrt = self.eigen_sqrt.iter().cloned().fold(0.0f64, f64::max);
        let min_sqrt = self.eigen_sqrt.iter().cloned().fold(f64::MAX, f64::min);

        if self.sigma * max_sqrt > TOL_X_UP_REL * self.sigma0 {
            return Some(TerminationReason::TolXUp);
        }

        if (max_sqrt / min_sqrt).powi(2) > TOL_CONDITION_COV {
            return Some(TerminationReason::ConditionCov);
        }

        // Cycle one principal axis per generation.
        let axis = (self.generation as usize) % dim;
        let step = 0.1 * self.sigma * self.eigen_sqrt[axis];
        if (0..dim).all(|k| self.mean[k] + step * self.eigen_basis[(k, axis)] == self.mean[k]) {
            return Some(TerminationReason::NoEffectAxis);
        }

        if (0..dim).any(|i| {
            let step = 0.2 * self.sigma * self.cov[(i, i)].max(0.0).sqrt();
            self.mean[i] + step == self.mean[i]
        }) {
            return Some(TerminationReason::NoEffectCoord);
        }

        if self.stag_hist.len() >= stagnation_window(dim, self.hp.lambda, self.generation)
            && stagnated(&self.stag_hist)
        {
            return Some(TerminationReason::Stagnation);
        }

        if let Some(max_gen) = self.max_generations {
            if self.generation >= max_gen {
                return Some(TerminationReason::MaxGenerations);
            }
        }
        None
    }
}

/// No improvement of either the best or the median values between the first
/// and last 30% of the stagnation window.
fn stagnated(hist: &VecDeque<(f64, f64)>) -> bool {
    let n = hist.len();
    let k = (n as f64 * 0.3) as usize;
    if k == 0 {
        return false;
    }
    let median = |vals: &mut Vec<f64>| -> f64 {
        vals.sort_by(f64::total_cmp);
        vals[vals.len() / 2]
    };
    let mut head_best: Vec<f64> = hist.iter().take(k).map(|p| p.0).collect();
    let mut tail_best: Vec<f64> = hist.iter().skip(n - k).map(|p| p.0).collect();
    let mut head_med: Vec<f64> = hist.iter().take(k).map(|p| p.1).collect();
    let mut tail_med: Vec<f64> = hist.iter().skip(n - k).map(|p| p.1).collect();
    median(&mut tail_best) >= median(&mut head_best) && median(&mut tail_med) >= median(&mut head_med)
}
