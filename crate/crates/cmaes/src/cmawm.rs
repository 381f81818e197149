//! Mixed-integer CMA-ES with margin correction.
//!
//! Discrete dimensions are described by a ladder of representable values;
//! sampling stays continuous, evaluation sees the encoded (nearest ladder
//! value) point, and after every update the marginal probability of
//! producing a different discrete value is kept above a margin `alpha`.

use nalgebra::DVector;
use statrs::function::erf::{erf, erf_inv};

use crate::engine::{CmaEs, CmaEsOptions, EvaluatedSolution, TerminationReason};
use crate::error::{CmaError, Result};

/// Standard normal CDF.
fn phi(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Standard normal density.
fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile, polished with one Newton step so the margin
/// it implies is tight to near machine precision.
fn phi_inv(p: f64) -> f64 {
    let x = std::f64::consts::SQRT_2 * erf_inv(2.0 * p - 1.0);
    if !x.is_finite() {
        return x;
    }
    let density = phi_pdf(x);
    if density > 0.0 {
        x - (phi(x) - p) / density
    } else {
        x
    }
}

/// Arithmetic ladder `lo, lo+step, ..., lo+(count-1)*step` with midpoint
/// thresholds between adjacent values.
#[derive(Debug, Clone, PartialEq)]
struct Ladder {
    lo: f64,
    step: f64,
    count: usize,
}

impl Ladder {
    fn value(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step
    }

    /// Nearest representable value; midpoint ties resolve to the lower one.
    fn nearest_value(&self, x: f64) -> f64 {
        let k = ((x - self.lo) / self.step - 0.5).ceil();
        let k = (k.max(0.0) as usize).min(self.count - 1);
        self.value(k)
    }

    /// Nearest of the `count - 1` midpoint thresholds.
    fn nearest_threshold(&self, x: f64) -> f64 {
        let k = ((x - self.lo) / self.step - 0.5).round();
        let k = (k.max(0.0) as usize).min(self.count - 2);
        self.lo + (k as f64 + 0.5) * self.step
    }
}

/// Per-dimension discretization: interval bounds plus a step of 0 for
/// continuous dimensions or a positive granularity for discrete ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationSpec {
    bounds: Vec<(f64, f64)>,
    steps: Vec<f64>,
    ladders: Vec<Option<Ladder>>,
}

impl DiscretizationSpec {
    /// `bounds` is one `(lo, hi)` row per dimension (`±inf` allowed on
    /// continuous rows); `steps` uses 0 for continuous dimensions.
    pub fn new(bounds: Vec<(f64, f64)>, steps: Vec<f64>) -> Result<Self> {
        if bounds.len() != steps.len() || bounds.is_empty() {
            return Err(CmaError::InvalidParam(
                "bounds and steps must have matching, nonzero dimension".into(),
            ));
        }
        let mut ladders = Vec::with_capacity(steps.len());
        for (i, (&(lo, hi), &step)) in bounds.iter().zip(steps.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() || !(lo < hi) {
                return Err(CmaError::InvalidParam(format!(
                    "bound {i} must satisfy lo < hi, got [{lo}, {hi}]"
                )));
            }
            if !(step >= 0.0) || !step.is_finite() {
                return Err(CmaError::InvalidParam(format!(
                    "step {i} must be finite and non-negative, got {step}"
                )));
            }
            if step == 0.0 {
                ladders.push(None);
                continue;
            }
            if !lo.is_finite() || !hi.is_finite() {
                return Err(CmaError::InvalidParam(format!(
                    "discrete dimension {i} needs finite bounds"
                )));
            }
            // Small relative slack so e.g. (hi-lo)/step = 2.9999999 still
            // yields three intervals.
            let count = ((hi - lo) / step * (1.0 + 1e-12)).floor() as usize + 1;
            if count < 2 {
                return Err(CmaError::InvalidParam(format!(
                    "discrete dimension {i} has fewer than 2 representable values"
                )));
            }
            ladders.push(Some(Ladder { lo, step, count }));
        }
        Ok(DiscretizationSpec {
            bounds,
            steps,
            ladders,
        })
    }

    /// All dimensions continuous and unbounded.
    pub fn all_continuous(dim: usize) -> Result<Self> {
        Self::new(
            vec![(f64::NEG_INFINITY, f64::INFINITY); dim],
            vec![0.0; dim],
        )
    }

    pub fn dim(&self) -> usize {
        self.steps.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn is_discrete(&self, i: usize) -> bool {
        self.ladders[i].is_some()
    }

    pub fn num_discrete(&self) -> usize {
        self.ladders.iter().filter(|l| l.is_some()).count()
    }

    /// Identity on continuous dimensions, nearest ladder value on discrete
    /// ones (ties toward the lower value).
    pub fn encode(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = x.clone();
        for (i, ladder) in self.ladders.iter().enumerate() {
            if let Some(l) = ladder {
                out[i] = l.nearest_value(x[i]);
            }
        }
        out
    }
}

/// Margin probability floor; defaults to `1 / (lambda * d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginConfig {
    pub alpha: f64,
}

impl MarginConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(CmaError::InvalidParam(format!(
                "margin alpha must be in (0, 0.5), got {alpha}"
            )));
        }
        Ok(MarginConfig { alpha })
    }

    pub fn default_for(lambda: usize, dim: usize) -> Self {
        MarginConfig {
            alpha: 1.0 / (lambda as f64 * dim as f64),
        }
    }
}

/// Mixed-integer optimizer: a core engine plus discretization and margin
/// correction.
#[derive(Debug, Clone)]
pub struct CmaWm {
    pub(crate) es: CmaEs,
    pub(crate) spec: DiscretizationSpec,
    pub(crate) alpha: f64,
}

impl CmaWm {
    /// Builds from core options; `margin = None` selects the default
    /// `1 / (lambda * d)`.
    pub fn new(
        options: CmaEsOptions,
        spec: DiscretizationSpec,
        margin: Option<MarginConfig>,
    ) -> Result<Self> {
        let es = options.build()?;
        if spec.dim() != es.dim() {
            return Err(CmaError::InvalidParam(format!(
                "discretization dim {} does not match mean dim {}",
                spec.dim(),
                es.dim()
            )));
        }
        let alpha = margin
            .unwrap_or_else(|| MarginConfig::default_for(es.population_size(), es.dim()))
            .alpha;
        MarginConfig::new(alpha)?;
        Ok(CmaWm { es, spec, alpha })
    }

    pub fn engine(&self) -> &CmaEs {
        &self.es
    }

    pub fn spec(&self) -> &DiscretizationSpec {
        &self.spec
    }

    pub fn margin_alpha(&self) -> f64 {
        self.alpha
    }

    pub fn population_size(&self) -> usize {
        self.es.population_size()
    }

    pub fn generation(&self) -> u64 {
        self.es.generation()
    }

    pub fn best(&self) -> Option<&EvaluatedSolution> {
        self.es.best()
    }

    pub fn should_stop(&mut self) -> Option<TerminationReason> {
        self.es.should_stop()
    }

    /// (min, max) eigenvalues of the current covariance matrix.
    pub fn eigenvalue_extremes(&mut self) -> Result<(f64, f64)> {
        self.es.eigenvalue_extremes()
    }

    /// Samples one candidate and returns `(x_eval, x_tell)`: the encoded
    /// point for evaluation and the raw point for `tell_wm`.
    pub fn ask_wm(&mut self) -> Result<(DVector<f64>, DVector<f64>)> {
        let x_tell = self.es.ask()?;
        let x_eval = self.spec.encode(&x_tell);
        Ok((x_eval, x_tell))
    }

    /// Core `tell` on the raw points followed by the per-dimension margin
    /// correction on every discrete dimension.
    pub fn tell_wm(&mut self, solutions: &[EvaluatedSolution]) -> Result<()> {
        self.es.tell(solutions)?;
        self.apply_margin();
        Ok(())
    }

    /// Enforces `P(sample crosses the nearest threshold) >= alpha` on each
    /// discrete marginal `N(m_j, sigma^2 C_jj)`.
    ///
    /// The mean is translated toward the nearest threshold at fixed
    /// variance; when the marginal is too degenerate for a translation to
    /// be representable, the mean is pinned and `C_jj` is inflated instead.
    pub(crate) fn apply_margin(&mut self) {
        let q = phi_inv(1.0 - self.alpha);
        let sigma = self.es.sigma;
        let mut cov_touched = false;
        for (j, ladder) in self.spec.ladders.iter().enumerate() {
            let Some(l) = ladder else { continue };
            let m_j = self.es.mean[j];
            let s = sigma * self.es.cov[(j, j)].max(0.0).sqrt();
            let t = l.nearest_threshold(m_j);
            let dist = (m_j - t).abs();
            let p_out = if s > 0.0 { phi(-dist / s) } else { 0.0 };
            if p_out >= self.alpha || dist == 0.0 {
                continue;
            }
            let sign = (m_j - t).signum();
            let mut translated = t + sign * q * s;
            // Quantization at t's magnitude can overshoot q*s and push the
            // crossing probability back below alpha; err toward t instead.
            while (translated - t).abs() > q * s {
                translated = if translated > t {
                    translated.next_down()
                } else {
                    translated.next_up()
                };
            }
            if s > 0.0 && translated != t {
                self.es.mean[j] = translated;
            } else {
                let new_cjj = (dist / (q * sigma)).powi(2);
                if new_cjj.is_finite() && new_cjj > self.es.cov[(j, j)] {
                    self.es.cov[(j, j)] = new_cjj;
                    cov_touched = true;
                }
            }
        }
        if cov_touched {
            self.es.eigen_fresh = false;
        }
    }

    /// Per-dimension threshold-crossing probability (`None` on continuous
    /// dimensions).
    pub fn crossing_probabilities(&self) -> Vec<Option<f64>> {
        let sigma = self.es.sigma;
        self.spec
            .ladders
            .iter()
            .enumerate()
            .map(|(j, ladder)| {
                ladder.as_ref().map(|l| {
                    let s = sigma * self.es.cov[(j, j)].max(0.0).sqrt();
                    let dist = (self.es.mean[j] - l.nearest_threshold(self.es.mean[j])).abs();
                    if s > 0.0 {
                        phi(-dist / s)
                    } else if dist == 0.0 {
                        0.5
                    } else {
                        0.0
                    }
                })
            })
            .collect()
    }
}

/// Ellipsoid on the first `d_co` entries plus OneMax on the last `d_bi`:
/// `sum_j (1000^((j-1)/(d_co-1)) x_j)^2 + d_bi - sum_k x_k`.
pub fn ellipsoid_onemax(x: &DVector<f64>, d_co: usize, d_bi: usize) -> f64 {
    assert_eq!(x.len(), d_co + d_bi, "dimension must be d_co + d_bi");
    let mut v = 0.0;
    for j in 0..d_co {
        let coeff = if d_co > 1 {
            1000f64.powf(j as f64 / (d_co as f64 - 1.0))
        } else {
            1.0
        };
        v += (coeff * x[j]).powi(2);
    }
    v += d_bi as f64;
    for k in d_co..d_co + d_bi {
        v -= x[k];
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::CmaEs;

    fn binary_spec(d_co: usize, d_bi: usize) -> DiscretizationSpec {
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); d_co];
        bounds.extend(vec![(0.0, 1.0); d_bi]);
        let mut steps = vec![0.0; d_co];
        steps.extend(vec![1.0; d_bi]);
        DiscretizationSpec::new(bounds, steps).unwrap()
    }

    #[test]
    fn encode_binary_indicator_at_half() {
        let spec = binary_spec(0, 1);
        let enc = |v: f64| spec.encode(&DVector::from_vec(vec![v]))[0];
        assert_eq!(enc(0.3), 0.0);
        assert_eq!(enc(0.7), 1.0);
        // Ties go to the lower value, i.e. the indicator is x > 0.5.
        assert_eq!(enc(0.5), 0.0);
        assert_eq!(enc(-3.0), 0.0);
        assert_eq!(enc(9.0), 1.0);
    }

    #[test]
    fn encode_integer_ladder() {
        let spec = DiscretizationSpec::new(vec![(-1.0, 2.0)], vec![1.0]).unwrap();
        let enc = |v: f64| spec.encode(&DVector::from_vec(vec![v]))[0];
        assert_eq!(enc(0.49), 0.0);
        assert_eq!(enc(1.51), 2.0);
        assert_eq!(enc(-0.51), -1.0);
        assert_eq!(enc(100.0), 2.0);
    }

    #[test]
    fn encode_is_identity_on_continuous() {
        let spec = binary_spec(2, 1);
        let x = DVector::from_vec(vec![1.234, -9.9, 0.9]);
        let e = spec.encode(&x);
        assert_eq!(e[0], 1.234);
        assert_eq!(e[1], -9.9);
        assert_eq!(e[2], 1.0);
    }

    #[test]
    fn spec_rejects_degenerate_ladders() {
        // Fewer than two representable values.
        assert!(DiscretizationSpec::new(vec![(0.0, 0.5)], vec![1.0]).is_err());
        // Discrete with infinite bounds.
        assert!(DiscretizationSpec::new(vec![(0.0, f64::INFINITY)], vec![1.0]).is_err());
        // Negative step.
        assert!(DiscretizationSpec::new(vec![(0.0, 1.0)], vec![-1.0]).is_err());
        // Inverted bounds.
        assert!(DiscretizationSpec::new(vec![(2.0, 1.0)], vec![0.0]).is_err());
    }

    #[test]
    fn thresholds_at_midpoints() {
        let l = Ladder { lo: -1.0, step: 1.0, count: 4 }; // {-1,0,1,2}
        assert_eq!(l.nearest_threshold(-0.7), -0.5);
        assert_eq!(l.nearest_threshold(0.9), 0.5);
        assert_eq!(l.nearest_threshold(5.0), 1.5);
        assert_eq!(l.nearest_threshold(-5.0), -0.5);
    }

    #[test]
    fn phi_and_quantile_are_inverse() {
        for &p in &[1e-6, 1e-3, 0.1, 0.25, 0.49] {
            let x = phi_inv(p);
            assert!(((phi(x) - p) / p).abs() < 1e-6, "p = {p}, phi = {}", phi(x));
        }
        assert!((phi(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn margin_correction_restores_alpha_tail() {
        // m far from 0.5 with tiny variance: correction must land the
        // crossing probability exactly on alpha.
        let spec = binary_spec(0, 2);
        let opts = CmaEs::options(vec![0.999999, 0.2], 1.0);
        let mut wm = CmaWm::new(opts, spec, Some(MarginConfig::new(0.01).unwrap())).unwrap();
        wm.es.sigma = 1e-9;
        wm.apply_margin();
        for p in wm.crossing_probabilities() {
            let p = p.unwrap();
            assert!((p - 0.01).abs() < 1e-6, "p = {p}");
        }
        // The mean stayed on its own side of the threshold.
        assert!(wm.es.mean[0] > 0.5);
        assert!(wm.es.mean[1] < 0.5);
    }

    #[test]
    fn no_correction_when_margin_already_met() {
        let spec = binary_spec(0, 1);
        let opts = CmaEs::options(vec![0.5], 1.0);
        let mut wm = CmaWm::new(opts, spec, Some(MarginConfig::new(0.05).unwrap())).unwrap();
        let before = wm.es.mean[0];
        wm.apply_margin();
        assert_eq!(wm.es.mean[0], before);
        assert_eq!(wm.crossing_probabilities()[0], Some(0.5));
    }

    #[test]
    fn degenerate_variance_inflates_cjj() {
        let spec = binary_spec(0, 1);
        let opts = CmaEs::options(vec![0.9], 1.0);
        let mut wm = CmaWm::new(opts, spec, Some(MarginConfig::new(0.01).unwrap())).unwrap();
        wm.es.cov[(0, 0)] = 0.0;
        wm.apply_margin();
        assert!(wm.es.cov[(0, 0)] > 0.0);
        let p = wm.crossing_probabilities()[0].unwrap();
        assert!((p - 0.01).abs() < 1e-9, "p = {p}");
    }

    #[test]
    fn all_continuous_matches_vanilla_bitwise() {
        let mut vanilla = CmaEs::options(vec![1.0, -1.0], 1.5).seed(42).build().unwrap();
        let spec = DiscretizationSpec::all_continuous(2).unwrap();
        let mut wm = CmaWm::new(
            CmaEs::options(vec![1.0, -1.0], 1.5).seed(42),
            spec,
            None,
        )
        .unwrap();
        for _ in 0..10 {
            let mut sols_v = Vec::new();
            let mut sols_w = Vec::new();
            for _ in 0..vanilla.population_size() {
                let xv = vanilla.ask().unwrap();
                let (xe, xt) = wm.ask_wm().unwrap();
                assert_eq!(xe, xt);
                assert_eq!(xv, xt);
                let v = xv.norm_squared();
                sols_v.push(EvaluatedSolution::new(xv, v));
                sols_w.push(EvaluatedSolution::new(xt, v));
            }
            vanilla.tell(&sols_v).unwrap();
            wm.tell_wm(&sols_w).unwrap();
            assert_eq!(vanilla.mean(), wm.engine().mean());
            assert_eq!(vanilla.sigma(), wm.engine().sigma());
            assert_eq!(vanilla.cov(), wm.engine().cov());
        }
    }

    #[test]
    fn margin_holds_during_optimization() {
        let d_co = 2;
        let d_bi = 3;
        let spec = binary_spec(d_co, d_bi);
        let mut wm = CmaWm::new(
            CmaEs::options(vec![0.5; 5], 1.0).seed(6),
            spec,
            None,
        )
        .unwrap();
        let alpha = wm.margin_alpha();
        for _ in 0..200 {
            let mut sols = Vec::new();
            for _ in 0..wm.population_size() {
                let (xe, xt) = wm.ask_wm().unwrap();
                let v = ellipsoid_onemax(&xe, d_co, d_bi);
                sols.push(EvaluatedSolution::new(xt, v));
            }
            wm.tell_wm(&sols).unwrap();
            for p in wm.crossing_probabilities().into_iter().flatten() {
                assert!(p >= alpha - 1e-9, "p = {p}, alpha = {alpha}");
            }
        }
    }

    #[test]
    fn ellipsoid_onemax_values() {
        // Global optimum: continuous part at 0, binary part all ones.
        let x = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(ellipsoid_onemax(&x, 2, 2), 0.0);
        // Hand evaluation: 1^2 + 1000^2 + (2 - 1).
        let x = DVector::from_vec(vec![1.0, 1.0, 1.0, 0.0]);
        assert_eq!(ellipsoid_onemax(&x, 2, 2), 1_000_002.0);
        // OneMax worst case.
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]);
        assert_eq!(ellipsoid_onemax(&x, 2, 2), 2.0);
    }

    #[test]
    fn default_alpha_is_one_over_lambda_d() {
        let spec = binary_spec(1, 1);
        let wm = CmaWm::new(
            CmaEs::options(vec![0.0, 0.5], 1.0).population_size(10),
            spec,
            None,
        )
        .unwrap();
        assert!((wm.margin_alpha() - 1.0 / 20.0).abs() < 1e-15);
    }
}

