//! Strategy constants and their default scheme.

use nalgebra::DVector;

use crate::error::{CmaError, Result};

/// All strategy constants of the engine.
///
/// The defaults follow the standard active-CMA scheme: log-linear raw
/// weights, positive part normalized to sum one, negative tail rescaled so
/// the covariance stays positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub dim: usize,
    /// Population size, at least 2.
    pub lambda: usize,
    /// Parent number, at most `lambda`.
    pub mu: usize,
    /// Recombination weights for all `lambda` ranks. Positive and summing
    /// to one for the first `mu`, non-positive afterwards.
    pub weights: DVector<f64>,
    /// Variance-effective selection mass, `1 / sum_{i<=mu} w_i^2`.
    pub mu_w: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub c_m: f64,
}

/// Default population size, `4 + floor(3 ln d)`.
pub fn default_population_size(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

/// Closed-form approximation of `E[||N(0, I_d)||]`:
/// `sqrt(d) * (1 - 1/(4d) + 1/(21 d^2))`.
pub fn expected_norm(dim: usize) -> f64 {
    let d = dim as f64;
    d.sqrt() * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d))
}

impl HyperParams {
    /// Builds the default constants for `dim`, optionally overriding the
    /// population size.
    pub fn default_for(dim: usize, lambda: Option<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(CmaError::InvalidParam("dim must be >= 1".into()));
        }
        let lambda = match lambda {
            Some(l) if l < 2 => {
                return Err(CmaError::InvalidParam(format!(
                    "population size must be >= 2, got {l}"
                )))
            }
            Some(l) => l,
            None => default_population_size(dim),
        };
        let d = dim as f64;
        let mu = lambda / 2;

        // Raw log-linear weights: w'_i = ln((lambda+1)/2) - ln(i).
        let raw: Vec<f64> = (1..=lambda)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let sum_pos: f64 = raw[..mu].iter().sum();
        let sum_pos_sq: f64 = raw[..mu].iter().map(|w| w * w).sum();
        let mu_w = sum_pos * sum_pos / sum_pos_sq;

        let c_sigma = (mu_w + 2.0) / (d + mu_w + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_w - 1.0) / (d + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_w / d) / (d + 4.0 + 2.0 * mu_w / d);
        let c_1 = 2.0 / ((d + 1.3).powi(2) + mu_w);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_w - 2.0 + 1.0 / mu_w) / ((d + 2.0).powi(2) + mu_w));
        let c_m = 1.0;

        let mut weights = DVector::zeros(lambda);
        for i in 0..mu {
            weights[i] = raw[i] / sum_pos;
        }
        // Negative tail scaled by the smallest of the standard admissible
        // multipliers (keeps c_1 + c_mu * sum|w^-| within the stability
        // region of the rank-mu update).
        let sum_neg_abs: f64 = raw[mu..].iter().map(|w| w.abs()).sum();
        if sum_neg_abs > 0.0 {
            let sum_neg: f64 = raw[mu..].iter().sum();
            let sum_neg_sq: f64 = raw[mu..].iter().map(|w| w * w).sum();
            let mu_w_minus = sum_neg * sum_neg / sum_neg_sq;
            let alpha_mu_eff = 1.0 + 2.0 * mu_w_minus / (mu_w + 2.0);
            let mut scale = alpha_mu_eff;
            if c_mu > 0.0 {
                scale = scale
                    .min(1.0 + c_1 / c_mu)
                    .min((1.0 - c_1 - c_mu) / (d * c_mu));
            }
            for i in mu..lambda {
                weights[i] = scale * raw[i] / sum_neg_abs;
            }
        }

        let hp = HyperParams {
            dim,
            lambda,
            mu,
            weights,
            mu_w,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            c_m,
        };
        hp.validate()?;
        Ok(hp)
    }

    /// Checks every structural invariant; used at construction and when a
    /// caller supplies hand-edited constants.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CmaError::InvalidParam(msg));
        if self.dim == 0 {
            return fail("dim must be >= 1".into());
        }
        if self.lambda < 2 {
            return fail(format!("lambda must be >= 2, got {}", self.lambda));
        }
        if self.mu == 0 || self.mu > self.lambda {
            return fail(format!("mu must be in 1..=lambda, got {}", self.mu));
        }
        if self.weights.len() != self.lambda {
            return fail(format!(
                "weights length {} does not match lambda {}",
                self.weights.len(),
                self.lambda
            ));
        }
        let sum_pos: f64 = self.weights.iter().take(self.mu).sum();
        if (sum_pos - 1.0).abs() > 1e-12 {
            return fail(format!("positive weights must sum to 1, got {sum_pos}"));
        }
        for i in 0..self.mu {
            if self.weights[i] <= 0.0 {
                return fail(format!("weight {} must be positive", i + 1));
            }
            if i > 0 && self.weights[i] > self.weights[i - 1] {
                return fail("weights must be non-increasing".into());
            }
        }
        for i in self.mu..self.lambda {
            if self.weights[i] > 0.0 {
                return fail(format!("weight {} must be non-positive", i + 1));
            }
        }
        let sq_sum: f64 = self.weights.iter().take(self.mu).map(|w| w * w).sum();
        if (self.mu_w - 1.0 / sq_sum).abs() > 1e-12 * self.mu_w.max(1.0) {
            return fail(format!(
                "mu_w = {} inconsistent with weights (expected {})",
                self.mu_w,
                1.0 / sq_sum
            ));
        }
        if !(self.c_sigma > 0.0 && self.c_sigma <= 1.0) {
            return fail(format!("c_sigma must be in (0, 1], got {}", self.c_sigma));
        }
        if !(self.c_c > 0.0 && self.c_c <= 1.0) {
            return fail(format!("c_c must be in (0, 1], got {}", self.c_c));
        }
        if !(self.c_1 >= 0.0 && self.c_mu >= 0.0) {
            return fail("c_1 and c_mu must be non-negative".into());
        }
        let pos_sum: f64 = self.weights.iter().map(|w| w.max(0.0)).sum();
        if self.c_1 + self.c_mu * pos_sum > 1.0 + 1e-12 {
            return fail("c_1 + c_mu * sum(max(w_i, 0)) must be <= 1".into());
        }
        if !(self.d_sigma >= 1.0) {
            return fail(format!("d_sigma must be >= 1, got {}", self.d_sigma));
        }
        if !(self.c_m.is_finite() && self.c_m > 0.0) {
            return fail(format!("c_m must be positive, got {}", self.c_m));
        }
        Ok(())
    }
}
