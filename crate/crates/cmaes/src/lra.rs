//! Learning-rate adaptation keeping the signal-to-noise ratio of the
//! parameter updates near a target.
//!
//! Each generation the raw mean and covariance updates are scaled by
//! multipliers `eta_mean` and `eta_sigma` before being applied. The SNR of
//! the applied updates is estimated from exponential moving averages in a
//! whitened coordinate system, and each multiplier is nudged toward the
//! point where the estimated SNR equals `alpha * eta`.

use nalgebra::{DMatrix, DVector};

/// State of the learning-rate adaptation, enabled via `lr_adapt`.
#[derive(Debug, Clone, PartialEq)]
pub struct LraState {
    /// Multiplier for the mean update, in (0, 1].
    pub eta_mean: f64,
    /// Multiplier for the joint step-size/covariance update, in (0, 1].
    pub eta_sigma: f64,
    pub(crate) alpha: f64,
    pub(crate) beta_mean: f64,
    pub(crate) beta_sigma: f64,
    pub(crate) gamma: f64,
    pub(crate) e_mean: DVector<f64>,
    pub(crate) v_mean: f64,
    /// EMA of the whitened covariance delta, flattened d*d.
    pub(crate) e_sigma: DVector<f64>,
    pub(crate) v_sigma: f64,
}

pub(crate) const LRA_ALPHA: f64 = 1.4;
pub(crate) const LRA_BETA_MEAN: f64 = 0.1;
pub(crate) const LRA_BETA_SIGMA: f64 = 0.03;
pub(crate) const LRA_GAMMA: f64 = 0.1;

impl LraState {
    pub(crate) fn new(dim: usize) -> Self {
        LraState {
            eta_mean: 1.0,
            eta_sigma: 1.0,
            alpha: LRA_ALPHA,
            beta_mean: LRA_BETA_MEAN,
            beta_sigma: LRA_BETA_SIGMA,
            gamma: LRA_GAMMA,
            e_mean: DVector::zeros(dim),
            v_mean: 0.0,
            e_sigma: DVector::zeros(dim * dim),
            v_sigma: 0.0,
        }
    }

    /// Interpolates between the old parameters and the raw candidate
    /// updates. `eta == 1` applies the candidates bit-exactly.
    pub(crate) fn scaled_updates(
        &self,
        old_mean: &DVector<f64>,
        old_sigma: f64,
        old_cov: &DMatrix<f64>,
        mean_cand: DVector<f64>,
        sigma_cand: f64,
        cov_cand: DMatrix<f64>,
    ) -> (DVector<f64>, f64, DMatrix<f64>) {
        let mean = if self.eta_mean == 1.0 {
            mean_cand
        } else {
            old_mean + self.eta_mean * (mean_cand - old_mean)
        };
        let (sigma, cov) = if self.eta_sigma == 1.0 {
            (sigma_cand, cov_cand)
        } else {
            let sigma = old_sigma * (sigma_cand / old_sigma).powf(self.eta_sigma);
            let cov = old_cov + self.eta_sigma * (cov_cand - old_cov);
            (sigma, cov)
        };
        (mean, sigma, cov)
    }

    /// Feeds the applied one-generation deltas into the moving averages and
    /// updates both multipliers.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn observe(
        &mut self,
        old_mean: &DVector<f64>,
        old_sigma: f64,
        old_cov: &DMatrix<f64>,
        c_inv_sqrt: &DMatrix<f64>,
        new_mean: &DVector<f64>,
        new_sigma: f64,
        new_cov: &DMatrix<f64>,
    ) {
        // Local (whitened) coordinates make the SNR scale-free.
        let delta_mean = c_inv_sqrt * ((new_mean - old_mean) / old_sigma);

        let sigma_mat_new = new_cov * (new_sigma * new_sigma);
        let sigma_mat_old = old_cov * (old_sigma * old_sigma);
        let inv_sqrt_big = c_inv_sqrt / old_sigma;
        let whitened =
            (&inv_sqrt_big * (sigma_mat_new - sigma_mat_old) * &inv_sqrt_big) / 2f64.sqrt();
        let delta_sigma = DVector::from_iterator(whitened.len(), whitened.iter().copied());

        if delta_mean.iter().any(|v| !v.is_finite()) || delta_sigma.iter().any(|v| !v.is_finite())
        {
            return;
        }

        self.e_mean = (1.0 - self.beta_mean) * &self.e_mean + self.beta_mean * &delta_mean;
        self.v_mean =
            (1.0 - self.beta_mean) * self.v_mean + self.beta_mean * delta_mean.norm_squared();
        self.e_sigma = (1.0 - self.beta_sigma) * &self.e_sigma + self.beta_sigma * &delta_sigma;
        self.v_sigma =
            (1.0 - self.beta_sigma) * self.v_sigma + self.beta_sigma * delta_sigma.norm_squared();

        self.eta_mean = updated_eta(
            self.eta_mean,
            snr_estimate(self.e_mean.norm_squared(), self.v_mean, self.beta_mean),
            self.alpha,
            self.beta_mean,
            self.gamma,
        );
        self.eta_sigma = updated_eta(
            self.eta_sigma,
            snr_estimate(self.e_sigma.norm_squared(), self.v_sigma, self.beta_sigma),
            self.alpha,
            self.beta_sigma,
            self.gamma,
        );
    }
}

/// Bias-corrected SNR estimate from the EMA pair. Returns `None` when the
/// variance estimate is degenerate (denominator <= 0).
pub(crate) fn snr_estimate(sqnorm_e: f64, v: f64, beta: f64) -> Option<f64> {
    let denom = v - sqnorm_e;
    if !(denom > 0.0) || !denom.is_finite() {
        return None;
    }
    let snr = (sqnorm_e - beta / (2.0 - beta) * v) / denom;
    snr.is_finite().then_some(snr)
}

/// Multiplicative pursuit of `snr == alpha * eta`, clamped to (0, 1].
pub(crate) fn updated_eta(eta: f64, snr: Option<f64>, alpha: f64, beta: f64, gamma: f64) -> f64 {
    let Some(snr) = snr else { return eta };
    let relative = (snr / (alpha * eta) - 1.0).clamp(-1.0, 1.0);
    let eta = eta * ((gamma * eta).min(beta) * relative).exp();
    eta.min(1.0)
}
