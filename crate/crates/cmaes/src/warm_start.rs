//! Warm starting: estimate a promising multivariate Gaussian from evaluated
//! solutions of a related task and use it as the initial distribution.

use nalgebra::{DMatrix, DVector};

use crate::engine::EvaluatedSolution;
use crate::error::{CmaError, Result};

/// Evaluated solutions collected on a source task.
#[derive(Debug, Clone, Default)]
pub struct SourceArchive {
    solutions: Vec<EvaluatedSolution>,
}

impl SourceArchive {
    pub fn new() -> Self {
        SourceArchive { solutions: Vec::new() }
    }

    pub fn push(&mut self, x: DVector<f64>, value: f64) {
        self.solutions.push(EvaluatedSolution::new(x, value));
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    pub fn solutions(&self) -> &[EvaluatedSolution] {
        &self.solutions
    }
}

/// Warm-start distribution: `(mean, sigma, cov)` ready to seed the engine.
#[derive(Debug, Clone)]
pub struct WarmStartMgd {
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
}

/// Estimates a promising Gaussian from the top `gamma` fraction of the
/// archive.
///
/// The covariance is the empirical covariance of the selected points plus
/// an isotropic floor `(alpha * l)^2 I`, where `l` is the diagonal of the
/// selected points' bounding box. The result is split into a step-size
/// `sigma = det(Sigma)^(1/2d)` and a shape matrix `C = Sigma / sigma^2`
/// with unit determinant, matching the engine's parameterization.
pub fn get_warm_start_mgd(
    archive: &SourceArchive,
    gamma: f64,
    alpha: f64,
) -> Result<WarmStartMgd> {
    if archive.is_empty() {
        return Err(CmaError::InvalidParam(
            "warm start needs at least one source solution".into(),
        ));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(CmaError::InvalidParam(format!(
            "gamma must be in (0, 1], got {gamma}"
        )));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(CmaError::InvalidParam(format!(
            "alpha must be non-negative and finite, got {alpha}"
        )));
    }
    let dim = archive.solutions[0].x.len();
    for (i, s) in archive.solutions.iter().enumerate() {
        if s.x.len() != dim {
            return Err(CmaError::InvalidParam(format!(
                "source solution {i} has dimension {}, expected {dim}",
                s.x.len()
            )));
        }
        if !s.value.is_finite() || s.x.iter().any(|v| !v.is_finite()) {
            return Err(CmaError::InvalidParam(format!(
                "source solution {i} contains non-finite data"
            )));
        }
    }

    let n = archive.len();
    let k = ((gamma * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        archive.solutions[a]
            .value
            .total_cmp(&archive.solutions[b].value)
    });
    let elite: Vec<&DVector<f64>> = order[..k].iter().map(|&i| &archive.solutions[i].x).collect();

    let mut mean = DVector::zeros(dim);
    for x in &elite {
        mean += *x;
    }
    mean /= k as f64;

    // Bounding-box diagonal of the elites sets the isotropic floor scale.
    let mut lo = elite[0].clone();
    let mut hi = elite[0].clone();
    for x in &elite[1..] {
        for j in 0..dim {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    let diag_len = (&hi - &lo).norm();
    let floor = (alpha * diag_len).max(1e-8);

    let mut sigma_mat = DMatrix::zeros(dim, dim);
    for x in &elite {
        let d = *x - &mean;
        sigma_mat.ger(1.0 / k as f64, &d, &d, 1.0);
    }
    for j in 0..dim {
        sigma_mat[(j, j)] += floor * floor;
    }

    // sigma = det(Sigma)^(1/2d), computed from the eigenvalue logs so that
    // very small or very large determinants stay finite.
    let eig = nalgebra::SymmetricEigen::new(sigma_mat.clone());
    let mut log_det = 0.0;
    for &v in eig.eigenvalues.iter() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CmaError::InvalidParam(
                "estimated covariance is not positive definite".into(),
            ));
        }
        log_det += v.ln();
    }
    let sigma = (log_det / (2.0 * dim as f64)).exp();
    let cov = sigma_mat / (sigma * sigma);

    Ok(WarmStartMgd {
        mean: mean.iter().copied().collect(),
        sigma,
        cov,
    })
}
