//! Independent straight-line reference implementation of the CMA-ES update
//! equations, written naively (explicit loops, no shared code with the
//! library's engine) for oracle comparisons.

use cmaes::HyperParams;
use nalgebra::{DMatrix, DVector};

pub struct RefState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub generation: u64,
}

impl RefState {
    pub fn new(mean: Vec<f64>, sigma: f64) -> Self {
        let d = mean.len();
        RefState {
            mean: DVector::from_vec(mean),
            sigma,
            cov: DMatrix::identity(d, d),
            p_sigma: DVector::zeros(d),
            p_c: DVector::zeros(d),
            generation: 0,
        }
    }
}

fn expected_norm(d: f64) -> f64 {
    d.sqrt() * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d))
}

/// `C^{-1/2}` through a fresh eigendecomposition each call.
fn inv_sqrt(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    let eig = nalgebra::SymmetricEigen::new(0.5 * (cov + cov.transpose()));
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += eig.eigenvectors[(i, k)] * eig.eigenvectors[(j, k)]
                    / eig.eigenvalues[k].sqrt();
            }
            m[(i, j)] = acc;
        }
    }
    m
}

/// One generation of the update equations, straight off the printed steps:
/// rank solutions, recombine, update both paths, step-size and covariance.
pub fn ref_tell(state: &mut RefState, hp: &HyperParams, solutions: &[(DVector<f64>, f64)]) {
    let d = hp.dim;
    let lambda = hp.lambda;
    assert_eq!(solutions.len(), lambda);

    let mut order: Vec<usize> = (0..lambda).collect();
    order.sort_by(|&a, &b| solutions[a].1.total_cmp(&solutions[b].1));

    // y_{i:lambda} = (x_{i:lambda} - m) / sigma
    let mut ys: Vec<DVector<f64>> = Vec::with_capacity(lambda);
    for &idx in &order {
        ys.push((&solutions[idx].0 - &state.mean) / state.sigma);
    }
    // dy = sum_{i=1}^{mu} w_i y_{i:lambda}
    let mut dy: DVector<f64> = DVector::zeros(d);
    for i in 0..hp.mu {
        for k in 0..d {
            dy[k] += hp.weights[i] * ys[i][k];
        }
    }

    let c_inv_sqrt = inv_sqrt(&state.cov);
    let e_norm = expected_norm(d as f64);

    // p_sigma' = (1 - c_sigma) p_sigma
    //            + sqrt(c_sigma (2 - c_sigma) mu_w) C^{-1/2} dy
    let mut p_sigma_new: DVector<f64> = DVector::zeros(d);
    let cs_coeff = (hp.c_sigma * (2.0 - hp.c_sigma) * hp.mu_w).sqrt();
    for k in 0..d {
        let mut white = 0.0;
        for l in 0..d {
            white += c_inv_sqrt[(k, l)] * dy[l];
        }
        p_sigma_new[k] = (1.0 - hp.c_sigma) * state.p_sigma[k] + cs_coeff * white;
    }

    // Heaviside gate.
    let g1 = (state.generation + 1) as f64;
    let denom = (1.0 - (1.0 - hp.c_sigma).powf(2.0 * g1)).sqrt() * e_norm;
    let h_sigma = if p_sigma_new.norm() / denom < 1.4 + 2.0 / (d as f64 + 1.0) {
        1.0
    } else {
        0.0
    };

    // p_c' = (1 - c_c) p_c + h_sigma sqrt(c_c (2 - c_c) mu_w) dy
    let cc_coeff = (hp.c_c * (2.0 - hp.c_c) * hp.mu_w).sqrt();
    let mut p_c_new: DVector<f64> = DVector::zeros(d);
    for k in 0..d {
        p_c_new[k] = (1.0 - hp.c_c) * state.p_c[k] + h_sigma * cc_coeff * dy[k];
    }

    // m' = m + c_m sigma dy
    let mut mean_new = state.mean.clone();
    for k in 0..d {
        mean_new[k] += hp.c_m * state.sigma * dy[k];
    }

    // sigma' = sigma exp((c_sigma / d_sigma)(||p_sigma'|| / E||N|| - 1))
    let sigma_new =
        state.sigma * ((hp.c_sigma / hp.d_sigma) * (p_sigma_new.norm() / e_norm - 1.0)).exp();

    // C' = (1 + (1 - h_sigma) c_1 c_c (2 - c_c)) C
    //      + c_1 [p_c' p_c'^T - C]
    //      + c_mu sum_i [w_i^o y_i y_i^T - w_i C]
    let lead = 1.0 + (1.0 - h_sigma) * hp.c_1 * hp.c_c * (2.0 - hp.c_c);
    let mut cov_new: DMatrix<f64> = DMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            let mut v = lead * state.cov[(r, c)];
            v += hp.c_1 * (p_c_new[r] * p_c_new[c] - state.cov[(r, c)]);
            let mut rank_mu = 0.0;
            for i in 0..lambda {
                let w = hp.weights[i];
                let wo = if w >= 0.0 {
                    w
                } else {
                    let mut n2 = 0.0;
                    for k in 0..d {
                        let mut white = 0.0;
                        for l in 0..d {
                            white += c_inv_sqrt[(k, l)] * ys[i][l];
                        }
                        n2 += white * white;
                    }
                    if n2 == 0.0 {
                        // a zero step carries no direction information
                        rank_mu -= w * state.cov[(r, c)];
                        continue;
                    }
                    w * d as f64 / n2
                };
                rank_mu += wo * ys[i][r] * ys[i][c] - w * state.cov[(r, c)];
            }
            v += hp.c_mu * rank_mu;
            cov_new[(r, c)] = v;
        }
    }
    cov_new = 0.5 * (&cov_new + cov_new.transpose());

    state.mean = mean_new;
    state.sigma = sigma_new;
    state.cov = cov_new;
    state.p_sigma = p_sigma_new;
    state.p_c = p_c_new;
    state.generation += 1;
}
