//! Benchmark function registry.

use anyhow::{anyhow, bail, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FUNCTION_NAMES: &[&str] = &[
    "quadratic",
    "sphere",
    "ellipsoid",
    "rot-ellipsoid",
    "rastrigin",
    "noisy-sphere",
    "ellipsoid-onemax",
];

#[derive(Debug)]
enum Kind {
    /// `(x1 - 3)^2 + (10 (x2 + 2))^2`, 2-D.
    Quadratic,
    Sphere,
    Ellipsoid,
    /// 2-D ellipsoid evaluated after rotating the input by pi/6.
    RotatedEllipsoid { rot: DMatrix<f64> },
    Rastrigin,
    /// Sphere plus additive Gaussian observation noise from a dedicated
    /// noise RNG (independent of the sampler's RNG).
    NoisySphere { noise_sigma: f64, rng: ChaCha20Rng },
    /// Ellipsoid on the first half, OneMax on the (binary) second half.
    EllipsoidOneMax { d_co: usize, d_bi: usize },
}

#[derive(Debug)]
pub struct BenchmarkFunction {
    pub name: String,
    pub dim: usize,
    /// Known global optimum value.
    pub optimum_value: f64,
    /// Known optimum location when one exists in closed form.
    pub optimum: Option<DVector<f64>>,
    kind: Kind,
}

pub fn rotation_2d(angle: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()])
}

/// General ellipsoid coefficients: `1000^((j-1)/(d-1))`; the 2-D case uses
/// the classic `(1, 10)` pair instead.
fn ellipsoid_value(x: &DVector<f64>) -> f64 {
    let d = x.len();
    if d == 2 {
        return x[0].powi(2) + (10.0 * x[1]).powi(2);
    }
    (0..d)
        .map(|j| {
            let c = if d > 1 {
                1000f64.powf(j as f64 / (d as f64 - 1.0))
            } else {
                1.0
            };
            (c * x[j]).powi(2)
        })
        .sum()
}

pub fn rastrigin(x: &DVector<f64>) -> f64 {
    10.0 * x.len() as f64
        + x.iter()
            .map(|&v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
            .sum::<f64>()
}

impl BenchmarkFunction {
    /// Looks a function up by name. `noise_seed` feeds the noisy-sphere
    /// observation noise and is ignored elsewhere.
    pub fn by_name(name: &str, dim: usize, noise_seed: u64) -> Result<Self> {
        if dim == 0 {
            bail!("dimension must be >= 1");
        }
        let f = match name {
            "quadratic" => {
                if dim != 2 {
                    bail!("quadratic is 2-D only");
                }
                BenchmarkFunction {
                    name: name.into(),
                    dim,
                    optimum_value: 0.0,
                    optimum: Some(DVector::from_vec(vec![3.0, -2.0])),
                    kind: Kind::Quadratic,
                }
            }
            "sphere" => BenchmarkFunction {
                name: name.into(),
                dim,
                optimum_value: 0.0,
                optimum: Some(DVector::zeros(dim)),
                kind: Kind::Sphere,
            },
            "ellipsoid" => BenchmarkFunction {
                name: name.into(),
                dim,
                optimum_value: 0.0,
                optimum: Some(DVector::zeros(dim)),
                kind: Kind::Ellipsoid,
            },
            "rot-ellipsoid" => {
                if dim != 2 {
                    bail!("rot-ellipsoid is 2-D only");
                }
                BenchmarkFunction {
                    name: name.into(),
                    dim,
                    optimum_value: 0.0,
                    optimum: Some(DVector::zeros(2)),
                    kind: Kind::RotatedEllipsoid {
                        rot: rotation_2d(std::f64::consts::FRAC_PI_6),
                    },
                }
            }
            "rastrigin" => BenchmarkFunction {
                name: name.into(),
                dim,
                optimum_value: 0.0,
                optimum: Some(DVector::zeros(dim)),
                kind: Kind::Rastrigin,
            },
            "noisy-sphere" => BenchmarkFunction {
                name: name.into(),
                dim,
                optimum_value: 0.0,
                optimum: Some(DVector::zeros(dim)),
                kind: Kind::NoisySphere {
                    noise_sigma: 1.0,
                    rng: ChaCha20Rng::seed_from_u64(noise_seed),
                },
            },
            "ellipsoid-onemax" => {
                let d_co = dim / 2;
                let d_bi = dim - d_co;
                if d_co == 0 {
                    bail!("ellipsoid-onemax needs dimension >= 2");
                }
                let mut opt = DVector::zeros(dim);
                for k in d_co..dim {
                    opt[k] = 1.0;
                }
                BenchmarkFunction {
                    name: name.into(),
                    dim,
                    optimum_value: 0.0,
                    optimum: Some(opt),
                    kind: Kind::EllipsoidOneMax { d_co, d_bi },
                }
            }
            other => {
                return Err(anyhow!(
                    "unknown function '{other}'; available: {}",
                    FUNCTION_NAMES.join(", ")
                ))
            }
        };
        Ok(f)
    }

    /// True when the function mixes in binary dimensions and should be run
    /// through the mixed-integer optimizer by default.
    pub fn default_steps(&self) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::EllipsoidOneMax { d_co, d_bi } => {
                let mut s = vec![0.0; *d_co];
                s.extend(vec![1.0; *d_bi]);
                Some(s)
            }
            _ => None,
        }
    }

    /// Bounds to pair with [`BenchmarkFunction::default_steps`].
    pub fn default_bounds(&self) -> Option<Vec<(f64, f64)>> {
        match &self.kind {
            Kind::EllipsoidOneMax { d_co, d_bi } => {
                let mut b = vec![(f64::NEG_INFINITY, f64::INFINITY); *d_co];
                b.extend(vec![(0.0, 1.0); *d_bi]);
                Some(b)
            }
            _ => None,
        }
    }

    pub fn eval(&mut self, x: &DVector<f64>) -> f64 {
        match &mut self.kind {
            Kind::Quadratic => (x[0] - 3.0).powi(2) + (10.0 * (x[1] + 2.0)).powi(2),
            Kind::Sphere => x.norm_squared(),
            Kind::Ellipsoid => ellipsoid_value(x),
            Kind::RotatedEllipsoid { rot } => ellipsoid_value(&(&*rot * x)),
            Kind::Rastrigin => rastrigin(x),
            Kind::NoisySphere { noise_sigma, rng } => {
                let eps: f64 = StandardNormal.sample(rng);
                x.norm_squared() + *noise_sigma * eps
            }
            Kind::EllipsoidOneMax { d_co, d_bi } => cmaes::ellipsoid_onemax(x, *d_co, *d_bi),
        }
    }
}
