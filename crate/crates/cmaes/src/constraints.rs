//! Box constraints handled by resampling with a clip fallback.

use nalgebra::DVector;

use crate::error::{CmaError, Result};

/// Per-dimension closed intervals; entries may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl BoxBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(CmaError::InvalidParam(
                "bounds must have matching, nonzero dimension".into(),
            ));
        }
        for (i, (&l, &h)) in lo.iter().zip(hi.iter()).enumerate() {
            if l.is_nan() || h.is_nan() || !(l < h) {
                return Err(CmaError::InvalidParam(format!(
                    "bound {i} must satisfy lo < hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(BoxBounds {
            lo: DVector::from_vec(lo),
            hi: DVector::from_vec(hi),
        })
    }

    /// Builds from `(lo, hi)` pairs, one per dimension.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    /// All dimensions unbounded.
    pub fn unbounded(dim: usize) -> Self {
        BoxBounds {
            lo: DVector::from_element(dim, f64::NEG_INFINITY),
            hi: DVector::from_element(dim, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lower(&self, i: usize) -> f64 {
        self.lo[i]
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.hi[i]
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }

    /// Coordinate-wise projection onto the box.
    pub fn clip(&self, mut x: DVector<f64>) -> DVector<f64> {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
        x
    }
}
