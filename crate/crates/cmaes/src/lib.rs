//! CMA-ES: covariance matrix adaptation evolution strategy with an
//! ask-and-tell interface.
//!
//! The core optimizer lives in [`CmaEs`]. On top of it sit box-constrained
//! sampling ([`BoxBounds`]), restarts with increasing population size
//! ([`restart_loop`]), learning-rate adaptation (`lr_adapt`), warm starting
//! from a related task ([`get_warm_start_mgd`]), mixed-integer optimization
//! with margin correction ([`CmaWm`]), and compact binary snapshots
//! (`to_snapshot` / `from_snapshot`).
//!
//! ```
//! use cmaes::{CmaEs, EvaluatedSolution};
//!
//! let mut es = CmaEs::options(vec![0.0, 0.0], 2.0).seed(1).build().unwrap();
//! for _ in 0..100 {
//!     let solutions: Vec<EvaluatedSolution> = (0..es.population_size())
//!         .map(|_| {
//!             let x = es.ask().unwrap();
//!             let value = (x[0] - 3.0).powi(2) + (10.0 * (x[1] + 2.0)).powi(2);
//!             EvaluatedSolution::new(x, value)
//!         })
//!         .collect();
//!     es.tell(&solutions).unwrap();
//! }
//! let best = es.best().unwrap();
//! assert!((best.x[0] - 3.0).abs() < 1e-3);
//! assert!((best.x[1] + 2.0).abs() < 1e-3);
//! ```

mod cmawm;
mod constraints;
mod engine;
mod error;
mod lra;
mod params;
mod restart;
mod snapshot;
mod warm_start;

pub use cmawm::{ellipsoid_onemax, CmaWm, DiscretizationSpec, MarginConfig};
pub use constraints::BoxBounds;
pub use engine::{CmaEs, CmaEsOptions, EvaluatedSolution, TerminationReason};
pub use error::{CmaError, Result};
pub use lra::LraState;
pub use params::{default_population_size, expected_norm, HyperParams};
pub use restart::{
    restart_loop, restart_loop_observed, GenerationInfo, RestartOutcome, RestartPolicy,
};
pub use warm_start::{get_warm_start_mgd, SourceArchive, WarmStartMgd};
