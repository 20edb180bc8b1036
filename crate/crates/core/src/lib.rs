//! Sampling-based lower bounds on the local Lipschitz constant of ReLU
//! networks.
//!
//! For a network `f` and a box `D`, the local `(α, β)` Lipschitz constant is
//! the supremum of `‖J(x)‖_{α,β}` over points where `f` is differentiable,
//! with `J` any almost-everywhere selection of the Clarke Jacobian. Reverse
//! mode gives such a selection for free, so the maximum over sampled points
//! is a lower bound that converges to the constant as the budget grows.
//!
//! ```
//! use lipest::{estimate, Algorithm, EstimatorConfig, Hyperbox, Mlp, NormPair};
//! use rand::SeedableRng;
//!
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let net = Mlp::random(&[2, 16, 16, 1], &mut rng).unwrap();
//! let domain = Hyperbox::cube(2, -1.0, 1.0).unwrap();
//! let config = EstimatorConfig::new(Algorithm::Ucb, 5_000, 7).with_pair(NormPair::inf_inf());
//! let report = estimate(&net, &domain, &config).unwrap();
//! assert!(report.estimate >= 0.0);
//! assert_eq!(report.samples_used, 5_000);
//! ```

pub mod data;
pub mod domain;
mod error;
pub mod estimators;
pub mod json;
pub mod matrix;
pub mod net;
pub mod norms;
pub mod oracle;
pub mod train;

pub use domain::{update_stats, Hyperbox, RegionStats};
pub use error::{Error, Result};
pub use estimators::{
    estimate, estimate_partitioned, estimate_ucb, estimate_uniform, sample_value, ucb_score,
    Algorithm, EstimateReport, EstimatorConfig, SigmaMode,
};
pub use matrix::Matrix;
pub use net::{AffineLayer, EvalTape, Mlp};
pub use norms::{dual, induced_norm, vector_norm, NormPair, NormTag};
pub use oracle::{breakpoint_oracle_1d, enumerate_breakpoints, grid_oracle, GridSpec, OracleValue};
