//! Ranking with adaptive neighbors.
//!
//! Ranking scores and a sparse data affinity graph are learned together by
//! alternating between a Laplacian-regularized linear system for the scores
//! and a closed-form, per-point neighbor assignment on the probability
//! simplex. The crate also carries the fixed-graph baselines, synthetic
//! manifold generators and a leave-one-out retrieval evaluation harness.
//!
//! ```
//! use ran_core::dataset::gen_two_moons;
//! use ran_core::ranking::{ran_solve, rank_order, QueryVector, RankConfig};
//!
//! let moons = gen_two_moons(50, 0.05, 7).unwrap();
//! let query = QueryVector::from_indices(moons.data.n(), &[0]).unwrap();
//! let cfg = RankConfig { k: 5, lambda: 1.0, ..RankConfig::default() };
//! let result = ran_solve(&moons.data, &query, &cfg).unwrap();
//! let order = rank_order(&result.scores, &[0]);
//! assert_eq!(order.len(), 99);
//! ```

pub mod affinity;
pub mod baselines;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod ranking;

pub use error::{Error, Result};
