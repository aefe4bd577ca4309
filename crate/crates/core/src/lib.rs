//! Differentiable ranking and sorting through entropy-regularized optimal
//! transport on the real line.
//!
//! Sorting `x` is an optimal assignment of `x` onto any increasing target
//! `y`; relaxing the assignment to a coupling against a weighted target
//! (`m != n` points) gives Kantorovich ranks and sorts, and smoothing that
//! coupling with entropy (Sinkhorn) makes both differentiable.
//!
//! * [`measures`]: weighted measures, ground costs, input squashing
//! * [`exact1d`]: hard sort/rank, north-west corner plans, K-ranks/K-sorts
//! * [`sinkhorn`]: multiplicative and log-domain Sinkhorn, S-ranks/S-sorts
//! * [`differentiation`]: unrolled reverse mode and implicit Jacobians
//! * [`losses`]: soft top-k loss, soft quantiles, least-quantile regression
//! * [`cli`]: the `sinksort` command-line front end

pub mod cli;
pub mod differentiation;
pub mod error;
pub mod exact1d;
pub mod losses;
pub mod matrix;
pub mod measures;
pub mod sinkhorn;

pub use error::{Error, Result};
pub use exact1d::{
    hard_rank, hard_sort, k_rank, k_sort, northwest_corner, solve_exact, Permutation, TransportPlan,
};
pub use matrix::Matrix;
pub use measures::{
    build_cost, squash, CostMatrix, CostSpec, DiscreteMeasure, Squash, TargetDescriptor,
};
pub use sinkhorn::{
    s_rank, s_rank_batched, s_sort, s_sort_batched, sinkhorn_log, sinkhorn_multiplicative,
    soft_min_rows, soft_rank_sort, SinkhornConfig, SinkhornMode, SinkhornState, SoftResult,
    SoftSortConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
