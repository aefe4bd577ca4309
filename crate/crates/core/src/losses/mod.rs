//! Losses built on the Sinkhorn operators, and a small trainer for
//! least-quantile regression.

mod quantile;
mod topk;
pub mod train;

pub use quantile::{
    hard_quantile, least_quantile_objective, soft_quantile, soft_quantile_transport,
    soft_quantile_with_grad, QuantileSpec,
};
pub use topk::{hard_topk_loss, soft_topk_loss, soft_topk_loss_with_grad, TopKLossSpec};
