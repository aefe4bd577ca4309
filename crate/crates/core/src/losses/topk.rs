use crate::differentiation::{vjp_unrolled, Cotangent, Tape};
use crate::error::{Error, Result};
use crate::exact1d::hard_rank;
use crate::measures::{CostSpec, DiscreteMeasure, Squash, TargetDescriptor};
use crate::sinkhorn::{s_rank, SinkhornConfig, SinkhornMode, SoftSortConfig};

/// Soft top-k classification loss over `num_labels` classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopKLossSpec {
    pub num_labels: usize,
    pub k: usize,
    pub epsilon: f64,
    pub eta: f64,
    pub cost: CostSpec,
    pub squash: Squash,
    pub max_iters: usize,
}

impl TopKLossSpec {
    /// Defaults: `eps = 1e-3`, `eta = 1e-3`, squared cost.
    pub fn new(num_labels: usize, k: usize) -> Result<Self> {
        let spec = Self {
            num_labels,
            k,
            epsilon: 1e-3,
            eta: 1e-3,
            cost: CostSpec::squared(),
            squash: Squash::default(),
            max_iters: 5000,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_labels == 0 || self.k == 0 || self.k > self.num_labels {
            return Err(Error::invalid(format!(
                "need 1 <= k <= L, got k = {} and L = {}",
                self.k, self.num_labels
            )));
        }
        Ok(())
    }

    fn soft_config(&self) -> SoftSortConfig {
        SoftSortConfig {
            sinkhorn: SinkhornConfig {
                epsilon: self.epsilon,
                eta: self.eta,
                max_iters: self.max_iters,
                mode: SinkhornMode::LogDomain,
            },
            cost: self.cost,
            squash: self.squash,
        }
    }

    /// `J_k(u) = max(0, u - k + 1)`
    fn relu(&self, u: f64) -> f64 {
        (u - self.k as f64 + 1.0).max(0.0)
    }
}

fn check(scores: &[f64], label: usize, spec: &TopKLossSpec) -> Result<()> {
    spec.validate()?;
    if scores.len() != spec.num_labels {
        return Err(Error::invalid(format!(
            "expected {} scores, got {}",
            spec.num_labels,
            scores.len()
        )));
    }
    if label >= spec.num_labels {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            spec.num_labels
        )));
    }
    Ok(())
}

/// `J_k(L - R̃(scores)[label])` with uniform weights on both sides and the
/// regular grid as target. `label` is zero-based.
pub fn soft_topk_loss(scores: &[f64], label: usize, spec: &TopKLossSpec) -> Result<f64> {
    check(scores, label, spec)?;
    let l = spec.num_labels;
    let source = DiscreteMeasure::uniform(scores.to_vec())?;
    let target = TargetDescriptor::uniform_grid(l)?;
    let ranks = s_rank(&source, &target, &spec.soft_config())?;
    Ok(spec.relu(l as f64 - ranks[label]))
}

/// Loss value and its gradient with respect to the scores.
pub fn soft_topk_loss_with_grad(
    scores: &[f64],
    label: usize,
    spec: &TopKLossSpec,
) -> Result<(f64, Vec<f64>)> {
    check(scores, label, spec)?;
    let l = spec.num_labels;
    let source = DiscreteMeasure::uniform(scores.to_vec())?;
    let target = TargetDescriptor::uniform_grid(l)?;
    let tape = Tape::record(&source, &target, &spec.soft_config())?;
    let arg = l as f64 - tape.s_ranks()[label];
    let loss = spec.relu(arg);
    if arg - spec.k as f64 + 1.0 <= 0.0 {
        return Ok((loss, vec![0.0; l]));
    }
    let mut seed = Cotangent::zeros(l, l);
    seed.ranks[label] = -1.0;
    Ok((loss, vjp_unrolled(&seed, &tape)?.x))
}

/// The same loss on hard integer ranks.
pub fn hard_topk_loss(scores: &[f64], label: usize, spec: &TopKLossSpec) -> Result<f64> {
    check(scores, label, spec)?;
    let ranks = hard_rank(scores)?;
    Ok(spec.relu(spec.num_labels as f64 - ranks[label] as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_and_bottom_labels() {
        let spec = TopKLossSpec::new(5, 1).unwrap();
        let scores = [0.1, 9.0, 0.3, -0.2, 0.5];
        assert!(soft_topk_loss(&scores, 1, &spec).unwrap() < 0.05);
        let scores = [0.1, -9.0, 0.3, -0.2, 0.5];
        assert!((soft_topk_loss(&scores, 1, &spec).unwrap() - 4.0).abs() < 0.05);
    }

    #[test]
    fn invalid_inputs() {
        assert!(TopKLossSpec::new(3, 0).is_err());
        assert!(TopKLossSpec::new(3, 4).is_err());
        let spec = TopKLossSpec::new(3, 1).unwrap();
        assert!(soft_topk_loss(&[1.0, 2.0, 3.0], 3, &spec).is_err());
        assert!(soft_topk_loss(&[1.0, 2.0], 0, &spec).is_err());
    }

    #[test]
    fn gradient_pushes_label_score_up() {
        let spec = TopKLossSpec::new(4, 1).unwrap().with_epsilon(1e-1);
        let scores = [0.2, -0.4, 0.9, 0.1];
        let (loss, grad) = soft_topk_loss_with_grad(&scores, 1, &spec).unwrap();
        assert!(loss > 0.0);
        assert!(grad[1] < 0.0);
    }
}
