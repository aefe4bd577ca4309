use crate::differentiation::{vjp_unrolled, Cotangent, Tape};
use crate::error::{Error, Result};
use crate::measures::{CostSpec, DiscreteMeasure, Squash, TargetDescriptor};
use crate::sinkhorn::{
    soft_rank_sort, soft_transport, SinkhornConfig, SinkhornMode, SoftSortConfig, SoftTransport,
};

/// Soft `tau`-quantile: transport onto three points `(0, 1/2, 1)` with
/// weights `(tau - t/2, t, 1 - tau - t/2)` and read the middle barycenter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileSpec {
    pub tau: f64,
    /// Filler mass `t` placed at the middle target.
    pub filler: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub max_iters: usize,
    pub cost: CostSpec,
    pub squash: Squash,
}

impl QuantileSpec {
    pub fn new(tau: f64, filler: f64, epsilon: f64) -> Result<Self> {
        let spec = Self {
            tau,
            filler,
            epsilon,
            eta: 1e-3,
            max_iters: 5000,
            cost: CostSpec::squared(),
            squash: Squash::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Filler `t = 1 / batch_size`.
    pub fn for_batch(tau: f64, batch_size: usize, epsilon: f64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Self::new(tau, 1.0 / batch_size as f64, epsilon)
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::invalid(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        let bound = (2.0 * self.tau).min(2.0 * (1.0 - self.tau));
        if !(self.filler > 0.0 && self.filler < bound) {
            return Err(Error::invalid(format!(
                "filler must lie in (0, {bound}) for tau = {}, got {}",
                self.tau, self.filler
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// `(tau - t/2, t, 1 - tau - t/2)`
    pub fn target_weights(&self) -> [f64; 3] {
        let t = self.filler;
        [self.tau - t / 2.0, t, 1.0 - self.tau - t / 2.0]
    }

    pub fn target(&self) -> Result<TargetDescriptor> {
        TargetDescriptor::new(self.target_weights().to_vec(), vec![0.0, 0.5, 1.0])
    }

    pub fn soft_config(&self) -> SoftSortConfig {
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
}

fn source(x: &[f64], spec: &QuantileSpec) -> Result<DiscreteMeasure> {
    spec.validate()?;
    if x.len() < 2 {
        return Err(Error::invalid("soft quantile needs at least two values"));
    }
    DiscreteMeasure::uniform(x.to_vec())
}

/// Differentiable approximation of the `tau`-quantile of `x`, in the units of `x`.
pub fn soft_quantile(x: &[f64], spec: &QuantileSpec) -> Result<f64> {
    let src = source(x, spec)?;
    let r = soft_rank_sort(&src, &spec.target()?, &spec.soft_config())?;
    Ok(r.s_sorts[1])
}

/// The full transport behind [`soft_quantile`], for inspecting the plan.
pub fn soft_quantile_transport(x: &[f64], spec: &QuantileSpec) -> Result<SoftTransport> {
    let src = source(x, spec)?;
    soft_transport(&src, &spec.target()?, &spec.soft_config())
}

/// Soft quantile and its gradient with respect to `x` (unrolled reverse mode).
pub fn soft_quantile_with_grad(x: &[f64], spec: &QuantileSpec) -> Result<(f64, Vec<f64>)> {
    let src = source(x, spec)?;
    let tape = Tape::record(&src, &spec.target()?, &spec.soft_config())?;
    let seed = Cotangent::on_sorts(x.len(), vec![0.0, 1.0, 0.0]);
    let grad = vjp_unrolled(&seed, &tape)?;
    Ok((tape.s_sorts()[1], grad.x))
}

/// Soft `tau`-quantile of nonnegative residuals `|z_i - f(w_i)|`.
pub fn least_quantile_objective(residuals: &[f64], spec: &QuantileSpec) -> Result<f64> {
    if let Some(r) = residuals.iter().find(|r| r.is_nan() || **r < 0.0) {
        return Err(Error::invalid(format!(
            "residuals must be nonnegative, found {r}"
        )));
    }
    soft_quantile(residuals, spec)
}

/// Lower empirical quantile: the `ceil(tau n)`-th smallest value (1-based).
pub fn hard_quantile(x: &[f64], tau: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("tau must lie in [0, 1], got {tau}")));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((tau * x.len() as f64).ceil() as usize).clamp(1, x.len());
    Ok(sorted[k - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_weights_arithmetic() {
        let spec = QuantileSpec::new(0.3, 0.1, 1e-2).unwrap();
        let w = spec.target_weights();
        let expected = [0.25, 0.1, 0.65];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let spec = QuantileSpec::for_batch(0.5, 512, 1e-2).unwrap();
        let w = spec.target_weights();
        assert_eq!(w, [0.5 - 1.0 / 1024.0, 1.0 / 512.0, 0.5 - 1.0 / 1024.0]);
    }

    #[test]
    fn spec_validation() {
        assert!(QuantileSpec::new(0.0, 0.1, 1e-2).is_err());
        assert!(QuantileSpec::new(1.0, 0.1, 1e-2).is_err());
        assert!(QuantileSpec::new(0.1, 0.2, 1e-2).is_err());
        assert!(QuantileSpec::new(0.9, 0.2, 1e-2).is_err());
        assert!(QuantileSpec::new(0.5, 0.1, 0.0).is_err());
    }

    #[test]
    fn constant_input() {
        let spec = QuantileSpec::new(0.3, 0.1, 1e-2).unwrap();
        for c in [0.0, 2.5, -7.0] {
            let q = soft_quantile(&[c; 9], &spec).unwrap();
            assert!((q - c).abs() < 1e-12);
        }
        assert!(soft_quantile(&[1.0], &spec).is_err());
    }

    #[test]
    fn outlier_is_ignored_by_median() {
        let mut r = vec![0.0; 19];
        r.push(100.0);
        let spec = QuantileSpec::new(0.5, 0.05, 1e-2).unwrap();
        let q = least_quantile_objective(&r, &spec).unwrap();
        assert_eq!(hard_quantile(&r, 0.5).unwrap(), 0.0);
        assert!(q.abs() < 0.05 * 100.0, "{q}");
        assert!(least_quantile_objective(&[1.0, -0.1], &spec).is_err());
        let q = least_quantile_objective(&[0.7; 5], &spec).unwrap();
        assert!((q - 0.7).abs() < 1e-12);
    }

    #[test]
    fn hard_quantile_convention() {
        let x = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(hard_quantile(&x, 0.5).unwrap(), 3.0);
        assert_eq!(hard_quantile(&x, 0.3).unwrap(), 2.0);
        assert_eq!(hard_quantile(&x, 0.0).unwrap(), 1.0);
        assert_eq!(hard_quantile(&x, 1.0).unwrap(), 5.0);
    }
}
