//! Weighted point measures on the real line, ground costs, and the
//! standardize-then-squash normalization applied to inputs before they enter
//! a cost matrix.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Sum-to-one tolerance accepted without touching the weights.
pub const WEIGHT_TOL: f64 = 1e-12;
/// Weights whose sum is within this distance of one are renormalized once.
pub const RENORMALIZE_TOL: f64 = 1e-8;
/// Below this deviation norm an input vector is treated as constant by [`squash`].
pub const CONSTANT_TOL: f64 = 1e-12;

/// Checks that `weights` is a strictly positive probability vector,
/// renormalizing benign float drift.
pub fn validate_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::invalid("weight vector is empty"));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
        return Err(Error::invalid(format!(
            "weights must be finite and strictly positive, found {w}"
        )));
    }
    let total: f64 = weights.iter().sum();
    let gap = (total - 1.0).abs();
    if gap <= WEIGHT_TOL {
        Ok(weights.to_vec())
    } else if gap <= RENORMALIZE_TOL {
        Ok(weights.iter().map(|w| w / total).collect())
    } else {
        Err(Error::invalid(format!(
            "weights sum to {total}, expected 1"
        )))
    }
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// The regular grid `(0, 1, ..., m-1) / (m-1)` on `[0, 1]`; `[0]` when `m == 1`.
pub fn regular_grid(m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.0];
    }
    (0..m).map(|j| j as f64 / (m - 1) as f64).collect()
}

/// Prefix sums `b̄_j = b_1 + ... + b_j`.
pub fn cumulative(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::invalid(format!("{name}[{i}] is not finite"))),
        None => Ok(()),
    }
}

fn check_increasing(support: &[f64]) -> Result<()> {
    if support.is_empty() {
        return Err(Error::invalid("target support is empty"));
    }
    check_finite("target support", support)?;
    if let Some(j) = support.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!(
            "target support must be strictly increasing (y[{j}] = {} >= y[{}] = {})",
            support[j],
            j + 1,
            support[j + 1]
        )));
    }
    Ok(())
}

/// Source measure: probability weights on arbitrary real support points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
    support: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>, support: Vec<f64>) -> Result<Self> {
        if weights.len() != support.len() {
            return Err(Error::invalid(format!(
                "measure has {} weights but {} support points",
                weights.len(),
                support.len()
            )));
        }
        let weights = validate_weights(&weights)?;
        check_finite("support", &support)?;
        Ok(Self { weights, support })
    }

    /// Uniform weights `1/n` on `support`.
    pub fn uniform(support: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::invalid("support is empty"));
        }
        Self::new(uniform_weights(support.len()), support)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// `<a, x>`
    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.support)
            .map(|(a, x)| a * x)
            .sum()
    }
}

/// Target measure with strictly increasing support.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDescriptor {
    weights: Vec<f64>,
    support: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TargetDescriptor {
    pub fn new(weights: Vec<f64>, support: Vec<f64>) -> Result<Self> {
        if weights.len() != support.len() {
            return Err(Error::invalid(format!(
                "target has {} weights but {} support points",
                weights.len(),
                support.len()
            )));
        }
        let weights = validate_weights(&weights)?;
        check_increasing(&support)?;
        let cumulative = cumulative(&weights);
        Ok(Self {
            weights,
            support,
            cumulative,
        })
    }

    /// `m` uniform weights on the regular grid of `[0, 1]`.
    pub fn uniform_grid(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("target size must be at least 1"));
        }
        Self::new(uniform_weights(m), regular_grid(m))
    }

    /// Given weights on the regular grid of `[0, 1]`.
    pub fn grid_with_weights(weights: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::invalid("target size must be at least 1"));
        }
        Self::new(weights, regular_grid(m))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// Cumulative weights `b̄`.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// `h(u) = |u|^p`
    AbsolutePower,
}

/// Convex ground cost `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    kind: CostKind,
    exponent: f64,
}

impl CostSpec {
    pub fn abs_power(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::invalid(format!(
                "cost exponent must be >= 1, got {p}"
            )));
        }
        Ok(Self {
            kind: CostKind::AbsolutePower,
            exponent: p,
        })
    }

    pub fn squared() -> Self {
        Self {
            kind: CostKind::AbsolutePower,
            exponent: 2.0,
        }
    }

    pub fn absolute() -> Self {
        Self {
            kind: CostKind::AbsolutePower,
            exponent: 1.0,
        }
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self.kind {
            CostKind::AbsolutePower if self.exponent == 2.0 => u * u,
            CostKind::AbsolutePower if self.exponent == 1.0 => u.abs(),
            CostKind::AbsolutePower => u.abs().powf(self.exponent),
        }
    }

    /// `h'(u)`; for `p = 1` the value at zero is 0.
    pub fn derivative(&self, u: f64) -> f64 {
        match self.kind {
            CostKind::AbsolutePower if self.exponent == 2.0 => 2.0 * u,
            CostKind::AbsolutePower if self.exponent == 1.0 => {
                if u == 0.0 {
                    0.0
                } else {
                    u.signum()
                }
            }
            CostKind::AbsolutePower => {
                if u == 0.0 {
                    0.0
                } else {
                    self.exponent * u.abs().powf(self.exponent - 1.0) * u.signum()
                }
            }
        }
    }
}

impl Default for CostSpec {
    fn default() -> Self {
        Self::squared()
    }
}

/// `C[i][j] = h(y_j - x_i)` together with the supports it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Matrix,
    row_support: Vec<f64>,
    col_support: Vec<f64>,
    cost: CostSpec,
}

impl CostMatrix {
    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn row_support(&self) -> &[f64] {
        &self.row_support
    }

    pub fn col_support(&self) -> &[f64] {
        &self.col_support
    }

    pub fn cost(&self) -> CostSpec {
        self.cost
    }

    pub fn rows(&self) -> usize {
        self.entries.rows()
    }

    pub fn cols(&self) -> usize {
        self.entries.cols()
    }

    /// `dC[i][j] / dx_i = -h'(y_j - x_i)`.
    pub fn row_support_partials(&self) -> Matrix {
        Matrix::from_fn(self.rows(), self.cols(), |i, j| {
            -self
                .cost
                .derivative(self.col_support[j] - self.row_support[i])
        })
    }
}

pub fn build_cost(x: &[f64], y: &[f64], h: CostSpec) -> Result<CostMatrix> {
    if x.is_empty() {
        return Err(Error::invalid(
            "cost matrix needs at least one source point",
        ));
    }
    check_finite("x", x)?;
    check_increasing(y)?;
    let entries = Matrix::from_fn(x.len(), y.len(), |i, j| h.eval(y[j] - x[i]));
    Ok(CostMatrix {
        entries,
        row_support: x.to_vec(),
        col_support: y.to_vec(),
        cost: h,
    })
}

/// Increasing map of the real line into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Squash {
    /// `1 / (1 + e^{-u})`
    #[default]
    Logistic,
    /// `1/2 + arctan(u) / pi`
    Arctan,
}

impl Squash {
    pub fn apply(self, u: f64) -> f64 {
        match self {
            Squash::Logistic => {
                if u >= 0.0 {
                    1.0 / (1.0 + (-u).exp())
                } else {
                    let e = u.exp();
                    e / (1.0 + e)
                }
            }
            Squash::Arctan => 0.5 + u.atan() / std::f64::consts::PI,
        }
    }

    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Squash::Logistic => {
                let g = self.apply(u);
                g * (1.0 - g)
            }
            Squash::Arctan => 1.0 / (std::f64::consts::PI * (1.0 + u * u)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Squash::Logistic => "logistic",
            Squash::Arctan => "arctan",
        }
    }
}

impl std::str::FromStr for Squash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(Squash::Logistic),
            "arctan" => Ok(Squash::Arctan),
            other => Err(Error::invalid(format!("unknown squashing map '{other}'"))),
        }
    }
}

/// Centered and scaled input, `sqrt(n) (x - mean) / ||x - mean||`.
/// `None` when the input is constant.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub z: Vec<f64>,
    pub centered: Vec<f64>,
    pub norm: f64,
}

pub fn standardize(x: &[f64]) -> Option<Standardized> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm < CONSTANT_TOL {
        return None;
    }
    let scale = n.sqrt() / norm;
    Some(Standardized {
        z: centered.iter().map(|d| d * scale).collect(),
        centered,
        norm,
    })
}

/// Standardize `x` then map it into `[0, 1]` with `g`.
///
/// A constant input maps to `g(0)` in every coordinate.
pub fn squash(x: &[f64], g: Squash) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::invalid("cannot squash an empty vector"));
    }
    check_finite("x", x)?;
    Ok(match standardize(x) {
        Some(s) => s.z.iter().map(|&z| g.apply(z)).collect(),
        None => vec![g.apply(0.0); x.len()],
    })
}

/// Pulls a cotangent on `squash(x, g)` back to `x`.
///
/// The map is not differentiable at constant inputs; there the pullback is zero.
pub fn squash_vjp(x: &[f64], g: Squash, cotangent: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), cotangent.len());
    let Some(s) = standardize(x) else {
        return vec![0.0; x.len()];
    };
    let n = x.len() as f64;
    // dz/dx = sqrt(n)/||d|| (I - 11^T/n - d d^T/||d||^2)
    let gz: Vec<f64> =
        s.z.iter()
            .zip(cotangent)
            .map(|(&z, c)| c * g.derivative(z))
            .collect();
    let mean_gz = gz.iter().sum::<f64>() / n;
    let norm2 = s.norm * s.norm;
    let d_dot: f64 = s.centered.iter().zip(&gz).map(|(d, c)| d * c).sum();
    let scale = n.sqrt() / s.norm;
    gz.iter()
        .zip(&s.centered)
        .map(|(c, d)| scale * (c - mean_gz - d * d_dot / norm2))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_small_cases() {
        let c = build_cost(&[0.0, 1.0], &[0.0, 1.0], CostSpec::squared()).unwrap();
        assert_eq!(c.entries().as_slice(), &[0.0, 1.0, 1.0, 0.0]);
        let c = build_cost(&[0.5], &[0.0, 1.0], CostSpec::absolute()).unwrap();
        assert_eq!(c.entries().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn cost_matches_double_loop() {
        let x = [-9.0, -2.0, 0.38, 4.0, 6.0];
        let y = regular_grid(5);
        let c = build_cost(&x, &y, CostSpec::squared()).unwrap();
        for (i, xi) in x.iter().enumerate() {
            for (j, yj) in y.iter().enumerate() {
                let d = yj - xi;
                assert_eq!(c.entries()[(i, j)], d * d);
                assert!(c.entries()[(i, j)] >= 0.0);
            }
        }
        assert_eq!((c.rows(), c.cols()), (5, 5));
    }

    #[test]
    fn cost_rejects_bad_input() {
        assert!(build_cost(&[], &[0.0, 1.0], CostSpec::squared()).is_err());
        assert!(build_cost(&[0.0], &[1.0, 1.0], CostSpec::squared()).is_err());
        assert!(build_cost(&[0.0], &[1.0, 0.0], CostSpec::squared()).is_err());
        assert!(CostSpec::abs_power(0.5).is_err());
    }

    #[test]
    fn squash_constant_fallback() {
        for c in [-3.0, 0.0, 7.5] {
            let s = squash(&[c, c, c], Squash::Logistic).unwrap();
            assert_eq!(s, vec![0.5; 3]);
            let s = squash(&[c, c], Squash::Arctan).unwrap();
            assert_eq!(s, vec![0.5; 2]);
        }
    }

    #[test]
    fn squash_scalar_oracle() {
        // x = (-1, 0, 1): mean 0, ||x|| = sqrt(2), scale sqrt(3)/sqrt(2).
        let s = squash(&[-1.0, 0.0, 1.0], Squash::Logistic).unwrap();
        let z = (3.0f64 / 2.0).sqrt();
        let expected = [1.0 / (1.0 + z.exp()), 0.5, 1.0 / (1.0 + (-z).exp())];
        for (a, b) in s.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn squash_affine_invariance() {
        let x = [0.3, -1.2, 4.0, 2.2];
        let y: Vec<f64> = x.iter().map(|v| 5.0 * v + 7.0).collect();
        let a = squash(&x, Squash::Arctan).unwrap();
        let b = squash(&y, Squash::Arctan).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_validation() {
        assert!(validate_weights(&[0.5, 0.5]).is_ok());
        let w = validate_weights(&[0.5, 0.5 + 1e-9]).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(validate_weights(&[0.5, 0.6]).is_err());
        assert!(validate_weights(&[1.0, 0.0]).is_err());
        assert!(DiscreteMeasure::new(vec![1.0], vec![1.0, 2.0]).is_err());
        let t = TargetDescriptor::new(vec![0.25, 0.1, 0.65], vec![0.0, 0.5, 1.0]).unwrap();
        let cb = t.cumulative();
        assert!((cb[0] - 0.25).abs() < 1e-15 && (cb[1] - 0.35).abs() < 1e-15);
        assert!((cb[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn squash_vjp_matches_finite_differences() {
        let x = [0.4, -1.0, 2.5, 0.1, 3.3];
        let w = [0.3, -0.7, 1.1, 0.2, -0.5];
        for g in [Squash::Logistic, Squash::Arctan] {
            let grad = squash_vjp(&x, g, &w);
            let f = |x: &[f64]| -> f64 {
                squash(x, g)
                    .unwrap()
                    .iter()
                    .zip(&w)
                    .map(|(a, b)| a * b)
                    .sum()
            };
            for k in 0..x.len() {
                let step = 1e-6;
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += step;
                xm[k] -= step;
                let fd = (f(&xp) - f(&xm)) / (2.0 * step);
                assert!((fd - grad[k]).abs() < 1e-8, "{fd} vs {}", grad[k]);
            }
        }
    }
}
