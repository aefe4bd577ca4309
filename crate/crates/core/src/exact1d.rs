//! Exact (unregularized) optimal transport on the real line.
//!
//! With a convex ground cost, the optimal coupling between two 1D measures is
//! the north-west corner plan computed on sorted supports. That gives the hard
//! rank/sort operators and their Kantorovich generalizations to weighted
//! targets with `m != n` points, and serves as the ground truth for the
//! entropic operators in [`crate::sinkhorn`].

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::measures::{CostSpec, DiscreteMeasure, TargetDescriptor, RENORMALIZE_TOL};

/// A bijection of `{0, ..., n-1}`, stored zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    indices: Vec<usize>,
}

impl Permutation {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let n = indices.len();
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n || seen[i] {
                return Err(Error::invalid(format!("{indices:?} is not a permutation")));
            }
            seen[i] = true;
        }
        Ok(Self { indices })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    /// 1-based indices, as usually written in print.
    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.indices.len()];
        for (k, &i) in self.indices.iter().enumerate() {
            inv[i] = k;
        }
        Permutation { indices: inv }
    }

    /// `v_σ`, i.e. `out[k] = v[σ(k)]`.
    pub fn apply<T: Copy>(&self, v: &[T]) -> Vec<T> {
        self.indices.iter().map(|&i| v[i]).collect()
    }
}

/// Nonnegative coupling with prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    entries: Matrix,
    row_marginal: Vec<f64>,
    col_marginal: Vec<f64>,
}

impl TransportPlan {
    pub fn new(entries: Matrix, row_marginal: Vec<f64>, col_marginal: Vec<f64>) -> Self {
        debug_assert_eq!(entries.rows(), row_marginal.len());
        debug_assert_eq!(entries.cols(), col_marginal.len());
        Self {
            entries,
            row_marginal,
            col_marginal,
        }
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn into_entries(self) -> Matrix {
        self.entries
    }

    pub fn row_marginal(&self) -> &[f64] {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &[f64] {
        &self.col_marginal
    }

    /// `<P, C>`
    pub fn objective(&self, cost: &Matrix) -> f64 {
        self.entries.dot(cost)
    }

    /// Largest absolute violation of either marginal constraint.
    pub fn marginal_violation(&self) -> f64 {
        let rows = self
            .entries
            .row_sums()
            .iter()
            .zip(&self.row_marginal)
            .map(|(s, a)| (s - a).abs())
            .fold(0.0, f64::max);
        let cols = self
            .entries
            .col_sums()
            .iter()
            .zip(&self.col_marginal)
            .map(|(s, b)| (s - b).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    }
}

/// Stable sort. Returns the sorted values and `σ` with `sorted = x_σ`.
pub fn hard_sort(x: &[f64]) -> Result<(Vec<f64>, Permutation)> {
    if x.is_empty() {
        return Err(Error::invalid("cannot sort an empty vector"));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("cannot sort a vector containing NaN"));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let sorted = idx.iter().map(|&i| x[i]).collect();
    Ok((sorted, Permutation { indices: idx }))
}

/// 1-based ranks `σ^{-1}` of the stable sorting permutation.
pub fn hard_rank(x: &[f64]) -> Result<Vec<usize>> {
    let (_, sigma) = hard_sort(x)?;
    Ok(sigma.inverse().one_based())
}

/// One nonzero cell of a north-west corner plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub row: usize,
    pub col: usize,
    pub mass: f64,
}

/// Staircase of at most `n + m - 1` cells filled greedily from the top-left.
pub fn northwest_corner_sparse(a: &[f64], b: &[f64]) -> Result<Vec<PlanEntry>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("marginals must be nonempty"));
    }
    if a.iter().chain(b).any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::invalid("marginals must be strictly positive"));
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > RENORMALIZE_TOL {
        return Err(Error::invalid(format!(
            "marginal masses differ: {sa} vs {sb}"
        )));
    }
    let (n, m) = (a.len(), b.len());
    let mut runs = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    while i < n && j < m {
        let q = ra.min(rb);
        runs.push(PlanEntry {
            row: i,
            col: j,
            mass: q,
        });
        ra -= q;
        rb -= q;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if (ra < rb && i + 1 < n) || j + 1 == m {
            i += 1;
            ra = a[i];
        } else {
            j += 1;
            rb = b[j];
        }
    }
    Ok(runs)
}

pub fn northwest_corner(a: &[f64], b: &[f64]) -> Result<TransportPlan> {
    let runs = northwest_corner_sparse(a, b)?;
    let mut entries = Matrix::zeros(a.len(), b.len());
    for e in runs {
        entries[(e.row, e.col)] += e.mass;
    }
    Ok(TransportPlan::new(entries, a.to_vec(), b.to_vec()))
}

/// Optimal plan between `(a, x)` and `(b, y)` for any convex cost.
///
/// The cost only matters through its convexity: sorting `x` and running the
/// north-west corner rule on the permuted weights is optimal for all of them.
pub fn solve_exact(
    source: &DiscreteMeasure,
    target: &TargetDescriptor,
    _h: CostSpec,
) -> Result<TransportPlan> {
    let (_, sigma) = hard_sort(source.support())?;
    let a_sorted = sigma.apply(source.weights());
    let sorted_plan = northwest_corner(&a_sorted, target.weights())?;
    let m = target.len();
    let mut entries = Matrix::zeros(source.len(), m);
    for (k, &i) in sigma.as_slice().iter().enumerate() {
        entries
            .row_mut(i)
            .copy_from_slice(sorted_plan.entries().row(k));
    }
    Ok(TransportPlan::new(
        entries,
        source.weights().to_vec(),
        target.weights().to_vec(),
    ))
}

/// Ranks read off a plan: `n a^{-1} ∘ (P b̄)`.
pub fn ranks_from_plan(plan: &Matrix, a: &[f64], cumulative_b: &[f64]) -> Vec<f64> {
    let n = a.len() as f64;
    plan.mul_vec(cumulative_b)
        .iter()
        .zip(a)
        .map(|(p, ai)| n * p / ai)
        .collect()
}

/// Barycenters read off a plan: `b^{-1} ∘ (P^T x)`.
pub fn sorts_from_plan(plan: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    plan.tr_mul_vec(x)
        .iter()
        .zip(b)
        .map(|(s, bj)| s / bj)
        .collect()
}

/// Kantorovich ranks, in `[0, n]`.
pub fn k_rank(
    source: &DiscreteMeasure,
    target: &TargetDescriptor,
    h: CostSpec,
) -> Result<Vec<f64>> {
    let plan = solve_exact(source, target, h)?;
    Ok(ranks_from_plan(
        plan.entries(),
        source.weights(),
        target.cumulative(),
    ))
}

/// Kantorovich sorts: `m` nondecreasing barycenters of `x`.
pub fn k_sort(
    source: &DiscreteMeasure,
    target: &TargetDescriptor,
    h: CostSpec,
) -> Result<Vec<f64>> {
    let plan = solve_exact(source, target, h)?;
    Ok(sorts_from_plan(
        plan.entries(),
        target.weights(),
        source.support(),
    ))
}
