//! Entropy-regularized optimal transport and the Sinkhorn rank/sort operators.
//!
//! Two solvers share the same update order (column scaling first, then row
//! scaling) and the same stopping rule (L1 column-marginal residual below
//! `eta`), so for any instance where both run to completion they perform the
//! same number of sweeps and produce the same plan up to rounding:
//!
//! * [`sinkhorn_multiplicative`] iterates on the scalings `u`, `v` of the
//!   Gibbs kernel `K = exp(-C / eps)`;
//! * [`sinkhorn_log`] iterates on the potentials `alpha = eps log u` and
//!   `beta = eps log v` with log-sum-exp soft-minima, and never exponentiates
//!   anything but normalized quantities.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact1d::{ranks_from_plan, sorts_from_plan};
use crate::matrix::Matrix;
use crate::measures::{
    build_cost, squash, CostMatrix, CostSpec, DiscreteMeasure, Squash, TargetDescriptor,
};

/// Kernel entries below this are treated as underflowed.
pub const UNDERFLOW_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SinkhornMode {
    Multiplicative,
    #[default]
    LogDomain,
}

impl SinkhornMode {
    pub fn name(self) -> &'static str {
        match self {
            SinkhornMode::Multiplicative => "multiplicative",
            SinkhornMode::LogDomain => "log",
        }
    }
}

impl std::str::FromStr for SinkhornMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiplicative" | "mult" => Ok(SinkhornMode::Multiplicative),
            "log" | "log-domain" => Ok(SinkhornMode::LogDomain),
            other => Err(Error::invalid(format!("unknown sinkhorn mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Regularization strength.
    pub epsilon: f64,
    /// Tolerance on the L1 column-marginal residual.
    pub eta: f64,
    pub max_iters: usize,
    pub mode: SinkhornMode,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            eta: 1e-3,
            max_iters: 5000,
            mode: SinkhornMode::LogDomain,
        }
    }
}

impl SinkhornConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_mode(mut self, mode: SinkhornMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scalings {
    Multiplicative {
        u: Vec<f64>,
        v: Vec<f64>,
        kernel: Matrix,
    },
    LogDomain {
        alpha: Vec<f64>,
        beta: Vec<f64>,
    },
}

/// Output of a Sinkhorn solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornState {
    pub scalings: Scalings,
    pub epsilon: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// L1 column-marginal residual at exit.
    pub marginal_error: f64,
}

impl SinkhornState {
    /// `(alpha, beta)`, converting from scalings if needed.
    pub fn potentials(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.scalings {
            Scalings::LogDomain { alpha, beta } => (alpha.clone(), beta.clone()),
            Scalings::Multiplicative { u, v, .. } => (
                u.iter().map(|x| self.epsilon * x.ln()).collect(),
                v.iter().map(|x| self.epsilon * x.ln()).collect(),
            ),
        }
    }

    /// `(u, v)`, converting from potentials if needed.
    pub fn scaling_vectors(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.scalings {
            Scalings::Multiplicative { u, v, .. } => (u.clone(), v.clone()),
            Scalings::LogDomain { alpha, beta } => (
                alpha.iter().map(|x| (x / self.epsilon).exp()).collect(),
                beta.iter().map(|x| (x / self.epsilon).exp()).collect(),
            ),
        }
    }

    /// The coupling `D(u) K D(v) = exp((alpha_i + beta_j - C_ij) / eps)`.
    pub fn plan(&self, cost: &Matrix) -> Matrix {
        match &self.scalings {
            Scalings::Multiplicative { u, v, kernel } => {
                Matrix::from_fn(kernel.rows(), kernel.cols(), |i, j| {
                    u[i] * kernel[(i, j)] * v[j]
                })
            }
            Scalings::LogDomain { alpha, beta } => log_plan(alpha, beta, cost, self.epsilon),
        }
    }

    pub fn into_log_domain(self) -> SinkhornState {
        let (alpha, beta) = self.potentials();
        SinkhornState {
            scalings: Scalings::LogDomain { alpha, beta },
            ..self
        }
    }

    pub fn into_multiplicative(self, cost: &Matrix) -> SinkhornState {
        let (u, v) = self.scaling_vectors();
        let kernel = gibbs_kernel(cost, self.epsilon);
        SinkhornState {
            scalings: Scalings::Multiplicative { u, v, kernel },
            ..self
        }
    }
}

pub(crate) fn log_plan(alpha: &[f64], beta: &[f64], cost: &Matrix, epsilon: f64) -> Matrix {
    Matrix::from_fn(cost.rows(), cost.cols(), |i, j| {
        ((alpha[i] + beta[j] - cost[(i, j)]) / epsilon).exp()
    })
}

pub fn gibbs_kernel(cost: &Matrix, epsilon: f64) -> Matrix {
    Matrix::from_fn(cost.rows(), cost.cols(), |i, j| {
        (-cost[(i, j)] / epsilon).exp()
    })
}

fn check_finite_matrix(m: &Matrix) -> Result<()> {
    if m.as_slice().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("cost matrix has non-finite entries"))
    }
}

/// Row-wise soft-minimum `-eps log sum_j exp(-M_ij / eps)`.
pub fn soft_min_rows(m: &Matrix, epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    check_finite_matrix(m)?;
    Ok((0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let s: f64 = row.iter().map(|v| (-(v - lo) / epsilon).exp()).sum();
            lo - epsilon * s.ln()
        })
        .collect())
}

fn check_marginals(a: &[f64], b: &[f64], cost: &Matrix) -> Result<()> {
    if a.len() != cost.rows() || b.len() != cost.cols() {
        return Err(Error::invalid(format!(
            "marginals of length ({}, {}) do not match a {}x{} cost",
            a.len(),
            b.len(),
            cost.rows(),
            cost.cols()
        )));
    }
    if a.iter().chain(b).any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::invalid("marginals must be strictly positive"));
    }
    check_finite_matrix(cost)
}

/// Classic Sinkhorn scaling: `v <- b / K^T u`, `u <- a / K v` until the
/// column marginal `v ∘ K^T u` is within `eta` of `b` in L1.
pub fn sinkhorn_multiplicative(
    a: &[f64],
    b: &[f64],
    cost: &Matrix,
    cfg: &SinkhornConfig,
) -> Result<SinkhornState> {
    cfg.validate()?;
    check_marginals(a, b, cost)?;
    let kernel = gibbs_kernel(cost, cfg.epsilon);
    if let Some(i) =
        (0..kernel.rows()).find(|&i| kernel.row(i).iter().all(|k| *k < UNDERFLOW_THRESHOLD))
    {
        return Err(Error::Underflow(format!(
            "kernel row {i} vanished at epsilon {}",
            cfg.epsilon
        )));
    }
    let col_max = (0..kernel.rows()).fold(vec![0.0f64; kernel.cols()], |mut acc, i| {
        for (m, k) in acc.iter_mut().zip(kernel.row(i)) {
            *m = m.max(*k);
        }
        acc
    });
    if let Some(j) = col_max.iter().position(|k| *k < UNDERFLOW_THRESHOLD) {
        return Err(Error::Underflow(format!(
            "kernel column {j} vanished at epsilon {}",
            cfg.epsilon
        )));
    }

    let mut u = vec![1.0; a.len()];
    let mut v = vec![1.0; b.len()];
    let mut err = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let ktu = kernel.tr_mul_vec(&u);
        for ((vj, bj), k) in v.iter_mut().zip(b).zip(&ktu) {
            *vj = bj / k;
        }
        let kv = kernel.mul_vec(&v);
        for ((ui, ai), k) in u.iter_mut().zip(a).zip(&kv) {
            *ui = ai / k;
        }
        iterations += 1;
        if u.iter().chain(&v).any(|s| !s.is_finite() || *s == 0.0) {
            return Err(Error::NonFinite(format!(
                "scalings left the representable range after {iterations} iterations at epsilon {}",
                cfg.epsilon
            )));
        }
        let ktu = kernel.tr_mul_vec(&u);
        err = v
            .iter()
            .zip(&ktu)
            .zip(b)
            .map(|((vj, k), bj)| (vj * k - bj).abs())
            .sum();
        if err < cfg.eta {
            break;
        }
    }
    Ok(SinkhornState {
        scalings: Scalings::Multiplicative { u, v, kernel },
        epsilon: cfg.epsilon,
        iterations_used: iterations,
        converged: err < cfg.eta,
        marginal_error: err,
    })
}

/// Terms this far below the maximum are under one ulp of the sum and are
/// skipped without calling `exp`.
const LSE_CUTOFF: f64 = -50.0;

fn log_sum_exp(z: &[f64]) -> f64 {
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for &v in z {
        let d = v - hi;
        if d > LSE_CUTOFF {
            s += d.exp();
        }
    }
    hi + s.ln()
}

/// Stabilized log-domain sweeps shared by the solver and the
/// differentiation tape.
pub(crate) struct LogSweeper<'a> {
    pub log_a: Vec<f64>,
    pub log_b: Vec<f64>,
    pub cost: &'a [f64],
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
}

impl<'a> LogSweeper<'a> {
    pub fn new(a: &[f64], b: &[f64], cost: &'a [f64], epsilon: f64) -> Self {
        Self {
            log_a: a.iter().map(|v| v.ln()).collect(),
            log_b: b.iter().map(|v| v.ln()).collect(),
            cost,
            n: a.len(),
            m: b.len(),
            epsilon,
        }
    }

    /// `out_j = log sum_i exp((alpha_i + beta_j - C_ij) / eps)`, i.e. the log
    /// column sums of the current plan.
    pub fn column_lse(&self, alpha: &[f64], beta: &[f64], out: &mut [f64]) {
        let (n, m, eps) = (self.n, self.m, self.epsilon);
        let mut z = vec![0.0; n];
        for j in 0..m {
            for i in 0..n {
                z[i] = (alpha[i] + beta[j] - self.cost[i * m + j]) / eps;
            }
            out[j] = log_sum_exp(&z);
        }
    }

    /// `beta <- eps log b + min_eps(C^T - 1 alpha^T - beta 1^T) + beta`,
    /// given the column log-sum-exps of the current plan.
    pub fn update_beta(&self, beta: &mut [f64], col_lse: &[f64]) {
        for j in 0..self.m {
            beta[j] += self.epsilon * (self.log_b[j] - col_lse[j]);
        }
    }

    /// `alpha <- eps log a + min_eps(C - alpha 1^T - 1 beta^T) + alpha`.
    pub fn update_alpha(&self, alpha: &mut [f64], beta: &[f64]) {
        let (m, eps) = (self.m, self.epsilon);
        let mut z = vec![0.0; m];
        for ((ai, row), la) in alpha
            .iter_mut()
            .zip(self.cost.chunks_exact(m))
            .zip(&self.log_a)
        {
            for ((zj, bj), cj) in z.iter_mut().zip(beta).zip(row) {
                *zj = (*ai + bj - cj) / eps;
            }
            *ai += eps * (la - log_sum_exp(&z));
        }
    }

    fn column_error(&self, col_lse: &[f64]) -> f64 {
        col_lse
            .iter()
            .zip(&self.log_b)
            .map(|(l, lb)| (l.exp() - lb.exp()).abs())
            .sum()
    }
}

pub(crate) struct LogRun {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub error: f64,
}

/// Runs log-domain sweeps on a row-major `n x m` cost, calling `observe`
/// after every sweep with the new potentials.
pub(crate) fn run_log_sweeps(
    a: &[f64],
    b: &[f64],
    cost: &[f64],
    cfg: &SinkhornConfig,
    mut observe: impl FnMut(&[f64], &[f64]),
) -> Result<LogRun> {
    let sweeper = LogSweeper::new(a, b, cost, cfg.epsilon);
    let mut alpha = vec![0.0; a.len()];
    let mut beta = vec![0.0; b.len()];
    let mut lse = vec![0.0; b.len()];
    let mut iterations = 0;
    sweeper.column_lse(&alpha, &beta, &mut lse);
    let mut error = sweeper.column_error(&lse);
    while iterations < cfg.max_iters {
        sweeper.update_beta(&mut beta, &lse);
        sweeper.update_alpha(&mut alpha, &beta);
        iterations += 1;
        observe(&alpha, &beta);
        if alpha.iter().chain(&beta).any(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!(
                "potentials became non-finite after {iterations} iterations"
            )));
        }
        sweeper.column_lse(&alpha, &beta, &mut lse);
        error = sweeper.column_error(&lse);
        if error < cfg.eta {
            break;
        }
    }
    Ok(LogRun {
        alpha,
        beta,
        iterations,
        error,
    })
}

/// Log-domain Sinkhorn with potentials initialized at zero.
///
/// Running out of iterations is not an error: the state comes back with
/// `converged == false`.
pub fn sinkhorn_log(
    a: &[f64],
    b: &[f64],
    cost: &Matrix,
    cfg: &SinkhornConfig,
) -> Result<SinkhornState> {
    cfg.validate()?;
    check_marginals(a, b, cost)?;
    let run = run_log_sweeps(a, b, cost.as_slice(), cfg, |_, _| {})?;
    Ok(SinkhornState {
        scalings: Scalings::LogDomain {
            alpha: run.alpha,
            beta: run.beta,
        },
        epsilon: cfg.epsilon,
        iterations_used: run.iterations,
        converged: run.error < cfg.eta,
        marginal_error: run.error,
    })
}

/// Dispatches on `cfg.mode`.
pub fn sinkhorn(
    a: &[f64],
    b: &[f64],
    cost: &Matrix,
    cfg: &SinkhornConfig,
) -> Result<SinkhornState> {
    match cfg.mode {
        SinkhornMode::Multiplicative => sinkhorn_multiplicative(a, b, cost, cfg),
        SinkhornMode::LogDomain => sinkhorn_log(a, b, cost, cfg),
    }
}

/// Everything the soft rank/sort operators need besides the measures.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SoftSortConfig {
    pub sinkhorn: SinkhornConfig,
    pub cost: CostSpec,
    pub squash: Squash,
}

impl SoftSortConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.sinkhorn.epsilon = epsilon;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.sinkhorn.eta = eta;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.sinkhorn.max_iters = max_iters;
        self
    }
}

/// Intermediate products of one soft rank/sort evaluation.
#[derive(Debug, Clone)]
pub struct SoftTransport {
    /// Squashed inputs used as cost coordinates.
    pub squashed: Vec<f64>,
    pub cost: CostMatrix,
    pub state: SinkhornState,
    pub plan: Matrix,
}

/// Squash `x`, build the cost against the target support, run Sinkhorn.
pub fn soft_transport(
    source: &DiscreteMeasure,
    target: &TargetDescriptor,
    cfg: &SoftSortConfig,
) -> Result<SoftTransport> {
    let squashed = squash(source.support(), cfg.squash)?;
    let cost = build_cost(&squashed, target.support(), cfg.cost)?;
    let state = sinkhorn(
        source.weights(),
        target.weights(),
        cost.entries(),
        &cfg.sinkhorn,
    )?;
    let plan = state.plan(cost.entries());
    Ok(SoftTransport {
        squashed,
        cost,
        state,
        plan,
    })
}

/// S-ranks and S-sorts of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftResult {
    /// Length `n`, in `[0, n]`.
    pub s_ranks: Vec<f64>,
    /// Length `m`, barycenters of the raw (unsquashed) inputs.
    pub s_sorts: Vec<f64>,
    pub epsilon_used: f64,
    pub iterations_used: usize,
    pub converged: bool,
    pub marginal_error: f64,
}

pub fn soft_rank_sort(
    source: &DiscreteMeasure,
    target: &TargetDescriptor,
    cfg: &SoftSortConfig,
) -> Result<SoftResult> {
    let t = soft_transport(source, target, cfg)?;
    Ok(SoftResult {
        s_ranks: ranks_from_plan(&t.plan, source.weights(), target.cumulative()),
        s_sorts: sorts_from_plan(&t.plan, target.weights(), source.support()),
        epsilon_used: cfg.sinkhorn.epsilon,
        iterations_used: t.state.iterations_used,
        converged: t.state.converged,
        marginal_error: t.state.marginal_error,
    })
}

/// Sinkhorn ranks `n a^{-1} ∘ u ∘ K (v ∘ b̄)`.
pub fn s_rank(
    source: &DiscreteMeasure,
    target: &TargetDescriptor,
    cfg: &SoftSortConfig,
) -> Result<Vec<f64>> {
    soft_rank_sort(source, target, cfg).map(|r| r.s_ranks)
}

/// Sinkhorn sorts `b^{-1} ∘ v ∘ K^T (u ∘ x)`.
pub fn s_sort(
    source: &DiscreteMeasure,
    target: &TargetDescriptor,
    cfg: &SoftSortConfig,
) -> Result<Vec<f64>> {
    soft_rank_sort(source, target, cfg).map(|r| r.s_sorts)
}

/// Costs of a whole batch against a shared target, stored as one
/// `S x n x m` tensor.
#[derive(Debug, Clone)]
pub struct BatchedCost {
    data: Vec<f64>,
    batch: usize,
    n: usize,
    m: usize,
}

impl BatchedCost {
    pub fn build(squashed: &[Vec<f64>], y: &[f64], h: CostSpec) -> Result<Self> {
        let batch = squashed.len();
        let n = squashed.first().map_or(0, Vec::len);
        let m = y.len();
        let mut data = Vec::with_capacity(batch * n * m);
        for x in squashed {
            data.extend_from_slice(build_cost(x, y, h)?.entries().as_slice());
        }
        Ok(Self { data, batch, n, m })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.n, self.m)
    }

    pub fn instance(&self, s: usize) -> &[f64] {
        let len = self.n * self.m;
        &self.data[s * len..(s + 1) * len]
    }
}

/// Soft ranks and sorts of a batch of equal-length inputs against one target.
///
/// Instances are solved independently (each with its own stopping time), so
/// every row equals the unbatched result.
pub fn soft_rank_sort_batched(
    sources: &[DiscreteMeasure],
    target: &TargetDescriptor,
    cfg: &SoftSortConfig,
) -> Result<Vec<SoftResult>> {
    let Some(first) = sources.first() else {
        return Err(Error::invalid("batch is empty"));
    };
    let n = first.len();
    if let Some(s) = sources.iter().position(|src| src.len() != n) {
        return Err(Error::invalid(format!(
            "ragged batch: instance {s} has length {} but instance 0 has {n}",
            sources[s].len()
        )));
    }
    cfg.sinkhorn.validate()?;
    let squashed = sources
        .iter()
        .map(|src| squash(src.support(), cfg.squash))
        .collect::<Result<Vec<_>>>()?;
    let costs = BatchedCost::build(&squashed, target.support(), cfg.cost)?;
    let (_, n, m) = costs.shape();
    sources
        .par_iter()
        .enumerate()
        .map(|(s, src)| {
            let cost = Matrix::from_row_major(n, m, costs.instance(s).to_vec());
            let state = sinkhorn(src.weights(), target.weights(), &cost, &cfg.sinkhorn)?;
            let plan = state.plan(&cost);
            Ok(SoftResult {
                s_ranks: ranks_from_plan(&plan, src.weights(), target.cumulative()),
                s_sorts: sorts_from_plan(&plan, target.weights(), src.support()),
                epsilon_used: cfg.sinkhorn.epsilon,
                iterations_used: state.iterations_used,
                converged: state.converged,
                marginal_error: state.marginal_error,
            })
        })
        .collect()
}

pub fn s_rank_batched(
    sources: &[DiscreteMeasure],
    target: &TargetDescriptor,
    cfg: &SoftSortConfig,
) -> Result<Vec<Vec<f64>>> {
    Ok(soft_rank_sort_batched(sources, target, cfg)?
        .into_iter()
        .map(|r| r.s_ranks)
        .collect())
}

pub fn s_sort_batched(
    sources: &[DiscreteMeasure],
    target: &TargetDescriptor,
    cfg: &SoftSortConfig,
) -> Result<Vec<Vec<f64>>> {
    Ok(soft_rank_sort_batched(sources, target, cfg)?
        .into_iter()
        .map(|r| r.s_sorts)
        .collect())
}
