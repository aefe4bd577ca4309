//! Derivatives of the Sinkhorn rank/sort operators with respect to their
//! inputs.
//!
//! Two independent routes are provided:
//!
//! * [`vjp_unrolled`] runs reverse mode through the exact sequence of
//!   log-domain sweeps recorded on a [`Tape`], so it differentiates the
//!   `ℓ`-iteration map rather than the fixed point.
//! * [`jacobian_implicit`] differentiates the fixed point `u ∘ Kv = a`,
//!   `v ∘ K^T u = b` with the implicit function theorem, solving a dense
//!   `(n+m) x (n+m)` system.
//!
//! [`finite_diff_check`] is the shared oracle for both.
//!
//! All cost-path derivatives are first taken with respect to the squashed
//! coordinates `x̃ = squash(x)`; [`InputGradient::x`] then chains them through
//! the standardization and adds the direct contribution of the raw values
//! averaged by the S-sorts.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exact1d::{ranks_from_plan, sorts_from_plan};
use crate::matrix::Matrix;
use crate::measures::{
    build_cost, squash, squash_vjp, CostMatrix, DiscreteMeasure, TargetDescriptor,
};
use crate::sinkhorn::{
    log_plan, run_log_sweeps, sinkhorn_log, LogSweeper, SinkhornState, SoftSortConfig,
};

/// Condition numbers above this make [`jacobian_implicit`] refuse to answer.
pub const MAX_CONDITION: f64 = 1e14;

/// Cotangent on the outputs `(S-ranks, S-sorts)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cotangent {
    pub ranks: Vec<f64>,
    pub sorts: Vec<f64>,
}

impl Cotangent {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            ranks: vec![0.0; n],
            sorts: vec![0.0; m],
        }
    }

    pub fn on_ranks(ranks: Vec<f64>, m: usize) -> Self {
        Self {
            ranks,
            sorts: vec![0.0; m],
        }
    }

    pub fn on_sorts(n: usize, sorts: Vec<f64>) -> Self {
        Self {
            ranks: vec![0.0; n],
            sorts,
        }
    }
}

/// Gradient of `<seed, outputs>` with respect to the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGradient {
    /// With respect to the raw inputs `x` (squash chain rule plus value path).
    pub x: Vec<f64>,
    /// With respect to the squashed cost coordinates, through the cost only.
    pub squashed: Vec<f64>,
    /// With respect to the values averaged by the S-sorts.
    pub values: Vec<f64>,
    /// With respect to the source weights `a`; only the unrolled path fills it.
    pub a: Option<Vec<f64>>,
}

/// Forward record of a log-domain Sinkhorn rank/sort evaluation.
#[derive(Debug, Clone)]
pub struct Tape {
    a: Vec<f64>,
    raw_x: Vec<f64>,
    squashed: Vec<f64>,
    target: TargetDescriptor,
    cfg: SoftSortConfig,
    cost: CostMatrix,
    /// `alphas[t]` after sweep `t`; `alphas[0]` is the zero initialization.
    alphas: Vec<Vec<f64>>,
    /// `betas[t]` after sweep `t`; `betas[0]` is the zero initialization.
    betas: Vec<Vec<f64>>,
    converged: bool,
    marginal_error: f64,
    plan: Matrix,
    s_ranks: Vec<f64>,
    s_sorts: Vec<f64>,
}

impl Tape {
    /// Runs the soft operators in log-domain mode, recording every sweep.
    pub fn record(
        source: &DiscreteMeasure,
        target: &TargetDescriptor,
        cfg: &SoftSortConfig,
    ) -> Result<Self> {
        Self::record_unchecked(source.weights(), source.support(), target, cfg)
    }

    /// Like [`Tape::record`] but accepts any positive `a`, so that the
    /// weights can be perturbed off the simplex by finite differences.
    pub fn record_unchecked(
        a: &[f64],
        x: &[f64],
        target: &TargetDescriptor,
        cfg: &SoftSortConfig,
    ) -> Result<Self> {
        cfg.sinkhorn.validate()?;
        if a.len() != x.len() {
            return Err(Error::invalid("weights and inputs differ in length"));
        }
        if a.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::invalid("weights must be strictly positive"));
        }
        let squashed = squash(x, cfg.squash)?;
        let cost = build_cost(&squashed, target.support(), cfg.cost)?;
        let mut alphas = vec![vec![0.0; a.len()]];
        let mut betas = vec![vec![0.0; target.len()]];
        let run = run_log_sweeps(
            a,
            target.weights(),
            cost.entries().as_slice(),
            &cfg.sinkhorn,
            |al, be| {
                alphas.push(al.to_vec());
                betas.push(be.to_vec());
            },
        )?;
        let plan = log_plan(&run.alpha, &run.beta, cost.entries(), cfg.sinkhorn.epsilon);
        let s_ranks = ranks_from_plan(&plan, a, target.cumulative());
        let s_sorts = sorts_from_plan(&plan, target.weights(), x);
        Ok(Self {
            a: a.to_vec(),
            raw_x: x.to_vec(),
            squashed,
            target: target.clone(),
            cfg: *cfg,
            cost,
            alphas,
            betas,
            converged: run.error < cfg.sinkhorn.eta,
            marginal_error: run.error,
            plan,
            s_ranks,
            s_sorts,
        })
    }

    pub fn iterations(&self) -> usize {
        self.alphas.len() - 1
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn marginal_error(&self) -> f64 {
        self.marginal_error
    }

    pub fn s_ranks(&self) -> &[f64] {
        &self.s_ranks
    }

    pub fn s_sorts(&self) -> &[f64] {
        &self.s_sorts
    }

    pub fn plan(&self) -> &Matrix {
        &self.plan
    }

    pub fn cost(&self) -> &CostMatrix {
        &self.cost
    }

    pub fn squashed(&self) -> &[f64] {
        &self.squashed
    }

    /// Final potentials `(alpha, beta)`.
    pub fn potentials(&self) -> (&[f64], &[f64]) {
        (
            &self.alphas[self.iterations()],
            &self.betas[self.iterations()],
        )
    }

    /// The converged state, for the implicit route.
    pub fn state(&self) -> SinkhornState {
        let (alpha, beta) = self.potentials();
        SinkhornState {
            scalings: crate::sinkhorn::Scalings::LogDomain {
                alpha: alpha.to_vec(),
                beta: beta.to_vec(),
            },
            epsilon: self.cfg.sinkhorn.epsilon,
            iterations_used: self.iterations(),
            converged: self.converged,
            marginal_error: self.marginal_error,
        }
    }

    /// `dC_ij / dx̃_i = -h'(y_j - x̃_i)`.
    pub fn cost_partials(&self) -> Matrix {
        self.cost.row_support_partials()
    }

    /// Re-runs the recorded number of sweeps from zero potentials.
    pub fn replay(&self) -> (Vec<f64>, Vec<f64>) {
        let sweeper = LogSweeper::new(
            &self.a,
            self.target.weights(),
            self.cost.entries().as_slice(),
            self.cfg.sinkhorn.epsilon,
        );
        replay_sweeps(&sweeper, self.iterations())
    }
}

fn replay_sweeps(sweeper: &LogSweeper<'_>, iterations: usize) -> (Vec<f64>, Vec<f64>) {
    let mut alpha = vec![0.0; sweeper.n];
    let mut beta = vec![0.0; sweeper.m];
    let mut lse = vec![0.0; sweeper.m];
    for _ in 0..iterations {
        sweeper.column_lse(&alpha, &beta, &mut lse);
        sweeper.update_beta(&mut beta, &lse);
        sweeper.update_alpha(&mut alpha, &beta);
    }
    (alpha, beta)
}

/// The `iterations`-sweep forward map `(a, x) -> (S-ranks, S-sorts)` with
/// no stopping rule; the function [`vjp_unrolled`] differentiates.
pub fn unrolled_outputs(
    a: &[f64],
    x: &[f64],
    target: &TargetDescriptor,
    cfg: &SoftSortConfig,
    iterations: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != x.len() {
        return Err(Error::invalid("weights and inputs differ in length"));
    }
    let squashed = squash(x, cfg.squash)?;
    let cost = build_cost(&squashed, target.support(), cfg.cost)?;
    let sweeper = LogSweeper::new(
        a,
        target.weights(),
        cost.entries().as_slice(),
        cfg.sinkhorn.epsilon,
    );
    let (alpha, beta) = replay_sweeps(&sweeper, iterations);
    let plan = log_plan(&alpha, &beta, cost.entries(), cfg.sinkhorn.epsilon);
    Ok((
        ranks_from_plan(&plan, a, target.cumulative()),
        sorts_from_plan(&plan, target.weights(), x),
    ))
}

/// Reverse-mode derivative of the recorded sweeps.
pub fn vjp_unrolled(seed: &Cotangent, tape: &Tape) -> Result<InputGradient> {
    let n = tape.a.len();
    let m = tape.target.len();
    if seed.ranks.len() != n || seed.sorts.len() != m {
        return Err(Error::invalid(format!(
            "cotangent of shape ({}, {}) does not match outputs ({n}, {m})",
            seed.ranks.len(),
            seed.sorts.len()
        )));
    }
    let eps = tape.cfg.sinkhorn.epsilon;
    let a = &tape.a;
    let b = tape.target.weights();
    let cb = tape.target.cumulative();
    let cost = tape.cost.entries();
    let nf = n as f64;

    let mut grad_a = vec![0.0; n];
    let mut grad_values = vec![0.0; n];
    let mut grad_cost = Matrix::zeros(n, m);
    let mut alpha_bar = vec![0.0; n];
    let mut beta_bar = vec![0.0; m];

    // Output layer: R_i = n/a_i sum_j P_ij cb_j, S_j = 1/b_j sum_i P_ij x_i.
    let plan = &tape.plan;
    for i in 0..n {
        grad_a[i] -= seed.ranks[i] * tape.s_ranks[i] / a[i];
        for j in 0..m {
            let p = plan[(i, j)];
            let p_bar = seed.ranks[i] * nf * cb[j] / a[i] + seed.sorts[j] * tape.raw_x[i] / b[j];
            grad_values[i] += seed.sorts[j] * p / b[j];
            let w = p_bar * p / eps;
            alpha_bar[i] += w;
            beta_bar[j] += w;
            grad_cost[(i, j)] -= w;
        }
    }

    for t in (1..=tape.iterations()).rev() {
        let alpha_t = &tape.alphas[t];
        let alpha_prev = &tape.alphas[t - 1];
        let beta_t = &tape.betas[t];
        // alpha^t = eps log a - eps LSE_j((beta^t_j - C_ij)/eps)
        for i in 0..n {
            grad_a[i] += alpha_bar[i] * eps / a[i];
            for j in 0..m {
                let r = ((alpha_t[i] + beta_t[j] - cost[(i, j)]) / eps).exp() / a[i];
                beta_bar[j] -= alpha_bar[i] * r;
                grad_cost[(i, j)] += alpha_bar[i] * r;
            }
        }
        // beta^t = eps log b - eps LSE_i((alpha^{t-1}_i - C_ij)/eps)
        let mut next_alpha_bar = vec![0.0; n];
        for i in 0..n {
            for j in 0..m {
                let q = ((alpha_prev[i] + beta_t[j] - cost[(i, j)]) / eps).exp() / b[j];
                next_alpha_bar[i] -= beta_bar[j] * q;
                grad_cost[(i, j)] += beta_bar[j] * q;
            }
        }
        alpha_bar = next_alpha_bar;
        beta_bar.iter_mut().for_each(|v| *v = 0.0);
    }

    let partials = tape.cost_partials();
    let grad_squashed: Vec<f64> = (0..n)
        .map(|i| (0..m).map(|j| grad_cost[(i, j)] * partials[(i, j)]).sum())
        .collect();
    let x = raw_gradient(&tape.raw_x, tape.cfg.squash, &grad_squashed, &grad_values);
    Ok(InputGradient {
        x,
        squashed: grad_squashed,
        values: grad_values,
        a: Some(grad_a),
    })
}

fn raw_gradient(
    x: &[f64],
    g: crate::measures::Squash,
    squashed: &[f64],
    values: &[f64],
) -> Vec<f64> {
    squash_vjp(x, g, squashed)
        .iter()
        .zip(values)
        .map(|(s, v)| s + v)
        .collect()
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Implicit-function Jacobian of the Sinkhorn scalings `w = (u, v)` with
/// respect to the squashed inputs.
#[derive(Debug, Clone)]
pub struct ImplicitJacobian {
    u: Vec<f64>,
    v: Vec<f64>,
    kernel: Matrix,
    /// `Δ_ij = dK_ij / dx̃_i`.
    delta: Matrix,
    /// Converged plan `D(u) K D(v)`, computed from the potentials.
    plan: Matrix,
    /// `h'(y_j - x̃_i) / eps`, so that `Δ = G ∘ K`.
    log_kernel_partials: Matrix,
    /// `J_z f = [[D(Kv), D(u)K], [D(v)K^T, D(K^T u)]]`.
    system: Matrix,
    /// `J_x f = [[D(u ∘ Δv)], [D(v) Δ^T D(u)]]`.
    rhs: Matrix,
    /// `D(w)^{-1} J_x w`.
    relative: Matrix,
    /// `J_x w`, `(n+m) x n`.
    jacobian: Matrix,
    condition: f64,
}

impl ImplicitJacobian {
    pub fn jacobian(&self) -> &Matrix {
        &self.jacobian
    }

    /// `J_x w` with each row divided by the matching scaling.
    pub fn relative_jacobian(&self) -> &Matrix {
        &self.relative
    }

    pub fn system(&self) -> &Matrix {
        &self.system
    }

    pub fn rhs(&self) -> &Matrix {
        &self.rhs
    }

    /// Condition number of the gauge-fixed, column-scaled system.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn scalings(&self) -> (&[f64], &[f64]) {
        (&self.u, &self.v)
    }

    pub fn kernel(&self) -> &Matrix {
        &self.kernel
    }

    pub fn delta(&self) -> &Matrix {
        &self.delta
    }

    /// Solves the same system through the factorized inverse
    /// `(D(Λz / z) + Λ)^{-1} D(z^{-1})`, assembled from `u`, `v`, `K`.
    pub fn solve_factorized(&self) -> Result<Matrix> {
        let (n, m) = (self.u.len(), self.v.len());
        let z: Vec<f64> = self.u.iter().chain(&self.v).copied().collect();
        let kv = self.kernel.mul_vec(&self.v);
        let ktu = self.kernel.tr_mul_vec(&self.u);
        let lz: Vec<f64> = kv.iter().chain(&ktu).copied().collect();
        let dim = n + m;
        let mut f = Matrix::zeros(dim, dim);
        for i in 0..dim {
            f[(i, i)] = lz[i] / z[i];
        }
        for i in 0..n {
            for j in 0..m {
                f[(i, n + j)] = self.kernel[(i, j)];
                f[(n + j, i)] = self.kernel[(i, j)];
            }
        }
        let rhs = Matrix::from_fn(dim, n, |r, c| -self.rhs[(r, c)] / z[r]);
        let (sol, _) = gauge_fixed_solve(&f, &rhs)?;
        Ok(sol)
    }

    /// `d(S-ranks) / dx̃`, an `n x n` matrix, using
    /// `dP_ij / dx̃_k = P_ij (J'u_ik + J'v_jk + [i = k] G_ij)`.
    pub fn rank_jacobian(&self, a: &[f64], cumulative_b: &[f64]) -> Matrix {
        let (n, m) = (self.u.len(), self.v.len());
        let nf = n as f64;
        Matrix::from_fn(n, n, |r, k| {
            let acc: f64 = (0..m)
                .map(|j| {
                    let mut d = self.relative[(r, k)] + self.relative[(n + j, k)];
                    if r == k {
                        d += self.log_kernel_partials[(r, j)];
                    }
                    cumulative_b[j] * self.plan[(r, j)] * d
                })
                .sum();
            nf / a[r] * acc
        })
    }

    /// `d(S-sorts) / dx̃` through the cost only, an `m x n` matrix.
    pub fn sort_jacobian(&self, b: &[f64], values: &[f64]) -> Matrix {
        let (n, m) = (self.u.len(), self.v.len());
        Matrix::from_fn(m, n, |c, k| {
            let acc: f64 = (0..n)
                .map(|i| {
                    let mut d = self.relative[(i, k)] + self.relative[(n + c, k)];
                    if i == k {
                        d += self.log_kernel_partials[(i, c)];
                    }
                    values[i] * self.plan[(i, c)] * d
                })
                .sum();
            acc / b[c]
        })
    }
}

/// Replaces the last (redundant) equation with `h_{n+m} = 0`.
///
/// `J_z f` always has the kernel direction `(u, -v)` (rescaling `u` by `λ`
/// and `v` by `1/λ` leaves the plan unchanged) and the left null vector
/// `(1_n, -1_m)`, so any one equation is implied by the others and the
/// solution is unique up to that direction. Pinning the last coordinate
/// picks one representative; plans and outputs do not depend on the choice.
fn gauge_fixed_solve(system: &Matrix, rhs: &Matrix) -> Result<(Matrix, f64)> {
    let pinned = vec![system.rows() - 1];
    pinned_solve(system, rhs, &pinned)
}

fn pinned_solve(system: &Matrix, rhs: &Matrix, pinned: &[usize]) -> Result<(Matrix, f64)> {
    let dim = system.rows();
    let mut a = to_dmatrix(system);
    let mut b = to_dmatrix(rhs);
    for &r in pinned {
        for c in 0..dim {
            a[(r, c)] = 0.0;
        }
        a[(r, r)] = 1.0;
        for c in 0..b.ncols() {
            b[(r, c)] = 0.0;
        }
    }
    let sv = a.clone().singular_values();
    let hi = sv.max();
    let lo = sv.min();
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        return Err(Error::SingularSystem { condition });
    }
    let sol = a
        .lu()
        .solve(&b)
        .ok_or(Error::SingularSystem { condition })?;
    Ok((from_dmatrix(&sol), condition))
}

/// Couplings below this fraction of the largest plan entry are treated as
/// exact zeros when solving.
pub const NEGLIGIBLE_COUPLING: f64 = 1e-13;

/// Last node of every connected component of the bipartite graph with rows
/// `0..n`, columns `n..n+m` and an edge wherever `keep(i, j)`.
fn component_representatives(
    n: usize,
    m: usize,
    keep: impl Fn(usize, usize) -> bool,
) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n + m).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in 0..m {
            if keep(i, j) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, n + j));
                if ri != rj {
                    parent[ri.min(rj)] = ri.max(rj);
                }
            }
        }
    }
    let mut reps: Vec<usize> = (0..n + m).filter(|&x| find(&mut parent, x) == x).collect();
    reps.sort_unstable();
    reps
}

/// Implicit-function Jacobian `J_x w = -[J_z f]^{-1} J_x f` at a converged
/// Sinkhorn state, with `x` the cost coordinates carried by `cost`.
///
/// The literal blocks are assembled from `u`, `K`, `v`; the solve itself runs
/// on the column-scaled system `J_z f D(w) = [[D(P1), P], [P^T, D(P^T 1)]]`
/// built from the plan in the log domain, since `u` and `v` alone can span
/// hundreds of orders of magnitude at small `epsilon`.
pub fn jacobian_implicit(
    state: &SinkhornState,
    cost: &CostMatrix,
    epsilon: f64,
) -> Result<ImplicitJacobian> {
    if !state.converged {
        return Err(Error::NotConverged {
            iterations: state.iterations_used,
            marginal_error: state.marginal_error,
        });
    }
    if state.epsilon != epsilon {
        return Err(Error::invalid(format!(
            "state was solved at epsilon {} but {epsilon} was requested",
            state.epsilon
        )));
    }
    let n = cost.rows();
    let m = cost.cols();
    let (alpha, beta) = state.potentials();
    if alpha.len() != n || beta.len() != m {
        return Err(Error::invalid("state and cost matrix differ in shape"));
    }
    // Shift the gauge so that max alpha = 0 before exponentiating.
    let shift = alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let u: Vec<f64> = alpha
        .iter()
        .map(|a| ((a - shift) / epsilon).exp())
        .collect();
    let v: Vec<f64> = beta.iter().map(|b| ((b + shift) / epsilon).exp()).collect();
    let c = cost.entries();
    let kernel = Matrix::from_fn(n, m, |i, j| (-c[(i, j)] / epsilon).exp());
    let h = cost.cost();
    let (x, y) = (cost.row_support(), cost.col_support());
    let log_kernel_partials = Matrix::from_fn(n, m, |i, j| h.derivative(y[j] - x[i]) / epsilon);
    let delta = Matrix::from_fn(n, m, |i, j| log_kernel_partials[(i, j)] * kernel[(i, j)]);
    let plan = log_plan(&alpha, &beta, c, epsilon);

    let dim = n + m;
    let kv = kernel.mul_vec(&v);
    let ktu = kernel.tr_mul_vec(&u);
    let mut system = Matrix::zeros(dim, dim);
    for i in 0..n {
        system[(i, i)] = kv[i];
        for j in 0..m {
            system[(i, n + j)] = u[i] * kernel[(i, j)];
            system[(n + j, i)] = v[j] * kernel[(i, j)];
        }
    }
    for j in 0..m {
        system[(n + j, n + j)] = ktu[j];
    }

    // u_i Δ_ij v_j = G_ij P_ij, so J_x f only needs the plan.
    let mut rhs = Matrix::zeros(dim, n);
    for i in 0..n {
        for j in 0..m {
            let gp = log_kernel_partials[(i, j)] * plan[(i, j)];
            rhs[(i, i)] += gp;
            rhs[(n + j, i)] = gp;
        }
    }

    // Column-scaled system on the plan with negligible couplings dropped.
    // Every connected component of what remains carries its own gauge
    // direction, pinned at one node per component.
    let cutoff = NEGLIGIBLE_COUPLING * plan.as_slice().iter().copied().fold(0.0, f64::max);
    let kept = Matrix::from_fn(n, m, |i, j| {
        if plan[(i, j)] >= cutoff {
            plan[(i, j)]
        } else {
            0.0
        }
    });
    let mut scaled = Matrix::zeros(dim, dim);
    let mut scaled_rhs = Matrix::zeros(dim, n);
    let (rows, cols) = (kept.row_sums(), kept.col_sums());
    for i in 0..n {
        scaled[(i, i)] = rows[i];
        for j in 0..m {
            let p = kept[(i, j)];
            let gp = log_kernel_partials[(i, j)] * p;
            scaled[(i, n + j)] = p;
            scaled[(n + j, i)] = p;
            scaled_rhs[(i, i)] -= gp;
            scaled_rhs[(n + j, i)] = -gp;
        }
    }
    for j in 0..m {
        scaled[(n + j, n + j)] = cols[j];
    }
    let pinned = component_representatives(n, m, |i, j| kept[(i, j)] > 0.0);
    let (relative, condition) = pinned_solve(&scaled, &scaled_rhs, &pinned)?;
    let z: Vec<f64> = u.iter().chain(&v).copied().collect();
    let jacobian = Matrix::from_fn(dim, n, |r, k| z[r] * relative[(r, k)]);
    Ok(ImplicitJacobian {
        u,
        v,
        kernel,
        delta,
        plan,
        log_kernel_partials,
        system,
        rhs,
        relative,
        jacobian,
        condition,
    })
}

/// Gradient of `<seed, (S-ranks, S-sorts)>` through the implicit Jacobian.
/// Solves in log-domain mode and refuses unconverged solves.
pub fn implicit_gradient(
    source: &DiscreteMeasure,
    target: &TargetDescriptor,
    cfg: &SoftSortConfig,
    seed: &Cotangent,
) -> Result<InputGradient> {
    let n = source.len();
    let m = target.len();
    if seed.ranks.len() != n || seed.sorts.len() != m {
        return Err(Error::invalid("cotangent does not match output shapes"));
    }
    let x = source.support();
    let squashed = squash(x, cfg.squash)?;
    let cost = build_cost(&squashed, target.support(), cfg.cost)?;
    let state = sinkhorn_log(
        source.weights(),
        target.weights(),
        cost.entries(),
        &cfg.sinkhorn,
    )?;
    let jac = jacobian_implicit(&state, &cost, cfg.sinkhorn.epsilon)?;
    let jr = jac.rank_jacobian(source.weights(), target.cumulative());
    let js = jac.sort_jacobian(target.weights(), x);
    let grad_squashed: Vec<f64> = (0..n)
        .map(|k| {
            let r: f64 = (0..n).map(|i| seed.ranks[i] * jr[(i, k)]).sum();
            let s: f64 = (0..m).map(|j| seed.sorts[j] * js[(j, k)]).sum();
            r + s
        })
        .collect();
    let plan = state.plan(cost.entries());
    let b = target.weights();
    let grad_values: Vec<f64> = (0..n)
        .map(|i| (0..m).map(|j| seed.sorts[j] * plan[(i, j)] / b[j]).sum())
        .collect();
    Ok(InputGradient {
        x: raw_gradient(x, cfg.squash, &grad_squashed, &grad_values),
        squashed: grad_squashed,
        values: grad_values,
        a: None,
    })
}

/// Central-difference gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiff {
    pub gradient: Vec<f64>,
    pub step: f64,
}

pub fn finite_diff_check(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Result<FiniteDiff> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let mut probe = x.to_vec();
    let gradient = (0..x.len())
        .map(|k| {
            probe[k] = x[k] + step;
            let up = f(&probe);
            probe[k] = x[k] - step;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * step)
        })
        .collect();
    Ok(FiniteDiff { gradient, step })
}

/// `||g - h|| / max(||g||, ||h||)`, or 0 when both vanish.
pub fn relative_error(g: &[f64], h: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = g.iter().zip(h).map(|(a, b)| a - b).collect();
    let scale = norm(g).max(norm(h));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}
