//! The 1D closed form against brute-force enumeration of the vertices of
//! the transportation polytope.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sinksort::measures::regular_grid;
use sinksort::{build_cost, solve_exact, CostSpec, DiscreteMeasure, Matrix, TargetDescriptor};

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum of `<P, C>` over all basic feasible solutions.
fn lp_minimum(a: &[f64], b: &[f64], cost: &Matrix) -> f64 {
    let (n, m) = (a.len(), b.len());
    // Row constraints and all but one column constraint (the last is implied).
    let rows = n + m - 1;
    let mut eq = DMatrix::<f64>::zeros(rows, n * m);
    for i in 0..n {
        for j in 0..m {
            eq[(i, i * m + j)] = 1.0;
            if j + 1 < m {
                eq[(n + j, i * m + j)] = 1.0;
            }
        }
    }
    let rhs = DVector::from_iterator(rows, a.iter().chain(&b[..m - 1]).copied());
    let mut best = f64::INFINITY;
    for basis in combinations(n * m, rows) {
        let sub = DMatrix::from_fn(rows, rows, |r, c| eq[(r, basis[c])]);
        let Some(sol) = sub.clone().lu().solve(&rhs) else {
            continue;
        };
        if (&sub * &sol - &rhs).amax() > 1e-9 || sol.iter().any(|v| *v < -1e-12) {
            continue;
        }
        let value: f64 = basis
            .iter()
            .zip(sol.iter())
            .map(|(&k, v)| v * cost.as_slice()[k])
            .sum();
        best = best.min(value);
    }
    best
}

#[test]
fn figure_instance_matches_vertex_enumeration() {
    let x = [0.1, 0.9, 0.4, 0.6];
    let a = [0.25; 4];
    let b = [0.48, 0.16, 0.36];
    let y = regular_grid(3);
    for h in [
        CostSpec::squared(),
        CostSpec::absolute(),
        CostSpec::abs_power(1.5).unwrap(),
    ] {
        let source = DiscreteMeasure::new(a.to_vec(), x.to_vec()).unwrap();
        let target = TargetDescriptor::new(b.to_vec(), y.clone()).unwrap();
        let cost = build_cost(&x, &y, h).unwrap();
        let plan = solve_exact(&source, &target, h).unwrap();
        assert!(plan.marginal_violation() < 1e-12);
        let lp = lp_minimum(&a, &b, cost.entries());
        assert!((plan.objective(cost.entries()) - lp).abs() < 1e-10, "{h:?}");
    }
}

#[test]
fn random_weighted_instances_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..40 {
        let n = rng.random_range(2..=4);
        let m = rng.random_range(2..=3);
        let weights = |rng: &mut ChaCha8Rng, k: usize| {
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        let a = weights(&mut rng, n);
        let b = weights(&mut rng, m);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut y: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        y.sort_by(f64::total_cmp);
        let source = DiscreteMeasure::new(a.clone(), x.clone()).unwrap();
        let target = TargetDescriptor::new(b.clone(), y.clone()).unwrap();
        let h = CostSpec::squared();
        let cost = build_cost(&x, &y, h).unwrap();
        let plan = solve_exact(&source, &target, h).unwrap();
        let lp = lp_minimum(&a, &b, cost.entries());
        assert!((plan.objective(cost.entries()) - lp).abs() < 1e-10);
    }
}
