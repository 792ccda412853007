//! Shared helpers: random well-conditioned problems and a brute-force ε
//! oracle that shares no code with the library's solver or enumerator.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resilient_gd::RegressionProblem;

/// Plain data for one agent: rows of `A_i` and entries of `B_i`.
#[derive(Debug, Clone)]
pub struct RawAgent {
    pub rows: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Agents whose blocks are perturbed identities, so every subset is full
/// rank and well conditioned.
pub fn random_agents(seed: u64, n: usize, d: usize) -> Vec<RawAgent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let rows: Vec<Vec<f64>> = (0..d)
                .map(|k| {
                    (0..d)
                        .map(|j| if j == k { 1.0 } else { 0.0 } + rng.random_range(-0.3..0.3))
                        .collect()
                })
                .collect();
            let b = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            RawAgent { rows, b }
        })
        .collect()
}

pub fn to_problem(agents: &[RawAgent]) -> RegressionProblem {
    let d = agents[0].rows[0].len();
    RegressionProblem::new(
        agents
            .iter()
            .map(|a| {
                let flat: Vec<f64> = a.rows.iter().flatten().copied().collect();
                (
                    DMatrix::from_row_slice(a.rows.len(), d, &flat),
                    DVector::from_vec(a.b.clone()),
                )
            })
            .collect(),
    )
    .unwrap()
}

/// Solves `M x = v` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut m: Vec<Vec<f64>>, mut v: Vec<f64>) -> Vec<f64> {
    let d = v.len();
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        v.swap(col, piv);
        let (pivot_rows, rest) = m.split_at_mut(col + 1);
        let pivot = &pivot_rows[col];
        for (off, row) in rest.iter_mut().enumerate() {
            let factor = row[col] / pivot[col];
            for (a, b) in row[col..].iter_mut().zip(&pivot[col..]) {
                *a -= factor * b;
            }
            v[col + 1 + off] -= factor * v[col];
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let s: f64 = (row + 1..d).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - s) / m[row][row];
    }
    x
}

/// Minimizer of `Σ_{i∈S} ||B_i − A_i x||²` via the normal equations.
pub fn normal_equations_min(agents: &[RawAgent], subset: &[usize]) -> Vec<f64> {
    let d = agents[0].rows[0].len();
    let mut m = vec![vec![0.0; d]; d];
    let mut v = vec![0.0; d];
    for &i in subset {
        for (row, &b) in agents[i].rows.iter().zip(&agents[i].b) {
            for j in 0..d {
                v[j] += row[j] * b;
                for k in 0..d {
                    m[j][k] += row[j] * row[k];
                }
            }
        }
    }
    gauss_solve(m, v)
}

/// All subsets of `items` with exactly `k` elements, by recursion.
pub fn choose(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if items.len() < k {
        return vec![];
    }
    let mut with: Vec<Vec<usize>> = choose(&items[1..], k - 1)
        .into_iter()
        .map(|mut s| {
            s.insert(0, items[0]);
            s
        })
        .collect();
    with.extend(choose(&items[1..], k));
    with
}

/// `max_{|S|=n−f} max_{Ŝ⊊S, |Ŝ|≥n−2f−r} ||x_Ŝ − x_S||`.
pub fn brute_force_epsilon(agents: &[RawAgent], f: usize, r: usize) -> f64 {
    let n = agents.len();
    if f + r == 0 {
        return 0.0;
    }
    let all: Vec<usize> = (0..n).collect();
    let mut worst: f64 = 0.0;
    for s in choose(&all, n - f) {
        let xs = normal_equations_min(agents, &s);
        for size in (n - 2 * f - r).max(1)..(n - f) {
            for sub in choose(&s, size) {
                let xh = normal_equations_min(agents, &sub);
                let dist = xs.iter().zip(&xh).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                worst = worst.max(dist);
            }
        }
    }
    worst
}
