//! Exact `(f, r; ε)`-redundancy for least-squares costs.
//!
//! For every set `S` of `n − f` agents and every proper subset `Ŝ ⊊ S` with
//! `|Ŝ| ≥ n − 2f − r`, the minimizers `x_S` and `x_Ŝ` are computed exactly and
//! `ε` is the largest distance between such a pair. Minimizers are unique
//! because every queried subset must have full column rank.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_budget, RegressionProblem};
use crate::subsets::{binomial, k_subsets, mask_of};

/// Upper limit on the number of `(S, Ŝ)` pairs an enumeration may visit.
pub const MAX_PAIRS: u128 = 10_000_000;

/// The subset pair attaining ε.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub s: Vec<usize>,
    pub s_hat: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub f: usize,
    pub r: usize,
    pub epsilon: f64,
    /// `None` when no admissible pair exists (`f + r = 0`).
    pub witness: Option<Witness>,
}

/// Euclidean distance `||x − y||`.
pub fn point_distance(x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok((x - y).norm())
}

/// Number of `(S, Ŝ)` pairs visited by [`compute_epsilon`].
pub fn pair_count(n: usize, f: usize, r: usize) -> u128 {
    let size = n - f;
    let per_s: u128 = (1..=(f + r).min(size))
        .map(|drop| binomial(size, drop))
        .fold(0u128, |a, b| a.saturating_add(b));
    binomial(n, size).saturating_mul(per_s)
}

#[derive(Debug, Clone)]
struct Candidate {
    dist: f64,
    s: Vec<usize>,
    s_hat: Vec<usize>,
}

impl Candidate {
    /// Larger distance wins; ties go to the lexicographically smaller pair.
    fn beats(&self, other: &Candidate) -> bool {
        match self.dist.partial_cmp(&other.dist) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Less) => false,
            _ => (&self.s, &self.s_hat) < (&other.s, &other.s_hat),
        }
    }

    fn better(self, other: Candidate) -> Candidate {
        if other.beats(&self) {
            other
        } else {
            self
        }
    }
}

/// Tightest ε for which the agents' costs are `(f, r; ε)`-redundant.
pub fn compute_epsilon(problem: &RegressionProblem, f: usize, r: usize) -> Result<RedundancyReport> {
    let n = problem.n();
    check_budget(n, f, r)?;
    if f + r == 0 {
        return Ok(RedundancyReport {
            f,
            r,
            epsilon: 0.0,
            witness: None,
        });
    }
    if n > 64 {
        return Err(Error::InvalidArgument(format!(
            "exhaustive enumeration supports at most 64 agents, got {n}"
        )));
    }
    let pairs = pair_count(n, f, r);
    if pairs > MAX_PAIRS {
        return Err(Error::EnumerationTooLarge { pairs, cap: MAX_PAIRS });
    }

    let size = n - f;
    let smallest = n - 2 * f - r;
    let agents: Vec<usize> = (0..n).collect();

    // Every subset with size in [smallest, size] is some Ŝ or S.
    let needed: Vec<Vec<usize>> = (smallest..=size)
        .flat_map(|k| k_subsets(&agents, k).collect::<Vec<_>>())
        .collect();
    let solved: Vec<Result<DVector<f64>>> = needed.par_iter().map(|s| problem.least_squares_min(s)).collect();
    let mut minimizers = HashMap::with_capacity(needed.len());
    for (s, x) in needed.iter().zip(solved) {
        minimizers.insert(mask_of(s), x?);
    }

    let outer: Vec<Vec<usize>> = k_subsets(&agents, size).collect();
    let best = outer
        .par_iter()
        .map(|s| {
            let xs = &minimizers[&mask_of(s)];
            let mut best: Option<Candidate> = None;
            for k in smallest..size {
                for s_hat in k_subsets(s, k) {
                    let dist = (xs - &minimizers[&mask_of(&s_hat)]).norm();
                    let cand = Candidate {
                        dist,
                        s: s.clone(),
                        s_hat,
                    };
                    best = Some(match best {
                        None => cand,
                        Some(b) => b.better(cand),
                    });
                }
            }
            best
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (Some(a), Some(b)) => Some(a.better(b)),
                (a, None) => a,
                (None, b) => b,
            },
        );

    let best = best.expect("f + r > 0 leaves at least one pair");
    Ok(RedundancyReport {
        f,
        r,
        epsilon: best.dist,
        witness: Some(Witness {
            s: best.s,
            s_hat: best.s_hat,
        }),
    })
}

/// One `(f, r)` cell of an ε grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCell {
    pub f: usize,
    pub r: usize,
    pub epsilon: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonGrid {
    pub cells: Vec<EpsilonCell>,
    /// Why each invalid cell was skipped, keyed by `(f, r)`.
    pub reasons: Vec<((usize, usize), String)>,
}

/// ε for every `(f, r)` with `f ≤ f_max`, `r ≤ r_max`; cells that cannot be
/// computed are flagged rather than failing the grid.
pub fn epsilon_grid(problem: &RegressionProblem, f_max: usize, r_max: usize) -> EpsilonGrid {
    let keys: Vec<(usize, usize)> = (0..=f_max).flat_map(|f| (0..=r_max).map(move |r| (f, r))).collect();
    let results: Vec<_> = keys.par_iter().map(|&(f, r)| compute_epsilon(problem, f, r)).collect();
    let mut cells = Vec::with_capacity(keys.len());
    let mut reasons = Vec::new();
    for (&(f, r), res) in keys.iter().zip(results) {
        match res {
            Ok(rep) => cells.push(EpsilonCell {
                f,
                r,
                epsilon: Some(rep.epsilon),
                valid: true,
            }),
            Err(e) => {
                cells.push(EpsilonCell {
                    f,
                    r,
                    epsilon: None,
                    valid: false,
                });
                reasons.push(((f, r), e.to_string()));
            }
        }
    }
    EpsilonGrid { cells, reasons }
}

impl EpsilonGrid {
    pub fn get(&self, f: usize, r: usize) -> Option<&EpsilonCell> {
        self.cells.iter().find(|c| c.f == f && c.r == r)
    }

    /// Writes the grid as CSV with header `f,r,epsilon,valid`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for cell in &self.cells {
            w.serialize(cell).map_err(|e| Error::io("<csv>", e))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<EpsilonCell>> {
        let mut rdr = csv::Reader::from_reader(reader);
        rdr.deserialize()
            .map(|rec| {
                rec.map_err(|e| Error::Parse {
                    source_name: "epsilon grid".into(),
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: &[f64], b: &[f64]) -> RegressionProblem {
        let rows: Vec<Vec<f64>> = a.iter().map(|&v| vec![v]).collect();
        RegressionProblem::from_single_rows(&rows, b).unwrap()
    }

    #[test]
    fn distance_examples() {
        let d = point_distance(&DVector::from_vec(vec![0.0, 0.0]), &DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_eq!(d, 5.0);
        let x = DVector::from_vec(vec![0.3, -7.0]);
        assert_eq!(point_distance(&x, &x).unwrap(), 0.0);
        let d = point_distance(&DVector::from_element(1, -1.0 / 3.0), &DVector::from_element(1, 0.0)).unwrap();
        assert_eq!(d, 1.0 / 3.0);
        assert!(point_distance(&x, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn scalar_three_agent_example() {
        // Q1 = Q2 = x², Q3 = (x + 1)²
        let p = scalar(&[1.0, 1.0, 1.0], &[0.0, 0.0, -1.0]);
        let rep = compute_epsilon(&p, 0, 1).unwrap();
        assert!((rep.epsilon - 1.0 / 3.0).abs() < 1e-15);
        let w = rep.witness.unwrap();
        assert_eq!(w.s, vec![0, 1, 2]);
        assert_eq!(w.s_hat, vec![0, 1]);
    }

    #[test]
    fn identical_agents_have_zero_epsilon() {
        // Two rows per agent so that every single agent already has full rank.
        let agents = (0..7)
            .map(|_| {
                (
                    nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 2.0]),
                    DVector::from_vec(vec![0.2, 1.1]),
                )
            })
            .collect();
        let p = RegressionProblem::new(agents).unwrap();
        for (f, r) in [(1, 0), (0, 2), (1, 2), (2, 1)] {
            let rep = compute_epsilon(&p, f, r).unwrap();
            assert!(rep.epsilon < 1e-12, "({f},{r}) -> {}", rep.epsilon);
        }
    }

    #[test]
    fn vacuous_when_no_budget() {
        let p = RegressionProblem::bundled_fixture();
        let rep = compute_epsilon(&p, 0, 0).unwrap();
        assert_eq!(rep.epsilon, 0.0);
        assert!(rep.witness.is_none());
    }

    #[test]
    fn budget_and_rank_errors() {
        let p = RegressionProblem::bundled_fixture();
        assert!(matches!(compute_epsilon(&p, 5, 0), Err(Error::BudgetInvalid(_))));
        assert!(matches!(compute_epsilon(&p, 3, 4), Err(Error::BudgetInvalid(_))));
        // n − 2f − r = 1 admits single-row subsets, which have rank 1 < 2.
        match compute_epsilon(&p, 4, 1) {
            Err(Error::RankDeficient { subset, .. }) => assert_eq!(subset.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn enumeration_cap() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![1.0 + i as f64]).collect();
        let p = RegressionProblem::from_single_rows(&rows, &vec![0.0; 40]).unwrap();
        assert!(matches!(
            compute_epsilon(&p, 10, 5),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn witnesses_reverify() {
        let p = RegressionProblem::bundled_fixture();
        let rep = compute_epsilon(&p, 1, 1).unwrap();
        let w = rep.witness.as_ref().unwrap();
        assert_eq!(w.s.len(), 9);
        assert!(w.s_hat.len() >= 10 - 2 - 1 && w.s_hat.len() < 9);
        assert!(w.s_hat.iter().all(|i| w.s.contains(i)));
        let d = point_distance(
            &p.least_squares_min(&w.s).unwrap(),
            &p.least_squares_min(&w.s_hat).unwrap(),
        )
        .unwrap();
        assert!((d - rep.epsilon).abs() < 1e-12);
    }

    #[test]
    fn fixture_grid_shape_and_monotone_rows() {
        let p = RegressionProblem::bundled_fixture();
        let g = epsilon_grid(&p, 2, 2);
        assert_eq!(g.cells.len(), 9);
        assert_eq!(g.get(0, 0).unwrap().epsilon, Some(0.0));
        for f in 0..=2 {
            for r in 0..2 {
                let a = g.get(f, r).unwrap().epsilon.unwrap();
                let b = g.get(f, r + 1).unwrap().epsilon.unwrap();
                assert!(b >= a, "f={f}: {a} > {b}");
            }
        }
    }

    #[test]
    fn grid_flags_invalid_cells() {
        let p = scalar(&[1.0], &[0.5]);
        let g = epsilon_grid(&p, 0, 0);
        assert_eq!(
            g.cells,
            vec![EpsilonCell {
                f: 0,
                r: 0,
                epsilon: Some(0.0),
                valid: true
            }]
        );
        let p = RegressionProblem::bundled_fixture();
        let g = epsilon_grid(&p, 4, 3);
        let bad = g.get(4, 2).unwrap();
        assert!(!bad.valid && bad.epsilon.is_none());
        assert!(g.reasons.iter().any(|((f, r), _)| (*f, *r) == (4, 2)));
    }

    #[test]
    fn grid_csv_round_trip() {
        let p = RegressionProblem::bundled_fixture();
        let g = epsilon_grid(&p, 4, 2);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("f,r,epsilon,valid\n"));
        assert_eq!(EpsilonGrid::read_csv(buf.as_slice()).unwrap(), g.cells);
    }
}
