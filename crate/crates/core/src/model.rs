//! Agents, their quadratic costs, and the feasible domain.
//!
//! Agent `i` owns a block of rows `A_i` (`k_i × d`) and responses `B_i`, and
//! its cost is `Q_i(x) = ||B_i − A_i x||²`. Agent indices are 0-based
//! everywhere in this crate.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The bundled ten-agent, two-dimensional regression dataset.
pub const BUNDLED_CSV: &str = include_str!("../data/regression_fixture.csv");

/// Name accepted by `--fixture` and in configs for [`BUNDLED_CSV`].
pub const BUNDLED_FIXTURE_NAME: &str = "paper-regression";

#[derive(Debug, Clone, PartialEq)]
struct AgentData {
    rows: DMatrix<f64>,
    responses: DVector<f64>,
}

/// Per-agent least-squares data defining the costs `Q_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    dim: usize,
    agents: Vec<AgentData>,
}

impl RegressionProblem {
    /// Builds a problem from one `(A_i, B_i)` block per agent.
    pub fn new(agents: Vec<(DMatrix<f64>, DVector<f64>)>) -> Result<Self> {
        let first = agents
            .first()
            .ok_or_else(|| Error::InvalidProblem("no agents".into()))?;
        let dim = first.0.ncols();
        if dim == 0 {
            return Err(Error::InvalidProblem("dimension must be at least 1".into()));
        }
        let mut out = Vec::with_capacity(agents.len());
        for (i, (rows, responses)) in agents.into_iter().enumerate() {
            if rows.ncols() != dim {
                return Err(Error::InvalidProblem(format!(
                    "agent {i} has {} columns, expected {dim}",
                    rows.ncols()
                )));
            }
            if rows.nrows() == 0 {
                return Err(Error::InvalidProblem(format!("agent {i} owns no rows")));
            }
            if rows.nrows() != responses.len() {
                return Err(Error::InvalidProblem(format!(
                    "agent {i} has {} rows but {} responses",
                    rows.nrows(),
                    responses.len()
                )));
            }
            if rows.iter().chain(responses.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidProblem(format!("agent {i} has non-finite data")));
            }
            out.push(AgentData { rows, responses });
        }
        Ok(Self { dim, agents: out })
    }

    /// One data row per agent: agent `i` owns `rows[i]` and `responses[i]`.
    pub fn from_single_rows(rows: &[Vec<f64>], responses: &[f64]) -> Result<Self> {
        if rows.len() != responses.len() {
            return Err(Error::InvalidProblem(format!(
                "{} rows but {} responses",
                rows.len(),
                responses.len()
            )));
        }
        let agents = rows
            .iter()
            .zip(responses)
            .map(|(row, &b)| (DMatrix::from_row_slice(1, row.len(), row), DVector::from_element(1, b)))
            .collect();
        Self::new(agents)
    }

    /// Groups data rows by owning agent. Agents are ordered by ascending id.
    pub fn from_grouped_rows(dim: usize, rows: &[(Vec<f64>, f64, i64)]) -> Result<Self> {
        let mut groups: BTreeMap<i64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (a, b, id) in rows {
            if a.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: a.len(),
                });
            }
            let entry = groups.entry(*id).or_default();
            entry.0.extend_from_slice(a);
            entry.1.push(*b);
        }
        let agents = groups
            .into_values()
            .map(|(flat, resp)| {
                let k = resp.len();
                (DMatrix::from_row_slice(k, dim, &flat), DVector::from_vec(resp))
            })
            .collect();
        Self::new(agents)
    }

    /// Parses the CSV layout `a_1,…,a_d,b,agent_id` (header required).
    pub fn from_csv_reader<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
        let mut a_cols = Vec::new();
        let mut b_col = None;
        let mut id_col = None;
        for (pos, name) in headers.iter().enumerate() {
            if let Some(j) = name.strip_prefix("a_") {
                let j: usize = j.parse().map_err(|_| parse_err(format!("bad column name {name:?}")))?;
                a_cols.push((j, pos));
            } else if name == "b" {
                b_col = Some(pos);
            } else if name == "agent_id" {
                id_col = Some(pos);
            } else {
                return Err(parse_err(format!("unexpected column {name:?}")));
            }
        }
        a_cols.sort_unstable();
        let dim = a_cols.len();
        if dim == 0 || a_cols.iter().enumerate().any(|(k, &(j, _))| j != k + 1) {
            return Err(parse_err("columns must be a_1..a_d".into()));
        }
        let b_col = b_col.ok_or_else(|| parse_err("missing column b".into()))?;
        let id_col = id_col.ok_or_else(|| parse_err("missing column agent_id".into()))?;

        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            let field = |pos: usize| -> Result<&str> {
                record
                    .get(pos)
                    .ok_or_else(|| parse_err(format!("record {} is short", line + 1)))
            };
            let num = |pos: usize| -> Result<f64> {
                let s = field(pos)?;
                s.parse::<f64>()
                    .map_err(|_| parse_err(format!("record {}: {s:?} is not a number", line + 1)))
            };
            let a = a_cols.iter().map(|&(_, pos)| num(pos)).collect::<Result<Vec<_>>>()?;
            let b = num(b_col)?;
            let id_str = field(id_col)?;
            let id: i64 = id_str
                .parse()
                .map_err(|_| parse_err(format!("record {}: agent_id {id_str:?} is not an integer", line + 1)))?;
            rows.push((a, b, id));
        }
        if rows.is_empty() {
            return Err(parse_err("no data rows".into()));
        }
        Self::from_grouped_rows(dim, &rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    /// The bundled dataset: `n = 10`, `d = 2`, one row per agent.
    pub fn bundled_fixture() -> Self {
        Self::from_csv_reader(BUNDLED_CSV.as_bytes(), BUNDLED_FIXTURE_NAME).expect("bundled fixture parses")
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agent_rows(&self, agent: usize) -> &DMatrix<f64> {
        &self.agents[agent].rows
    }

    pub fn agent_responses(&self, agent: usize) -> &DVector<f64> {
        &self.agents[agent].responses
    }

    /// Scales every data row and response of every agent by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            agents: self
                .agents
                .iter()
                .map(|a| AgentData {
                    rows: &a.rows * s,
                    responses: &a.responses * s,
                })
                .collect(),
        }
    }

    fn check_agent(&self, agent: usize) -> Result<()> {
        if agent >= self.n() {
            return Err(Error::AgentOutOfRange {
                index: agent,
                n: self.n(),
            });
        }
        Ok(())
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_subset(&self, subset: &[usize]) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        subset.iter().try_for_each(|&i| self.check_agent(i))
    }

    /// `∇Q_i(x) = 2 A_iᵀ (A_i x − B_i)`.
    pub fn gradient(&self, agent: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_agent(agent)?;
        self.check_point(x)?;
        let a = &self.agents[agent];
        let residual = &a.rows * x - &a.responses;
        Ok(a.rows.tr_mul(&residual) * 2.0)
    }

    /// Gradient of a single data row of `agent`: `2 a_kᵀ (a_k x − b_k)`.
    pub fn row_gradient(&self, agent: usize, row: usize, x: &DVector<f64>) -> DVector<f64> {
        let a = &self.agents[agent];
        let r = a.rows.row(row);
        let residual = (r * x)[0] - a.responses[row];
        r.transpose() * (2.0 * residual)
    }

    /// `Q_S(x) = Σ_{i∈S} ||B_i − A_i x||²`.
    pub fn aggregate_cost(&self, subset: &[usize], x: &DVector<f64>) -> Result<f64> {
        self.check_subset(subset)?;
        self.check_point(x)?;
        Ok(subset
            .iter()
            .map(|&i| {
                let a = &self.agents[i];
                (&a.responses - &a.rows * x).norm_squared()
            })
            .sum())
    }

    /// Stacks `A_S` and `B_S` in the order the subset lists agents.
    pub fn stacked(&self, subset: &[usize]) -> Result<(DMatrix<f64>, DVector<f64>)> {
        self.check_subset(subset)?;
        let k: usize = subset.iter().map(|&i| self.agents[i].rows.nrows()).sum();
        let mut a = DMatrix::zeros(k, self.dim);
        let mut b = DVector::zeros(k);
        let mut at = 0;
        for &i in subset {
            let ag = &self.agents[i];
            let rows = ag.rows.nrows();
            a.view_mut((at, 0), (rows, self.dim)).copy_from(&ag.rows);
            b.rows_mut(at, rows).copy_from(&ag.responses);
            at += rows;
        }
        Ok((a, b))
    }

    /// `A_Sᵀ A_S`.
    pub fn gram(&self, subset: &[usize]) -> Result<DMatrix<f64>> {
        self.check_subset(subset)?;
        let mut g = DMatrix::zeros(self.dim, self.dim);
        for &i in subset {
            let rows = &self.agents[i].rows;
            g += rows.tr_mul(rows);
        }
        Ok(g)
    }

    /// Unique minimizer of `Q_S`, i.e. the least-squares solution of
    /// `A_S x ≈ B_S`, computed through an SVD of the stacked data.
    pub fn least_squares_min(&self, subset: &[usize]) -> Result<DVector<f64>> {
        let (a, b) = self.stacked(subset)?;
        let size = a.nrows().max(a.ncols()) as f64;
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * size * f64::EPSILON;
        let rank = svd.rank(tol);
        if smax == 0.0 || rank < self.dim {
            let mut sorted = subset.to_vec();
            sorted.sort_unstable();
            return Err(Error::RankDeficient {
                subset: sorted,
                rank,
                dim: self.dim,
            });
        }
        svd.solve(&b, tol)
            .map_err(|e| Error::InvalidProblem(format!("least-squares solve failed: {e}")))
    }
}

/// Behaviour of a Byzantine agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FaultKind {
    /// Sends the negation of its true gradient.
    GradientReverse,
    /// Sends an i.i.d. Gaussian vector with the given per-coordinate std.
    RandomGaussian { std: f64 },
}

impl FaultKind {
    pub fn label(&self) -> &'static str {
        match self {
            FaultKind::GradientReverse => "grad-rev",
            FaultKind::RandomGaussian { .. } => "random",
        }
    }
}

/// Fault and straggler budgets plus the designated Byzantine agents.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRoster {
    n: usize,
    f: usize,
    r: usize,
    byzantine: Vec<usize>,
    fault: FaultKind,
}

impl AgentRoster {
    /// Designates the first `f` agents as Byzantine.
    pub fn new(n: usize, f: usize, r: usize, fault: FaultKind) -> Result<Self> {
        Self::with_byzantine(n, f, r, (0..f.min(n)).collect(), fault)
    }

    pub fn with_byzantine(n: usize, f: usize, r: usize, mut byzantine: Vec<usize>, fault: FaultKind) -> Result<Self> {
        check_budget(n, f, r)?;
        byzantine.sort_unstable();
        byzantine.dedup();
        if byzantine.len() > f {
            return Err(Error::BudgetInvalid(format!(
                "{} Byzantine agents designated but f = {f}",
                byzantine.len()
            )));
        }
        if let Some(&bad) = byzantine.iter().find(|&&i| i >= n) {
            return Err(Error::AgentOutOfRange { index: bad, n });
        }
        if let FaultKind::RandomGaussian { std } = fault {
            if !(std.is_finite() && std >= 0.0) {
                return Err(Error::InvalidArgument(format!("fault std {std} must be >= 0")));
            }
        }
        Ok(Self {
            n,
            f,
            r,
            byzantine,
            fault,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn fault(&self) -> FaultKind {
        self.fault
    }

    pub fn byzantine(&self) -> &[usize] {
        &self.byzantine
    }

    pub fn is_byzantine(&self, agent: usize) -> bool {
        self.byzantine.binary_search(&agent).is_ok()
    }

    /// Complement of the Byzantine set, ascending.
    pub fn honest(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.is_byzantine(i)).collect()
    }
}

/// Rejects budgets with `n ≤ 2f + r`, for which no algorithm can be resilient.
pub fn check_budget(n: usize, f: usize, r: usize) -> Result<()> {
    if n <= 2 * f + r {
        return Err(Error::BudgetInvalid(format!(
            "need n > 2f + r, got n = {n}, f = {f}, r = {r}"
        )));
    }
    Ok(())
}

/// Axis-aligned box `W = [lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxDomain {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidArgument("domain has dimension 0".into()));
        }
        for (j, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "domain coordinate {j}: need finite lower <= upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[−half_width, half_width]^d`.
    pub fn hypercube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(dim, -half_width),
            DVector::from_element(dim, half_width),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    /// Euclidean projection, which for a box is a coordinate-wise clamp.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi)),
        )
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
    fn fixture_shape() {
        let p = RegressionProblem::bundled_fixture();
        assert_eq!(p.n(), 10);
        assert_eq!(p.dim(), 2);
        assert_eq!(p.agent_responses(0)[0], 0.9108);
        assert_eq!(p.agent_rows(6)[(0, 1)], -0.7);
    }

    #[test]
    fn gradient_of_first_fixture_row() {
        let p = RegressionProblem::bundled_fixture();
        let g = p.gradient(0, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((g[0] - 0.1784).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn gradient_scalar_hand_differentiated() {
        // Q(x) = (x + 1)^2 written as (B − A x)^2 with A = 1, B = −1.
        let p = scalar(&[1.0], &[-1.0]);
        let g = p.gradient(0, &DVector::from_element(1, 0.0)).unwrap();
        assert_eq!(g[0], 2.0);
    }

    #[test]
    fn gradient_vanishes_at_own_solution() {
        let p = RegressionProblem::bundled_fixture();
        for i in 0..p.n() {
            let a = p.agent_rows(i).row(0);
            // a·x = b with x along a.
            let x = a.transpose() * (p.agent_responses(i)[0] / a.norm_squared());
            let g = p.gradient(i, &x).unwrap();
            assert!(g.norm() < 1e-12, "agent {i}: {g}");
        }
    }

    #[test]
    fn aggregate_cost_at_true_parameter_is_noise_energy() {
        let p = RegressionProblem::bundled_fixture();
        let noise = [
            -0.0892, 0.0349, 0.0376, 0.0033, -0.0858, -0.0615, 0.0026, -0.0033, 0.0052, -0.0053,
        ];
        let expected: f64 = noise.iter().map(|v| v * v).sum();
        let all: Vec<usize> = (0..10).collect();
        let got = p.aggregate_cost(&all, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn aggregate_cost_scalar_example() {
        let p = scalar(&[1.0, 1.0, 1.0], &[0.0, 0.0, -1.0]);
        let c = p
            .aggregate_cost(&[0, 1, 2], &DVector::from_element(1, -1.0 / 3.0))
            .unwrap();
        assert!((c - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn aggregate_cost_rejects_empty_subset() {
        let p = scalar(&[1.0], &[0.0]);
        assert_eq!(
            p.aggregate_cost(&[], &DVector::from_element(1, 0.0)),
            Err(Error::EmptySubset)
        );
    }

    #[test]
    fn least_squares_fixture_minimizers() {
        let p = RegressionProblem::bundled_fixture();
        let all: Vec<usize> = (0..10).collect();
        let x = p.least_squares_min(&all).unwrap();
        assert!((x[0] - 1.0117).abs() < 1e-3 && (x[1] - 0.9883).abs() < 1e-3);
        let h1: Vec<usize> = (1..10).collect();
        let x = p.least_squares_min(&h1).unwrap();
        assert!((x[0] - 1.0460).abs() < 1e-3 && (x[1] - 0.9883).abs() < 1e-3);
    }

    #[test]
    fn least_squares_scalar_example() {
        let p = scalar(&[1.0, 1.0, 1.0], &[0.0, 0.0, -1.0]);
        let x = p.least_squares_min(&[0, 1, 2]).unwrap();
        assert!((x[0] + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn least_squares_stationary() {
        let p = RegressionProblem::bundled_fixture();
        let s = [1, 4, 6, 9];
        let x = p.least_squares_min(&s).unwrap();
        let g = s
            .iter()
            .map(|&i| p.gradient(i, &x).unwrap())
            .fold(DVector::zeros(2), |acc, g| acc + g);
        assert!(g.norm() < 1e-9);
    }

    #[test]
    fn least_squares_rank_deficient() {
        let p = RegressionProblem::bundled_fixture();
        match p.least_squares_min(&[3]) {
            Err(Error::RankDeficient { subset, rank, dim }) => {
                assert_eq!(subset, vec![3]);
                assert_eq!(rank, 1);
                assert_eq!(dim, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        let parallel = RegressionProblem::from_single_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 1.0]).unwrap();
        assert!(matches!(
            parallel.least_squares_min(&[0, 1]),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn multi_row_agents_group_by_id() {
        let csv = "a_1,b,agent_id\n1,1,7\n2,2,3\n3,3,7\n";
        let p = RegressionProblem::from_csv_reader(csv.as_bytes(), "inline").unwrap();
        assert_eq!(p.n(), 2);
        // id 3 sorts first
        assert_eq!(p.agent_rows(0).nrows(), 1);
        assert_eq!(p.agent_rows(1).nrows(), 2);
        assert_eq!(p.agent_responses(1)[1], 3.0);
    }

    #[test]
    fn csv_errors_are_descriptive() {
        let err = RegressionProblem::from_csv_reader("a_1,b\n1,2\n".as_bytes(), "x.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("agent_id"), "{err}");
        let err = RegressionProblem::from_csv_reader("a_1,b,agent_id\n1,zz,0\n".as_bytes(), "x.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("not a number"), "{err}");
        let err = RegressionProblem::from_csv_path("/nonexistent/data.csv")
            .unwrap_err()
            .to_string();
        assert!(err.contains("/nonexistent/data.csv"));
    }

    #[test]
    fn roster_budget_validation() {
        assert!(AgentRoster::new(10, 2, 2, FaultKind::GradientReverse).is_ok());
        assert!(matches!(
            AgentRoster::new(5, 2, 1, FaultKind::GradientReverse),
            Err(Error::BudgetInvalid(_))
        ));
        assert!(matches!(
            AgentRoster::with_byzantine(10, 1, 0, vec![2, 3], FaultKind::GradientReverse),
            Err(Error::BudgetInvalid(_))
        ));
        let r = AgentRoster::new(10, 2, 0, FaultKind::GradientReverse).unwrap();
        assert_eq!(r.byzantine(), &[0, 1]);
        assert_eq!(r.honest(), (2..10).collect::<Vec<_>>());
    }

    #[test]
    fn box_domain_validation_and_projection() {
        assert!(BoxDomain::new(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![0.0])).is_err());
        let w = BoxDomain::hypercube(2, 1000.0).unwrap();
        let p = w.project(&DVector::from_vec(vec![1500.0, -0.5]));
        assert_eq!(p.as_slice(), &[1000.0, -0.5]);
        let p = w.project(&DVector::from_vec(vec![-2000.0, 2000.0]));
        assert_eq!(p.as_slice(), &[-1000.0, 1000.0]);
        let inside = DVector::from_vec(vec![3.0, -4.0]);
        assert_eq!(w.project(&inside), inside);
    }
}
