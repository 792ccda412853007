//! Gradient aggregation rules (GARs).
//!
//! - [`sum_fastest`]: plain sum of the `n − r` received vectors.
//! - [`cge_filter`]: comparative gradient elimination, which drops the `f`
//!   largest-norm vectors and sums the rest.
//! - [`stale_aggregate`]: sum of each agent's freshest report whose timestamp
//!   lies in `[t − τ, t]`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregation rule selector. In JSON: `"sum"`, `"cge"` or `{"stale": {"tau": 2}}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GarSpec {
    #[serde(rename = "sum")]
    SumFastest,
    #[serde(rename = "cge")]
    Cge,
    #[serde(rename = "stale")]
    StaleSum { tau: usize },
}

impl GarSpec {
    pub fn label(&self) -> &'static str {
        match self {
            GarSpec::SumFastest => "sum",
            GarSpec::Cge => "cge",
            GarSpec::StaleSum { .. } => "stale",
        }
    }
}

fn check_dims(gradients: &[DVector<f64>]) -> Result<usize> {
    let dim = gradients
        .first()
        .map(|g| g.len())
        .ok_or(Error::WrongCount { expected: 1, got: 0 })?;
    if let Some(g) = gradients.iter().find(|g| g.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: g.len(),
        });
    }
    Ok(dim)
}

/// Sum in input order. All rules funnel through here so that equal inputs
/// produce bit-identical outputs.
pub(crate) fn sum_in_order<'a>(dim: usize, vs: impl IntoIterator<Item = &'a DVector<f64>>) -> DVector<f64> {
    let mut acc = DVector::zeros(dim);
    for v in vs {
        acc += v;
    }
    acc
}

/// Coordinate-wise sum of exactly `expected` vectors.
pub fn sum_fastest(gradients: &[DVector<f64>], expected: usize) -> Result<DVector<f64>> {
    if gradients.len() != expected {
        return Err(Error::WrongCount {
            expected,
            got: gradients.len(),
        });
    }
    let dim = check_dims(gradients)?;
    Ok(sum_in_order(dim, gradients))
}

/// Sums the `m − f` vectors with the smallest Euclidean norms.
///
/// Norm ties are broken by input position. The kept vectors are summed in
/// input order, so `f = 0` reproduces [`sum_fastest`] exactly.
pub fn cge_filter(gradients: &[DVector<f64>], f: usize) -> Result<DVector<f64>> {
    let m = gradients.len();
    if m <= f {
        return Err(Error::WrongCount {
            expected: f + 1,
            got: m,
        });
    }
    let dim = check_dims(gradients)?;
    let norms: Vec<f64> = gradients.iter().map(|g| g.norm()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    let mut keep = vec![false; m];
    for &i in &order[..m - f] {
        keep[i] = true;
    }
    Ok(sum_in_order(
        dim,
        gradients.iter().zip(&keep).filter(|(_, &k)| k).map(|(g, _)| g),
    ))
}

/// Per-agent freshest report together with the server's current iteration.
#[derive(Debug, Clone)]
pub struct StaleBuffer {
    tau: usize,
    t: usize,
    entries: Vec<Option<(DVector<f64>, usize)>>,
}

impl StaleBuffer {
    pub fn new(n: usize, tau: usize) -> Self {
        Self {
            tau,
            t: 0,
            entries: vec![None; n],
        }
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    fn window_start(&self) -> usize {
        self.t.saturating_sub(self.tau)
    }

    /// Moves to iteration `t`, evicting reports older than `t − τ`.
    pub fn advance_to(&mut self, t: usize) {
        self.t = t;
        let start = self.window_start();
        for e in &mut self.entries {
            if matches!(e, Some((_, ts)) if *ts < start) {
                *e = None;
            }
        }
    }

    /// Stores a report if it falls inside the window and is fresher than the
    /// one already held for `agent`. Returns whether it was stored.
    pub fn offer(&mut self, agent: usize, gradient: DVector<f64>, timestamp: usize) -> bool {
        if timestamp > self.t || timestamp < self.window_start() {
            return false;
        }
        let slot = &mut self.entries[agent];
        match slot {
            Some((_, ts)) if *ts >= timestamp => false,
            _ => {
                *slot = Some((gradient, timestamp));
                true
            }
        }
    }

    pub fn timestamp(&self, agent: usize) -> Option<usize> {
        self.entries[agent].as_ref().map(|(_, ts)| *ts)
    }

    /// `T^{t;t−age}`: agents whose freshest report is `age` iterations old.
    pub fn agents_with_age(&self, age: usize) -> Vec<usize> {
        let Some(ts) = self.t.checked_sub(age) else {
            return Vec::new();
        };
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, Some((_, s)) if *s == ts))
            .map(|(i, _)| i)
            .collect()
    }

    /// `T^t`, ascending.
    pub fn fresh_agents(&self) -> Vec<usize> {
        let start = self.window_start();
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, Some((_, s)) if *s >= start && *s <= self.t))
            .map(|(i, _)| i)
            .collect()
    }
}

/// `Σ_{i=0}^{τ} Σ_{j ∈ T^{t;t−i}} g_j^{t−i}`, requiring `|T^t| ≥ required`.
pub fn stale_aggregate(buffer: &StaleBuffer, required: usize) -> Result<DVector<f64>> {
    let have = buffer.fresh_agents().len();
    if have < required || have == 0 {
        return Err(Error::InsufficientReports {
            have,
            need: required.max(1),
        });
    }
    let dim = buffer
        .entries
        .iter()
        .flatten()
        .map(|(g, _)| g.len())
        .next()
        .expect("non-empty buffer");
    let ordered: Vec<&DVector<f64>> = (0..=buffer.tau)
        .flat_map(|age| buffer.agents_with_age(age))
        .map(|j| &buffer.entries[j].as_ref().expect("fresh agent").0)
        .collect();
    Ok(sum_in_order(dim, ordered))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn sum_examples() {
        let g = [v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[2.0, 2.0])];
        assert_eq!(sum_fastest(&g, 3).unwrap(), v(&[3.0, 3.0]));
        let z = [v(&[0.0, 0.0]), v(&[0.0, 0.0])];
        assert_eq!(sum_fastest(&z, 2).unwrap(), v(&[0.0, 0.0]));
        assert_eq!(sum_fastest(&[v(&[4.0, -1.0])], 1).unwrap(), v(&[4.0, -1.0]));
        assert!(matches!(sum_fastest(&g, 2), Err(Error::WrongCount { .. })));
        assert!(sum_fastest(&[v(&[1.0]), v(&[1.0, 2.0])], 2).is_err());
    }

    #[test]
    fn cge_examples() {
        let g = [v(&[1.0, 0.0]), v(&[0.0, 2.0]), v(&[-3.0, 0.0])];
        assert_eq!(cge_filter(&g, 1).unwrap(), v(&[1.0, 2.0]));
        assert_eq!(cge_filter(&g, 0).unwrap(), sum_fastest(&g, 3).unwrap());
        let same = vec![v(&[0.5, -1.5]); 5];
        assert_eq!(cge_filter(&same, 2).unwrap(), v(&[1.5, -4.5]));
        assert!(matches!(cge_filter(&g, 3), Err(Error::WrongCount { .. })));
    }

    #[test]
    fn cge_tie_break_is_positional() {
        // Equal norms: the later one is dropped.
        let g = [v(&[1.0, 0.0]), v(&[0.0, 1.0]), v(&[0.0, 0.5])];
        assert_eq!(cge_filter(&g, 1).unwrap(), v(&[1.0, 0.5]));
    }

    #[test]
    fn stale_tau_zero_matches_sum() {
        let mut buf = StaleBuffer::new(4, 0);
        buf.advance_to(3);
        let g = [v(&[1.0, 2.0]), v(&[0.25, -1.0]), v(&[3.0, 3.0])];
        for (j, gj) in [0, 2, 3].into_iter().zip(g.iter()) {
            assert!(buf.offer(j, gj.clone(), 3));
        }
        // too old for τ = 0
        assert!(!buf.offer(1, v(&[9.0, 9.0]), 2));
        assert_eq!(stale_aggregate(&buf, 3).unwrap(), sum_fastest(&g, 3).unwrap());
    }

    #[test]
    fn stale_sums_across_ages() {
        let mut buf = StaleBuffer::new(2, 2);
        buf.advance_to(5);
        assert!(buf.offer(0, v(&[1.0, 1.0]), 5));
        assert!(buf.offer(1, v(&[2.0, 0.0]), 3));
        assert_eq!(buf.agents_with_age(0), vec![0]);
        assert_eq!(buf.agents_with_age(1), Vec::<usize>::new());
        assert_eq!(buf.agents_with_age(2), vec![1]);
        assert_eq!(stale_aggregate(&buf, 2).unwrap(), v(&[3.0, 1.0]));
    }

    #[test]
    fn stale_eviction_and_freshness() {
        let mut buf = StaleBuffer::new(3, 1);
        buf.advance_to(1);
        buf.offer(0, v(&[1.0]), 1);
        buf.offer(1, v(&[1.0]), 0);
        assert!(!buf.offer(1, v(&[5.0]), 0), "not fresher");
        buf.advance_to(2);
        assert_eq!(buf.fresh_agents(), vec![0]);
        assert_eq!(buf.timestamp(1), None);
        assert!(matches!(
            stale_aggregate(&buf, 2),
            Err(Error::InsufficientReports { have: 1, need: 2 })
        ));
        assert!(!buf.offer(2, v(&[1.0]), 3), "future timestamp");
    }
}
