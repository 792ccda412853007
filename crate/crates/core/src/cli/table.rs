//! Results table: every `(f, r) ∈ {0,1,2}²`, both fault kinds, three
//! straggler models and several seeds, each checked against `D*`.

use std::io::Write;

use rayon::prelude::*;

use crate::aggregation::GarSpec;
use crate::bounds::{dstar_table, DStarTable};
use crate::engine::{run, RunConfig, StragglerModel};
use crate::error::{Error, Result};
use crate::model::{AgentRoster, FaultKind, RegressionProblem};

/// Per-coordinate std of the random fault used in the table.
pub const RANDOM_FAULT_STD: f64 = 200.0;

/// Absolute slack added to `D*` in pass/fail checks. `D*` is an asymptotic
/// radius and is exactly 0 for `f = r = 0`, which a finite run only
/// approaches.
pub const DIST_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub f: usize,
    pub r: usize,
    pub fault: String,
    pub stragglers: String,
    pub seed: u64,
    pub x_out: Vec<f64>,
    pub dist: f64,
    pub d_star: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct ResultsTable {
    pub dstar: DStarTable,
    pub rows: Vec<TableRow>,
}

fn fault_kinds(f: usize) -> Vec<Option<FaultKind>> {
    if f == 0 {
        vec![None]
    } else {
        vec![
            Some(FaultKind::GradientReverse),
            Some(FaultKind::RandomGaussian { std: RANDOM_FAULT_STD }),
        ]
    }
}

/// Runs the full grid. Rows come out in a fixed order regardless of
/// scheduling.
pub fn results_table(problem: &RegressionProblem, seeds: &[u64], iterations: usize) -> Result<ResultsTable> {
    let dstar = dstar_table(problem, 2, 2)?;
    let n = problem.n();
    let mut jobs = Vec::new();
    for f in 0..=2 {
        for r in 0..=2 {
            for fault in fault_kinds(f) {
                for model in [
                    StragglerModel::fixed_last(n, r),
                    StragglerModel::UniformRandom,
                    StragglerModel::RoundRobin,
                ] {
                    for &seed in seeds {
                        jobs.push((f, r, fault, model.clone(), seed));
                    }
                }
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|(f, r, fault, model, seed)| -> Result<Option<TableRow>> {
            let Some(d_star) = dstar.d_star(*f, *r) else {
                return Ok(None);
            };
            let roster = AgentRoster::new(n, *f, *r, fault.unwrap_or(FaultKind::GradientReverse))?;
            let mut cfg = RunConfig::new(problem.clone(), roster);
            cfg.gar = if *f > 0 { GarSpec::Cge } else { GarSpec::SumFastest };
            cfg.stragglers = model.clone();
            cfg.iterations = iterations;
            cfg.seed = *seed;
            let traj = run(&cfg)?;
            let dist = traj.final_dist();
            Ok(Some(TableRow {
                f: *f,
                r: *r,
                fault: fault.map_or("none", |k| k.label()).to_string(),
                stragglers: model.label().to_string(),
                seed: *seed,
                x_out: traj.x_out().as_slice().to_vec(),
                dist,
                d_star,
                pass: dist <= d_star + DIST_TOLERANCE,
            }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(ResultsTable { dstar, rows })
}

impl ResultsTable {
    pub fn failures(&self) -> Vec<&TableRow> {
        self.rows.iter().filter(|r| !r.pass).collect()
    }

    /// Rows matching `(f, r, fault)`.
    pub fn cell(&self, f: usize, r: usize, fault: &str) -> Vec<&TableRow> {
        self.rows
            .iter()
            .filter(|row| row.f == f && row.r == r && row.fault == fault)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let d = self.rows.first().map_or(0, |r| r.x_out.len());
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::io("<csv>", e);
        let mut header: Vec<String> = ["f", "r", "fault", "stragglers", "seed"].map(String::from).to_vec();
        header.extend((1..=d).map(|j| format!("x_{j}")));
        header.extend(["dist", "d_star", "pass"].map(String::from));
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = vec![
                row.f.to_string(),
                row.r.to_string(),
                row.fault.clone(),
                row.stragglers.clone(),
                row.seed.to_string(),
            ];
            rec.extend(row.x_out.iter().map(|v| v.to_string()));
            rec.push(row.dist.to_string());
            rec.push(row.d_star.to_string());
            rec.push(row.pass.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    /// One line per `(f, r, fault)`: the first execution's `x_out`, the
    /// worst distance over all executions, and `D*`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:>2} {:>2} {:>9} {:>22} {:>12} {:>8} {:>6}\n",
            "f", "r", "fault", "x_out", "max dist", "D*", "check"
        );
        let mut keys: Vec<(usize, usize, String)> = Vec::new();
        for row in &self.rows {
            let k = (row.f, row.r, row.fault.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        for (f, r, fault) in keys {
            let rows = self.cell(f, r, &fault);
            let worst = rows.iter().map(|r| r.dist).fold(0.0, f64::max);
            let ok = rows.iter().all(|r| r.pass);
            let x = nalgebra::DVector::from_column_slice(&rows[0].x_out);
            out.push_str(&format!(
                "{f:>2} {r:>2} {fault:>9} {:>22} {worst:>12.3e} {:>8.4} {:>6}\n",
                super::fmt_point(&x),
                rows[0].d_star,
                if ok { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}
