//! Experiment suites: a base config crossed with `f`, `r`, fault kinds,
//! straggler models and seeds.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::GarSpec;
use crate::bounds::{bound_tabulated, convexity_gamma, lipschitz_mu};
use crate::config::{ConfigFile, RosterSpec};
use crate::engine::{run, StragglerModel};
use crate::error::{Error, Result};
use crate::model::{FaultKind, RegressionProblem};
use crate::redundancy::compute_epsilon;

use super::write_atomic;

/// ```json
/// {
///   "base": { "schema": 1, "problem": {"fixture": "paper-regression"}, "roster": {"f": 0, "r": 0} },
///   "f": [0, 1, 2], "r": [0, 1, 2],
///   "faults": [{"kind": "gradient-reverse"}, {"kind": "random-gaussian", "std": 200}],
///   "seeds": [0, 1, 2, 3],
///   "out": "sweep-out"
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSuite {
    pub base: ConfigFile,
    pub f: Vec<usize>,
    pub r: Vec<usize>,
    #[serde(default = "default_faults")]
    pub faults: Vec<FaultKind>,
    pub seeds: Vec<u64>,
    /// Defaults to the base config's straggler model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stragglers: Option<Vec<StragglerModel>>,
    /// Relative to the suite file; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<std::path::PathBuf>,
}

fn default_faults() -> Vec<FaultKind> {
    vec![FaultKind::GradientReverse]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub f: usize,
    pub r: usize,
    pub fault: String,
    pub stragglers: String,
    pub seed: u64,
    pub status: String,
    pub dist: Option<f64>,
    pub d_star: Option<f64>,
    pub pass: Option<bool>,
    pub reason: Option<String>,
    pub file: Option<String>,
}

struct Job {
    f: usize,
    r: usize,
    fault: Option<FaultKind>,
    model: StragglerModel,
    seed: u64,
}

fn tabulated_radius(problem: &RegressionProblem, f: usize, r: usize) -> Result<f64> {
    let mu = lipschitz_mu(problem)?;
    let gamma = convexity_gamma(problem, f)?;
    let eps = compute_epsilon(problem, f, r)?.epsilon;
    Ok(bound_tabulated(problem.n(), f, r, mu, gamma, eps)?.radius)
}

/// Runs every cell, writing one trajectory CSV per cell and `summary.csv`.
/// Cells whose config fails validation are recorded as skipped.
pub fn run_suite(suite: &ExperimentSuite, base_dir: &Path, out: &Path) -> Result<Vec<SweepCell>> {
    if suite.seeds.is_empty() {
        return Err(Error::InvalidConfig("suite lists no seeds".into()));
    }
    let problem = suite.base.problem.load(base_dir)?;
    let models = suite
        .stragglers
        .clone()
        .unwrap_or_else(|| vec![suite.base.stragglers.clone().unwrap_or(StragglerModel::UniformRandom)]);

    let mut jobs = Vec::new();
    for &f in &suite.f {
        for &r in &suite.r {
            let faults: Vec<Option<FaultKind>> = if f == 0 {
                vec![None]
            } else {
                suite.faults.iter().copied().map(Some).collect()
            };
            for fault in faults {
                for model in &models {
                    for &seed in &suite.seeds {
                        jobs.push(Job {
                            f,
                            r,
                            fault,
                            model: model.clone(),
                            seed,
                        });
                    }
                }
            }
        }
    }

    let mut radii: BTreeMap<(usize, usize), std::result::Result<f64, String>> = BTreeMap::new();
    for job in &jobs {
        radii
            .entry((job.f, job.r))
            .or_insert_with(|| tabulated_radius(&problem, job.f, job.r).map_err(|e| e.to_string()));
    }

    let mut cells: Vec<SweepCell> = jobs
        .par_iter()
        .map(|job| -> Result<SweepCell> {
            let fault_label = job.fault.map_or("none", |k| k.label()).to_string();
            let name = format!(
                "f{}_r{}_{}_{}_seed{}.csv",
                job.f,
                job.r,
                fault_label,
                job.model.label(),
                job.seed
            );
            let mut cell = SweepCell {
                f: job.f,
                r: job.r,
                fault: fault_label,
                stragglers: job.model.label().to_string(),
                seed: job.seed,
                status: "skipped".into(),
                dist: None,
                d_star: None,
                pass: None,
                reason: None,
                file: None,
            };
            let mut spec = suite.base.clone();
            spec.roster = RosterSpec {
                f: job.f,
                r: job.r,
                byzantine: None,
                fault: job.fault.unwrap_or(suite.base.roster.fault),
            };
            spec.stragglers = Some(job.model.clone());
            spec.seed = Some(job.seed);
            if job.f > 0 {
                spec.gar = Some(GarSpec::Cge);
            }
            let cfg = match spec.resolve_with(problem.clone()) {
                Ok(cfg) => cfg,
                Err(e) => {
                    cell.reason = Some(e.to_string());
                    return Ok(cell);
                }
            };
            let traj = run(&cfg)?;
            let mut buf = Vec::new();
            traj.write_csv(&mut buf)?;
            write_atomic(&out.join("cells").join(&name), &buf)?;
            let dist = traj.final_dist();
            cell.status = "ok".into();
            cell.dist = Some(dist);
            cell.file = Some(format!("cells/{name}"));
            match &radii[&(job.f, job.r)] {
                Ok(d) => {
                    cell.d_star = Some(*d);
                    cell.pass = Some(dist <= *d + super::table::DIST_TOLERANCE);
                }
                Err(why) => cell.reason = Some(format!("no D*: {why}")),
            }
            Ok(cell)
        })
        .collect::<Result<_>>()?;

    cells.sort_by(|a, b| (a.f, a.r, &a.fault, &a.stragglers, a.seed).cmp(&(b.f, b.r, &b.fault, &b.stragglers, b.seed)));
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &cells {
        w.serialize(c).map_err(|e| Error::io("<csv>", e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv>", e))?;
    write_atomic(&out.join("summary.csv"), &bytes)?;
    Ok(cells)
}

pub(crate) fn summary_text(cells: &[SweepCell]) -> String {
    let ok = cells.iter().filter(|c| c.status == "ok").count();
    let skipped = cells.len() - ok;
    let failed = cells.iter().filter(|c| c.pass == Some(false)).count();
    let mut out = format!(
        "{} cells: {ok} run, {skipped} skipped, {failed} above D*\n",
        cells.len()
    );
    for c in cells.iter().filter(|c| c.status != "ok" || c.pass == Some(false)) {
        out.push_str(&format!(
            "  f={} r={} fault={} stragglers={} seed={}: {}\n",
            c.f,
            c.r,
            c.fault,
            c.stragglers,
            c.seed,
            c.reason.clone().unwrap_or_else(|| format!(
                "dist {:.6} > D* {:.6}",
                c.dist.unwrap_or(f64::NAN),
                c.d_star.unwrap_or(f64::NAN)
            ))
        ));
    }
    out
}
