//! Round-based server/agent simulator.
//!
//! Each iteration the server picks this round's `r` stragglers, collects
//! reports from everyone else, aggregates, and takes a projected step
//! `x^{t+1} = [x^t − η_t · GAR(...)]_W`.
//!
//! Randomness comes from one ChaCha20 generator per `(purpose, agent,
//! iteration)`: the generator is seeded from the run seed and then switched
//! to stream `purpose << 56 | agent << 32 | iteration`. Fault and noise draws
//! are keyed by the timestamp of the report they perturb, so a stale report
//! carries exactly the noise it would have carried had it arrived on time.

use std::io::{Read, Write};

use nalgebra::DVector;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{cge_filter, stale_aggregate, sum_fastest, GarSpec, StaleBuffer};
use crate::error::{Error, Result};
use crate::model::{AgentRoster, BoxDomain, FaultKind, RegressionProblem};
use crate::redundancy::point_distance;

/// Which agents are slow in a given iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StragglerModel {
    /// The same agents every iteration.
    FixedSet { indices: Vec<usize> },
    /// `r` distinct agents drawn uniformly each iteration.
    UniformRandom,
    /// Agents `(t·r + k) mod n` for `k < r`.
    RoundRobin,
}

impl StragglerModel {
    /// The last `r` agents, which are honest under the default roster.
    pub fn fixed_last(n: usize, r: usize) -> Self {
        StragglerModel::FixedSet {
            indices: (n - r.min(n)..n).collect(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            StragglerModel::FixedSet { .. } => "fixed",
            StragglerModel::UniformRandom => "uniform",
            StragglerModel::RoundRobin => "round-robin",
        }
    }

    /// Sorted straggler set for iteration `t`.
    pub fn select(&self, n: usize, r: usize, t: usize, seed: u64) -> Vec<usize> {
        if r == 0 {
            return Vec::new();
        }
        let mut out = match self {
            StragglerModel::FixedSet { indices } => indices.clone(),
            StragglerModel::UniformRandom => {
                let mut rng = stream_rng(seed, Purpose::Straggler, 0, t);
                index::sample(&mut rng, n, r).into_vec()
            }
            StragglerModel::RoundRobin => (0..r).map(|k| (t * r + k) % n).collect(),
        };
        out.sort_unstable();
        out
    }

    fn validate(&self, n: usize, r: usize) -> Result<()> {
        if let StragglerModel::FixedSet { indices } = self {
            let mut sorted = indices.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != r || indices.len() != r {
                return Err(Error::InvalidConfig(format!(
                    "fixed straggler set must list exactly r = {r} distinct agents, got {indices:?}"
                )));
            }
            if let Some(&bad) = sorted.iter().find(|&&i| i >= n) {
                return Err(Error::AgentOutOfRange { index: bad, n });
            }
        }
        if r > n {
            return Err(Error::BudgetInvalid(format!("r = {r} exceeds n = {n}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `η_t = a / (t + 1)`.
    Harmonic {
        a: f64,
    },
    Constant {
        eta: f64,
    },
}

impl StepSchedule {
    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Harmonic { a } => a / (t as f64 + 1.0),
            StepSchedule::Constant { eta } => eta,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            StepSchedule::Harmonic { a } => a,
            StepSchedule::Constant { eta } => eta,
        };
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step size parameter must be >= 0, got {v}"
            )));
        }
        Ok(())
    }
}

/// Perturbation of honest gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseModel {
    None,
    /// Additive isotropic Gaussian with `E||noise||² = σ²`, i.e. per-coordinate
    /// std `σ/√d`.
    Gaussian {
        sigma: f64,
    },
    /// Unbiased estimate from `batch` of the agent's rows drawn without
    /// replacement, scaled by `k_i / batch`.
    MiniBatch {
        batch: usize,
    },
}

impl NoiseModel {
    fn validate(&self, problem: &RegressionProblem) -> Result<()> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::Gaussian { sigma } if sigma.is_finite() && sigma >= 0.0 => Ok(()),
            NoiseModel::Gaussian { sigma } => {
                Err(Error::InvalidConfig(format!("noise sigma must be >= 0, got {sigma}")))
            }
            NoiseModel::MiniBatch { batch } => {
                let smallest = (0..problem.n())
                    .map(|i| problem.agent_rows(i).nrows())
                    .min()
                    .unwrap_or(0);
                if batch == 0 || batch > smallest {
                    return Err(Error::InvalidConfig(format!(
                        "mini-batch size must be in 1..={smallest} (fewest rows held by one agent), got {batch}"
                    )));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Purpose {
    Straggler = 1,
    Fault = 2,
    Noise = 3,
    StaleAge = 4,
}

fn stream_rng(seed: u64, purpose: Purpose, agent: usize, t: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | ((agent as u64 & 0xFF_FFFF) << 32) | (t as u64 & 0xFFFF_FFFF));
    rng
}

/// What a Byzantine agent sends in place of `true_gradient`.
pub fn inject_fault<R: Rng + ?Sized>(kind: FaultKind, true_gradient: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    match kind {
        FaultKind::GradientReverse => -true_gradient,
        FaultKind::RandomGaussian { std } => {
            if std == 0.0 {
                return DVector::zeros(true_gradient.len());
            }
            let normal = Normal::new(0.0, std).expect("validated std");
            DVector::from_fn(true_gradient.len(), |_, _| normal.sample(rng))
        }
    }
}

/// Coordinate-wise clamp onto the box.
pub fn project_box(x: &DVector<f64>, domain: &BoxDomain) -> DVector<f64> {
    domain.project(x)
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: RegressionProblem,
    pub roster: AgentRoster,
    pub domain: BoxDomain,
    pub gar: GarSpec,
    pub stragglers: StragglerModel,
    pub schedule: StepSchedule,
    pub noise: NoiseModel,
    pub x0: DVector<f64>,
    pub iterations: usize,
    pub seed: u64,
}

impl RunConfig {
    /// Defaults of the reference experiments: `W = [−1000, 1000]^d`,
    /// `x⁰ = 0`, `η_t = 1.5/(t+1)`, 500 iterations, CGE when `f ≥ 1`.
    pub fn new(problem: RegressionProblem, roster: AgentRoster) -> Self {
        let d = problem.dim();
        let gar = if roster.f() > 0 {
            GarSpec::Cge
        } else {
            GarSpec::SumFastest
        };
        Self {
            problem,
            roster,
            domain: BoxDomain::hypercube(d, 1000.0).expect("valid box"),
            gar,
            stragglers: StragglerModel::UniformRandom,
            schedule: StepSchedule::Harmonic { a: 1.5 },
            noise: NoiseModel::None,
            x0: DVector::zeros(d),
            iterations: 500,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = (self.problem.n(), self.problem.dim());
        if self.roster.n() != n {
            return Err(Error::InvalidConfig(format!(
                "roster has n = {} but the problem has {n} agents",
                self.roster.n()
            )));
        }
        if self.domain.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.domain.dim(),
            });
        }
        if self.x0.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.x0.len(),
            });
        }
        if !self.domain.contains(&self.x0) {
            return Err(Error::InvalidConfig(format!(
                "x0 = {:?} lies outside the domain",
                self.x0.as_slice()
            )));
        }
        if self.iterations >= u32::MAX as usize {
            return Err(Error::InvalidConfig("too many iterations".into()));
        }
        if n >= 1 << 24 {
            return Err(Error::InvalidConfig("too many agents".into()));
        }
        self.stragglers.validate(n, self.roster.r())?;
        self.schedule.validate()?;
        self.noise.validate(&self.problem)?;
        if self.gar == GarSpec::Cge && n - self.roster.r() <= self.roster.f() {
            return Err(Error::BudgetInvalid("CGE needs more reports than faults".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Minimizer of the honest aggregate cost.
    pub fn honest_minimizer(&self) -> Result<DVector<f64>> {
        self.problem.least_squares_min(&self.roster.honest())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub x: Vec<f64>,
    pub dist: f64,
    pub honest_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x_h: DVector<f64>,
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn x_out(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.rows.last().expect("trajectory holds x0").x)
    }

    pub fn final_dist(&self) -> f64 {
        self.rows.last().expect("trajectory holds x0").dist
    }

    pub fn point(&self, t: usize) -> Option<DVector<f64>> {
        self.rows.get(t).map(|r| DVector::from_column_slice(&r.x))
    }

    /// Columns `t, x_1..x_d, dist_to_xH, honest_cost`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let d = self.x_h.len();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|j| format!("x_{j}")));
        header.push("dist_to_xH".into());
        header.push("honest_cost".into());
        let csv_err = |e: csv::Error| Error::io("<csv>", e);
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = vec![row.t.to_string()];
            rec.extend(row.x.iter().map(|v| v.to_string()));
            rec.push(row.dist.to_string());
            rec.push(row.honest_cost.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<TrajectoryRow>> {
        let perr = |message: String| Error::Parse {
            source_name: "trajectory".into(),
            message,
        };
        let mut rdr = csv::Reader::from_reader(reader);
        let width = rdr.headers().map_err(|e| perr(e.to_string()))?.len();
        if width < 4 {
            return Err(perr(format!("expected at least 4 columns, got {width}")));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| perr(e.to_string()))?;
            let num = |k: usize| -> Result<f64> {
                rec[k]
                    .parse()
                    .map_err(|_| perr(format!("{:?} is not a number", &rec[k])))
            };
            rows.push(TrajectoryRow {
                t: rec[0]
                    .parse()
                    .map_err(|_| perr(format!("bad iteration {:?}", &rec[0])))?,
                x: (1..width - 2).map(num).collect::<Result<_>>()?,
                dist: num(width - 2)?,
                honest_cost: num(width - 1)?,
            });
        }
        Ok(rows)
    }
}

/// A run in progress. [`run`] drives it to completion.
#[derive(Debug)]
pub struct Simulation<'a> {
    config: &'a RunConfig,
    honest: Vec<usize>,
    buffer: Option<StaleBuffer>,
    trajectory: Trajectory,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a RunConfig) -> Result<Self> {
        config.validate()?;
        let honest = config.roster.honest();
        let x_h = config.problem.least_squares_min(&honest)?;
        let buffer = match config.gar {
            GarSpec::StaleSum { tau } => Some(StaleBuffer::new(config.problem.n(), tau)),
            _ => None,
        };
        let mut sim = Self {
            config,
            honest,
            buffer,
            trajectory: Trajectory { x_h, rows: Vec::new() },
        };
        let row = sim.record(0, &config.x0)?;
        sim.trajectory.rows.push(row);
        Ok(sim)
    }

    fn record(&self, t: usize, x: &DVector<f64>) -> Result<TrajectoryRow> {
        Ok(TrajectoryRow {
            t,
            x: x.as_slice().to_vec(),
            dist: point_distance(x, &self.trajectory.x_h)?,
            honest_cost: self.config.problem.aggregate_cost(&self.honest, x)?,
        })
    }

    /// Current iteration index `t` (the trajectory holds `x⁰..x^t`).
    pub fn iteration(&self) -> usize {
        self.trajectory.rows.len() - 1
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.trajectory
    }

    /// The vector agent `i` sends for the estimate with timestamp `ts`.
    fn report(&self, agent: usize, ts: usize) -> Result<DVector<f64>> {
        let cfg = self.config;
        let x = self.trajectory.point(ts).expect("timestamp within history");
        let seed = cfg.seed;
        if cfg.roster.is_byzantine(agent) {
            let truth = cfg.problem.gradient(agent, &x)?;
            let mut rng = stream_rng(seed, Purpose::Fault, agent, ts);
            return Ok(inject_fault(cfg.roster.fault(), &truth, &mut rng));
        }
        match cfg.noise {
            NoiseModel::None | NoiseModel::Gaussian { sigma: 0.0 } => cfg.problem.gradient(agent, &x),
            NoiseModel::Gaussian { sigma } => {
                let g = cfg.problem.gradient(agent, &x)?;
                let normal = Normal::new(0.0, sigma / (g.len() as f64).sqrt()).expect("validated sigma");
                let mut rng = stream_rng(seed, Purpose::Noise, agent, ts);
                Ok(g.map(|v| v + normal.sample(&mut rng)))
            }
            NoiseModel::MiniBatch { batch } => {
                let k = cfg.problem.agent_rows(agent).nrows();
                let mut rng = stream_rng(seed, Purpose::Noise, agent, ts);
                let mut picked = index::sample(&mut rng, k, batch).into_vec();
                picked.sort_unstable();
                let mut g = DVector::zeros(x.len());
                for row in picked {
                    g += cfg.problem.row_gradient(agent, row, &x);
                }
                Ok(g * (k as f64 / batch as f64))
            }
        }
    }

    /// Advances from `x^t` to `x^{t+1}`.
    pub fn step(&mut self) -> Result<()> {
        let cfg = self.config;
        let t = self.iteration();
        if t >= cfg.iterations {
            return Err(Error::InvalidArgument(format!(
                "run already finished after {t} iterations"
            )));
        }
        let n = cfg.problem.n();
        let r = cfg.roster.r();
        let slow = cfg.stragglers.select(n, r, t, cfg.seed);
        let received: Vec<usize> = (0..n).filter(|i| slow.binary_search(i).is_err()).collect();

        let direction = match cfg.gar {
            GarSpec::SumFastest | GarSpec::Cge => {
                let grads = received
                    .iter()
                    .map(|&i| self.report(i, t))
                    .collect::<Result<Vec<_>>>()?;
                if cfg.gar == GarSpec::Cge {
                    cge_filter(&grads, cfg.roster.f())?
                } else {
                    sum_fastest(&grads, n - r)?
                }
            }
            GarSpec::StaleSum { tau } => {
                let mut buffer = self.buffer.take().expect("stale buffer");
                buffer.advance_to(t);
                for &i in &received {
                    buffer.offer(i, self.report(i, t)?, t);
                }
                if tau > 0 {
                    let ages = Uniform::new_inclusive(1, tau).expect("tau >= 1");
                    for &i in &slow {
                        let age = ages.sample(&mut stream_rng(cfg.seed, Purpose::StaleAge, i, t));
                        if let Some(ts) = t.checked_sub(age) {
                            if buffer.timestamp(i).is_none_or(|held| held < ts) {
                                buffer.offer(i, self.report(i, ts)?, ts);
                            }
                        }
                    }
                }
                let out = stale_aggregate(&buffer, n - r);
                self.buffer = Some(buffer);
                out?
            }
        };

        let x = self.trajectory.point(t).expect("current point");
        let next = project_box(&(x - direction * cfg.schedule.eta(t)), &cfg.domain);
        let row = self.record(t + 1, &next)?;
        self.trajectory.rows.push(row);
        Ok(())
    }
}

/// Executes all `T` iterations. Deterministic in `(config, seed)`.
pub fn run(config: &RunConfig) -> Result<Trajectory> {
    let mut sim = Simulation::new(config)?;
    for _ in 0..config.iterations {
        sim.step()?;
    }
    Ok(sim.into_trajectory())
}

/// Monte Carlo estimate of `E||x^t − target||²` at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseEstimate {
    pub t: usize,
    pub mean: f64,
    pub std_error: f64,
}

/// Runs `config` once per seed (in parallel) and estimates the mean squared
/// distance to `target` at each checkpoint iteration.
pub fn monte_carlo_mse(
    config: &RunConfig,
    seeds: &[u64],
    target: &DVector<f64>,
    checkpoints: &[usize],
) -> Result<Vec<MseEstimate>> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 seeds, got {}",
            seeds.len()
        )));
    }
    if let Some(&t) = checkpoints.iter().find(|&&t| t > config.iterations) {
        return Err(Error::InvalidArgument(format!(
            "checkpoint {t} beyond the configured {} iterations",
            config.iterations
        )));
    }
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let traj = run(&config.with_seed(seed))?;
            checkpoints
                .iter()
                .map(|&t| Ok(point_distance(&traj.point(t).expect("checkpoint"), target)?.powi(2)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let k = seeds.len() as f64;
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let mean = per_seed.iter().map(|v| v[c]).sum::<f64>() / k;
            let var = per_seed.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / (k - 1.0);
            MseEstimate {
                t,
                mean,
                std_error: (var / k).sqrt(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_run(f: usize, r: usize) -> RunConfig {
        let p = RegressionProblem::bundled_fixture();
        RunConfig::new(p, AgentRoster::new(10, f, r, FaultKind::GradientReverse).unwrap())
    }

    #[test]
    fn fault_injection() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let g = DVector::from_vec(vec![3.0, -4.0]);
        let rev = inject_fault(FaultKind::GradientReverse, &g, &mut rng);
        assert_eq!(rev.as_slice(), &[-3.0, 4.0]);
        assert_eq!(inject_fault(FaultKind::GradientReverse, &rev, &mut rng), g);
    }

    #[test]
    fn random_fault_statistics() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let kind = FaultKind::RandomGaussian { std: 200.0 };
        let draws = 100_000;
        let z = DVector::zeros(2);
        let (mut s, mut s2) = (DVector::<f64>::zeros(2), DVector::<f64>::zeros(2));
        for _ in 0..draws {
            let v = inject_fault(kind, &z, &mut rng);
            s += &v;
            s2 += v.component_mul(&v);
        }
        for j in 0..2 {
            let mean = s[j] / draws as f64;
            let std = (s2[j] / draws as f64 - mean * mean).sqrt();
            assert!(mean.abs() <= 2.5, "{mean}");
            assert!((198.0..=202.0).contains(&std), "{std}");
        }
    }

    #[test]
    fn straggler_models() {
        let rr = StragglerModel::RoundRobin;
        assert_eq!(rr.select(10, 3, 0, 0), vec![0, 1, 2]);
        assert_eq!(rr.select(10, 3, 3, 0), vec![0, 1, 9]);
        let u = StragglerModel::UniformRandom;
        for t in 0..50 {
            let s = u.select(10, 2, t, 9);
            assert_eq!(s.len(), 2);
            assert!(s[0] < s[1] && s[1] < 10);
            assert_eq!(s, u.select(10, 2, t, 9));
        }
        assert_eq!(StragglerModel::fixed_last(10, 2).select(10, 2, 5, 0), vec![8, 9]);
    }

    #[test]
    fn first_step_by_hand() {
        let mut cfg = fixture_run(0, 0);
        cfg.iterations = 1;
        let traj = run(&cfg).unwrap();
        let p = &cfg.problem;
        let mut atb = DVector::zeros(2);
        for i in 0..10 {
            atb += p.agent_rows(i).tr_mul(p.agent_responses(i));
        }
        let want = cfg.domain.project(&(atb * 3.0));
        assert_eq!(traj.rows.len(), 2);
        let got = traj.x_out();
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn zero_step_keeps_estimate() {
        let mut cfg = fixture_run(0, 1);
        cfg.schedule = StepSchedule::Constant { eta: 0.0 };
        cfg.x0 = DVector::from_vec(vec![3.0, -2.0]);
        cfg.iterations = 5;
        let traj = run(&cfg).unwrap();
        assert!(traj.rows.iter().all(|r| r.x == vec![3.0, -2.0]));
    }

    #[test]
    fn zero_iterations() {
        let mut cfg = fixture_run(0, 0);
        cfg.iterations = 0;
        let traj = run(&cfg).unwrap();
        assert_eq!(traj.rows.len(), 1);
        assert_eq!(traj.rows[0].x, vec![0.0, 0.0]);
    }

    #[test]
    fn unfiltered_reversal_diverges() {
        let mut clean = fixture_run(0, 0);
        clean.iterations = 1;
        let mut bad = fixture_run(4, 0);
        bad.gar = GarSpec::SumFastest;
        bad.iterations = 1;
        assert_ne!(run(&clean).unwrap().x_out(), run(&bad).unwrap().x_out());
    }

    #[test]
    fn fault_free_convergence() {
        let traj = run(&fixture_run(0, 0)).unwrap();
        assert_eq!(traj.rows.len(), 501);
        assert!(traj.final_dist() <= 1e-3, "{}", traj.final_dist());
    }

    #[test]
    fn x0_outside_domain_rejected() {
        let mut cfg = fixture_run(0, 0);
        cfg.x0 = DVector::from_vec(vec![2000.0, 0.0]);
        assert!(matches!(run(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn stale_tau_zero_is_sum() {
        let mut a = fixture_run(0, 2);
        a.iterations = 60;
        let mut b = a.clone();
        b.gar = GarSpec::StaleSum { tau: 0 };
        assert_eq!(run(&a).unwrap(), run(&b).unwrap());
    }

    #[test]
    fn stale_with_window_runs_and_differs() {
        let mut a = fixture_run(0, 2);
        a.iterations = 60;
        let mut b = a.clone();
        b.gar = GarSpec::StaleSum { tau: 3 };
        let tb = run(&b).unwrap();
        assert_ne!(run(&a).unwrap(), tb);
        assert!(tb.rows.iter().all(|r| r.x.iter().all(|v| v.abs() <= 1000.0)));
    }

    #[test]
    fn noise_off_equivalence_and_minibatch() {
        let mut a = fixture_run(0, 1);
        a.iterations = 40;
        let mut b = a.clone();
        b.noise = NoiseModel::Gaussian { sigma: 0.0 };
        assert_eq!(run(&a).unwrap(), run(&b).unwrap());
        // one row per agent: the full batch is exact
        let mut c = a.clone();
        c.noise = NoiseModel::MiniBatch { batch: 1 };
        let (ta, tc) = (run(&a).unwrap(), run(&c).unwrap());
        for (x, y) in ta.rows.iter().zip(&tc.rows) {
            for (u, v) in x.x.iter().zip(&y.x) {
                assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
            }
        }
        c.noise = NoiseModel::MiniBatch { batch: 2 };
        assert!(run(&c).is_err());
    }

    #[test]
    fn monte_carlo_without_noise_has_no_spread() {
        let mut cfg = fixture_run(0, 0);
        cfg.iterations = 20;
        let x_h = cfg.honest_minimizer().unwrap();
        let est = monte_carlo_mse(&cfg, &[1, 2, 3], &x_h, &[0, 20]).unwrap();
        let d = run(&cfg).unwrap().final_dist();
        assert!((est[1].mean - d * d).abs() < 1e-15);
        assert_eq!(est[1].std_error, 0.0);
        let at_x0 = monte_carlo_mse(&cfg, &[1, 2], &cfg.x0, &[0]).unwrap();
        assert_eq!(at_x0[0].mean, 0.0);
        assert!(monte_carlo_mse(&cfg, &[], &x_h, &[0]).is_err());
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let mut cfg = fixture_run(1, 1);
        cfg.iterations = 30;
        cfg.noise = NoiseModel::Gaussian { sigma: 0.3 };
        let traj = run(&cfg).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x_1,x_2,dist_to_xH,honest_cost\n"));
        assert_eq!(Trajectory::read_csv(buf.as_slice()).unwrap(), traj.rows);
    }
}
