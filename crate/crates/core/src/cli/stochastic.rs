//! Monte Carlo check of the constant-step stochastic envelope.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::{convexity_gamma, lipschitz_mu, step_ceiling, stochastic_params, StochasticParams};
use crate::engine::{monte_carlo_mse, NoiseModel, RunConfig, StepSchedule};
use crate::error::{Error, Result};
use crate::redundancy::compute_epsilon;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointResult {
    pub t: usize,
    pub mse: f64,
    pub std_error: f64,
    pub envelope: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticReport {
    pub eta: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub params: StochasticParams,
    pub checkpoints: Vec<CheckpointResult>,
}

impl StochasticReport {
    pub fn pass(&self) -> bool {
        self.checkpoints.iter().all(|c| c.pass)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.checkpoints {
            w.serialize(c).map_err(|e| Error::io("<csv>", e))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = format!(
            "eta = {:.6e} (ceiling {:.6e}), sigma = {}, epsilon = {:.6}\nrho = {:.6}, M_bar = {:.6e}\n",
            self.eta, p.eta_bar, self.sigma, self.epsilon, p.rho, p.m_bar
        );
        out.push_str(&format!(
            "{:>6} {:>14} {:>12} {:>14} {:>6}\n",
            "t", "mse", "std err", "envelope", "check"
        ));
        for c in &self.checkpoints {
            out.push_str(&format!(
                "{:>6} {:>14.6e} {:>12.3e} {:>14.6e} {:>6}\n",
                c.t,
                c.mse,
                c.std_error,
                c.envelope,
                if c.pass { "ok" } else { "FAIL" }
            ));
        }
        out.push_str(if self.pass() { "PASS\n" } else { "FAIL\n" });
        out
    }
}

/// For each checkpoint `t`, compares the mean of `||x^{t+1} − x_H||²` over
/// `seeds` with `ρ^{t+1}||x⁰ − x_H||² + (1 − ρ^{t+1})/(1 − ρ)·M̄`, allowing
/// three standard errors of slack.
///
/// The step must be constant; `eta_fraction` replaces it with a fraction
/// of the ceiling `η̄`.
pub fn stochastic_check(
    config: &RunConfig,
    seeds: &[u64],
    checkpoints: &[usize],
    eta_fraction: Option<f64>,
) -> Result<StochasticReport> {
    let problem = &config.problem;
    let (n, f, r) = (problem.n(), config.roster.f(), config.roster.r());
    let mu = lipschitz_mu(problem)?;
    let gamma = convexity_gamma(problem, f)?;
    let mut cfg = config.clone();
    if let Some(frac) = eta_fraction {
        let (_, eta_bar) = step_ceiling(n, f, r, mu, gamma)?;
        cfg.schedule = StepSchedule::Constant { eta: frac * eta_bar };
    }
    let StepSchedule::Constant { eta } = cfg.schedule else {
        return Err(Error::InvalidArgument(
            "stochastic check needs a constant step; set one in the config or pass --eta-fraction".into(),
        ));
    };
    let sigma = match cfg.noise {
        NoiseModel::None => 0.0,
        NoiseModel::Gaussian { sigma } => sigma,
        NoiseModel::MiniBatch { .. } => {
            return Err(Error::InvalidArgument(
                "stochastic check needs a known sigma; use Gaussian noise".into(),
            ))
        }
    };
    let epsilon = compute_epsilon(problem, f, r)?.epsilon;
    let params = stochastic_params(n, f, r, mu, gamma, eta, epsilon, sigma)?;

    let x_h = cfg.honest_minimizer()?;
    let initial = (&cfg.x0 - &x_h).norm_squared();
    cfg.iterations = checkpoints.iter().map(|t| t + 1).max().unwrap_or(1);
    let shifted: Vec<usize> = checkpoints.iter().map(|t| t + 1).collect();
    let estimates = monte_carlo_mse(&cfg, seeds, &x_h, &shifted)?;
    let checkpoints = checkpoints
        .iter()
        .zip(estimates)
        .map(|(&t, est)| {
            let envelope = params.envelope(t, initial);
            CheckpointResult {
                t,
                mse: est.mean,
                std_error: est.std_error,
                envelope,
                pass: est.mean <= envelope + 3.0 * est.std_error,
            }
        })
        .collect();
    Ok(StochasticReport {
        eta,
        sigma,
        epsilon,
        params,
        checkpoints,
    })
}
