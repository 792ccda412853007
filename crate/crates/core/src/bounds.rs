//! Closed-form convergence constants.
//!
//! Smoothness `μ` and strong convexity `γ` come from eigenvalues of the small
//! Gram matrices `A_SᵀA_S`. The error radius `D` is available under two
//! margin conventions (see [`MarginRule`]); the stochastic parameters
//! `η̄`, `ρ`, `M̄` use the general formulas for `f ≥ 1` and the tighter
//! asynchronous set for `f = 0`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_budget, BoxDomain, RegressionProblem};
use crate::redundancy::{compute_epsilon, pair_count, MAX_PAIRS};
use crate::subsets::{binomial, k_subsets};

/// Smallest and largest eigenvalue of a symmetric matrix.
///
/// Closed form for `d ≤ 2`, Jacobi-style iteration otherwise.
pub fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    match m.nrows() {
        1 => (m[(0, 0)], m[(0, 0)]),
        2 => {
            let (a, b, c) = (m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)]);
            let mean = 0.5 * (a + c);
            let rad = (0.5 * (a - c)).hypot(b);
            (mean - rad, mean + rad)
        }
        _ => {
            let eig = SymmetricEigen::new(m.clone());
            (eig.eigenvalues.min(), eig.eigenvalues.max())
        }
    }
}

/// `μ = 2 · max_i λ_max(A_iᵀA_i)`.
pub fn lipschitz_mu(problem: &RegressionProblem) -> Result<f64> {
    let mut mu: f64 = 0.0;
    for i in 0..problem.n() {
        let (_, hi) = eigen_extremes(&problem.gram(&[i])?);
        mu = mu.max(2.0 * hi);
    }
    if mu <= 0.0 {
        return Err(Error::InvalidProblem(
            "all data rows are zero, smoothness constant is 0".into(),
        ));
    }
    Ok(mu)
}

/// How `γ` is computed from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaRule {
    /// `2 · min_{|S| = n−f} λ_min(A_SᵀA_S) / n`. This normalisation reproduces
    /// the reference constants for the bundled dataset.
    #[default]
    TotalNormalized,
    /// `min_{|S| ≥ n−2f} 2 λ_min(A_SᵀA_S) / |S|`, i.e. strong convexity of the
    /// average cost over every subset the fault assumption quantifies over.
    SubsetAverage,
}

fn gamma_over(
    problem: &RegressionProblem,
    sizes: std::ops::RangeInclusive<usize>,
    scale: impl Fn(usize) -> f64 + Sync,
) -> Result<f64> {
    let agents: Vec<usize> = (0..problem.n()).collect();
    let total: u128 = sizes.clone().map(|k| binomial(problem.n(), k)).sum();
    if total > MAX_PAIRS {
        return Err(Error::EnumerationTooLarge {
            pairs: total,
            cap: MAX_PAIRS,
        });
    }
    let subsets: Vec<Vec<usize>> = sizes.flat_map(|k| k_subsets(&agents, k).collect::<Vec<_>>()).collect();
    let values: Vec<Result<f64>> = subsets
        .par_iter()
        .map(|s| {
            let (lo, hi) = eigen_extremes(&problem.gram(s)?);
            // rank-deficient if λ_min is negligible next to λ_max
            if lo <= hi * 1e-12 * problem.dim() as f64 {
                return Err(Error::RankDeficient {
                    subset: s.clone(),
                    rank: problem.dim() - 1,
                    dim: problem.dim(),
                });
            }
            Ok(scale(s.len()) * lo)
        })
        .collect();
    let mut gamma = f64::INFINITY;
    for v in values {
        gamma = gamma.min(v?);
    }
    Ok(gamma)
}

/// Strong-convexity constant for fault budget `f` under the default rule.
pub fn convexity_gamma(problem: &RegressionProblem, f: usize) -> Result<f64> {
    convexity_gamma_with(problem, f, GammaRule::default())
}

pub fn convexity_gamma_with(problem: &RegressionProblem, f: usize, rule: GammaRule) -> Result<f64> {
    let n = problem.n();
    check_budget(n, f, 0)?;
    match rule {
        GammaRule::TotalNormalized => gamma_over(problem, (n - f)..=(n - f), |_| 2.0 / n as f64),
        GammaRule::SubsetAverage => gamma_over(problem, (n - 2 * f)..=n, |k| 2.0 / k as f64),
    }
}

/// Which resilience margin `α` feeds the radius `D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginRule {
    /// `α = (n−f)/(n−r) − (2μ/γ)(f+r)/(n−r)` with `D = 4μ(f+r)ε/(αγ)` for
    /// `f ≥ 1`, and `α = 1 − (r/n)(μ/γ)` with `D = 2rμε/(αγ)` for `f = 0`.
    /// Errors when `α ≤ 0`.
    Strict,
    /// `α = 1 − (f−r)/(n−r) + (2μ/γ)(f+r)/(n−r)` with `D = 4μ(f+r)ε/(αγ)`
    /// for every `f`. This is the convention behind the reference D* table;
    /// `α` is always positive.
    #[default]
    Tabulated,
}

/// Which closed form produced a radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusFormula {
    /// Gradient-filter form `4μ(f+r)ε/(αγ)`.
    Filtered,
    /// Fault-free asynchronous form `2rμε/(αγ)`.
    Asynchronous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusBound {
    pub alpha: f64,
    pub radius: f64,
    pub formula: RadiusFormula,
}

fn check_constants(mu: f64, gamma: f64, epsilon: f64) -> Result<()> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(())
}

fn async_margin(n: usize, r: usize, mu: f64, gamma: f64) -> f64 {
    1.0 - (r as f64 / n as f64) * (mu / gamma)
}

fn filtered_margin(n: usize, f: usize, r: usize, mu: f64, gamma: f64) -> f64 {
    let m = (n - r) as f64;
    (n - f) as f64 / m - (2.0 * mu / gamma) * (f + r) as f64 / m
}

/// Radius `D` under the strict margin.
pub fn bound_deterministic(n: usize, f: usize, r: usize, mu: f64, gamma: f64, epsilon: f64) -> Result<RadiusBound> {
    check_budget(n, f, r)?;
    check_constants(mu, gamma, epsilon)?;
    let (alpha, numerator, formula) = if f == 0 {
        (
            async_margin(n, r, mu, gamma),
            2.0 * r as f64 * mu * epsilon,
            RadiusFormula::Asynchronous,
        )
    } else {
        (
            filtered_margin(n, f, r, mu, gamma),
            4.0 * mu * (f + r) as f64 * epsilon,
            RadiusFormula::Filtered,
        )
    };
    if alpha <= 0.0 {
        return Err(Error::NonPositiveMargin { alpha });
    }
    Ok(RadiusBound {
        alpha,
        radius: numerator / (alpha * gamma),
        formula,
    })
}

/// Radius `D` under the tabulated margin convention, used for `D*` tables.
pub fn bound_tabulated(n: usize, f: usize, r: usize, mu: f64, gamma: f64, epsilon: f64) -> Result<RadiusBound> {
    check_budget(n, f, r)?;
    check_constants(mu, gamma, epsilon)?;
    let m = (n - r) as f64;
    let alpha = 1.0 - (f as f64 - r as f64) / m + (2.0 * mu / gamma) * (f + r) as f64 / m;
    Ok(RadiusBound {
        alpha,
        radius: 4.0 * mu * (f + r) as f64 * epsilon / (alpha * gamma),
        formula: RadiusFormula::Filtered,
    })
}

pub fn bound_with(
    rule: MarginRule,
    n: usize,
    f: usize,
    r: usize,
    mu: f64,
    gamma: f64,
    epsilon: f64,
) -> Result<RadiusBound> {
    match rule {
        MarginRule::Strict => bound_deterministic(n, f, r, mu, gamma, epsilon),
        MarginRule::Tabulated => bound_tabulated(n, f, r, mu, gamma, epsilon),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaleBound {
    pub alpha: f64,
    pub radius: f64,
    /// `G = nμ(2nε + Γ)`.
    pub g: f64,
}

/// Radius for the stale-gradient sum with staleness window `τ` (fault-free).
#[allow(clippy::too_many_arguments)]
pub fn bound_stale(
    n: usize,
    r: usize,
    mu: f64,
    gamma: f64,
    epsilon: f64,
    tau: usize,
    eta0: f64,
    domain_radius: f64,
) -> Result<StaleBound> {
    check_budget(n, 0, r)?;
    check_constants(mu, gamma, epsilon)?;
    if !(eta0.is_finite() && eta0 >= 0.0 && domain_radius.is_finite() && domain_radius >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eta0 and Gamma must be finite and >= 0, got {eta0}, {domain_radius}"
        )));
    }
    let alpha = async_margin(n, r, mu, gamma);
    if alpha <= 0.0 {
        return Err(Error::NonPositiveMargin { alpha });
    }
    let nf = n as f64;
    let g = nf * mu * (2.0 * nf * epsilon + domain_radius);
    let radius = mu * (2.0 * r as f64 + tau as f64 * eta0 * g) * epsilon / (alpha * gamma);
    Ok(StaleBound { alpha, radius, g })
}

/// `Γ = max_{x∈W} ||x − x_H||`, exact for a box.
pub fn domain_radius(domain: &BoxDomain, x_h: &DVector<f64>) -> Result<f64> {
    if x_h.len() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: x_h.len(),
        });
    }
    if !domain.contains(x_h) {
        return Err(Error::InvalidArgument(format!(
            "reference point {:?} lies outside the domain",
            x_h.as_slice()
        )));
    }
    Ok(x_h
        .iter()
        .zip(domain.lower().iter().zip(domain.upper().iter()))
        .map(|(x, (lo, hi))| {
            let far = (x - lo).abs().max((hi - x).abs());
            far * far
        })
        .sum::<f64>()
        .sqrt())
}

/// Which stochastic formula set was applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StochasticVariant {
    General,
    Asynchronous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticParams {
    pub alpha: f64,
    pub eta_bar: f64,
    pub rho: f64,
    pub m_bar: f64,
    pub variant: StochasticVariant,
}

impl StochasticParams {
    /// `ρ^{t+1} ||x⁰ − x_H||² + (1 − ρ^{t+1})/(1 − ρ) · M̄`.
    pub fn envelope(&self, t: usize, initial_sq_dist: f64) -> f64 {
        let p = self.rho.powi(t as i32 + 1);
        p * initial_sq_dist + (1.0 - p) / (1.0 - self.rho) * self.m_bar
    }
}

/// `(α, η̄)` for the general formula set (any `f`), requiring `n ≥ 2f + 3r`.
pub fn step_ceiling_general(n: usize, f: usize, r: usize, mu: f64, gamma: f64) -> Result<(f64, f64)> {
    check_budget(n, f, r)?;
    check_constants(mu, gamma, 0.0)?;
    if n < 2 * f + 3 * r {
        return Err(Error::BudgetInvalid(format!(
            "stochastic bounds need n >= 2f + 3r, got n = {n}, f = {f}, r = {r}"
        )));
    }
    let alpha = filtered_margin(n, f, r, mu, gamma);
    if alpha <= 0.0 {
        return Err(Error::NonPositiveMargin { alpha });
    }
    let (nf, m) = ((n - f) as f64, (n - r) as f64);
    let eta_bar = 2.0 * m * gamma * alpha / (nf * nf * mu * mu + 2.0 * m * m * mu * mu);
    Ok((alpha, eta_bar))
}

/// `(α, η̄)` for the fault-free asynchronous set.
pub fn step_ceiling_async(n: usize, r: usize, mu: f64, gamma: f64) -> Result<(f64, f64)> {
    check_budget(n, 0, r)?;
    check_constants(mu, gamma, 0.0)?;
    let alpha = async_margin(n, r, mu, gamma);
    if alpha <= 0.0 {
        return Err(Error::NonPositiveMargin { alpha });
    }
    let nf = n as f64;
    Ok((alpha, 2.0 * nf * gamma * alpha / (3.0 * nf * nf * mu * mu)))
}

/// `(α, η̄)` with the same dispatch as [`stochastic_params`].
pub fn step_ceiling(n: usize, f: usize, r: usize, mu: f64, gamma: f64) -> Result<(f64, f64)> {
    if f == 0 {
        step_ceiling_async(n, r, mu, gamma)
    } else {
        step_ceiling_general(n, f, r, mu, gamma)
    }
}

fn check_step(eta: f64, eta_bar: f64, sigma: f64) -> Result<()> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {eta}")));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    if eta >= eta_bar {
        return Err(Error::StepTooLarge { eta, eta_bar });
    }
    Ok(())
}

fn finish(alpha: f64, eta_bar: f64, rho: f64, m_bar: f64, variant: StochasticVariant) -> Result<StochasticParams> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "contraction rate {rho} outside (0, 1); check that gamma <= mu"
        )));
    }
    Ok(StochasticParams {
        alpha,
        eta_bar,
        rho,
        m_bar,
        variant,
    })
}

/// General formula set, valid for any `f` with `n ≥ 2f + 3r`.
#[allow(clippy::too_many_arguments)]
pub fn stochastic_params_general(
    n: usize,
    f: usize,
    r: usize,
    mu: f64,
    gamma: f64,
    eta: f64,
    epsilon: f64,
    sigma: f64,
) -> Result<StochasticParams> {
    check_constants(mu, gamma, epsilon)?;
    let (alpha, eta_bar) = step_ceiling_general(n, f, r, mu, gamma)?;
    check_step(eta, eta_bar, sigma)?;
    let (nf, m, fr) = ((n - f) as f64, (n - r) as f64, (f + r) as f64);
    let rho = 1.0 - 2.0 * nf * eta * gamma
        + 4.0 * fr * eta * mu
        + nf * nf * eta * eta * mu * mu
        + 2.0 * m * m * eta * eta * mu * mu;
    let eps_term = (2.0 * fr + nf * nf * eta * mu).powi(2) + m * m * nf * nf * eta * eta * mu * mu;
    let sig_term = 4.0 * (fr / (m * mu)).powi(2) * ((nf - 1.0).sqrt() + 1.0).powi(2) + nf * nf * eta * eta;
    let m_bar = 4.0 * eps_term * epsilon * epsilon + sig_term * sigma * sigma;
    finish(alpha, eta_bar, rho, m_bar, StochasticVariant::General)
}

/// Fault-free asynchronous formula set (`f = 0`).
pub fn stochastic_params_async(
    n: usize,
    r: usize,
    mu: f64,
    gamma: f64,
    eta: f64,
    epsilon: f64,
    sigma: f64,
) -> Result<StochasticParams> {
    check_constants(mu, gamma, epsilon)?;
    let (alpha, eta_bar) = step_ceiling_async(n, r, mu, gamma)?;
    check_step(eta, eta_bar, sigma)?;
    let (nf, rf) = (n as f64, r as f64);
    let rho = 1.0 - 2.0 * (nf * gamma - rf * mu) * eta + 3.0 * nf * nf * eta * eta * mu * mu;
    let eps_term = (rf + nf * nf * eta * mu).powi(2) + nf.powi(4) * eta * eta * mu * mu;
    let sig_term = nf * nf * eta * eta + (rf / (nf * mu)).powi(2) * ((nf - 1.0).sqrt() + 1.0).powi(2);
    let m_bar = 4.0 * eps_term * epsilon * epsilon + sig_term * sigma * sigma;
    finish(alpha, eta_bar, rho, m_bar, StochasticVariant::Asynchronous)
}

/// Stochastic parameters, using the asynchronous set when `f = 0`.
#[allow(clippy::too_many_arguments)]
pub fn stochastic_params(
    n: usize,
    f: usize,
    r: usize,
    mu: f64,
    gamma: f64,
    eta: f64,
    epsilon: f64,
    sigma: f64,
) -> Result<StochasticParams> {
    if f == 0 {
        stochastic_params_async(n, r, mu, gamma, eta, epsilon, sigma)
    } else {
        stochastic_params_general(n, f, r, mu, gamma, eta, epsilon, sigma)
    }
}

/// One cell of a `D*` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DStarCell {
    pub f: usize,
    pub r: usize,
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub d_star: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DStarTable {
    pub mu: f64,
    pub gamma_rule: GammaRule,
    pub margin_rule: MarginRule,
    pub cells: Vec<DStarCell>,
    pub reasons: Vec<((usize, usize), String)>,
}

impl DStarTable {
    pub fn get(&self, f: usize, r: usize) -> Option<&DStarCell> {
        self.cells.iter().find(|c| c.f == f && c.r == r)
    }

    pub fn d_star(&self, f: usize, r: usize) -> Option<f64> {
        self.get(f, r).and_then(|c| c.d_star)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for cell in &self.cells {
            w.serialize(cell).map_err(|e| Error::io("<csv>", e))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<DStarCell>> {
        csv::Reader::from_reader(reader)
            .deserialize()
            .map(|rec| {
                rec.map_err(|e| Error::Parse {
                    source_name: "D* table".into(),
                    message: e.to_string(),
                })
            })
            .collect()
    }

    /// Aligned text rendering with `f` rows and `r` columns.
    pub fn to_text(&self) -> String {
        let f_max = self.cells.iter().map(|c| c.f).max().unwrap_or(0);
        let r_max = self.cells.iter().map(|c| c.r).max().unwrap_or(0);
        let mut out = format!("{:>6} |", "D*");
        for r in 0..=r_max {
            out.push_str(&format!(" {:>10}", format!("r={r}")));
        }
        out.push('\n');
        out.push_str(&"-".repeat(8 + 11 * (r_max + 1)));
        out.push('\n');
        for f in 0..=f_max {
            out.push_str(&format!("{:>6} |", format!("f={f}")));
            for r in 0..=r_max {
                let s = match self.d_star(f, r) {
                    Some(d) => format!("{d:.4}"),
                    None => "-".into(),
                };
                out.push_str(&format!(" {s:>10}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `D*` for every `(f, r)` under the default (tabulated) conventions.
pub fn dstar_table(problem: &RegressionProblem, f_max: usize, r_max: usize) -> Result<DStarTable> {
    dstar_table_with(problem, f_max, r_max, GammaRule::default(), MarginRule::default())
}

/// Pipeline `ε → γ → D` per cell. Cells that fail are flagged invalid.
pub fn dstar_table_with(
    problem: &RegressionProblem,
    f_max: usize,
    r_max: usize,
    gamma_rule: GammaRule,
    margin_rule: MarginRule,
) -> Result<DStarTable> {
    let mu = lipschitz_mu(problem)?;
    let n = problem.n();
    let gammas: Vec<Result<f64>> = (0..=f_max)
        .map(|f| convexity_gamma_with(problem, f, gamma_rule))
        .collect();
    let keys: Vec<(usize, usize)> = (0..=f_max).flat_map(|f| (0..=r_max).map(move |r| (f, r))).collect();
    let results: Vec<(Option<f64>, Option<f64>, Result<RadiusBound>)> = keys
        .par_iter()
        .map(|&(f, r)| {
            let gamma = gammas[f].as_ref().ok().copied();
            let eps = compute_epsilon(problem, f, r).map(|rep| rep.epsilon);
            let bound = match (&gammas[f], &eps) {
                (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                (Ok(g), Ok(e)) => bound_with(margin_rule, n, f, r, mu, *g, *e),
            };
            (eps.ok(), gamma, bound)
        })
        .collect();
    let mut cells = Vec::with_capacity(keys.len());
    let mut reasons = Vec::new();
    for (&(f, r), (epsilon, gamma, bound)) in keys.iter().zip(results) {
        let (alpha, d_star, valid) = match bound {
            Ok(b) => (Some(b.alpha), Some(b.radius), true),
            Err(e) => {
                reasons.push(((f, r), e.to_string()));
                let alpha = match e {
                    Error::NonPositiveMargin { alpha } => Some(alpha),
                    _ => None,
                };
                (alpha, None, false)
            }
        };
        cells.push(DStarCell {
            f,
            r,
            epsilon,
            gamma,
            alpha,
            d_star,
            valid,
        });
    }
    Ok(DStarTable {
        mu,
        gamma_rule,
        margin_rule,
        cells,
        reasons,
    })
}

/// Everything the bounds module can say about one `(f, r)` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub n: usize,
    pub f: usize,
    pub r: usize,
    pub mu: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Strict margin; may be non-positive, in which case `D` is absent.
    pub alpha: f64,
    #[serde(rename = "D")]
    pub d: Option<f64>,
    /// Radius under the tabulated convention, used for resilience checks.
    #[serde(rename = "D_star")]
    pub d_star: f64,
    #[serde(rename = "Gamma")]
    pub gamma_radius: Option<f64>,
    #[serde(rename = "G")]
    pub g: Option<f64>,
    #[serde(rename = "D_stale")]
    pub d_stale: Option<f64>,
    pub eta_bar: Option<f64>,
    pub rho: Option<f64>,
    #[serde(rename = "M_bar")]
    pub m_bar: Option<f64>,
    /// Reasons optional quantities were not reported.
    pub notes: Vec<String>,
}

/// Optional inputs for [`bounds_report`].
#[derive(Debug, Clone, Default)]
pub struct BoundsQuery {
    pub domain: Option<BoxDomain>,
    pub tau: Option<usize>,
    pub eta0: Option<f64>,
    pub eta: Option<f64>,
    pub sigma: Option<f64>,
    /// Honest agents used for `x_H`; defaults to all but the first `f`.
    pub honest: Option<Vec<usize>>,
}

/// Assembles a [`BoundsReport`] for one `(f, r)` configuration.
pub fn bounds_report(problem: &RegressionProblem, f: usize, r: usize, query: &BoundsQuery) -> Result<BoundsReport> {
    let n = problem.n();
    check_budget(n, f, r)?;
    if pair_count(n, f, r) > MAX_PAIRS {
        return Err(Error::EnumerationTooLarge {
            pairs: pair_count(n, f, r),
            cap: MAX_PAIRS,
        });
    }
    let mu = lipschitz_mu(problem)?;
    let gamma = convexity_gamma(problem, f)?;
    let epsilon = compute_epsilon(problem, f, r)?.epsilon;
    let mut notes = Vec::new();
    let (alpha, d) = match bound_deterministic(n, f, r, mu, gamma, epsilon) {
        Ok(b) => (b.alpha, Some(b.radius)),
        Err(Error::NonPositiveMargin { alpha }) => {
            notes.push(format!("strict margin alpha = {alpha:.6} <= 0, D not defined"));
            (alpha, None)
        }
        Err(e) => return Err(e),
    };
    let d_star = bound_tabulated(n, f, r, mu, gamma, epsilon)?.radius;

    let honest = query.honest.clone().unwrap_or_else(|| (f..n).collect());
    let x_h = problem.least_squares_min(&honest)?;
    let gamma_radius = query.domain.as_ref().map(|w| domain_radius(w, &x_h)).transpose()?;

    let (mut g, mut d_stale) = (None, None);
    if let Some(tau) = query.tau {
        match (gamma_radius, f) {
            (Some(big_gamma), 0) => {
                let eta0 = query.eta0.unwrap_or(0.0);
                match bound_stale(n, r, mu, gamma, epsilon, tau, eta0, big_gamma) {
                    Ok(b) => {
                        g = Some(b.g);
                        d_stale = Some(b.radius);
                    }
                    Err(e) => notes.push(format!("stale bound: {e}")),
                }
            }
            (None, _) => notes.push("stale bound needs a domain".into()),
            (_, _) => notes.push("stale bound applies to f = 0 only".into()),
        }
    }

    let (mut eta_bar, mut rho, mut m_bar) = (None, None, None);
    match step_ceiling(n, f, r, mu, gamma) {
        Ok((_, bar)) => eta_bar = Some(bar),
        Err(e) => notes.push(format!("step ceiling: {e}")),
    }
    if let (Some(eta), Some(_)) = (query.eta, eta_bar) {
        match stochastic_params(n, f, r, mu, gamma, eta, epsilon, query.sigma.unwrap_or(0.0)) {
            Ok(p) => {
                rho = Some(p.rho);
                m_bar = Some(p.m_bar);
            }
            Err(e) => notes.push(format!("stochastic: {e}")),
        }
    }

    Ok(BoundsReport {
        n,
        f,
        r,
        mu,
        gamma,
        epsilon,
        alpha,
        d,
        d_star,
        gamma_radius,
        g,
        d_stale,
        eta_bar,
        rho,
        m_bar,
        notes,
    })
}

impl BoundsReport {
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
        let rows: Vec<(&str, String)> = vec![
            ("n", self.n.to_string()),
            ("f", self.f.to_string()),
            ("r", self.r.to_string()),
            ("mu", format!("{:.6}", self.mu)),
            ("gamma", format!("{:.6}", self.gamma)),
            ("epsilon", format!("{:.6}", self.epsilon)),
            ("alpha", format!("{:.6}", self.alpha)),
            ("D", opt(self.d)),
            ("D*", format!("{:.6}", self.d_star)),
            ("Gamma", opt(self.gamma_radius)),
            ("G", opt(self.g)),
            ("D_stale", opt(self.d_stale)),
            ("eta_bar", opt(self.eta_bar)),
            ("rho", opt(self.rho)),
            ("M_bar", opt(self.m_bar)),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<8} {v:>16}\n"));
        }
        for note in &self.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        out
    }
}
