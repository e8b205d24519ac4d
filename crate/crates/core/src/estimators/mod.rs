//! Grid-search estimators of `(ε, η, θ, h)`.
//!
//! * ML – exhaustive `(ε, η)` search of the padded projection cost, then a
//!   `θ` search at the winner, then least squares for the channel.
//! * MML – `η` search only; `ε` follows in closed form from a first-order
//!   expansion of the CFO phasors.
//! * SML – `(ε, θ)` search ignoring the SFO, then an `η` search.
//!
//! All three implement [`Estimator`] and are looked up by name through
//! [`EstimatorRegistry`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{
    build_a, build_a1, build_a2, cfo_phasors, ChannelState, Impairments, ReceivedSignal,
    SystemConfig, TrainingMatrix,
};
use crate::numerics::{identity, kron, proj_norm_sq, CMatrix, CVector, LeastSquares, C64};
use crate::{Error, Result};

mod context;
mod ml;
mod mml;
mod sml;

pub use context::{Factor, SearchContext};
pub use ml::Ml;
pub use mml::{Mml, MML_VALIDITY};
pub use sml::Sml;

/// Closed interval sampled at `min + i·step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Range {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.step.is_finite()) {
            return Err(Error::EmptyGrid(format!("{name}: bounds must be finite")));
        }
        if self.step <= 0.0 {
            return Err(Error::EmptyGrid(format!("{name}: step must be positive")));
        }
        if self.min > self.max {
            return Err(Error::EmptyGrid(format!("{name}: min {} exceeds max {}", self.min, self.max)));
        }
        Ok(())
    }

    /// `floor((max − min)/step) + 1`, robust to rounding of the quotient.
    pub fn count(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count()).map(|i| self.value(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub eps: Range,
    pub eta: Range,
    pub theta: ThetaRange,
}

/// Integer timing lattice with unit step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaRange {
    pub min: i64,
    pub max: i64,
}

impl GridSpec {
    pub fn new(eps: Range, eta: Range, theta_min: i64, theta_max: i64) -> Self {
        Self { eps, eta, theta: ThetaRange { min: theta_min, max: theta_max } }
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        self.eps.validate("ε")?;
        self.eta.validate("η")?;
        if self.theta.min > self.theta.max {
            return Err(Error::EmptyGrid(format!(
                "θ: min {} exceeds max {}",
                self.theta.min, self.theta.max
            )));
        }
        cfg.check_theta(self.theta.min)?;
        cfg.check_theta(self.theta.max)?;
        Ok(())
    }

    pub fn g_eps(&self) -> usize {
        self.eps.count()
    }

    pub fn g_eta(&self) -> usize {
        self.eta.count()
    }

    pub fn g_theta(&self) -> usize {
        (self.theta.max - self.theta.min + 1) as usize
    }

    pub fn theta_values(&self) -> Vec<i64> {
        (self.theta.min..=self.theta.max).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ML")]
    Ml,
    #[serde(rename = "MML")]
    Mml,
    #[serde(rename = "SML")]
    Sml,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Ml, Algorithm::Mml, Algorithm::Sml];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Ml => "ML",
            Algorithm::Mml => "MML",
            Algorithm::Sml => "SML",
        }
    }

    /// Number of cost evaluations of one run on `grid`.
    pub fn search_points(self, grid: &GridSpec) -> usize {
        let (ge, gn, gt) = (grid.g_eps(), grid.g_eta(), grid.g_theta());
        match self {
            Algorithm::Ml => ge * gn + gt,
            Algorithm::Mml => gn + gt,
            Algorithm::Sml => ge * gt + gn,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml" => Ok(Algorithm::Ml),
            "mml" => Ok(Algorithm::Mml),
            "sml" => Ok(Algorithm::Sml),
            other => Err(Error::UnknownAlgorithm(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub algorithm: Algorithm,
    pub eps: f64,
    pub eta: f64,
    pub theta: i64,
    pub channel: ChannelState,
    /// Final projection cost `‖P_Â r‖²` at the estimate.
    pub cost: f64,
    /// Cost of the first search stage at its winner (`J₁`, `J₃` or `J₄`).
    pub stage_cost: f64,
    pub search_points: usize,
    /// Grid points whose model matrix failed the rank check.
    pub skipped_points: usize,
    /// MML only: the closed-form `|ε̂|` left the range where the expansion holds.
    pub outside_validity: bool,
    /// Every evaluated cost in scan order, when requested.
    pub cost_surface: Option<Vec<f64>>,
}

impl EstimationResult {
    pub fn impairments(&self) -> Impairments {
        Impairments::new(self.eps, self.eta, self.theta)
    }
}

pub trait Estimator: Send + Sync {
    fn algorithm(&self) -> Algorithm;

    fn name(&self) -> &'static str {
        self.algorithm().tag()
    }

    fn search_points(&self, grid: &GridSpec) -> usize {
        self.algorithm().search_points(grid)
    }

    fn estimate(&self, ctx: &SearchContext, r: &ReceivedSignal) -> Result<EstimationResult>;
}

/// Estimators keyed by lower-case name.
pub struct EstimatorRegistry {
    entries: BTreeMap<String, Box<dyn Estimator>>,
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(Ml));
        reg.register(Box::new(Mml));
        reg.register(Box::new(Sml));
        reg
    }
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn register(&mut self, est: Box<dyn Estimator>) {
        self.entries.insert(est.name().to_ascii_lowercase(), est);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Estimator> {
        self.entries
            .get(&name.trim().to_ascii_lowercase())
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownAlgorithm(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

pub fn ml_estimate(cfg: &SystemConfig, training: &TrainingMatrix, r: &ReceivedSignal, grid: &GridSpec) -> Result<EstimationResult> {
    Ml.estimate(&SearchContext::new(cfg, training, grid)?, r)
}

pub fn mml_estimate(cfg: &SystemConfig, training: &TrainingMatrix, r: &ReceivedSignal, grid: &GridSpec) -> Result<EstimationResult> {
    Mml.estimate(&SearchContext::new(cfg, training, grid)?, r)
}

pub fn sml_estimate(cfg: &SystemConfig, training: &TrainingMatrix, r: &ReceivedSignal, grid: &GridSpec) -> Result<EstimationResult> {
    Sml.estimate(&SearchContext::new(cfg, training, grid)?, r)
}

// ---------------------------------------------------------------------------
// cost functions from the explicit model matrices

/// `J₁(ε,η|r) = ‖P_{A₁} r‖²`.
pub fn cost_j1(cfg: &SystemConfig, training: &TrainingMatrix, r: &ReceivedSignal, eps: f64, eta: f64) -> Result<f64> {
    r.check(cfg)?;
    proj_norm_sq(&build_a1(cfg, training, eps, eta)?, r.samples())
}

/// `J₂(θ|r,ε,η) = ‖P_A r‖²`.
pub fn cost_j2(cfg: &SystemConfig, training: &TrainingMatrix, r: &ReceivedSignal, eps: f64, eta: f64, theta: i64) -> Result<f64> {
    r.check(cfg)?;
    proj_norm_sq(&build_a(cfg, training, &Impairments::new(eps, eta, theta))?, r.samples())
}

/// `C = Rᴴ(I − I_{N_R} ⊗ P_{A₂})`, `R = diag(r)`.
pub fn build_c(cfg: &SystemConfig, training: &TrainingMatrix, r: &ReceivedSignal, eta: f64) -> Result<CMatrix> {
    r.check(cfg)?;
    let a2 = build_a2(cfg, training, eta)?;
    let ls = LeastSquares::new(&a2)?;
    let p = &a2 * ls.pinv();
    let nn = cfg.signal_len();
    let comp = identity(nn) - kron(&identity(cfg.n_rx), &p);
    let rh = CMatrix::from_diagonal(&r.samples().conjugate());
    Ok(rh * comp)
}

/// `c₁ = (2π(1+η)/N) diag(I_{N_R} ⊗ C₁)`.
pub fn build_c1_vector(cfg: &SystemConfig, eta: f64) -> CVector {
    let n = cfg.n_subcarriers;
    let s = 2.0 * std::f64::consts::PI * (1.0 + eta) / n as f64;
    CVector::from_fn(cfg.signal_len(), |i, _| C64::new(s * (i % n) as f64, 0.0))
}

/// Closed-form `ε̂(η)` and `J₃(η|r)` evaluated through the explicit `C`
/// matrix.
pub fn mml_eps_given_eta(cfg: &SystemConfig, training: &TrainingMatrix, r: &ReceivedSignal, eta: f64) -> Result<(f64, f64)> {
    let c = build_c(cfg, training, r, eta)?;
    let cc = &c * c.adjoint();
    let c1 = build_c1_vector(cfg, eta);
    let ones = CVector::from_element(cfg.signal_len(), C64::new(1.0, 0.0));
    let re = cc.map(|z| C64::new(z.re, 0.0));
    let im = cc.map(|z| C64::new(z.im, 0.0));
    let base = ones.dot(&(&cc * &ones)).re;
    let num = c1.dot(&(&im * &ones)).re;
    let den = c1.dot(&(&re * &c1)).re;
    if !(den > mml::DENOMINATOR_FLOOR * base.max(f64::MIN_POSITIVE)) {
        return Err(Error::ZeroDenominator(den));
    }
    let eps = num / den;
    Ok((eps, base + eps * eps * den - 2.0 * eps * num))
}

/// Exact MML cost `dᵀCCᴴd*` at `ε`, equal to `‖r‖² − J₁(ε,η)`.
pub fn mml_exact_cost(cfg: &SystemConfig, training: &TrainingMatrix, r: &ReceivedSignal, eps: f64, eta: f64) -> Result<f64> {
    let c = build_c(cfg, training, r, eta)?;
    let d: Vec<C64> = cfo_phasors(cfg, eps, eta);
    let dd = CVector::from_fn(cfg.signal_len(), |i, _| d[i % cfg.n_subcarriers]);
    let chd = c.adjoint() * dd.conjugate();
    Ok(chd.norm_squared())
}

/// Empirical `P_tf(p) = Pr[|θ̂ − θ| ≥ p]`.
pub fn p_tf(results: &[EstimationResult], theta: i64, p: u64) -> Result<f64> {
    timing_failure_rate(results.iter().map(|r| r.theta), theta, p)
}

pub fn timing_failure_rate(estimates: impl IntoIterator<Item = i64>, theta: i64, p: u64) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidConfig("timing failure threshold p must be at least 1".into()));
    }
    let (mut n, mut fails) = (0usize, 0usize);
    for t in estimates {
        n += 1;
        if t.abs_diff(theta) >= p {
            fails += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput("timing estimates"));
    }
    Ok(fails as f64 / n as f64)
}
