//! Per-plan caches shared by every estimator.
//!
//! The model factors that do not depend on the received vector (whitened
//! bases of `A₂(η)` and of `F₁(η)G(θ)X₁`, CFO phase tables) are built lazily on
//! first use and then reused across grid points and Monte-Carlo trials. A
//! factor that fails the rank check is cached as `None` and its grid points are
//! skipped.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use log::warn;

use super::GridSpec;
use crate::model::{
    build_f1, build_f2, build_f2_padded, build_x1, scale_rows, timing_phasors, ReceivedSignal,
    SystemConfig, TrainingMatrix,
};
use crate::numerics::{cis, CMatrix, LeastSquares, SplitMatrix, C64};
use crate::{Error, Result};

/// Least-squares factor with its whitened operator split for real GEMM.
#[derive(Debug)]
pub struct Factor {
    pub ls: LeastSquares,
    pub split: SplitMatrix,
}

impl Factor {
    fn new(a: &CMatrix) -> Result<Self> {
        let ls = LeastSquares::new(a)?;
        let split = SplitMatrix::from_complex(ls.whitened());
        Ok(Self { ls, split })
    }

    /// `Σ_v ‖W (y_v)‖²` for the per-antenna columns `y_v`.
    pub fn energy(&self, ys: &[Vec<C64>]) -> f64 {
        ys.iter().map(|y| self.ls.projected_energy(y)).sum()
    }
}

type Slot = OnceLock<Option<Arc<Factor>>>;

pub struct SearchContext {
    cfg: SystemConfig,
    training: TrainingMatrix,
    grid: GridSpec,
    eps: Vec<f64>,
    eta: Vec<f64>,
    theta: Vec<i64>,
    /// `X (I ⊗ F₂)`
    x1: CMatrix,
    /// `X (I ⊗ F_{2θmax})`
    x1_padded: CMatrix,
    padded: Vec<Slot>,
    /// `F₁(η_j) G(θ_t) X₁`, indexed `j·g_θ + t`.
    timing: Vec<Slot>,
    /// `F₁(0) G(θ_t) X₁` for the first SML stage.
    timing_no_sfo: Vec<Slot>,
    /// `exp(−j2π ε_i (1+η_j) n/N)` as an `N × g_ε` table per η.
    phases: Vec<OnceLock<SplitMatrix>>,
    phases_no_sfo: OnceLock<SplitMatrix>,
    record_surface: bool,
}

impl SearchContext {
    pub fn new(cfg: &SystemConfig, training: &TrainingMatrix, grid: &GridSpec) -> Result<Self> {
        cfg.validate()?;
        grid.validate(cfg)?;
        let eps = grid.eps.values();
        let eta = grid.eta.values();
        let theta = grid.theta_values();
        let x1 = build_x1(cfg, training, &build_f2(cfg, cfg.max_taps))?;
        let x1_padded = build_x1(cfg, training, &build_f2_padded(cfg))?;
        let slots = |n: usize| (0..n).map(|_| OnceLock::new()).collect::<Vec<_>>();
        Ok(Self {
            cfg: cfg.clone(),
            training: training.clone(),
            grid: grid.clone(),
            padded: slots(eta.len()),
            timing: slots(eta.len() * theta.len()),
            timing_no_sfo: slots(theta.len()),
            phases: (0..eta.len()).map(|_| OnceLock::new()).collect(),
            phases_no_sfo: OnceLock::new(),
            eps,
            eta,
            theta,
            x1,
            x1_padded,
            record_surface: false,
        })
    }

    /// Keep every evaluated cost value in the results.
    pub fn with_surface(mut self, on: bool) -> Self {
        self.record_surface = on;
        self
    }

    pub fn record_surface(&self) -> bool {
        self.record_surface
    }

    pub fn cfg(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn training(&self) -> &TrainingMatrix {
        &self.training
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn eps_values(&self) -> &[f64] {
        &self.eps
    }

    pub fn eta_values(&self) -> &[f64] {
        &self.eta
    }

    pub fn theta_values(&self) -> &[i64] {
        &self.theta
    }

    pub fn check_signal(&self, r: &ReceivedSignal) -> Result<()> {
        r.check(&self.cfg)
    }

    fn get(slot: &Slot, what: impl FnOnce() -> String, build: impl FnOnce() -> Result<Factor>) -> Option<Arc<Factor>> {
        slot.get_or_init(|| match build() {
            Ok(f) => Some(Arc::new(f)),
            Err(e) => {
                warn!("skipping {}: {e}", what());
                None
            }
        })
        .clone()
    }

    /// Whitened basis of `A₂(η_j)`.
    pub fn padded_factor(&self, j: usize) -> Option<Arc<Factor>> {
        let eta = self.eta[j];
        Self::get(&self.padded[j], || format!("η = {eta:e}"), || {
            Factor::new(&(build_f1(&self.cfg, eta) * &self.x1_padded))
        })
    }

    fn timing_matrix(&self, eta: f64, theta: i64) -> CMatrix {
        build_f1(&self.cfg, eta) * scale_rows(&timing_phasors(&self.cfg, theta), &self.x1)
    }

    /// Whitened basis of `F₁(η_j) G(θ_t) X₁`.
    pub fn timing_factor(&self, j: usize, t: usize) -> Option<Arc<Factor>> {
        let (eta, theta) = (self.eta[j], self.theta[t]);
        Self::get(
            &self.timing[j * self.theta.len() + t],
            || format!("(η, θ) = ({eta:e}, {theta})"),
            || Factor::new(&self.timing_matrix(eta, theta)),
        )
    }

    /// Whitened basis of `F₁(0) G(θ_t) X₁`.
    pub fn timing_factor_no_sfo(&self, t: usize) -> Option<Arc<Factor>> {
        let theta = self.theta[t];
        Self::get(&self.timing_no_sfo[t], || format!("θ = {theta} at η = 0"), || {
            Factor::new(&self.timing_matrix(0.0, theta))
        })
    }

    fn phase_table(&self, eta: f64) -> SplitMatrix {
        let n = self.cfg.n_subcarriers;
        let nf = n as f64;
        let m = CMatrix::from_fn(n, self.eps.len(), |row, i| {
            cis(-2.0 * PI * self.eps[i] * (1.0 + eta) * row as f64 / nf)
        });
        SplitMatrix::from_complex(&m)
    }

    pub fn phases(&self, j: usize) -> &SplitMatrix {
        self.phases[j].get_or_init(|| self.phase_table(self.eta[j]))
    }

    pub fn phases_no_sfo(&self) -> &SplitMatrix {
        self.phases_no_sfo.get_or_init(|| self.phase_table(0.0))
    }

    /// `conj(d(ε,η)) ∘ r_v` for every antenna.
    pub fn derotate(&self, r: &ReceivedSignal, eps: f64, eta: f64) -> Vec<Vec<C64>> {
        let nf = self.cfg.n_subcarriers as f64;
        let w = -2.0 * PI * eps * (1.0 + eta) / nf;
        (0..self.cfg.n_rx)
            .map(|v| r.antenna(v).iter().enumerate().map(|(n, &x)| x * cis(w * n as f64)).collect())
            .collect()
    }

    /// `Σ_v ‖W · (diag(r_v) E)‖²` column by column: the projected energy of
    /// `r` de-rotated by every CFO hypothesis of the grid at once.
    pub fn eps_sweep(&self, factor: &Factor, phases: &SplitMatrix, r: &ReceivedSignal) -> Vec<f64> {
        let n = self.cfg.n_subcarriers;
        let g = phases.ncols();
        let n_rx = self.cfg.n_rx;
        let mut y = SplitMatrix::zeros(n, g * n_rx);
        for v in 0..n_rx {
            let rv = r.antenna(v);
            for i in 0..g {
                let col = v * g + i;
                for (row, &x) in rv.iter().enumerate() {
                    let (pr, pi) = (phases.re[(row, i)], phases.im[(row, i)]);
                    y.re[(row, col)] = x.re * pr - x.im * pi;
                    y.im[(row, col)] = x.re * pi + x.im * pr;
                }
            }
        }
        let z = factor.split.mul(&y);
        let mut per_col = vec![0.0; g * n_rx];
        z.accumulate_column_energy(&mut per_col);
        (0..g).map(|i| (0..n_rx).map(|v| per_col[v * g + i]).sum()).collect()
    }

    /// Index of the grid value nearest to `x`.
    pub fn nearest(values: &[f64], x: f64) -> usize {
        let mut best = 0;
        for (i, v) in values.iter().enumerate() {
            if (v - x).abs() < (values[best] - x).abs() {
                best = i;
            }
        }
        best
    }

    /// Exhaustive θ search maximizing `‖P_A r‖²` at fixed `(ε, η_j)`.
    /// Returns `(θ index, cost, skipped)`; ties go to the smallest θ.
    pub fn theta_search(&self, r: &ReceivedSignal, eps: f64, j: usize, surface: &mut Vec<f64>) -> Result<(usize, f64, usize)> {
        let ys = self.derotate(r, eps, self.eta[j]);
        let mut best: Option<(usize, f64)> = None;
        let mut skipped = 0;
        for t in 0..self.theta.len() {
            let cost = match self.timing_factor(j, t) {
                Some(f) => f.energy(&ys),
                None => {
                    skipped += 1;
                    f64::NAN
                }
            };
            if self.record_surface {
                surface.push(cost);
            }
            if !cost.is_nan() && best.is_none_or(|(_, b)| cost > b) {
                best = Some((t, cost));
            }
        }
        let (t, cost) = best.ok_or_else(|| Error::EmptyGrid("every timing hypothesis was rank-deficient".into()))?;
        Ok((t, cost, skipped))
    }

    /// `ĥ = Â† r` with `Â = I ⊗ D(ε,η) F₁(η) G(θ) X₁`, using the cached factor
    /// of `(η_j, θ_t)` and de-rotating by `ε`.
    pub fn channel_estimate(&self, r: &ReceivedSignal, eps: f64, j: usize, t: usize) -> Result<crate::model::ChannelState> {
        let factor = self.timing_factor(j, t).ok_or(Error::RankDeficient {
            condition: f64::INFINITY,
            ceiling: crate::numerics::CONDITION_CEILING,
        })?;
        let ys = self.derotate(r, eps, self.eta[j]);
        let k = self.cfg.n_tx * self.cfg.max_taps;
        let mut h = crate::numerics::CVector::zeros(self.cfg.channel_len());
        for (v, y) in ys.iter().enumerate() {
            h.rows_mut(v * k, k).copy_from(&factor.ls.solve(y));
        }
        crate::model::ChannelState::from_stacked(self.cfg.n_rx, self.cfg.n_tx, self.cfg.max_taps, h)
    }
}
