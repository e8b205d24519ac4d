//! Received-signal model of one MIMO-OFDM training block.
//!
//! Per receive antenna `v` the N time samples after CP removal are
//!
//! ```text
//! r_v = D(ε,η) F₁(η) G(θ) X (I_{N_T} ⊗ F₂) h_v + w_v
//! ```
//!
//! and stacking the antennas gives `r = A(ε,η,θ) h + w` with
//! `A = I_{N_R} ⊗ (D F₁ G X (I_{N_T} ⊗ F₂))`.
//!
//! For the grid searches the channel of every link is zero-padded to a delay
//! window of `L_m + θ_max + θ_offset` taps starting at delay `−θ_offset`, which
//! removes `G(θ)` from the model for every `θ ∈ [−θ_offset, θ_max]`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{cis, identity, kron, CMatrix, CVector, C64};
use crate::rng::{complex_gaussian, seeded};
use crate::{Error, Result};

/// Dimensions of the link and of the training block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Subcarriers per antenna, `N`.
    pub n_subcarriers: usize,
    /// Transmit antennas, `N_T`.
    pub n_tx: usize,
    /// Receive antennas, `N_R`.
    pub n_rx: usize,
    /// Maximum channel length in samples, `L_m`.
    pub max_taps: usize,
    /// Maximum magnitude of the timing error, `θ_max`.
    pub theta_max: usize,
    /// Shift of the padded delay window towards negative timing errors.
    /// Zero covers `θ ∈ [0, θ_max]`; `θ_max` covers the full symmetric range.
    #[serde(default)]
    pub theta_offset: usize,
    /// Cyclic prefix length in samples.
    pub cp_len: usize,
    /// Complex noise variance `σ_w²` (linear).
    #[serde(default)]
    pub noise_var: f64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_subcarriers == 0 || self.n_tx == 0 || self.n_rx == 0 || self.max_taps == 0 {
            return bad("subcarrier, antenna and tap counts must be positive".into());
        }
        if self.cp_len <= self.max_taps + self.theta_max {
            return bad(format!(
                "cyclic prefix ({}) must exceed L_m + θ_max = {}",
                self.cp_len,
                self.max_taps + self.theta_max
            ));
        }
        if self.theta_offset > self.theta_max {
            return bad(format!(
                "theta_offset ({}) cannot exceed theta_max ({})",
                self.theta_offset, self.theta_max
            ));
        }
        let cols = self.n_tx * self.padded_taps();
        if self.n_subcarriers < cols {
            return bad(format!(
                "N = {} is smaller than N_T·(L_m + θ_max + θ_offset) = {cols}; the padded model loses column rank",
                self.n_subcarriers
            ));
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return bad(format!("noise variance {} must be finite and nonnegative", self.noise_var));
        }
        Ok(())
    }

    /// Width of the zero-padded delay window, `L_m + θ_max + θ_offset`.
    pub fn padded_taps(&self) -> usize {
        self.max_taps + self.theta_max + self.theta_offset
    }

    /// Timing errors for which the padded model is exact.
    pub fn padded_theta_range(&self) -> (i64, i64) {
        (-(self.theta_offset as i64), self.theta_max as i64)
    }

    /// `N_R·N_T·L_m`.
    pub fn channel_len(&self) -> usize {
        self.n_rx * self.n_tx * self.max_taps
    }

    pub fn signal_len(&self) -> usize {
        self.n_rx * self.n_subcarriers
    }

    pub fn check_theta(&self, theta: i64) -> Result<()> {
        let m = self.theta_max as i64;
        if theta.abs() > m {
            return Err(Error::ThetaOutOfRange { theta, min: -m, max: m });
        }
        Ok(())
    }
}

/// Normalized synchronization impairments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Impairments {
    /// CFO normalized to the subcarrier spacing, `Δf_c·N·T`.
    pub eps: f64,
    /// SFO, `ΔT/T`.
    pub eta: f64,
    /// Integer timing error in samples.
    pub theta: i64,
}

impl Impairments {
    pub fn new(eps: f64, eta: f64, theta: i64) -> Self {
        Self { eps, eta, theta }
    }

    pub fn none() -> Self {
        Self::new(0.0, 0.0, 0)
    }
}

/// Channel impulse responses of all links, stored in the stacked order
/// `h = [h_1ᵀ … h_{N_R}ᵀ]ᵀ`, `h_v = [h_{1,v}ᵀ … h_{N_T,v}ᵀ]ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    n_rx: usize,
    n_tx: usize,
    taps_per_link: usize,
    stacked: CVector,
}

impl ChannelState {
    pub fn zeros(n_rx: usize, n_tx: usize, taps_per_link: usize) -> Self {
        Self { n_rx, n_tx, taps_per_link, stacked: CVector::zeros(n_rx * n_tx * taps_per_link) }
    }

    pub fn from_stacked(n_rx: usize, n_tx: usize, taps_per_link: usize, h: CVector) -> Result<Self> {
        if h.len() != n_rx * n_tx * taps_per_link {
            return Err(Error::DimensionMismatch(format!(
                "stacked channel has {} entries, expected {}·{}·{}",
                h.len(),
                n_rx,
                n_tx,
                taps_per_link
            )));
        }
        Ok(Self { n_rx, n_tx, taps_per_link, stacked: h })
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn taps_per_link(&self) -> usize {
        self.taps_per_link
    }

    fn index(&self, rx: usize, tx: usize, tap: usize) -> usize {
        (rx * self.n_tx + tx) * self.taps_per_link + tap
    }

    /// Tap `l` of the link from transmit antenna `tx` to receive antenna `rx`.
    pub fn tap(&self, rx: usize, tx: usize, tap: usize) -> C64 {
        self.stacked[self.index(rx, tx, tap)]
    }

    pub fn set_tap(&mut self, rx: usize, tx: usize, tap: usize, value: C64) {
        let i = self.index(rx, tx, tap);
        self.stacked[i] = value;
    }

    pub fn stacked(&self) -> &CVector {
        &self.stacked
    }

    pub fn into_stacked(self) -> CVector {
        self.stacked
    }

    /// `h_v`, the `N_T·L_m` taps seen by receive antenna `rx`.
    pub fn receive_block(&self, rx: usize) -> &[C64] {
        let w = self.n_tx * self.taps_per_link;
        &self.stacked.as_slice()[rx * w..(rx + 1) * w]
    }

    pub fn link(&self, rx: usize, tx: usize) -> &[C64] {
        let s = self.index(rx, tx, 0);
        &self.stacked.as_slice()[s..s + self.taps_per_link]
    }
}

/// Average power of each channel tap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub powers: Vec<f64>,
}

impl ChannelProfile {
    /// Exponentially decaying power-delay profile `p_l ∝ exp(−l/decay)`,
    /// normalized to unit total power. A non-positive decay gives a flat
    /// profile.
    pub fn exponential(taps: usize, decay_taps: f64) -> Self {
        let raw: Vec<f64> = (0..taps)
            .map(|l| if decay_taps > 0.0 { (-(l as f64) / decay_taps).exp() } else { 1.0 })
            .collect();
        let total: f64 = raw.iter().sum();
        Self { powers: raw.into_iter().map(|p| p / total).collect() }
    }

    pub fn flat_fading() -> Self {
        Self { powers: vec![1.0] }
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    pub fn validate(&self, max_taps: usize) -> Result<()> {
        if self.powers.is_empty() {
            return Err(Error::EmptyProfile);
        }
        if self.powers.len() > max_taps {
            return Err(Error::InvalidConfig(format!(
                "channel profile has {} taps but L_m is {max_taps}",
                self.powers.len()
            )));
        }
        if self.powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidConfig("tap powers must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Frequency-domain training symbols `x̃_u(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMatrix {
    n_tx: usize,
    n_subcarriers: usize,
    /// `symbols[u·N + k]`
    symbols: Vec<C64>,
}

impl TrainingMatrix {
    pub fn new(n_tx: usize, n_subcarriers: usize, symbols: Vec<C64>) -> Result<Self> {
        if symbols.len() != n_tx * n_subcarriers {
            return Err(Error::DimensionMismatch(format!(
                "{} training symbols for {n_tx} antennas × {n_subcarriers} subcarriers",
                symbols.len()
            )));
        }
        Ok(Self { n_tx, n_subcarriers, symbols })
    }

    pub fn n_tx(&self) -> usize {
        self.n_tx
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn symbol(&self, tx: usize, k: usize) -> C64 {
        self.symbols[tx * self.n_subcarriers + k]
    }

    pub fn antenna(&self, tx: usize) -> &[C64] {
        &self.symbols[tx * self.n_subcarriers..(tx + 1) * self.n_subcarriers]
    }

    /// `X = [X_1, …, X_{N_T}]` with `X_u = diag(x̃_u)`, shape `N × N·N_T`.
    pub fn as_block(&self) -> CMatrix {
        let n = self.n_subcarriers;
        let mut x = CMatrix::zeros(n, n * self.n_tx);
        for u in 0..self.n_tx {
            for k in 0..n {
                x[(k, u * n + k)] = self.symbol(u, k);
            }
        }
        x
    }

    fn check(&self, cfg: &SystemConfig) -> Result<()> {
        if self.n_tx != cfg.n_tx || self.n_subcarriers != cfg.n_subcarriers {
            return Err(Error::DimensionMismatch(format!(
                "training is {}×{}, configuration expects {}×{}",
                self.n_tx, self.n_subcarriers, cfg.n_tx, cfg.n_subcarriers
            )));
        }
        Ok(())
    }
}

/// Stacked received vector `r = [r_1ᵀ … r_{N_R}ᵀ]ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignal {
    n_subcarriers: usize,
    n_rx: usize,
    samples: CVector,
}

impl ReceivedSignal {
    pub fn new(n_subcarriers: usize, n_rx: usize, samples: CVector) -> Result<Self> {
        if samples.len() != n_subcarriers * n_rx {
            return Err(Error::DimensionMismatch(format!(
                "received vector has {} samples, expected {n_subcarriers}·{n_rx}",
                samples.len()
            )));
        }
        Ok(Self { n_subcarriers, n_rx, samples })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn samples(&self) -> &CVector {
        &self.samples
    }

    pub fn antenna(&self, rx: usize) -> &[C64] {
        let n = self.n_subcarriers;
        &self.samples.as_slice()[rx * n..(rx + 1) * n]
    }

    pub fn energy(&self) -> f64 {
        self.samples.norm_squared()
    }

    pub(crate) fn check(&self, cfg: &SystemConfig) -> Result<()> {
        if self.n_subcarriers != cfg.n_subcarriers || self.n_rx != cfg.n_rx {
            return Err(Error::DimensionMismatch(format!(
                "received vector is {}×{}, configuration expects N = {}, N_R = {}",
                self.n_subcarriers, self.n_rx, cfg.n_subcarriers, cfg.n_rx
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// structured matrices

/// `[F₁(η)]_{n,k} = exp(j2πk·n(1+η)/N) / N`.
pub fn build_f1(cfg: &SystemConfig, eta: f64) -> CMatrix {
    let n = cfg.n_subcarriers;
    let nf = n as f64;
    CMatrix::from_fn(n, n, |row, k| {
        cis(2.0 * PI * k as f64 * (row as f64 * (1.0 + eta)) / nf) / nf
    })
}

/// Truncated DFT matrix `[F₂]_{k,l} = exp(−j2πlk/N)` with `cols` columns.
pub fn build_f2(cfg: &SystemConfig, cols: usize) -> CMatrix {
    let nf = cfg.n_subcarriers as f64;
    CMatrix::from_fn(cfg.n_subcarriers, cols, |k, l| cis(-2.0 * PI * (l * k) as f64 / nf))
}

/// Padded DFT matrix covering delays `−θ_offset … L_m + θ_max − 1`.
/// With `θ_offset = 0` this is `F_{2θmax}`.
pub fn build_f2_padded(cfg: &SystemConfig) -> CMatrix {
    let nf = cfg.n_subcarriers as f64;
    let off = cfg.theta_offset as f64;
    CMatrix::from_fn(cfg.n_subcarriers, cfg.padded_taps(), |k, l| {
        cis(-2.0 * PI * k as f64 * (l as f64 - off) / nf)
    })
}

/// Diagonal of `D(ε,η)`: `exp(j2πε(1+η)n/N)`.
pub fn cfo_phasors(cfg: &SystemConfig, eps: f64, eta: f64) -> Vec<C64> {
    let nf = cfg.n_subcarriers as f64;
    let eps_eta = eps * (1.0 + eta);
    (0..cfg.n_subcarriers).map(|n| cis(2.0 * PI * eps_eta * n as f64 / nf)).collect()
}

pub fn build_d(cfg: &SystemConfig, eps: f64, eta: f64) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_vec(cfo_phasors(cfg, eps, eta)))
}

/// Diagonal of `G(θ)`: `exp(−j2πkθ/N)`.
pub fn timing_phasors(cfg: &SystemConfig, theta: i64) -> Vec<C64> {
    let nf = cfg.n_subcarriers as f64;
    (0..cfg.n_subcarriers).map(|k| cis(-2.0 * PI * (k as i64 * theta) as f64 / nf)).collect()
}

pub fn build_g(cfg: &SystemConfig, theta: i64) -> Result<CMatrix> {
    cfg.check_theta(theta)?;
    Ok(CMatrix::from_diagonal(&CVector::from_vec(timing_phasors(cfg, theta))))
}

/// `X (I_{N_T} ⊗ F)` for a DFT-like matrix `F` with `N` rows.
pub fn build_x1(cfg: &SystemConfig, training: &TrainingMatrix, f: &CMatrix) -> Result<CMatrix> {
    training.check(cfg)?;
    Ok(training.as_block() * kron(&identity(cfg.n_tx), f))
}

/// Row scaling `diag(phasors) · m`.
pub(crate) fn scale_rows(phasors: &[C64], m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for (mut row, &p) in out.row_iter_mut().zip(phasors) {
        row *= p;
    }
    out
}

/// Per-antenna model block `D(ε,η) F₁(η) G(θ) X (I ⊗ F₂)`, shape `N × N_T·L_m`.
pub fn antenna_block(
    cfg: &SystemConfig,
    training: &TrainingMatrix,
    imp: &Impairments,
) -> Result<CMatrix> {
    cfg.check_theta(imp.theta)?;
    let x1 = build_x1(cfg, training, &build_f2(cfg, cfg.max_taps))?;
    let gx1 = scale_rows(&timing_phasors(cfg, imp.theta), &x1);
    Ok(scale_rows(&cfo_phasors(cfg, imp.eps, imp.eta), &(build_f1(cfg, imp.eta) * gx1)))
}

/// `A(ε,η,θ) = I_{N_R} ⊗ (D F₁ G X (I_{N_T} ⊗ F₂))`.
pub fn build_a(cfg: &SystemConfig, training: &TrainingMatrix, imp: &Impairments) -> Result<CMatrix> {
    let block = build_d(cfg, imp.eps, imp.eta)
        * build_f1(cfg, imp.eta)
        * build_g(cfg, imp.theta)?
        * build_x1(cfg, training, &build_f2(cfg, cfg.max_taps))?;
    Ok(kron(&identity(cfg.n_rx), &block))
}

/// `A₂(η) = F₁(η) X (I_{N_T} ⊗ F_{2θmax})`, shape `N × N_T·(L_m + θ_max + θ_offset)`.
pub fn build_a2(cfg: &SystemConfig, training: &TrainingMatrix, eta: f64) -> Result<CMatrix> {
    Ok(build_f1(cfg, eta) * build_x1(cfg, training, &build_f2_padded(cfg))?)
}

/// `A₁(ε,η) = I_{N_R} ⊗ (D(ε,η) A₂(η))`; independent of `θ`.
pub fn build_a1(cfg: &SystemConfig, training: &TrainingMatrix, eps: f64, eta: f64) -> Result<CMatrix> {
    let block = build_d(cfg, eps, eta) * build_a2(cfg, training, eta)?;
    Ok(kron(&identity(cfg.n_rx), &block))
}

/// Zero-padded channel `h_θ`: every link gets `θ + θ_offset` leading zeros and
/// is extended to the padded window width.
pub fn pad_channel(cfg: &SystemConfig, ch: &ChannelState, theta: i64) -> Result<CVector> {
    let (lo, hi) = cfg.padded_theta_range();
    if theta < lo || theta > hi {
        return Err(Error::ThetaOutOfRange { theta, min: lo, max: hi });
    }
    let lead = (theta - lo) as usize;
    let width = cfg.padded_taps();
    let mut out = CVector::zeros(cfg.n_rx * cfg.n_tx * width);
    for v in 0..cfg.n_rx {
        for u in 0..cfg.n_tx {
            let base = (v * cfg.n_tx + u) * width + lead;
            for (l, &t) in ch.link(v, u).iter().enumerate() {
                out[base + l] = t;
            }
        }
    }
    Ok(out)
}

fn check_channel(cfg: &SystemConfig, ch: &ChannelState) -> Result<()> {
    if ch.n_rx != cfg.n_rx || ch.n_tx != cfg.n_tx || ch.taps_per_link != cfg.max_taps {
        return Err(Error::DimensionMismatch(format!(
            "channel is {}×{}×{}, configuration expects {}×{}×{}",
            ch.n_rx, ch.n_tx, ch.taps_per_link, cfg.n_rx, cfg.n_tx, cfg.max_taps
        )));
    }
    Ok(())
}

/// Noise-free mean `A(ε,η,θ)·h`, evaluated block by block.
pub fn model_mean(
    cfg: &SystemConfig,
    training: &TrainingMatrix,
    imp: &Impairments,
    ch: &ChannelState,
) -> Result<CVector> {
    check_channel(cfg, ch)?;
    let block = antenna_block(cfg, training, imp)?;
    let n = cfg.n_subcarriers;
    let mut mean = CVector::zeros(cfg.signal_len());
    for v in 0..cfg.n_rx {
        let hv = CVector::from_column_slice(ch.receive_block(v));
        mean.rows_mut(v * n, n).copy_from(&(&block * hv));
    }
    Ok(mean)
}

/// Impaired received training block `r = A(ε,η,θ)h + w`, with
/// `w ~ CN(0, σ_w² I)` drawn from `seed`.
pub fn synthesize(
    cfg: &SystemConfig,
    training: &TrainingMatrix,
    imp: &Impairments,
    ch: &ChannelState,
    seed: u64,
) -> Result<ReceivedSignal> {
    cfg.validate()?;
    let mut r = model_mean(cfg, training, imp, ch)?;
    if cfg.noise_var > 0.0 {
        let mut rng = seeded(seed);
        for z in r.iter_mut() {
            *z += complex_gaussian(&mut rng, cfg.noise_var);
        }
    }
    ReceivedSignal::new(cfg.n_subcarriers, cfg.n_rx, r)
}

/// Independent Rayleigh taps `h_{u,v,l} ~ CN(0, p_l)` for every link.
pub fn generate_channel(cfg: &SystemConfig, profile: &ChannelProfile, seed: u64) -> Result<ChannelState> {
    profile.validate(cfg.max_taps)?;
    let mut rng = seeded(seed);
    let mut ch = ChannelState::zeros(cfg.n_rx, cfg.n_tx, cfg.max_taps);
    for v in 0..cfg.n_rx {
        for u in 0..cfg.n_tx {
            for (l, &p) in profile.powers.iter().enumerate() {
                ch.set_tap(v, u, l, complex_gaussian(&mut rng, p));
            }
        }
    }
    Ok(ch)
}

/// Unit-modulus QPSK training symbols with phases in {π/4, 3π/4, 5π/4, 7π/4}.
pub fn generate_training(cfg: &SystemConfig, seed: u64) -> TrainingMatrix {
    let mut rng = seeded(seed);
    let symbols = (0..cfg.n_tx * cfg.n_subcarriers)
        .map(|_| {
            let q = rng.random_range(0..4u8);
            cis(PI / 4.0 + q as f64 * PI / 2.0)
        })
        .collect();
    TrainingMatrix::new(cfg.n_tx, cfg.n_subcarriers, symbols).expect("sizes agree")
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn small_cfg(n: usize, n_tx: usize, n_rx: usize, taps: usize, theta_max: usize) -> SystemConfig {
        SystemConfig {
            n_subcarriers: n,
            n_tx,
            n_rx,
            max_taps: taps,
            theta_max,
            theta_offset: 0,
            cp_len: taps + theta_max + 1,
            noise_var: 0.0,
        }
    }

    pub fn channel(cfg: &SystemConfig, seed: u64) -> ChannelState {
        generate_channel(cfg, &ChannelProfile::exponential(cfg.max_taps, 2.0), seed).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::numerics::testutil::{max_abs, random_vector, rng};
    use crate::numerics::{proj_norm_sq, LeastSquares};
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn config_invariants() {
        let cfg = small_cfg(16, 2, 2, 3, 2);
        cfg.validate().unwrap();
        let mut bad = cfg.clone();
        bad.cp_len = 5;
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let mut bad = cfg.clone();
        bad.n_subcarriers = 8;
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.noise_var = -1.0;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.theta_offset = 3;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn f1_without_sfo_is_scaled_idft() {
        let cfg = small_cfg(8, 1, 1, 1, 0);
        let f1 = build_f1(&cfg, 0.0);
        for n in 0..8 {
            for k in 0..8 {
                let e = cis(2.0 * PI * (n * k) as f64 / 8.0) / 8.0;
                assert!((f1[(n, k)] - e).norm() < 1e-15);
            }
        }
        let cfg2 = small_cfg(2, 1, 1, 1, 0);
        let f = build_f1(&cfg2, 0.0);
        let expected = [[c(0.5, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(-0.5, 0.0)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((f[(i, j)] - expected[i][j]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn f1_entry_with_sfo() {
        let cfg = small_cfg(4, 1, 1, 1, 0);
        let f1 = build_f1(&cfg, 0.01);
        let expected = cis(2.0 * PI * 2.0 * 3.03 / 4.0) / 4.0;
        assert!((f1[(3, 2)] - expected).norm() < 1e-15);
    }

    #[test]
    fn f2_columns_are_orthogonal() {
        let cfg = small_cfg(4, 1, 1, 3, 0);
        let f2 = build_f2(&cfg, 3);
        assert!(f2.column(0).iter().all(|z| (*z - c(1.0, 0.0)).norm() < 1e-15));
        assert!((f2[(1, 1)] - c(0.0, -1.0)).norm() < 1e-15);
        let cfg = small_cfg(16, 1, 1, 5, 0);
        let f2 = build_f2(&cfg, 5);
        let gram = f2.adjoint() * &f2;
        assert!(max_abs(&(gram - identity(5) * c(16.0, 0.0))) < 1e-12);
    }

    #[test]
    fn d_and_g_diagonals() {
        let cfg = small_cfg(4, 1, 1, 1, 0);
        assert!(max_abs(&(build_d(&cfg, 0.0, 0.3) - identity(4))) == 0.0);
        let d = build_d(&cfg, 0.25, 0.0);
        for n in 0..4 {
            assert!((d[(n, n)] - cis(PI * n as f64 / 8.0)).norm() < 1e-15);
        }
        let cfg8 = small_cfg(8, 1, 1, 1, 3);
        assert_eq!(build_g(&cfg8, 0).unwrap(), identity(8));
        let g = build_g(&cfg8, 2).unwrap();
        assert!((g[(3, 3)] - c(0.0, 1.0)).norm() < 1e-15);
        let prod = &g * build_g(&cfg8, -2).unwrap();
        assert!(max_abs(&(prod - identity(8))) < 1e-15);
        assert!(matches!(build_g(&cfg8, 4), Err(Error::ThetaOutOfRange { .. })));
    }

    #[test]
    fn d_is_unitary() {
        let cfg = small_cfg(32, 1, 1, 1, 0);
        let mut g = rng(3);
        for _ in 0..5 {
            let eps = g.random_range(-0.5..0.5);
            let eta = g.random_range(-1e-3..1e-3);
            let d = build_d(&cfg, eps, eta);
            assert!(max_abs(&(d.adjoint() * &d - identity(32))) < 1e-14);
            let x = random_vector(&mut g, 32);
            assert!(((&d * &x).norm() - x.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn a_without_impairments_is_dft_composition() {
        let cfg = small_cfg(8, 1, 1, 2, 1);
        let t = generate_training(&cfg, 1);
        let a = build_a(&cfg, &t, &Impairments::none()).unwrap();
        let expected = build_f1(&cfg, 0.0) * t.as_block() * build_f2(&cfg, 2);
        assert!(max_abs(&(a - expected)) < 1e-14);
    }

    #[test]
    fn a_is_block_diagonal() {
        let cfg = small_cfg(16, 2, 2, 3, 2);
        let t = generate_training(&cfg, 2);
        let a = build_a(&cfg, &t, &Impairments::new(0.1, 2e-4, 1)).unwrap();
        assert_eq!(a.shape(), (32, 12));
        assert!(a.view((0, 6), (16, 6)).iter().all(|z| z.norm() == 0.0));
        assert!(a.view((16, 0), (16, 6)).iter().all(|z| z.norm() == 0.0));
    }

    /// Scalar evaluation of the per-sample received signal:
    /// r_v(n) = e^{j2πε_η n/N}/N Σ_u Σ_k e^{j2π n_η k/N} e^{−j2πθk/N} H_{u,v}(k) x̃_u(k)
    fn scalar_received(cfg: &SystemConfig, t: &TrainingMatrix, imp: &Impairments, ch: &ChannelState) -> Vec<C64> {
        let n_sc = cfg.n_subcarriers;
        let nf = n_sc as f64;
        let mut out = vec![c(0.0, 0.0); cfg.signal_len()];
        for v in 0..cfg.n_rx {
            for n in 0..n_sc {
                let n_eta = n as f64 * (1.0 + imp.eta);
                let mut acc = c(0.0, 0.0);
                for u in 0..cfg.n_tx {
                    for k in 0..n_sc {
                        let cfr: C64 = (0..cfg.max_taps)
                            .map(|l| ch.tap(v, u, l) * cis(-2.0 * PI * (k * l) as f64 / nf))
                            .sum();
                        acc += cis(2.0 * PI * n_eta * k as f64 / nf)
                            * cis(-2.0 * PI * imp.theta as f64 * k as f64 / nf)
                            * cfr
                            * t.symbol(u, k);
                    }
                }
                let eps_eta = imp.eps * (1.0 + imp.eta);
                out[v * n_sc + n] = cis(2.0 * PI * eps_eta * n as f64 / nf) / nf * acc;
            }
        }
        out
    }

    #[test]
    fn a_matches_per_sample_evaluation() {
        let cfg = small_cfg(16, 2, 2, 3, 2);
        let mut g = rng(4);
        for trial in 0..4 {
            let t = generate_training(&cfg, 10 + trial);
            let ch = channel(&cfg, 20 + trial);
            let imp = Impairments::new(g.random_range(-0.4..0.4), g.random_range(-1e-3..1e-3), g.random_range(-2..=2));
            let a = build_a(&cfg, &t, &imp).unwrap();
            let ah = &a * ch.stacked();
            let direct = scalar_received(&cfg, &t, &imp, &ch);
            for (x, y) in ah.iter().zip(&direct) {
                assert!((x - y).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn a1_factorizes_through_a2() {
        let cfg = small_cfg(16, 2, 2, 3, 2);
        let t = generate_training(&cfg, 5);
        let a1 = build_a1(&cfg, &t, 0.13, 3e-4).unwrap();
        let da2 = build_d(&cfg, 0.13, 3e-4) * build_a2(&cfg, &t, 3e-4).unwrap();
        assert_eq!(a1.shape(), (32, 2 * 2 * 5));
        assert!(max_abs(&(a1.view((0, 0), (16, 10)) - &da2)) < 1e-14);
        assert!(max_abs(&(a1.view((16, 10), (16, 10)) - &da2)) < 1e-14);
    }

    #[test]
    fn a1_degenerates_to_a_without_padding() {
        let cfg = small_cfg(8, 1, 1, 3, 0);
        let t = generate_training(&cfg, 6);
        let a1 = build_a1(&cfg, &t, 0.0, 0.0).unwrap();
        let a = build_a(&cfg, &t, &Impairments::none()).unwrap();
        assert!(max_abs(&(a1 - a)) < 1e-14);
    }

    #[test]
    fn a1_span_contains_every_admissible_timing() {
        let mut cfg = small_cfg(32, 2, 2, 3, 4);
        cfg.theta_offset = 2;
        let t = generate_training(&cfg, 7);
        let (eps, eta) = (-0.07, 4e-4);
        let a1 = build_a1(&cfg, &t, eps, eta).unwrap();
        let mut g = rng(8);
        for theta in -2..=4 {
            let a = build_a(&cfg, &t, &Impairments::new(eps, eta, theta)).unwrap();
            let ah = a * random_vector(&mut g, cfg.channel_len());
            let e = proj_norm_sq(&a1, &ah).unwrap();
            assert!((e - ah.norm_squared()).abs() < 1e-9 * ah.norm_squared(), "θ = {theta}");
        }
    }

    #[test]
    fn a2_without_impairments_is_selector() {
        let mut cfg = small_cfg(8, 1, 1, 2, 1);
        cfg.cp_len = 4;
        let ones = TrainingMatrix::new(1, 8, vec![c(1.0, 0.0); 8]).unwrap();
        let a2 = build_a2(&cfg, &ones, 0.0).unwrap();
        assert_eq!(a2.shape(), (8, 3));
        for n in 0..8 {
            for l in 0..3 {
                let e = if n == l { 1.0 } else { 0.0 };
                assert!((a2[(n, l)] - c(e, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn a2_has_full_column_rank_for_random_training() {
        let cfg = small_cfg(32, 2, 1, 4, 4);
        for seed in 0..100 {
            let t = generate_training(&cfg, seed);
            let a2 = build_a2(&cfg, &t, 2e-4).unwrap();
            let ls = LeastSquares::new(&a2).unwrap();
            assert_eq!(ls.rank(), 16);
        }
    }

    #[test]
    fn synthesize_noiseless_equals_model() {
        let cfg = small_cfg(16, 2, 2, 3, 2);
        let t = generate_training(&cfg, 9);
        let ch = channel(&cfg, 10);
        let imp = Impairments::new(0.2, -3e-4, -1);
        let r = synthesize(&cfg, &t, &imp, &ch, 1).unwrap();
        let ah = build_a(&cfg, &t, &imp).unwrap() * ch.stacked();
        for (x, y) in r.samples().iter().zip(ah.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn synthesize_noise_statistics_and_determinism() {
        let mut cfg = small_cfg(16, 1, 1, 2, 1);
        cfg.noise_var = 0.25;
        let t = generate_training(&cfg, 1);
        let ch = channel(&cfg, 2);
        let imp = Impairments::new(0.05, 1e-4, 1);
        let mean = model_mean(&cfg, &t, &imp, &ch).unwrap();
        let draws = 10_000 / 16 + 1;
        let mut acc = 0.0;
        let mut count = 0usize;
        for s in 0..draws as u64 {
            let r = synthesize(&cfg, &t, &imp, &ch, s).unwrap();
            acc += (r.samples() - &mean).norm_squared();
            count += 16;
        }
        let var = acc / count as f64;
        assert!((var / 0.25 - 1.0).abs() < 0.05, "empirical variance {var}");
        let a = synthesize(&cfg, &t, &imp, &ch, 77).unwrap();
        let b = synthesize(&cfg, &t, &imp, &ch, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn channel_generation() {
        let cfg = small_cfg(8, 1, 1, 1, 0);
        let ch = generate_channel(&cfg, &ChannelProfile::flat_fading(), 3).unwrap();
        assert_eq!(ch.stacked().len(), 1);
        assert!(matches!(
            generate_channel(&cfg, &ChannelProfile { powers: vec![] }, 3),
            Err(Error::EmptyProfile)
        ));

        let cfg = small_cfg(16, 2, 2, 4, 0);
        let profile = ChannelProfile::exponential(4, 1.5);
        assert!((profile.total_power() - 1.0).abs() < 1e-15);
        let draws = 10_000 / 4;
        let mut acc = 0.0;
        for s in 0..draws {
            let ch = generate_channel(&cfg, &profile, s).unwrap();
            for v in 0..2 {
                for u in 0..2 {
                    acc += crate::numerics::norm_sq(ch.link(v, u));
                }
            }
        }
        let mean = acc / (draws as f64 * 4.0);
        assert!((mean - 1.0).abs() < 0.03, "mean link energy {mean}");
        assert_eq!(generate_channel(&cfg, &profile, 5).unwrap(), generate_channel(&cfg, &profile, 5).unwrap());
    }

    #[test]
    fn training_is_uniform_qpsk() {
        let cfg = small_cfg(2500, 4, 1, 1, 0);
        let t = generate_training(&cfg, 12);
        let mut counts = [0usize; 4];
        for u in 0..4 {
            for &x in t.antenna(u) {
                assert!((x.norm() - 1.0).abs() < 1e-15);
                let q = ((x.arg() - PI / 4.0).rem_euclid(2.0 * PI) / (PI / 2.0)).round() as usize % 4;
                assert!((x.arg().rem_euclid(2.0 * PI) - (PI / 4.0 + q as f64 * PI / 2.0)).abs() < 1e-12);
                counts[q] += 1;
            }
        }
        let expected = 10_000.0 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // χ²(3) 1% critical value
        assert!(chi2 < 11.345, "χ² = {chi2}, counts {counts:?}");
        assert_eq!(t, generate_training(&cfg, 12));
    }

    #[test]
    fn pad_channel_rejects_uncovered_timing() {
        let cfg = small_cfg(16, 1, 1, 2, 3);
        let ch = channel(&cfg, 1);
        assert!(pad_channel(&cfg, &ch, -1).is_err());
        let h = pad_channel(&cfg, &ch, 3).unwrap();
        assert_eq!(h.len(), 5);
        assert_eq!(h[3], ch.tap(0, 0, 0));
        assert_eq!(h[4], ch.tap(0, 0, 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn stacking_round_trips(seed in any::<u64>(), n_rx in 1usize..3, n_tx in 1usize..3, taps in 1usize..4) {
            let mut g = rng(seed);
            let h = random_vector(&mut g, n_rx * n_tx * taps);
            let ch = ChannelState::from_stacked(n_rx, n_tx, taps, h.clone()).unwrap();
            for v in 0..n_rx {
                for u in 0..n_tx {
                    for l in 0..taps {
                        prop_assert_eq!(ch.tap(v, u, l), h[(v * n_tx + u) * taps + l]);
                    }
                }
            }
            prop_assert_eq!(ch.into_stacked(), h);
        }

        #[test]
        fn padding_equivalence(seed in any::<u64>(), theta in -3i64..=3) {
            let mut cfg = small_cfg(32, 2, 2, 3, 3);
            cfg.theta_offset = 3;
            let t = generate_training(&cfg, seed);
            let ch = channel(&cfg, seed ^ 1);
            let mut g = rng(seed);
            let eps = g.random_range(-0.4..0.4);
            let eta = g.random_range(-2e-3..2e-3);
            let ah = build_a(&cfg, &t, &Impairments::new(eps, eta, theta)).unwrap() * ch.stacked();
            let a1h = build_a1(&cfg, &t, eps, eta).unwrap() * pad_channel(&cfg, &ch, theta).unwrap();
            for (x, y) in ah.iter().zip(a1h.iter()) {
                prop_assert!((x - y).norm() < 1e-10);
            }
        }

        #[test]
        fn synthesize_round_trip(seed in any::<u64>()) {
            let cfg = small_cfg(16, 2, 1, 2, 2);
            let t = generate_training(&cfg, seed);
            let ch = channel(&cfg, seed.wrapping_add(1));
            let mut g = rng(seed);
            let imp = Impairments::new(g.random_range(-0.4..0.4), g.random_range(-2e-3..2e-3), g.random_range(-2..=2));
            let r = synthesize(&cfg, &t, &imp, &ch, seed).unwrap();
            let ah = build_a(&cfg, &t, &imp).unwrap() * ch.stacked();
            for (x, y) in r.samples().iter().zip(ah.iter()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }
    }
}
