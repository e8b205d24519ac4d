//! Fisher information and Cramér-Rao bounds for the CFO/SFO pair.
//!
//! The parameter vector is `α = [ε, η, h_Rᵀ, h_Iᵀ]ᵀ` and the noise-free mean is
//! `μ = (I_{N_R} ⊗ D F₁ G X₁) h` with `X₁ = X (I_{N_T} ⊗ F₂)`. The timing error
//! is discrete and only enters through `G(θ)` at its true value.
//!
//! "woc" bounds treat the channel as known, "wc" bounds include it as a
//! nuisance parameter.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    build_f1, build_f2, build_x1, cfo_phasors, generate_channel, model_mean, scale_rows,
    timing_phasors, ChannelProfile, ChannelState, Impairments, SystemConfig, TrainingMatrix,
};
use crate::numerics::{hadamard, kron, CMatrix, CVector, C64, J};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// `C₁ = diag(0, 1, …, N−1)`.
pub fn build_c1(cfg: &SystemConfig) -> CMatrix {
    let d: Vec<C64> = (0..cfg.n_subcarriers).map(|n| C64::new(n as f64, 0.0)).collect();
    CMatrix::from_diagonal(&CVector::from_vec(d))
}

/// `C₂ = (diag(I_N) ⊗ [diag(C₁)]ᵀ) ∘ ([diag(I_N)]ᵀ ⊗ diag(C₁))`, evaluated as
/// written. Both Kronecker factors are outer products of a ones vector with
/// the index vector, so `[C₂]_{n,k} = n·k`.
pub fn build_c2(cfg: &SystemConfig) -> CMatrix {
    let n = cfg.n_subcarriers;
    let ones = CMatrix::from_element(n, 1, C64::new(1.0, 0.0));
    let c1_diag = CMatrix::from_column_slice(n, 1, build_c1(cfg).diagonal().as_slice());
    let left = kron(&ones, &c1_diag.transpose());
    let right = kron(&ones.transpose(), &c1_diag);
    hadamard(&left, &right).expect("both factors are N×N")
}

/// `μ = A(ε,η,θ) h`.
pub fn mean_signal(
    cfg: &SystemConfig,
    training: &TrainingMatrix,
    imp: &Impairments,
    ch: &ChannelState,
) -> Result<CVector> {
    model_mean(cfg, training, imp, ch)
}

fn per_antenna(cfg: &SystemConfig, ch: &ChannelState, block: &CMatrix) -> CVector {
    let n = cfg.n_subcarriers;
    let mut out = CVector::zeros(cfg.signal_len());
    for v in 0..cfg.n_rx {
        let hv = CVector::from_column_slice(ch.receive_block(v));
        out.rows_mut(v * n, n).copy_from(&(block * hv));
    }
    out
}

fn check_channel(cfg: &SystemConfig, ch: &ChannelState) -> Result<()> {
    if ch.n_rx() != cfg.n_rx || ch.n_tx() != cfg.n_tx || ch.taps_per_link() != cfg.max_taps {
        return Err(Error::DimensionMismatch(format!(
            "channel is {}×{}×{}, configuration expects {}×{}×{}",
            ch.n_rx(),
            ch.n_tx(),
            ch.taps_per_link(),
            cfg.n_rx,
            cfg.n_tx,
            cfg.max_taps
        )));
    }
    Ok(())
}

/// `∂μ/∂ε = (I ⊗ (j2π(1+η)/N) D C₁ F₁ G X₁) h`.
pub fn d_mu_d_eps(
    cfg: &SystemConfig,
    training: &TrainingMatrix,
    imp: &Impairments,
    ch: &ChannelState,
) -> Result<CVector> {
    check_channel(cfg, ch)?;
    let k = Kernel::new(cfg, training, imp)?;
    let scale = J * (2.0 * PI * (1.0 + imp.eta) / cfg.n_subcarriers as f64);
    let block = build_d_mat(cfg, imp) * build_c1(cfg) * &k.m * scale;
    Ok(per_antenna(cfg, ch, &block))
}

/// `∂μ/∂η = (I ⊗ (∂D/∂η F₁ G X₁ + D ∂F₁/∂η G X₁)) h`
/// with `∂D/∂η = (j2πε/N) D C₁` and `∂F₁/∂η = (j2π/N)(C₂ ∘ F₁)`.
pub fn d_mu_d_eta(
    cfg: &SystemConfig,
    training: &TrainingMatrix,
    imp: &Impairments,
    ch: &ChannelState,
) -> Result<CVector> {
    check_channel(cfg, ch)?;
    let nf = cfg.n_subcarriers as f64;
    let d = build_d_mat(cfg, imp);
    let gx1 = gx1(cfg, training, imp)?;
    let f1 = build_f1(cfg, imp.eta);
    let dd = &d * build_c1(cfg) * (J * (2.0 * PI * imp.eps / nf));
    let df1 = hadamard(&build_c2(cfg), &f1)? * (J * (2.0 * PI / nf));
    let block = (dd * &f1 + &d * df1) * gx1;
    Ok(per_antenna(cfg, ch, &block))
}

fn build_d_mat(cfg: &SystemConfig, imp: &Impairments) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_vec(cfo_phasors(cfg, imp.eps, imp.eta)))
}

fn gx1(cfg: &SystemConfig, training: &TrainingMatrix, imp: &Impairments) -> Result<CMatrix> {
    cfg.check_theta(imp.theta)?;
    let x1 = build_x1(cfg, training, &build_f2(cfg, cfg.max_taps))?;
    Ok(scale_rows(&timing_phasors(cfg, imp.theta), &x1))
}

/// Channel-independent `K×K` Gram matrices (`K = N_T·L_m`) from which every
/// FIM entry follows as a quadratic or bilinear form in `h_v`.
#[derive(Debug, Clone)]
pub struct Kernel {
    alpha: f64,
    beta: f64,
    /// `M = F₁ G X₁`
    m: CMatrix,
    /// `X₁ᴴGᴴF₁ᴴF₁GX₁`
    gram: CMatrix,
    /// `X₁ᴴGᴴF₁ᴴC₁²F₁GX₁`
    ee: CMatrix,
    /// `X₁ᴴGᴴF₁ᴴC₁(εC₁F₁ + C₂∘F₁)GX₁`
    en: CMatrix,
    /// `X₁ᴴGᴴ(εC₁F₁ + C₂∘F₁)ᴴ(εC₁F₁ + C₂∘F₁)GX₁`
    nn: CMatrix,
    /// `X₁ᴴGᴴF₁ᴴC₁F₁GX₁`
    eh: CMatrix,
    /// `X₁ᴴGᴴF₁ᴴ(εC₁F₁ + C₂∘F₁)GX₁`
    hn: CMatrix,
}

impl Kernel {
    pub fn new(cfg: &SystemConfig, training: &TrainingMatrix, imp: &Impairments) -> Result<Self> {
        let nf = cfg.n_subcarriers as f64;
        let f1 = build_f1(cfg, imp.eta);
        let c1 = build_c1(cfg);
        let gx1 = gx1(cfg, training, imp)?;
        let m = &f1 * &gx1;
        let c1m = &c1 * &m;
        let q = (&c1 * &f1 * C64::new(imp.eps, 0.0) + hadamard(&build_c2(cfg), &f1)?) * &gx1;
        let mh = m.adjoint();
        Ok(Self {
            alpha: 2.0 * PI * (1.0 + imp.eta) / nf,
            beta: 2.0 * PI / nf,
            gram: &mh * &m,
            ee: c1m.adjoint() * &c1m,
            en: c1m.adjoint() * &q,
            nn: q.adjoint() * &q,
            eh: &mh * &c1m,
            hn: &mh * &q,
            m,
        })
    }

    fn quad(a: &CMatrix, ch: &ChannelState) -> C64 {
        (0..ch.n_rx())
            .map(|v| {
                let h = CVector::from_column_slice(ch.receive_block(v));
                h.dotc(&(a * &h))
            })
            .sum()
    }

    fn gammas(&self, ch: &ChannelState) -> [C64; 4] {
        let ee = Self::quad(&self.ee, ch) * self.alpha * self.alpha;
        let en = Self::quad(&self.en, ch) * self.alpha * self.beta;
        let nn = Self::quad(&self.nn, ch) * self.beta * self.beta;
        [ee, en, en.conj(), nn]
    }

    /// FIM restricted to `(ε, η)`.
    pub fn woc(&self, ch: &ChannelState, noise_var: f64) -> Result<FisherBlocks> {
        if !(noise_var > 0.0) {
            return Err(Error::ZeroNoise);
        }
        let [ee, en, ne, nn] = self.gammas(ch);
        Ok(FisherBlocks {
            noise_var,
            gamma_ee: ee,
            gamma_en: en,
            gamma_ne: ne,
            gamma_nn: nn,
            channel: None,
        })
    }

    /// Full FIM over `[ε, η, h_R, h_I]`.
    pub fn wc(&self, ch: &ChannelState, noise_var: f64) -> Result<FisherBlocks> {
        let mut blocks = self.woc(ch, noise_var)?;
        let k = self.gram.nrows();
        let n_rx = ch.n_rx();
        let mut eps_hr = CVector::zeros(n_rx * k);
        let mut hr_eta = CVector::zeros(n_rx * k);
        for v in 0..n_rx {
            let h = CVector::from_column_slice(ch.receive_block(v));
            // Γ_{ε,h_R} = −j·α·h_vᴴ(X₁ᴴGᴴF₁ᴴC₁F₁GX₁), a row block
            let row = (self.eh.transpose() * h.conjugate()) * (-J * self.alpha);
            eps_hr.rows_mut(v * k, k).copy_from(&row);
            // Γ_{h_R,η} = j·β·(X₁ᴴGᴴF₁ᴴ(εC₁F₁ + C₂∘F₁)GX₁) h_v
            let col = (&self.hn * &h) * (J * self.beta);
            hr_eta.rows_mut(v * k, k).copy_from(&col);
        }
        blocks.channel = Some(ChannelBlocks { n_rx, gram: self.gram.clone(), eps_hr, hr_eta });
        Ok(blocks)
    }

    pub fn report(&self, ch: &ChannelState, noise_var: f64) -> Result<CrlbReport> {
        crlb_report(&self.wc(ch, noise_var)?)
    }
}

/// Channel blocks of the FIM before the `2/σ_w² Re[·]` step.
#[derive(Debug, Clone)]
pub struct ChannelBlocks {
    n_rx: usize,
    /// Per-antenna block of `Γ_{h_R,h_R} = I_{N_R} ⊗ X₁ᴴGᴴF₁ᴴF₁GX₁`.
    pub gram: CMatrix,
    /// Entries of the row `Γ_{ε,h_R}`.
    pub eps_hr: CVector,
    /// Entries of the column `Γ_{h_R,η}`.
    pub hr_eta: CVector,
}

impl ChannelBlocks {
    pub fn len(&self) -> usize {
        self.n_rx * self.gram.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Γ_{h_R,h_R}` over all antennas.
    pub fn hr_hr(&self) -> CMatrix {
        kron(&crate::numerics::identity(self.n_rx), &self.gram)
    }

    pub fn eps_hi(&self) -> CVector {
        &self.eps_hr * J
    }

    pub fn eta_hr(&self) -> CVector {
        self.hr_eta.conjugate()
    }

    pub fn eta_hi(&self) -> CVector {
        self.eta_hr() * J
    }
}

/// Complex FIM blocks together with the noise variance they are scaled by.
#[derive(Debug, Clone)]
pub struct FisherBlocks {
    pub noise_var: f64,
    pub gamma_ee: C64,
    pub gamma_en: C64,
    pub gamma_ne: C64,
    pub gamma_nn: C64,
    pub channel: Option<ChannelBlocks>,
}

impl FisherBlocks {
    fn scale(&self) -> f64 {
        2.0 / self.noise_var
    }

    /// `Γ_woc = (2/σ_w²) Re[[γ_εε, γ_εη], [γ_ηε, γ_ηη]]`.
    pub fn woc_matrix(&self) -> Matrix2<f64> {
        let s = self.scale();
        Matrix2::new(
            s * self.gamma_ee.re,
            s * self.gamma_en.re,
            s * self.gamma_ne.re,
            s * self.gamma_nn.re,
        )
    }

    /// Real `(2 + 2L′)` square `Γ_wc`, or `None` for a woc-only result.
    pub fn wc_matrix(&self) -> Option<DMatrix<f64>> {
        let ch = self.channel.as_ref()?;
        let l = ch.len();
        let mut g = CMatrix::zeros(2 + 2 * l, 2 + 2 * l);
        g[(0, 0)] = self.gamma_ee;
        g[(0, 1)] = self.gamma_en;
        g[(1, 0)] = self.gamma_ne;
        g[(1, 1)] = self.gamma_nn;

        let eps_hr = &ch.eps_hr;
        let eps_hi = ch.eps_hi();
        let eta_hr = ch.eta_hr();
        let eta_hi = ch.eta_hi();
        let hr_eps = eps_hr.conjugate();
        let hi_eps = &hr_eps * -J;
        let hi_eta = &ch.hr_eta * -J;
        for i in 0..l {
            g[(0, 2 + i)] = eps_hr[i];
            g[(0, 2 + l + i)] = eps_hi[i];
            g[(1, 2 + i)] = eta_hr[i];
            g[(1, 2 + l + i)] = eta_hi[i];
            g[(2 + i, 0)] = hr_eps[i];
            g[(2 + l + i, 0)] = hi_eps[i];
            g[(2 + i, 1)] = ch.hr_eta[i];
            g[(2 + l + i, 1)] = hi_eta[i];
        }
        let hh = ch.hr_hr();
        g.view_mut((2, 2), (l, l)).copy_from(&hh);
        g.view_mut((2, 2 + l), (l, l)).copy_from(&(&hh * J));
        g.view_mut((2 + l, 2), (l, l)).copy_from(&(&hh * -J));
        g.view_mut((2 + l, 2 + l), (l, l)).copy_from(&hh);
        let s = self.scale();
        Some(g.map(|z| s * z.re))
    }
}

pub fn fim_woc(
    cfg: &SystemConfig,
    training: &TrainingMatrix,
    imp: &Impairments,
    ch: &ChannelState,
    noise_var: f64,
) -> Result<FisherBlocks> {
    check_channel(cfg, ch)?;
    Kernel::new(cfg, training, imp)?.woc(ch, noise_var)
}

pub fn fim_wc(
    cfg: &SystemConfig,
    training: &TrainingMatrix,
    imp: &Impairments,
    ch: &ChannelState,
    noise_var: f64,
) -> Result<FisherBlocks> {
    check_channel(cfg, ch)?;
    Kernel::new(cfg, training, imp)?.wc(ch, noise_var)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CrlbReport {
    pub eps_woc: f64,
    pub eta_woc: f64,
    pub eps_wc: f64,
    pub eta_wc: f64,
    /// Trace of the channel block of `Γ_wc⁻¹`.
    pub h_trace: f64,
}

impl CrlbReport {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            eps_woc: self.eps_woc * factor,
            eta_woc: self.eta_woc * factor,
            eps_wc: self.eps_wc * factor,
            eta_wc: self.eta_wc * factor,
            h_trace: self.h_trace * factor,
        }
    }

    fn add(&mut self, o: &CrlbReport) {
        self.eps_woc += o.eps_woc;
        self.eta_woc += o.eta_woc;
        self.eps_wc += o.eps_wc;
        self.eta_wc += o.eta_wc;
        self.h_trace += o.h_trace;
    }

    /// Field-wise arithmetic mean.
    pub fn mean(reports: &[CrlbReport]) -> Result<CrlbReport> {
        if reports.is_empty() {
            return Err(Error::EmptyInput("CRLB reports"));
        }
        let mut acc = CrlbReport::default();
        for r in reports {
            acc.add(r);
        }
        Ok(acc.scaled(1.0 / reports.len() as f64))
    }
}

/// Inverse of a symmetric positive-definite matrix via a Jacobi-scaled
/// Cholesky factorization.
fn spd_inverse(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let d: Vec<f64> = (0..n).map(|i| g[(i, i)]).collect();
    if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::SingularFim);
    }
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| g[(i, j)] * s[i] * s[j]);
    let chol = scaled.cholesky().ok_or(Error::SingularFim)?;
    let inv = chol.inverse();
    Ok(DMatrix::from_fn(n, n, |i, j| inv[(i, j)] * s[i] * s[j]))
}

/// Bounds from a set of FIM blocks. Without channel blocks the wc fields and
/// the channel trace are reported as NaN.
pub fn crlb_report(blocks: &FisherBlocks) -> Result<CrlbReport> {
    let g = blocks.woc_matrix();
    let det = g[(0, 0)] * g[(1, 1)] - g[(1, 0)] * g[(0, 1)];
    if !(det > 0.0) {
        return Err(Error::SingularFim);
    }
    let eps_woc = g[(1, 1)] / det;
    let eta_woc = g[(0, 0)] / det;
    let (eps_wc, eta_wc, h_trace) = match blocks.wc_matrix() {
        Some(full) => {
            let inv = spd_inverse(&full)?;
            let h_trace = (2..inv.nrows()).map(|i| inv[(i, i)]).sum();
            (inv[(0, 0)], inv[(1, 1)], h_trace)
        }
        None => (f64::NAN, f64::NAN, f64::NAN),
    };
    Ok(CrlbReport { eps_woc, eta_woc, eps_wc, eta_wc, h_trace })
}

/// Per-draw bounds at unit noise variance for `n_realizations` independent
/// channels. Every bound scales linearly in `σ_w²`.
pub fn crlb_draws(
    cfg: &SystemConfig,
    training: &TrainingMatrix,
    imp: &Impairments,
    profile: &ChannelProfile,
    n_realizations: usize,
    seed: u64,
) -> Result<Vec<CrlbReport>> {
    if n_realizations == 0 {
        return Err(Error::EmptyInput("channel realizations"));
    }
    let kernel = Kernel::new(cfg, training, imp)?;
    (0..n_realizations)
        .into_par_iter()
        .map(|i| {
            let ch = generate_channel(cfg, profile, derive_seed(seed, &[stream::CRLB, i as u64]))?;
            kernel.report(&ch, 1.0)
        })
        .collect()
}

/// Bounds averaged over channel draws, one report per noise variance.
pub fn crlb_averaged(
    cfg: &SystemConfig,
    training: &TrainingMatrix,
    imp: &Impairments,
    noise_vars: &[f64],
    profile: &ChannelProfile,
    n_realizations: usize,
    seed: u64,
) -> Result<Vec<CrlbReport>> {
    if noise_vars.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::ZeroNoise);
    }
    let unit = CrlbReport::mean(&crlb_draws(cfg, training, imp, profile, n_realizations, seed)?)?;
    Ok(noise_vars.iter().map(|&s| unit.scaled(s)).collect())
}
