use std::f64::consts::PI;

use super::{Algorithm, EstimationResult, Estimator, SearchContext};
use crate::model::ReceivedSignal;
use crate::numerics::{norm_sq, C64};
use crate::{Error, Result};

/// Largest `|ε̂|` for which the first-order phasor expansion is trusted.
pub const MML_VALIDITY: f64 = 0.10;

/// Relative floor on `c₁ᵀRe(CCᴴ)c₁` below which the closed form is undefined.
pub(crate) const DENOMINATOR_FLOOR: f64 = 1e-14;

/// `η` search of the closed-form-in-`ε` cost, then `θ` and `ĥ` as in ML.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mml;

/// Sufficient statistics of the quadratic `J(ε) = rr + ε²·bb − 2ε·Im(br)`.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic {
    /// `𝟏ᵀCCᴴ𝟏`
    pub rr: f64,
    /// `c₁ᵀRe(CCᴴ)c₁`
    pub bb: f64,
    /// `c₁ᵀIm(CCᴴ)𝟏`
    pub im_br: f64,
}

impl Quadratic {
    pub fn eps(&self) -> Result<f64> {
        if !(self.bb > DENOMINATOR_FLOOR * self.rr.max(f64::MIN_POSITIVE)) {
            return Err(Error::ZeroDenominator(self.bb));
        }
        Ok(self.im_br / self.bb)
    }

    pub fn cost(&self, eps: f64) -> f64 {
        self.rr + eps * eps * self.bb - 2.0 * eps * self.im_br
    }
}

impl Mml {
    /// `CCᴴ` forms at `η_j` without building `C`: with `a = r_v` and
    /// `b = c₁ ∘ r_v`, `bᴴP⊥a = bᴴa − (Wb)ᴴ(Wa)` for the whitened basis `W` of
    /// `A₂(η_j)`.
    pub fn quadratic(ctx: &SearchContext, r: &ReceivedSignal, j: usize) -> Option<Quadratic> {
        let factor = ctx.padded_factor(j)?;
        let cfg = ctx.cfg();
        let s = 2.0 * PI * (1.0 + ctx.eta_values()[j]) / cfg.n_subcarriers as f64;
        let mut q = Quadratic { rr: 0.0, bb: 0.0, im_br: 0.0 };
        for v in 0..cfg.n_rx {
            let a = r.antenna(v);
            let b: Vec<C64> = a.iter().enumerate().map(|(n, &x)| x * (s * n as f64)).collect();
            let wa = factor.ls.coordinates(a);
            let wb = factor.ls.coordinates(&b);
            q.rr += norm_sq(a) - wa.norm_squared();
            q.bb += norm_sq(&b) - wb.norm_squared();
            let raw: C64 = b.iter().zip(a).map(|(x, y)| x.conj() * y).sum();
            q.im_br += (raw - wb.dotc(&wa)).im;
        }
        Some(q)
    }
}

impl Estimator for Mml {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Mml
    }

    fn estimate(&self, ctx: &SearchContext, r: &ReceivedSignal) -> Result<EstimationResult> {
        ctx.check_signal(r)?;
        let gn = ctx.eta_values().len();
        let mut surface = Vec::new();
        let mut skipped = 0;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut last_err = None;
        for j in 0..gn {
            let point = match Self::quadratic(ctx, r, j) {
                Some(q) => match q.eps() {
                    Ok(e) => Some((e, q.cost(e))),
                    Err(err) => {
                        last_err = Some(err);
                        None
                    }
                },
                None => None,
            };
            let (eps, j3) = match point {
                Some(p) => p,
                None => {
                    skipped += 1;
                    if ctx.record_surface() {
                        surface.push(f64::NAN);
                    }
                    continue;
                }
            };
            if ctx.record_surface() {
                surface.push(j3);
            }
            if best.is_none_or(|(_, _, b)| j3 < b) {
                best = Some((j, eps, j3));
            }
        }
        let (j, eps, stage_cost) = match (best, last_err) {
            (Some(b), _) => b,
            (None, Some(err)) => return Err(err),
            (None, None) => return Err(Error::EmptyGrid("every η hypothesis was rank-deficient".into())),
        };
        let (t, cost, skipped_t) = ctx.theta_search(r, eps, j, &mut surface)?;
        let channel = ctx.channel_estimate(r, eps, j, t)?;
        Ok(EstimationResult {
            algorithm: Algorithm::Mml,
            eps,
            eta: ctx.eta_values()[j],
            theta: ctx.theta_values()[t],
            channel,
            cost,
            stage_cost,
            search_points: gn + ctx.theta_values().len(),
            skipped_points: skipped + skipped_t,
            outside_validity: eps.abs() > MML_VALIDITY,
            cost_surface: ctx.record_surface().then_some(surface),
        })
    }
}
