use super::{Algorithm, EstimationResult, Estimator, SearchContext};
use crate::model::ReceivedSignal;
use crate::{Error, Result};

/// `(ε, θ)` search with the SFO ignored, then an `η` search at the stage-one
/// estimates, then `ĥ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sml;

impl Estimator for Sml {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Sml
    }

    fn estimate(&self, ctx: &SearchContext, r: &ReceivedSignal) -> Result<EstimationResult> {
        ctx.check_signal(r)?;
        let (ge, gt, gn) = (ctx.eps_values().len(), ctx.theta_values().len(), ctx.eta_values().len());
        let mut skipped = 0;
        let mut surface = Vec::new();

        // stage one: J₄(ε, θ) at η = 0
        let phases = ctx.phases_no_sfo();
        let costs: Vec<Option<Vec<f64>>> = (0..gt)
            .map(|t| ctx.timing_factor_no_sfo(t).map(|f| ctx.eps_sweep(&f, phases, r)))
            .collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..ge {
            for (t, row) in costs.iter().enumerate() {
                let c = match row {
                    Some(row) => row[i],
                    None => {
                        skipped += 1;
                        f64::NAN
                    }
                };
                if ctx.record_surface() {
                    surface.push(c);
                }
                if !c.is_nan() && best.is_none_or(|(_, _, b)| c > b) {
                    best = Some((i, t, c));
                }
            }
        }
        let (i, t, stage_cost) = best.ok_or_else(|| Error::EmptyGrid("every (ε, θ) hypothesis was rank-deficient".into()))?;
        let eps = ctx.eps_values()[i];

        // stage two: J₅(η) at (ε̂, θ̂)
        let mut best: Option<(usize, f64)> = None;
        for j in 0..gn {
            let c = match ctx.timing_factor(j, t) {
                Some(f) => f.energy(&ctx.derotate(r, eps, ctx.eta_values()[j])),
                None => {
                    skipped += 1;
                    f64::NAN
                }
            };
            if ctx.record_surface() {
                surface.push(c);
            }
            if !c.is_nan() && best.is_none_or(|(_, b)| c > b) {
                best = Some((j, c));
            }
        }
        let (j, cost) = best.ok_or_else(|| Error::EmptyGrid("every η hypothesis was rank-deficient".into()))?;
        let channel = ctx.channel_estimate(r, eps, j, t)?;
        Ok(EstimationResult {
            algorithm: Algorithm::Sml,
            eps,
            eta: ctx.eta_values()[j],
            theta: ctx.theta_values()[t],
            channel,
            cost,
            stage_cost,
            search_points: ge * gt + gn,
            skipped_points: skipped,
            outside_validity: false,
            cost_surface: ctx.record_surface().then_some(surface),
        })
    }
}
