use super::{Algorithm, EstimationResult, Estimator, SearchContext};
use crate::model::ReceivedSignal;
use crate::{Error, Result};

/// Joint `(ε, η)` search over the padded cost, then `θ`, then `ĥ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ml;

impl Estimator for Ml {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Ml
    }

    fn estimate(&self, ctx: &SearchContext, r: &ReceivedSignal) -> Result<EstimationResult> {
        ctx.check_signal(r)?;
        let (ge, gn) = (ctx.eps_values().len(), ctx.eta_values().len());

        // costs[j][i] = J₁(ε_i, η_j)
        let mut skipped = 0;
        let costs: Vec<Option<Vec<f64>>> = (0..gn)
            .map(|j| {
                ctx.padded_factor(j).map(|f| ctx.eps_sweep(&f, ctx.phases(j), r))
            })
            .collect();

        let mut best: Option<(usize, usize, f64)> = None;
        let mut surface = Vec::new();
        for i in 0..ge {
            for (j, row) in costs.iter().enumerate() {
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
                    best = Some((i, j, c));
                }
            }
        }
        let (i, j, stage_cost) = best.ok_or_else(|| Error::EmptyGrid("every (ε, η) hypothesis was rank-deficient".into()))?;
        let eps = ctx.eps_values()[i];
        let (t, cost, skipped_t) = ctx.theta_search(r, eps, j, &mut surface)?;
        let channel = ctx.channel_estimate(r, eps, j, t)?;
        Ok(EstimationResult {
            algorithm: Algorithm::Ml,
            eps,
            eta: ctx.eta_values()[j],
            theta: ctx.theta_values()[t],
            channel,
            cost,
            stage_cost,
            search_points: ge * gn + ctx.theta_values().len(),
            skipped_points: skipped + skipped_t,
            outside_validity: false,
            cost_surface: ctx.record_surface().then_some(surface),
        })
    }
}
