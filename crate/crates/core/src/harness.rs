//! Monte-Carlo SNR sweeps.
//!
//! For every SNR point and trial a fresh channel and noise draw are
//! synthesized, every selected estimator is run, and squared errors are
//! accumulated into MSE, timing-failure and CRLB columns. Seeds are derived
//! from `(master, snr index, trial index)` so the report does not depend on
//! the number of worker threads.

use std::io::Write;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crlb::{crlb_averaged, CrlbReport};
use crate::estimators::{Algorithm, EstimatorRegistry, GridSpec, SearchContext};
use crate::model::{
    generate_channel, generate_training, synthesize, ChannelProfile, Impairments, SystemConfig,
    TrainingMatrix,
};
use crate::numerics::CVector;
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// `σ_w² = 10^(−SNR/10)` for unit-power training and unit-energy links.
pub fn noise_var_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Channel power-delay profile as given in a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    /// Decay constant of an exponential profile in taps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_taps: Option<f64>,
    /// Explicit tap powers; overrides `decay_taps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers: Option<Vec<f64>>,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self { decay_taps: Some(3.0), powers: None }
    }
}

impl ChannelSpec {
    pub fn profile(&self, max_taps: usize) -> ChannelProfile {
        match &self.powers {
            Some(p) => ChannelProfile { powers: p.clone() },
            None => ChannelProfile::exponential(max_taps, self.decay_taps.unwrap_or(3.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrlbOptions {
    /// Channel draws averaged per bound.
    pub realizations: usize,
    /// Timing errors at which stand-alone bound tables are evaluated.
    #[serde(default)]
    pub theta_variants: Vec<i64>,
}

impl Default for CrlbOptions {
    fn default() -> Self {
        Self { realizations: 100, theta_variants: Vec::new() }
    }
}

fn default_trials() -> usize {
    100
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    pub snr_db: Vec<f64>,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Draw a new training block for every trial instead of one per plan.
    #[serde(default)]
    pub redraw_training: bool,
    pub system: SystemConfig,
    pub impairments: Impairments,
    pub grid: GridSpec,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub crlb: CrlbOptions,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.grid.validate(&self.system)?;
        self.system.check_theta(self.impairments.theta)?;
        self.profile().validate(self.system.max_taps)?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1");
        }
        if self.snr_db.is_empty() {
            return bad("snr_db must list at least one SNR point");
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("SNR points must be finite");
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm must be selected");
        }
        if self.crlb.realizations == 0 {
            return bad("crlb.realizations must be at least 1");
        }
        if !(self.impairments.eps.is_finite() && self.impairments.eta.is_finite()) {
            return bad("impairments must be finite");
        }
        for &t in &self.crlb.theta_variants {
            self.system.check_theta(t)?;
        }
        Ok(())
    }

    pub fn profile(&self) -> ChannelProfile {
        self.channel.profile(self.system.max_taps)
    }

    pub fn training(&self) -> TrainingMatrix {
        generate_training(&self.system, derive_seed(self.seed, &[stream::TRAINING]))
    }
}

/// Squared distance used by the MSE.
pub trait SquaredDistance {
    fn squared_distance(&self, other: &Self) -> f64;
}

impl SquaredDistance for f64 {
    fn squared_distance(&self, other: &Self) -> f64 {
        (self - other) * (self - other)
    }
}

impl SquaredDistance for i64 {
    fn squared_distance(&self, other: &Self) -> f64 {
        let d = (self - other) as f64;
        d * d
    }
}

impl SquaredDistance for CVector {
    fn squared_distance(&self, other: &Self) -> f64 {
        (self - other).norm_squared()
    }
}

/// `Σ ‖ρ̂_i − ρ‖² / N_trials`.
pub fn mse<T: SquaredDistance>(estimates: &[T], truth: &T) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput("estimates"));
    }
    Ok(estimates.iter().map(|e| e.squared_distance(truth)).sum::<f64>() / estimates.len() as f64)
}

/// Outcome of one estimator on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub snr_db: f64,
    pub trial: usize,
    pub algo: Algorithm,
    pub eps: Option<f64>,
    pub eta: Option<f64>,
    pub theta: Option<i64>,
    pub sq_err_h: Option<f64>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub snr_db: f64,
    pub algo: Algorithm,
    pub mse_eps: f64,
    pub mse_eta: f64,
    pub mse_theta: f64,
    pub mse_h: f64,
    pub p_tf: f64,
    pub crlb: CrlbReport,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Mean wall-clock seconds per trial; never written to CSV.
    pub seconds_per_trial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub rows: Vec<ReportRow>,
    pub trials: Vec<TrialRecord>,
}

pub const CSV_HEADER: &str = "snr_db,algo,mse_eps,mse_eta,mse_theta,mse_h,p_tf,crlb_eps_woc,crlb_eps_wc,crlb_eta_woc,crlb_eta_wc,crlb_h_trace,n_ok,n_failed";

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

impl TrialReport {
    pub fn row(&self, snr_db: f64, algo: Algorithm) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.algo == algo && r.snr_db == snr_db)
    }

    /// Rows of one algorithm in SNR order.
    pub fn curve(&self, algo: Algorithm) -> Vec<&ReportRow> {
        self.rows.iter().filter(|r| r.algo == algo).collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                sci(r.snr_db),
                r.algo,
                sci(r.mse_eps),
                sci(r.mse_eta),
                sci(r.mse_theta),
                sci(r.mse_h),
                sci(r.p_tf),
                sci(r.crlb.eps_woc),
                sci(r.crlb.eps_wc),
                sci(r.crlb.eta_woc),
                sci(r.crlb.eta_wc),
                sci(r.crlb.h_trace),
                r.n_ok,
                r.n_failed
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ASCII output")
    }

    pub fn write_json(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::Format(e.to_string()))
    }
}

struct Outcome {
    eps: f64,
    eta: f64,
    theta: i64,
    sq_err_h: f64,
}

pub fn run_experiment(plan: &ExperimentPlan) -> Result<TrialReport> {
    run_experiment_with(plan, &EstimatorRegistry::default())
}

pub fn run_experiment_with(plan: &ExperimentPlan, registry: &EstimatorRegistry) -> Result<TrialReport> {
    plan.validate()?;
    let estimators = plan
        .algorithms
        .iter()
        .map(|a| registry.get(a.tag()))
        .collect::<Result<Vec<_>>>()?;
    let profile = plan.profile();
    let training = plan.training();
    let shared = SearchContext::new(&plan.system, &training, &plan.grid)?;
    let noise_vars: Vec<f64> = plan.snr_db.iter().map(|&s| noise_var_from_snr_db(s)).collect();
    let bounds = crlb_averaged(
        &plan.system,
        &training,
        &plan.impairments,
        &noise_vars,
        &profile,
        plan.crlb.realizations,
        derive_seed(plan.seed, &[stream::CRLB]),
    )?;
    let truth = plan.impairments;

    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (si, (&snr, &noise_var)) in plan.snr_db.iter().zip(&noise_vars).enumerate() {
        let started = Instant::now();
        let per_trial: Vec<Vec<(Result<Outcome>, f64)>> = (0..plan.n_trials)
            .into_par_iter()
            .map(|k| -> Result<Vec<(Result<Outcome>, f64)>> {
                let path = [si as u64, k as u64];
                let local;
                let (training, ctx) = if plan.redraw_training {
                    let t = generate_training(&plan.system, derive_seed(plan.seed, &[stream::TRAINING, path[0], path[1]]));
                    local = SearchContext::new(&plan.system, &t, &plan.grid)?;
                    (t, &local)
                } else {
                    (training.clone(), &shared)
                };
                let ch = generate_channel(&plan.system, &profile, derive_seed(plan.seed, &[stream::CHANNEL, path[0], path[1]]))?;
                let mut cfg = plan.system.clone();
                cfg.noise_var = noise_var;
                let r = synthesize(&cfg, &training, &truth, &ch, derive_seed(plan.seed, &[stream::NOISE, path[0], path[1]]))?;
                Ok(estimators
                    .iter()
                    .map(|est| {
                        let t0 = Instant::now();
                        let out = est.estimate(ctx, &r).map(|res| Outcome {
                            eps: res.eps,
                            eta: res.eta,
                            theta: res.theta,
                            sq_err_h: res.channel.stacked().squared_distance(ch.stacked()),
                        });
                        (out, t0.elapsed().as_secs_f64())
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;

        for (ai, &algo) in plan.algorithms.iter().enumerate() {
            let (mut se, mut sn, mut st, mut sh) = (0.0, 0.0, 0.0, 0.0);
            let (mut ok, mut failed, mut fails_t, mut secs) = (0usize, 0usize, 0usize, 0.0);
            for (k, trial) in per_trial.iter().enumerate() {
                let (out, dt) = &trial[ai];
                secs += dt;
                let rec = match out {
                    Ok(o) => {
                        ok += 1;
                        se += o.eps.squared_distance(&truth.eps);
                        sn += o.eta.squared_distance(&truth.eta);
                        st += o.theta.squared_distance(&truth.theta);
                        sh += o.sq_err_h;
                        if o.theta.abs_diff(truth.theta) >= 1 {
                            fails_t += 1;
                        }
                        TrialRecord {
                            snr_db: snr,
                            trial: k,
                            algo,
                            eps: Some(o.eps),
                            eta: Some(o.eta),
                            theta: Some(o.theta),
                            sq_err_h: Some(o.sq_err_h),
                            error: None,
                            seconds: *dt,
                        }
                    }
                    Err(e) => {
                        failed += 1;
                        warn!("{algo} failed at {snr} dB, trial {k}: {e}");
                        TrialRecord {
                            snr_db: snr,
                            trial: k,
                            algo,
                            eps: None,
                            eta: None,
                            theta: None,
                            sq_err_h: None,
                            error: Some(format!("{} {e}", e.code())),
                            seconds: *dt,
                        }
                    }
                };
                records.push(rec);
            }
            let n = ok as f64;
            let avg = |s: f64| if ok > 0 { s / n } else { f64::NAN };
            rows.push(ReportRow {
                snr_db: snr,
                algo,
                mse_eps: avg(se),
                mse_eta: avg(sn),
                mse_theta: avg(st),
                mse_h: avg(sh),
                p_tf: avg(fails_t as f64),
                crlb: bounds[si],
                n_ok: ok,
                n_failed: failed,
                seconds_per_trial: secs / plan.n_trials as f64,
            });
        }
        info!("{snr} dB done in {:.1} s", started.elapsed().as_secs_f64());
    }
    Ok(TrialReport { rows, trials: records })
}

/// One row of a bound table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrlbRow {
    pub theta: i64,
    pub snr_db: f64,
    pub crlb: CrlbReport,
}

pub const CRLB_CSV_HEADER: &str = "theta,snr_db,crlb_eps_woc,crlb_eps_wc,crlb_eta_woc,crlb_eta_wc,crlb_h_trace";

pub fn write_crlb_csv(rows: &[CrlbRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{CRLB_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.theta,
            sci(r.snr_db),
            sci(r.crlb.eps_woc),
            sci(r.crlb.eps_wc),
            sci(r.crlb.eta_woc),
            sci(r.crlb.eta_wc),
            sci(r.crlb.h_trace)
        )?;
    }
    Ok(())
}

/// Bound table of a plan: every SNR point for the true timing error and for
/// each listed timing variant.
pub fn crlb_table(plan: &ExperimentPlan) -> Result<Vec<CrlbRow>> {
    plan.validate()?;
    let training = plan.training();
    let mut thetas = vec![plan.impairments.theta];
    for &t in &plan.crlb.theta_variants {
        if !thetas.contains(&t) {
            thetas.push(t);
        }
    }
    crlb_rows(&plan.system, &training, plan, &thetas)
}

fn crlb_rows(cfg: &SystemConfig, training: &TrainingMatrix, plan: &ExperimentPlan, thetas: &[i64]) -> Result<Vec<CrlbRow>> {
    let noise_vars: Vec<f64> = plan.snr_db.iter().map(|&s| noise_var_from_snr_db(s)).collect();
    let mut rows = Vec::new();
    for &theta in thetas {
        let imp = Impairments { theta, ..plan.impairments };
        let reports = crlb_averaged(
            cfg,
            training,
            &imp,
            &noise_vars,
            &plan.profile(),
            plan.crlb.realizations,
            derive_seed(plan.seed, &[stream::CRLB]),
        )?;
        rows.extend(plan.snr_db.iter().zip(reports).map(|(&snr_db, crlb)| CrlbRow { theta, snr_db, crlb }));
    }
    Ok(rows)
}

/// Horizontal SNR offsets between bound curves. Every bound is proportional
/// to `σ_w²`, so each offset is `10·log10` of a ratio of averaged bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingOffsets {
    /// `CRLB(ε_wc)` vs `CRLB(ε_woc)` at the reference timing.
    pub eps_channel_db: f64,
    /// `CRLB(η_wc)` vs `CRLB(η_woc)` at the reference timing.
    pub eta_channel_db: f64,
    /// `CRLB(ε_woc)` at the shifted timing vs the reference timing.
    pub eps_timing_db: f64,
    /// `CRLB(η_woc)` at the shifted timing vs the reference timing.
    pub eta_timing_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTable {
    pub reference_theta: i64,
    pub shifted_theta: i64,
    pub rows: Vec<CrlbRow>,
    pub offsets: CouplingOffsets,
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Bound curves at a reference and a shifted timing error, with the offsets
/// between them. Both timings use the same channel draws.
pub fn coupling_study(plan: &ExperimentPlan, reference_theta: i64, shifted_theta: i64) -> Result<CouplingTable> {
    plan.validate()?;
    plan.system.check_theta(reference_theta)?;
    plan.system.check_theta(shifted_theta)?;
    let training = plan.training();
    let rows = crlb_rows(&plan.system, &training, plan, &[reference_theta, shifted_theta])?;
    let n = plan.snr_db.len();
    let (a, b) = (&rows[0].crlb, &rows[n].crlb);
    let offsets = CouplingOffsets {
        eps_channel_db: db(a.eps_wc / a.eps_woc),
        eta_channel_db: db(a.eta_wc / a.eta_woc),
        eps_timing_db: db(b.eps_woc / a.eps_woc),
        eta_timing_db: db(b.eta_woc / a.eta_woc),
    };
    Ok(CouplingTable { reference_theta, shifted_theta, rows, offsets })
}

/// SNR-equivalent offset of `curve` relative to `reference` at `snr`: how many
/// dB to the right of `snr` the reference reaches the curve's value. Positive
/// means the curve is worse. The reference is interpolated linearly in
/// `log10` between its points and extrapolated from the nearest segment.
pub fn snr_offset_db(reference: &[(f64, f64)], snr: f64, value: f64) -> Result<f64> {
    if reference.len() < 2 {
        return Err(Error::EmptyInput("reference curve needs two points"));
    }
    if !(value > 0.0) || reference.iter().any(|&(_, v)| !(v > 0.0)) {
        return Err(Error::InvalidConfig("offsets need positive curve values".into()));
    }
    let target = value.log10();
    let pts: Vec<(f64, f64)> = reference.iter().map(|&(s, v)| (s, v.log10())).collect();
    // the segment whose value range brackets the target, else the end segment
    // on the side the target lies
    let seg = pts
        .windows(2)
        .position(|w| (w[0].1 - target) * (w[1].1 - target) <= 0.0 && w[0].1 != w[1].1)
        .unwrap_or(if target > pts[0].1 { 0 } else { pts.len() - 2 });
    let (s0, v0) = pts[seg];
    let (s1, v1) = pts[seg + 1];
    if v0 == v1 {
        return Err(Error::InvalidConfig("flat reference segment".into()));
    }
    let s_at = s0 + (target - v0) * (s1 - s0) / (v1 - v0);
    Ok(s_at - snr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Range;

    pub(crate) fn small_plan() -> ExperimentPlan {
        ExperimentPlan {
            seed: 7,
            n_trials: 6,
            snr_db: vec![10.0, 30.0],
            algorithms: Algorithm::ALL.to_vec(),
            redraw_training: false,
            system: SystemConfig {
                n_subcarriers: 32,
                n_tx: 2,
                n_rx: 2,
                max_taps: 2,
                theta_max: 3,
                theta_offset: 3,
                cp_len: 8,
                noise_var: 0.0,
            },
            impairments: Impairments::new(0.0, 1e-3, 1),
            grid: GridSpec::new(Range::new(-0.1, 0.1, 0.05), Range::new(-2e-3, 2e-3, 1e-3), -3, 3),
            channel: ChannelSpec::default(),
            crlb: CrlbOptions { realizations: 4, theta_variants: vec![-2] },
        }
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.5, 1.5], &1.5).unwrap(), 0.0);
        assert_eq!(mse(&[3.0], &1.0).unwrap(), 4.0);
        assert_eq!(mse(&[2.0, 4.0], &1.0).unwrap(), 5.0);
        assert_eq!(mse(&[2i64, -2], &1).unwrap(), 5.0);
        let z = CVector::from_vec(vec![crate::C64::new(1.0, 1.0)]);
        assert_eq!(mse(&[z.clone()], &CVector::zeros(1)).unwrap(), 2.0);
        assert!(matches!(mse::<f64>(&[], &0.0), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn snr_mapping() {
        assert_eq!(noise_var_from_snr_db(0.0), 1.0);
        assert!((noise_var_from_snr_db(20.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn plan_validation() {
        let p = small_plan();
        p.validate().unwrap();
        let mut q = p.clone();
        q.n_trials = 0;
        assert!(q.validate().is_err());
        let mut q = p.clone();
        q.snr_db.clear();
        assert!(q.validate().is_err());
        let mut q = p.clone();
        q.impairments.theta = 9;
        assert!(matches!(q.validate(), Err(Error::ThetaOutOfRange { .. })));
        let mut q = p;
        q.channel.powers = Some(vec![]);
        assert!(matches!(q.validate(), Err(Error::EmptyProfile)));
    }

    #[test]
    fn noiseless_plan_is_exact() {
        let mut p = small_plan();
        p.snr_db = vec![400.0];
        p.n_trials = 10;
        p.impairments = Impairments::new(0.0, 1e-3, 2);
        let rep = run_experiment(&p).unwrap();
        assert_eq!(rep.rows.len(), 3);
        for r in &rep.rows {
            assert!(r.mse_eps < 1e-10 && r.mse_eta < 1e-10 && r.mse_h < 1e-10, "{r:?}");
            assert_eq!(r.p_tf, 0.0);
            assert_eq!((r.n_ok, r.n_failed), (10, 0));
        }
    }

    #[test]
    fn single_trial_mse_is_squared_error() {
        let mut p = small_plan();
        p.n_trials = 1;
        p.snr_db = vec![5.0];
        let rep = run_experiment(&p).unwrap();
        for r in &rep.rows {
            let rec = rep.trials.iter().find(|t| t.algo == r.algo).unwrap();
            assert_eq!(r.mse_eps, (rec.eps.unwrap() - p.impairments.eps).powi(2));
            assert_eq!(r.mse_eta, (rec.eta.unwrap() - p.impairments.eta).powi(2));
            assert_eq!(r.mse_h, rec.sq_err_h.unwrap());
        }
    }

    #[test]
    fn report_shape_and_reproducibility() {
        let p = small_plan();
        let a = run_experiment(&p).unwrap();
        let b = run_experiment(&p).unwrap();
        assert_eq!(a.rows.len(), p.snr_db.len() * p.algorithms.len());
        assert_eq!(a.to_csv(), b.to_csv());
        let csv = a.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 14);
        assert_eq!(first[1], "ML");
        assert!(first[2].contains('e'));
        for r in &a.rows {
            assert!(r.crlb.eps_wc >= r.crlb.eps_woc);
            assert!(r.mse_eps >= 0.0 && r.p_tf >= 0.0 && r.p_tf <= 1.0);
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| run_experiment(&p).unwrap());
        assert_eq!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn redrawn_training_runs() {
        let mut p = small_plan();
        p.redraw_training = true;
        p.n_trials = 2;
        p.algorithms = vec![Algorithm::Mml];
        let rep = run_experiment(&p).unwrap();
        assert_eq!(rep.rows.len(), 2);
    }

    #[test]
    fn crlb_table_rows() {
        let p = small_plan();
        let rows = crlb_table(&p).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!((rows[0].theta, rows[2].theta), (1, -2));
        let mut buf = Vec::new();
        write_crlb_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(CRLB_CSV_HEADER));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn coupling_offsets_are_ratios() {
        let p = small_plan();
        let t = coupling_study(&p, 0, -3).unwrap();
        let n = p.snr_db.len();
        assert_eq!(t.rows.len(), 2 * n);
        let a = t.rows[0].crlb;
        assert!((t.offsets.eps_channel_db - db(a.eps_wc / a.eps_woc)).abs() < 1e-12);
        assert!(t.offsets.eps_channel_db >= 0.0 && t.offsets.eta_channel_db >= 0.0);
        for r in &t.rows {
            assert!(r.crlb.eps_wc >= r.crlb.eps_woc && r.crlb.eta_wc >= r.crlb.eta_woc);
        }
    }

    #[test]
    fn snr_offsets() {
        // reference falls a decade per 10 dB
        let reference = [(10.0, 1e-2), (20.0, 1e-3), (30.0, 1e-4)];
        assert!((snr_offset_db(&reference, 20.0, 1e-3).unwrap()).abs() < 1e-12);
        assert!((snr_offset_db(&reference, 20.0, 2e-3).unwrap() - (-10.0 * 2f64.log10())).abs() < 1e-12);
        assert!((snr_offset_db(&reference, 30.0, 1e-4 / 2.0).unwrap() - 10.0 * 2f64.log10()).abs() < 1e-12);
        // extrapolation beyond both ends
        assert!((snr_offset_db(&reference, 5.0, 1e-1).unwrap() + 5.0).abs() < 1e-12);
        assert!((snr_offset_db(&reference, 30.0, 1e-5).unwrap() - 10.0).abs() < 1e-12);
        assert!(snr_offset_db(&reference[..1], 10.0, 1.0).is_err());
    }
}
