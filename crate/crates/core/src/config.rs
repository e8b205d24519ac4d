//! TOML experiment plans and command-line overrides.
//!
//! A plan file holds the top-level keys `seed`, `n_trials`, `snr_db`,
//! `algorithms` and `redraw_training`, followed by the sections `[system]`,
//! `[impairments]`, `[grid.eps]`, `[grid.eta]`, `[grid.theta]`, `[channel]`
//! and `[crlb]`.

use std::fs;
use std::path::Path;

use crate::estimators::Algorithm;
use crate::harness::ExperimentPlan;
use crate::{Error, Result};

pub fn parse_plan(text: &str) -> Result<ExperimentPlan> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().replace('\n', " ")))
}

pub fn plan_to_toml(plan: &ExperimentPlan) -> Result<String> {
    toml::to_string_pretty(plan).map_err(|e| Error::Config(e.to_string()))
}

/// Reads, parses and validates a plan file.
pub fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let plan = parse_plan(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    plan.validate()?;
    Ok(plan)
}

pub fn save_plan(plan: &ExperimentPlan, path: &Path) -> Result<()> {
    fs::write(path, plan_to_toml(plan)?)?;
    Ok(())
}

/// Command-line replacements for plan fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub snr_db: Option<Vec<f64>>,
    pub n_trials: Option<usize>,
    pub algorithms: Option<Vec<Algorithm>>,
}

impl Overrides {
    /// Applies the overrides and re-validates the plan.
    pub fn apply(&self, plan: &mut ExperimentPlan) -> Result<()> {
        if let Some(s) = self.seed {
            plan.seed = s;
        }
        if let Some(s) = &self.snr_db {
            plan.snr_db = s.clone();
        }
        if let Some(n) = self.n_trials {
            plan.n_trials = n;
        }
        if let Some(a) = &self.algorithms {
            plan.algorithms = a.clone();
        }
        plan.validate()
    }
}

/// `"10,15,20"` → `[10, 15, 20]`.
pub fn parse_snr_list(s: &str) -> Result<Vec<f64>> {
    let out = s
        .split(',')
        .map(|x| {
            let x = x.trim();
            x.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Config(format!("invalid SNR value '{x}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out)
}

/// `"ml,sml"` → `[ML, SML]`, duplicates dropped, order kept.
pub fn parse_algorithms(s: &str) -> Result<Vec<Algorithm>> {
    let mut out = Vec::new();
    for name in s.split(',') {
        let a: Algorithm = name.trim().parse()?;
        if !out.contains(&a) {
            out.push(a);
        }
    }
    Ok(out)
}
