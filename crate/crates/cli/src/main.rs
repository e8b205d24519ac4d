use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use mimo_sync::config::{load_plan, parse_algorithms, parse_snr_list, Overrides};
use mimo_sync::harness::{
    coupling_study, crlb_table, noise_var_from_snr_db, run_experiment, write_crlb_csv,
    ExperimentPlan,
};
use mimo_sync::io::{load_signal, save_signal};
use mimo_sync::model::{generate_channel, synthesize};
use mimo_sync::rng::{derive_seed, stream};
use mimo_sync::{Algorithm, Error, EstimationResult, EstimatorRegistry, SearchContext};

#[derive(Parser)]
#[command(name = "mimo-sync", version, about = "Joint CFO/SFO/timing/channel estimation for MIMO-OFDM training blocks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo SNR sweep; writes the MSE/P_tf/CRLB CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the full report, per-trial estimates included, as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Averaged bounds over the SNR sweep for the true timing error and each
    /// `crlb.theta_variants` entry.
    Crlb {
        #[command(flatten)]
        common: Common,
    },
    /// Bound curves at the true timing error and the first timing variant,
    /// with the SNR offsets between them.
    Coupling {
        #[command(flatten)]
        common: Common,
    },
    /// Run estimators on a received-vector file and print the estimates as JSON.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Received-vector file.
        #[arg(long)]
        input: PathBuf,
    },
    /// Write one impaired received vector for the plan's impairments.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Trial index used to derive the channel and noise seeds.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment plan (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated SNR points in dB.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    n_trials: Option<usize>,
    /// Comma-separated subset of ml, mml, sml.
    #[arg(long)]
    algo: Option<String>,
    /// Only report errors.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn plan(&self) -> Result<ExperimentPlan, Error> {
        let mut plan = load_plan(&self.config)?;
        let overrides = Overrides {
            seed: self.seed,
            snr_db: self.snr.as_deref().map(parse_snr_list).transpose()?,
            n_trials: self.n_trials,
            algorithms: self.algo.as_deref().map(parse_algorithms).transpose()?,
        };
        overrides.apply(&mut plan)?;
        Ok(plan)
    }

    fn output(&self) -> Result<Box<dyn Write>, Error> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

fn create(path: &Path) -> Result<File, Error> {
    File::create(path).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn result_json(r: &EstimationResult) -> Value {
    let channel: Vec<[f64; 2]> = r.channel.stacked().iter().map(|z| [z.re, z.im]).collect();
    json!({
        "algorithm": r.algorithm,
        "eps": r.eps,
        "eta": r.eta,
        "theta": r.theta,
        "cost": r.cost,
        "stage_cost": r.stage_cost,
        "search_points": r.search_points,
        "skipped_points": r.skipped_points,
        "outside_validity": r.outside_validity,
        "channel": channel,
    })
}

fn simulate(common: &Common, json_path: Option<&Path>) -> Result<(), Error> {
    let plan = common.plan()?;
    let report = run_experiment(&plan)?;
    let mut out = common.output()?;
    report.write_csv(&mut out)?;
    out.flush()?;
    if let Some(p) = json_path {
        let mut w = BufWriter::new(create(p)?);
        report.write_json(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn crlb(common: &Common) -> Result<(), Error> {
    let plan = common.plan()?;
    let rows = crlb_table(&plan)?;
    let mut out = common.output()?;
    write_crlb_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn coupling(common: &Common) -> Result<(), Error> {
    let plan = common.plan()?;
    let shifted = *plan.crlb.theta_variants.first().ok_or_else(|| {
        Error::InvalidConfig("coupling needs at least one entry in crlb.theta_variants".into())
    })?;
    let table = coupling_study(&plan, plan.impairments.theta, shifted)?;
    let mut out = common.output()?;
    write_crlb_csv(&table.rows, &mut out)?;
    out.flush()?;
    let o = &table.offsets;
    log::info!(
        "offsets (dB): eps/channel {:.2}, eta/channel {:.2}, eps/timing {:.2}, eta/timing {:.2}",
        o.eps_channel_db,
        o.eta_channel_db,
        o.eps_timing_db,
        o.eta_timing_db
    );
    if common.out.is_some() {
        println!("{}", serde_json::to_string_pretty(&table.offsets).expect("plain struct"));
    }
    Ok(())
}

fn estimate(common: &Common, input: &Path) -> Result<(), Error> {
    let plan = common.plan()?;
    let algos: Vec<Algorithm> = match &common.algo {
        Some(_) => plan.algorithms.clone(),
        None => vec![Algorithm::Ml],
    };
    let r = load_signal(input)?;
    let training = plan.training();
    let ctx = SearchContext::new(&plan.system, &training, &plan.grid)?;
    let registry = EstimatorRegistry::default();
    let mut results = Vec::new();
    for a in algos {
        results.push(result_json(&registry.get(a.tag())?.estimate(&ctx, &r)?));
    }
    let value = if results.len() == 1 { results.pop().unwrap() } else { Value::Array(results) };
    let mut out = common.output()?;
    writeln!(out, "{}", serde_json::to_string_pretty(&value).expect("plain values"))?;
    out.flush()?;
    Ok(())
}

fn synthesize_cmd(common: &Common, trial: u64) -> Result<(), Error> {
    let plan = common.plan()?;
    let out = common
        .out
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("synthesize needs --out".into()))?;
    let mut cfg = plan.system.clone();
    cfg.noise_var = noise_var_from_snr_db(plan.snr_db[0]);
    let training = plan.training();
    let ch = generate_channel(&cfg, &plan.profile(), derive_seed(plan.seed, &[stream::CHANNEL, 0, trial]))?;
    let r = synthesize(&cfg, &training, &plan.impairments, &ch, derive_seed(plan.seed, &[stream::NOISE, 0, trial]))?;
    save_signal(&r, out)?;
    if !common.quiet {
        let channel: Vec<[f64; 2]> = ch.stacked().iter().map(|z| [z.re, z.im]).collect();
        let truth = json!({
            "eps": plan.impairments.eps,
            "eta": plan.impairments.eta,
            "theta": plan.impairments.theta,
            "snr_db": plan.snr_db[0],
            "channel": channel,
        });
        println!("{}", serde_json::to_string_pretty(&truth).expect("plain values"));
    }
    Ok(())
}

fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("MIMO_SYNC_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("MIMO_SYNC_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Error> {
    init_threads()?;
    match &cli.command {
        Command::Simulate { common, json } => simulate(common, json.as_deref()),
        Command::Crlb { common } => crlb(common),
        Command::Coupling { common } => coupling(common),
        Command::Estimate { common, input } => estimate(common, input),
        Command::Synthesize { common, trial } => synthesize_cmd(common, *trial),
    }
}

fn quiet(cli: &Cli) -> bool {
    match &cli.command {
        Command::Simulate { common, .. }
        | Command::Crlb { common }
        | Command::Coupling { common }
        | Command::Estimate { common, .. }
        | Command::Synthesize { common, .. } => common.quiet,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error E_USAGE: {first}");
            return ExitCode::from(2);
        }
    };
    let level = if quiet(&cli) { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error {}: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
