use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use holostream::config::{Config, SweepVariable};
use holostream::environment::Scheme;
use holostream::experiments::{
    emit_report, evaluation_base, format_summary, read_csv, run_sweep, run_training, write_csv, write_training_outputs,
    PolicySet, ResultRow, SweepSpec,
};
use holostream::{Error, Result};

#[derive(Parser)]
#[command(name = "holostream", version, about = "Train, evaluate and sweep holographic streaming controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides experiment.seed (train) or replaces the evaluation seeds (evaluate, sweep).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Schemes to run, comma separated (proposed,B1,B2,B3,B4). All by default.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the learned schemes; writes checkpoints and convergence CSVs.
    Train(Common),
    /// Evaluate every scheme at the operating point.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory; <out>/checkpoints by default.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Sweep one variable (W, tau, C_max, discount) or all three figure variables.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// W, tau, C_max, discount or all.
        #[arg(long, default_value = "all")]
        variable: String,
    },
    /// Aggregate every results_*.csv in the output directory into figure CSVs.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn schemes(common: &Common) -> Result<Vec<Scheme>> {
    if common.scheme.is_empty() {
        return Ok(Scheme::ALL.to_vec());
    }
    common.scheme.iter().map(|s| Scheme::parse(s.trim())).collect()
}

fn eval_seeds(cfg: &Config, common: &Common) -> Vec<u64> {
    match common.seed {
        Some(s) => vec![s],
        None => cfg.experiment.eval_seeds.clone(),
    }
}

fn load_policies(cfg: &Config, common: &Common, dir: &Option<PathBuf>, schemes: &[Scheme]) -> Result<PolicySet> {
    if !schemes.iter().any(|s| s.is_learned()) {
        return Ok(PolicySet::default());
    }
    let dir = dir.clone().unwrap_or_else(|| common.out.join("checkpoints"));
    if !dir.is_dir() {
        return Err(Error::MissingCheckpoint(format!("no checkpoint directory at {}", dir.display())));
    }
    PolicySet::load_dir(&dir, cfg.experiment.discounts.first().copied())
}

fn train_cmd(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let schemes = schemes(common)?;
    std::fs::create_dir_all(&common.out)?;
    let runs = run_training(&cfg, &schemes)?;
    write_training_outputs(&runs, &cfg, &common.out)?;
    for r in &runs {
        let tail = r.log.len().saturating_sub(50);
        let last: Vec<f64> = r.log[tail..].iter().map(|e| e.mean_reward()).collect();
        let mean = last.iter().sum::<f64>() / last.len().max(1) as f64;
        println!("{} gamma={} episodes={} mean QoE (last 50)={mean:.4}", r.scheme, r.discount, r.log.len());
    }
    Ok(())
}

fn sweep_and_write(cfg: &Config, common: &Common, spec: &SweepSpec, policies: &PolicySet, file: &str) -> Result<Vec<ResultRow>> {
    let base = evaluation_base(cfg)?;
    let rows = run_sweep(&base, spec, policies, cfg.experiment.record_wall_time)?;
    std::fs::create_dir_all(&common.out)?;
    write_csv(common.out.join(file), &rows)?;
    Ok(rows)
}

fn evaluate_cmd(common: &Common, checkpoints: &Option<PathBuf>) -> Result<()> {
    let cfg = load_config(common)?;
    let schemes = schemes(common)?;
    let policies = load_policies(&cfg, common, checkpoints, &schemes)?;
    let spec = SweepSpec {
        variable: SweepVariable::Tau,
        grid: vec![cfg.experiment.operating_tau_s],
        schemes,
        episodes: cfg.experiment.eval_episodes as u64,
        seeds: eval_seeds(&cfg, common),
        action: cfg.experiment.eval_action,
    };
    let rows = sweep_and_write(&cfg, common, &spec, &policies, "evaluation.csv")?;
    print!("{}", format_summary(&holostream::experiments::summarize(&rows)));
    Ok(())
}

fn sweep_cmd(common: &Common, checkpoints: &Option<PathBuf>, variable: &str) -> Result<()> {
    let cfg = load_config(common)?;
    let vars = if variable.eq_ignore_ascii_case("all") {
        vec![SweepVariable::Bandwidth, SweepVariable::Tau, SweepVariable::Cmax]
    } else {
        vec![SweepVariable::parse(variable)?]
    };
    let mut schemes = schemes(common)?;
    let policies = load_policies(&cfg, common, checkpoints, &schemes)?;
    for var in vars {
        let grid = match var {
            SweepVariable::Bandwidth => cfg.experiment.bandwidth_grid_hz.clone(),
            SweepVariable::Tau => cfg.experiment.tau_grid_s.clone(),
            SweepVariable::Cmax => cfg.experiment.cmax_grid.clone(),
            SweepVariable::Discount => {
                // only the proposed scheme is trained per discount
                schemes.retain(|&s| s == Scheme::Proposed);
                cfg.experiment.discounts.clone()
            }
        };
        let spec = SweepSpec {
            variable: var,
            grid,
            schemes: schemes.clone(),
            episodes: cfg.experiment.eval_episodes as u64,
            seeds: eval_seeds(&cfg, common),
            action: cfg.experiment.eval_action,
        };
        let rows = sweep_and_write(&cfg, common, &spec, &policies, &results_file(var))?;
        println!("{}: {} rows", var.as_str(), rows.len());
    }
    Ok(())
}

fn results_file(var: SweepVariable) -> String {
    format!("results_{}.csv", var.as_str())
}

fn report_cmd(out: &Path) -> Result<()> {
    let mut rows: Vec<ResultRow> = Vec::new();
    for var in [SweepVariable::Bandwidth, SweepVariable::Tau, SweepVariable::Cmax, SweepVariable::Discount] {
        let path = out.join(results_file(var));
        if path.is_file() {
            rows.extend(read_csv::<ResultRow>(&path)?);
        }
    }
    let summary = emit_report(&rows, out)?;
    print!("{}", format_summary(&summary));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(common) => train_cmd(common),
        Command::Evaluate { common, checkpoints } => evaluate_cmd(common, checkpoints),
        Command::Sweep {
            common,
            checkpoints,
            variable,
        } => sweep_cmd(common, checkpoints, variable),
        Command::Report { out } => report_cmd(out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
