//! Training runs, evaluation sweeps and the CSV files derived from them.
//!
//! # Files
//!
//! All numbers are plain decimal text; empty cells mean "not recorded".
//!
//! `results_<variable>.csv`, one row per (scheme, value, seed, episode):
//!
//! | column | unit |
//! |---|---|
//! | `scheme` | `proposed`, `B1` … `B4` |
//! | `variable` | `W`, `tau`, `C_max` or `discount` |
//! | `value` | Hz, s, cycles/s, or the discount itself |
//! | `seed` | evaluation seed |
//! | `episode` | episode index within the seed |
//! | `mean_qoe` | Σ_t R(t) / T for the episode |
//! | `feasible_fraction` | share of slots whose demand was served |
//! | `wall_time_s` | episode wall time, only with `record_wall_time` |
//!
//! `fig2_convergence.csv`: `discount, episode, total_reward, mean_qoe, feasible_fraction`
//! for the proposed scheme, one row per training episode and discount.
//! `training_log.csv` has the same columns plus `scheme` for every training run.
//!
//! `fig3_qoe_vs_W.csv`, `fig4_qoe_vs_tau.csv`, `fig5_qoe_vs_cmax.csv`:
//! `scheme, <W_hz | tau_s | cmax_hz>, mean_qoe, std_err, feasible_fraction, episodes`,
//! aggregated over all seeds and episodes of a grid point.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::agent::{rollout, train, ActMode, Checkpoint, EpisodeLog, Environment, PolicyParams, PpoHyper};
use crate::config::{Config, EpisodeConfig, SweepVariable};
use crate::environment::{baseline_policy, HoloEnv, Scheme};
use crate::error::{Error, Result};
use crate::seed::{self, TAG_POLICY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub variable: SweepVariable,
    pub value: f64,
    pub seed: u64,
    pub episode: u64,
    pub mean_qoe: f64,
    pub feasible_fraction: f64,
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub episodes: u64,
    pub seeds: Vec<u64>,
    /// How learned schemes pick actions.
    #[serde(default)]
    pub action: ActMode,
}

/// How a scheme chooses tiles during evaluation.
#[derive(Debug, Clone)]
pub enum Controller {
    /// B1/B4 fixed selection.
    Fixed,
    /// A trained policy, sampled from or played greedily.
    Learned(PolicyParams, ActMode),
    /// Uniform choice per head, for reference runs.
    Random,
}

/// Plays one evaluation episode and returns its log.
pub fn evaluate_episode(env: &mut HoloEnv, controller: &Controller, episode: u64) -> Result<EpisodeLog> {
    match controller {
        // sampling draws come from the evaluation seed's own stream, so every
        // scheme and grid point with that seed sees the same uniforms
        Controller::Learned(params, mode) => {
            let seed = env.config().seed;
            rollout(env, params, episode, *mode, seed)
        }
        Controller::Fixed => {
            env.reset(episode)?;
            let levels = env.config().dims.levels;
            let mut log = EpisodeLog {
                episode: episode as usize,
                total_reward: 0.0,
                slots: 0,
                feasible_slots: 0,
            };
            loop {
                let sel = baseline_policy(env.scheme(), env.fov()?, levels)
                    .ok_or_else(|| Error::Config(format!("scheme {} has no fixed policy", env.scheme())))?;
                let out = env.step(&sel)?;
                log.total_reward += out.reward;
                log.slots += 1;
                log.feasible_slots += usize::from(out.status == crate::beamform::SolveStatus::Feasible);
                if out.done {
                    return Ok(log);
                }
            }
        }
        Controller::Random => {
            let mut rng = seed::stream(&[env.config().seed, TAG_POLICY, 4, episode]);
            env.reset_episode(episode)?;
            let (heads, choices) = (env.heads(), env.choices());
            let mut log = EpisodeLog {
                episode: episode as usize,
                total_reward: 0.0,
                slots: 0,
                feasible_slots: 0,
            };
            loop {
                let action: Vec<usize> = (0..heads).map(|_| rng.random_range(0..choices)).collect();
                let fb = env.act(&action)?;
                log.total_reward += fb.reward;
                log.slots += 1;
                log.feasible_slots += usize::from(fb.feasible);
                if fb.done {
                    return Ok(log);
                }
            }
        }
    }
}

/// Trained policies by scheme, each with the discount it was trained under.
#[derive(Debug, Clone, Default)]
pub struct PolicySet {
    policies: BTreeMap<Scheme, Vec<(f64, PolicyParams)>>,
}

impl PolicySet {
    pub fn insert(&mut self, scheme: Scheme, discount: f64, params: PolicyParams) {
        let entry = self.policies.entry(scheme).or_default();
        entry.retain(|(d, _)| *d != discount);
        entry.push((discount, params));
    }

    /// The policy for `discount`, or the first one inserted when `None`.
    pub fn get(&self, scheme: Scheme, discount: Option<f64>) -> Result<&PolicyParams> {
        let list = self
            .policies
            .get(&scheme)
            .ok_or_else(|| Error::MissingCheckpoint(scheme.as_str().into()))?;
        let found = match discount {
            Some(d) => list.iter().find(|(g, _)| *g == d),
            None => list.first(),
        };
        found
            .map(|(_, p)| p)
            .ok_or_else(|| Error::MissingCheckpoint(format!("{scheme} (discount {discount:?})")))
    }

    /// Loads `<scheme>_gamma<discount>.json` files; `primary` is preferred as the default discount.
    pub fn load_dir(dir: impl AsRef<Path>, primary: Option<f64>) -> Result<Self> {
        let mut found: Vec<(Scheme, f64, PolicyParams)> = Vec::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir.as_ref())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let ck = Checkpoint::load(&path)?;
            found.push((Scheme::parse(&ck.scheme)?, ck.discount, ck.params));
        }
        // primary discount first so that `get(.., None)` returns it
        found.sort_by(|a, b| {
            let rank = |d: f64| if Some(d) == primary { 0 } else { 1 };
            (a.0, rank(a.1)).cmp(&(b.0, rank(b.1))).then(a.1.total_cmp(&b.1))
        });
        let mut set = Self::default();
        for (s, d, p) in found {
            set.insert(s, d, p);
        }
        Ok(set)
    }
}

pub fn checkpoint_name(scheme: Scheme, discount: f64) -> String {
    format!("{}_gamma{}.json", scheme.as_str(), discount)
}

fn controller_for(scheme: Scheme, policies: &PolicySet, discount: Option<f64>, mode: ActMode) -> Result<Controller> {
    if scheme.is_learned() {
        Ok(Controller::Learned(policies.get(scheme, discount)?.clone(), mode))
    } else {
        Ok(Controller::Fixed)
    }
}

/// Base environment for evaluations: τ pinned to the operating point.
pub fn evaluation_base(cfg: &Config) -> Result<EpisodeConfig> {
    Ok(cfg.episode()?.with_override(SweepVariable::Tau, cfg.experiment.operating_tau_s))
}

/// Evaluates every (scheme, grid value, seed) with `episodes` episodes each.
///
/// Points run in parallel, each with its own environment; rows come back
/// sorted by (scheme, value, seed, episode). All schemes at a grid point see
/// the same channel and FoV streams for a given seed and episode.
pub fn run_sweep(base: &EpisodeConfig, spec: &SweepSpec, policies: &PolicySet, record_wall_time: bool) -> Result<Vec<ResultRow>> {
    if spec.grid.is_empty() || spec.schemes.is_empty() || spec.seeds.is_empty() {
        return Err(Error::Config("sweep needs a grid value, a scheme and a seed".into()));
    }
    // fail before any work if a learned scheme has no policy
    for &scheme in &spec.schemes {
        let discount = (spec.variable == SweepVariable::Discount).then_some(spec.grid[0]);
        if scheme.is_learned() {
            for &v in &spec.grid {
                policies.get(scheme, discount.map(|_| v))?;
            }
        }
    }
    let mut tasks = Vec::new();
    for &scheme in &spec.schemes {
        for &value in &spec.grid {
            for &seed in &spec.seeds {
                tasks.push((scheme, value, seed));
            }
        }
    }
    let chunks: Vec<Vec<ResultRow>> = tasks
        .par_iter()
        .map(|&(scheme, value, seed)| {
            let mut cfg = base.with_override(spec.variable, value);
            cfg.seed = seed;
            let discount = (spec.variable == SweepVariable::Discount).then_some(value);
            let controller = controller_for(scheme, policies, discount, spec.action)?;
            let mut env = HoloEnv::new(cfg, scheme)?;
            (0..spec.episodes)
                .map(|episode| {
                    let start = Instant::now();
                    let log = evaluate_episode(&mut env, &controller, episode)?;
                    Ok(ResultRow {
                        scheme,
                        variable: spec.variable,
                        value,
                        seed,
                        episode,
                        mean_qoe: log.mean_reward(),
                        feasible_fraction: log.feasible_fraction(),
                        wall_time_s: record_wall_time.then(|| start.elapsed().as_secs_f64()),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ResultRow> = chunks.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (a.scheme, a.variable)
            .cmp(&(b.scheme, b.variable))
            .then(a.value.total_cmp(&b.value))
            .then((a.seed, a.episode).cmp(&(b.seed, b.episode)))
    });
}

/// One training episode of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub scheme: Scheme,
    pub discount: f64,
    pub episode: usize,
    pub total_reward: f64,
    pub mean_qoe: f64,
    pub feasible_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub scheme: Scheme,
    pub discount: f64,
    pub params: PolicyParams,
    pub log: Vec<EpisodeLog>,
}

/// Training jobs: the first listed discount for every learned scheme, plus
/// the remaining discounts for the proposed scheme (the convergence comparison).
pub fn training_jobs(cfg: &Config, schemes: &[Scheme]) -> Result<Vec<(Scheme, f64)>> {
    let discounts = &cfg.experiment.discounts;
    let Some(&primary) = discounts.first() else {
        return Err(Error::Config("experiment.discounts must not be empty".into()));
    };
    let mut jobs = Vec::new();
    for &scheme in schemes.iter().filter(|s| s.is_learned()) {
        if scheme == Scheme::Proposed {
            jobs.extend(discounts.iter().map(|&d| (scheme, d)));
        } else {
            jobs.push((scheme, primary));
        }
    }
    Ok(jobs)
}

/// Trains the learned schemes in `schemes` (in parallel, one run per job).
pub fn run_training(cfg: &Config, schemes: &[Scheme]) -> Result<Vec<TrainingRun>> {
    let episode_cfg = cfg.episode()?;
    let jobs = training_jobs(cfg, schemes)?;
    jobs.par_iter()
        .map(|&(scheme, discount)| {
            let hyper = PpoHyper {
                gamma: discount,
                ..cfg.ppo.clone()
            };
            let mut env = HoloEnv::new(episode_cfg.clone(), scheme)?;
            let out = train(&mut env, cfg.experiment.train_episodes, &hyper, cfg.experiment.seed)?;
            Ok(TrainingRun {
                scheme,
                discount,
                params: out.params,
                log: out.log,
            })
        })
        .collect()
}

pub fn convergence_rows(runs: &[TrainingRun]) -> Vec<ConvergenceRow> {
    runs.iter()
        .flat_map(|r| {
            r.log.iter().map(move |e| ConvergenceRow {
                scheme: r.scheme,
                discount: r.discount,
                episode: e.episode,
                total_reward: e.total_reward,
                mean_qoe: e.mean_reward(),
                feasible_fraction: e.feasible_fraction(),
            })
        })
        .collect()
}

/// Writes checkpoints, `training_log.csv` and `fig2_convergence.csv` under `out`.
pub fn write_training_outputs(runs: &[TrainingRun], cfg: &Config, out: &Path) -> Result<()> {
    let ckdir = out.join("checkpoints");
    std::fs::create_dir_all(&ckdir)?;
    for r in runs {
        let codec = r.scheme.codec(cfg.scenario.levels);
        Checkpoint::new(r.scheme.as_str(), r.discount, codec, r.params.clone())
            .save(ckdir.join(checkpoint_name(r.scheme, r.discount)))?;
    }
    let rows = convergence_rows(runs);
    write_csv(out.join("training_log.csv"), &rows)?;
    let fig2: Vec<Fig2Row> = rows
        .iter()
        .filter(|r| r.scheme == Scheme::Proposed)
        .map(|r| Fig2Row {
            discount: r.discount,
            episode: r.episode,
            total_reward: r.total_reward,
            mean_qoe: r.mean_qoe,
            feasible_fraction: r.feasible_fraction,
        })
        .collect();
    write_csv(out.join("fig2_convergence.csv"), &fig2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Row {
    pub discount: f64,
    pub episode: usize,
    pub total_reward: f64,
    pub mean_qoe: f64,
    pub feasible_fraction: f64,
}

pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Aggregate of one (scheme, variable, value) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub variable: SweepVariable,
    pub value: f64,
    pub mean_qoe: f64,
    pub std_err: f64,
    pub feasible_fraction: f64,
    pub episodes: usize,
}

/// Mean and standard error per (scheme, variable, value), in sorted order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(Scheme, SweepVariable, u64), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        cells.entry((r.scheme, r.variable, r.value.to_bits())).or_default().push(r);
    }
    let mut out: Vec<SummaryRow> = cells
        .into_iter()
        .map(|((scheme, variable, bits), rs)| {
            let n = rs.len() as f64;
            let mean = rs.iter().map(|r| r.mean_qoe).sum::<f64>() / n;
            let var = if rs.len() > 1 {
                rs.iter().map(|r| (r.mean_qoe - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                scheme,
                variable,
                value: f64::from_bits(bits),
                mean_qoe: mean,
                std_err: (var / n).sqrt(),
                feasible_fraction: rs.iter().map(|r| r.feasible_fraction).sum::<f64>() / n,
                episodes: rs.len(),
            }
        })
        .collect();
    out.sort_by(|a, b| (a.scheme, a.variable).cmp(&(b.scheme, b.variable)).then(a.value.total_cmp(&b.value)));
    out
}

fn figure_file(var: SweepVariable) -> Option<(&'static str, &'static str)> {
    match var {
        SweepVariable::Bandwidth => Some(("fig3_qoe_vs_W.csv", "W_hz")),
        SweepVariable::Tau => Some(("fig4_qoe_vs_tau.csv", "tau_s")),
        SweepVariable::Cmax => Some(("fig5_qoe_vs_cmax.csv", "cmax_hz")),
        SweepVariable::Discount => None,
    }
}

/// Writes `summary.csv` and one figure CSV per swept variable present in `rows`;
/// returns the summary table.
pub fn emit_report(rows: &[ResultRow], out: &Path) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::Config("report needs at least one result row".into()));
    }
    std::fs::create_dir_all(out)?;
    let summary = summarize(rows);
    write_csv(out.join("summary.csv"), &summary)?;
    for var in [SweepVariable::Bandwidth, SweepVariable::Tau, SweepVariable::Cmax] {
        let Some((file, column)) = figure_file(var) else { continue };
        let cells: Vec<&SummaryRow> = summary.iter().filter(|s| s.variable == var).collect();
        if cells.is_empty() {
            continue;
        }
        let mut w = csv::Writer::from_path(out.join(file))?;
        w.write_record(["scheme", column, "mean_qoe", "std_err", "feasible_fraction", "episodes"])?;
        for s in cells {
            w.write_record([
                s.scheme.as_str().to_string(),
                s.value.to_string(),
                s.mean_qoe.to_string(),
                s.std_err.to_string(),
                s.feasible_fraction.to_string(),
                s.episodes.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(summary)
}

/// Plain-text rendering of a summary table.
pub fn format_summary(summary: &[SummaryRow]) -> String {
    let mut s = format!("{:<9} {:<9} {:>12} {:>10} {:>9} {:>9}\n", "scheme", "variable", "value", "mean_qoe", "std_err", "feasible");
    for r in summary {
        s += &format!(
            "{:<9} {:<9} {:>12} {:>10.4} {:>9.4} {:>9.3}\n",
            r.scheme.as_str(),
            r.variable.as_str(),
            r.value,
            r.mean_qoe,
            r.std_err,
            r.feasible_fraction
        );
    }
    s
}

/// Ranks with ties sharing their average rank (1-based).
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation and the one-sided p-value for ρ > 0
/// (t approximation with n − 2 degrees of freedom). `None` when either
/// input is constant or there are fewer than three points.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean).powi(2);
        syy += (b - mean).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let rho = sxy / (sxx * syy).sqrt();
    let df = n as f64 - 2.0;
    let p = if rho >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).ok()?;
        1.0 - dist.cdf(t)
    };
    Some((rho, p))
}
