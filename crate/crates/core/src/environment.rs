//! Slot-level simulator tying channel, media, beamforming and QoE together.
//!
//! # Observation layout
//!
//! For each user k in order, `4 + 2·F` features (F = FoV size):
//!
//! | offset | feature | divided by |
//! |---|---|---|
//! | 0 | previous-slot achieved rate r_k (bit/s) | `observation.rate` |
//! | 1 | previous-slot quality Q_k | `observation.quality` |
//! | 2 | slot duration τ (s) | `observation.tau` |
//! | 3 | decoder clock C_max (cycles/s) | `observation.cmax` |
//! | 4+2j | virtual distance of the j-th visible tile | `observation.dist` |
//! | 5+2j | occlusion level of the j-th visible tile | `observation.occ` |
//!
//! Visible tiles appear in the FoV's (ascending tile) order, which is also the
//! order of the action heads.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{decode_action, ActionCodec, Environment, Feedback};
use crate::beamform::{build_problem, BeamformSolver, ConicSolver, SolveStatus};
use crate::channel::{rate, sample_channel, sinr_all, NoiseModel};
use crate::config::EpisodeConfig;
use crate::error::{Error, Result};
use crate::media::{required_sinr, DeviceModel, FovState, TileSelection, TimingConfig};
use crate::qoe::{buffer_update, qoe_slot, quality_fluctuation, rebuffer_indicator, video_quality, BufferMode, QoeRecord};
use crate::seed::{self, TAG_EPISODE};

/// Level used by the fixed-bitrate baselines.
pub const FIXED_LEVEL: usize = 2;

/// Controllers compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Learned levels and compression, all APs cooperating.
    #[serde(rename = "proposed")]
    Proposed,
    /// Fixed level 2, uncompressed, all APs.
    B1,
    /// Learned levels, never compressed, all APs.
    B2,
    /// Learned levels and compression, AP 0 only.
    B3,
    /// Fixed level 2, uncompressed, AP 0 only.
    B4,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Proposed, Scheme::B1, Scheme::B2, Scheme::B3, Scheme::B4];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::B1 => "B1",
            Scheme::B2 => "B2",
            Scheme::B3 => "B3",
            Scheme::B4 => "B4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "proposed" | "Proposed" => Ok(Scheme::Proposed),
            "B1" | "b1" => Ok(Scheme::B1),
            "B2" | "b2" => Ok(Scheme::B2),
            "B3" | "b3" => Ok(Scheme::B3),
            "B4" | "b4" => Ok(Scheme::B4),
            other => Err(Error::Config(format!("unknown scheme `{other}` (proposed, B1, B2, B3, B4)"))),
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, Scheme::Proposed | Scheme::B2 | Scheme::B3)
    }

    pub fn cooperative(&self) -> bool {
        matches!(self, Scheme::Proposed | Scheme::B1 | Scheme::B2)
    }

    pub fn compression(&self) -> bool {
        matches!(self, Scheme::Proposed | Scheme::B3)
    }

    pub fn codec(&self, levels: usize) -> ActionCodec {
        ActionCodec::new(levels, self.compression())
    }

    /// APs the scheme transmits from.
    pub fn active_aps(&self, aps: usize) -> Vec<usize> {
        if self.cooperative() {
            (0..aps).collect()
        } else {
            vec![0]
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fixed selection of the B1/B4 baselines (level 2 capped at L, uncompressed);
/// `None` for the learned schemes.
pub fn baseline_policy(kind: Scheme, fov: &FovState, levels: usize) -> Option<TileSelection> {
    match kind {
        Scheme::B1 | Scheme::B4 => Some(TileSelection::uniform(fov, FIXED_LEVEL.min(levels), false)),
        _ => None,
    }
}

pub fn observation_len(users: usize, fov_size: usize) -> usize {
    users * (4 + 2 * fov_size)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Slot this outcome belongs to (1-based).
    pub slot: usize,
    pub observation: Vec<f64>,
    /// Σ_k QoE_k on a served slot, exactly 0 otherwise.
    pub reward: f64,
    pub records: Vec<QoeRecord>,
    pub status: SolveStatus,
    /// Required SINR per user; `None` when decoding alone overruns the slot.
    pub sinr_targets: Vec<Option<f64>>,
    /// Achieved rates (bit/s); zero on an unserved slot.
    pub rates: Vec<f64>,
    pub total_power: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
struct EpisodeState {
    seed: u64,
    slot: usize,
    tau: f64,
    cmax: f64,
    quality: Vec<f64>,
    buffer: Vec<f64>,
    rates: Vec<f64>,
    fov: FovState,
    done: bool,
}

pub struct HoloEnv {
    cfg: EpisodeConfig,
    scheme: Scheme,
    solver: Arc<dyn BeamformSolver>,
    aps: Vec<usize>,
    caps: Vec<f64>,
    noise: NoiseModel,
    state: Option<EpisodeState>,
}

impl std::fmt::Debug for HoloEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HoloEnv")
            .field("scheme", &self.scheme)
            .field("aps", &self.aps)
            .field("slot", &self.state.as_ref().map(|s| s.slot))
            .finish_non_exhaustive()
    }
}

impl HoloEnv {
    pub fn new(cfg: EpisodeConfig, scheme: Scheme) -> Result<Self> {
        Self::with_solver(cfg, scheme, Arc::new(ConicSolver::default()))
    }

    pub fn with_solver(cfg: EpisodeConfig, scheme: Scheme, solver: Arc<dyn BeamformSolver>) -> Result<Self> {
        cfg.dims.validate()?;
        cfg.fov.validate()?;
        cfg.weights.validate()?;
        let (lo, hi) = cfg.tau_range;
        let (clo, chi) = cfg.cmax_range;
        if !(lo > 0.0 && hi >= lo && clo > 0.0 && chi >= clo && hi.is_finite() && chi.is_finite()) {
            return Err(Error::Config(format!(
                "invalid episode ranges tau={:?} cmax={:?}",
                cfg.tau_range, cfg.cmax_range
            )));
        }
        if cfg.power_caps.len() != cfg.dims.aps {
            return Err(Error::Config("one power cap per AP required".into()));
        }
        let noise = NoiseModel::new(cfg.noise_psd, cfg.bandwidth)?;
        let aps = scheme.active_aps(cfg.dims.aps);
        let caps = aps.iter().map(|&m| cfg.power_caps[m]).collect();
        Ok(Self {
            cfg,
            scheme,
            solver,
            aps,
            caps,
            noise,
            state: None,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn codec(&self) -> ActionCodec {
        self.scheme.codec(self.cfg.dims.levels)
    }

    /// APs used in beamforming (all for cooperative schemes, AP 0 otherwise).
    pub fn active_aps(&self) -> &[usize] {
        &self.aps
    }

    fn state(&self) -> Result<&EpisodeState> {
        self.state
            .as_ref()
            .ok_or_else(|| Error::Config("environment used before reset".into()))
    }

    pub fn fov(&self) -> Result<&FovState> {
        Ok(&self.state()?.fov)
    }

    pub fn tau(&self) -> Result<f64> {
        Ok(self.state()?.tau)
    }

    pub fn cmax(&self) -> Result<f64> {
        Ok(self.state()?.cmax)
    }

    /// Next slot to be played (1-based).
    pub fn slot(&self) -> Result<usize> {
        Ok(self.state()?.slot)
    }

    pub fn buffers(&self) -> Result<&[f64]> {
        Ok(&self.state()?.buffer)
    }

    pub fn is_done(&self) -> bool {
        self.state.as_ref().is_some_and(|s| s.done)
    }

    /// Starts episode `episode`: draws τ and C_max, zeroes Q and r, fills buffers to G(0).
    pub fn reset(&mut self, episode: u64) -> Result<Vec<f64>> {
        let cfg = &self.cfg;
        let seed = seed::derive_seed(&[cfg.seed, TAG_EPISODE, episode]);
        let mut rng = seed::stream(&[seed, TAG_EPISODE]);
        let tau = draw(&mut rng, cfg.tau_range);
        let cmax = draw(&mut rng, cfg.cmax_range);
        let users = cfg.dims.users;
        let state = EpisodeState {
            seed,
            slot: 1,
            tau,
            cmax,
            quality: vec![0.0; users],
            buffer: vec![cfg.initial_buffer; users],
            rates: vec![0.0; users],
            fov: cfg.fov.sample(users, seed, 1),
            done: false,
        };
        let obs = self.encode(&state);
        self.state = Some(state);
        Ok(obs)
    }

    fn encode(&self, s: &EpisodeState) -> Vec<f64> {
        let sc = &self.cfg.observation;
        let mut obs = Vec::with_capacity(observation_len(self.cfg.dims.users, self.cfg.fov.fov_size));
        for k in 0..self.cfg.dims.users {
            obs.extend([s.rates[k] / sc.rate, s.quality[k] / sc.quality, s.tau / sc.tau, s.cmax / sc.cmax]);
            for v in s.fov.user(k) {
                obs.push(v.dist / sc.dist);
                obs.push(v.occ / sc.occ);
            }
        }
        obs
    }

    /// Plays one slot with the given tile requests.
    pub fn step(&mut self, sel: &TileSelection) -> Result<StepOutcome> {
        let slot = self.state()?.slot;
        self.step_inner(sel).map_err(|e| e.at_slot(slot))
    }

    fn step_inner(&mut self, sel: &TileSelection) -> Result<StepOutcome> {
        let cfg = &self.cfg;
        let s = self.state.as_ref().ok_or_else(|| Error::Config("environment used before reset".into()))?;
        if s.done {
            return Err(Error::Config("episode finished; call reset".into()));
        }
        sel.validate(&s.fov, cfg.dims.levels)?;
        if !self.scheme.compression() && sel.users.iter().flatten().any(|r| r.compressed) {
            return Err(Error::Selection(format!("scheme {} cannot request compressed tiles", self.scheme)));
        }
        let users = cfg.dims.users;
        let timing = TimingConfig {
            tau: s.tau,
            tile_play_time: cfg.tile_play_time,
            compression_ratio: cfg.compression_ratio,
        };
        let device = DeviceModel {
            cmax: s.cmax,
            bits_per_cycle: cfg.bits_per_cycle,
        };

        let targets = (0..users)
            .map(|k| required_sinr(sel, &cfg.ladder, &timing, &device, &self.noise, cfg.sinr_threshold, k))
            .collect::<Result<Vec<_>>>()?;

        let full = sample_channel(&cfg.dims, &cfg.pathloss, s.seed, s.slot)?;
        let channel = if self.aps.len() == cfg.dims.aps {
            full
        } else {
            full.select_aps(&self.aps)?
        };

        let (status, rates, total_power) = match targets.iter().copied().collect::<Option<Vec<f64>>>() {
            None => (SolveStatus::Infeasible, vec![0.0; users], 0.0),
            Some(gammas) => {
                let problem = build_problem(&channel, &gammas, &self.caps, &self.noise)?;
                let sol = self.solver.solve(&problem);
                if sol.status == SolveStatus::Feasible {
                    let rates = sinr_all(&channel, &sol.beamformers, &self.noise)?
                        .into_iter()
                        .map(|g| rate(g, cfg.bandwidth))
                        .collect::<Result<Vec<_>>>()?;
                    (sol.status, rates, sol.total_power)
                } else {
                    (sol.status, vec![0.0; users], 0.0)
                }
            }
        };
        let served = status == SolveStatus::Feasible;

        let mut records = Vec::with_capacity(users);
        for k in 0..users {
            let quality = video_quality(&s.fov, sel, &cfg.ladder, &cfg.weights, k)?;
            let fluctuation = quality_fluctuation(quality, s.quality[k]);
            let credit = match cfg.buffer_mode {
                BufferMode::Strict if !served => 0.0,
                _ => cfg.tile_play_time,
            };
            let buffer = buffer_update(s.buffer[k], credit, s.tau, cfg.buffer_max);
            let rebuffer = rebuffer_indicator(buffer);
            records.push(QoeRecord {
                quality,
                fluctuation,
                rebuffer,
                qoe: qoe_slot(quality, fluctuation, rebuffer, &cfg.weights),
                buffer,
                feasible: served,
            });
        }
        let reward = if served { records.iter().map(|r| r.qoe).sum() } else { 0.0 };

        let slot = s.slot;
        let done = slot >= cfg.dims.slots;
        let next = EpisodeState {
            seed: s.seed,
            slot: slot + 1,
            tau: s.tau,
            cmax: s.cmax,
            quality: records.iter().map(|r| r.quality).collect(),
            buffer: records.iter().map(|r| r.buffer).collect(),
            rates: rates.clone(),
            fov: if done { s.fov.clone() } else { cfg.fov.sample(users, s.seed, slot + 1) },
            done,
        };
        let observation = self.encode(&next);
        self.state = Some(next);
        Ok(StepOutcome {
            slot,
            observation,
            reward,
            records,
            status,
            sinr_targets: targets,
            rates,
            total_power,
            done,
        })
    }
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

impl Environment for HoloEnv {
    fn observation_len(&self) -> usize {
        observation_len(self.cfg.dims.users, self.cfg.fov.fov_size)
    }

    fn heads(&self) -> usize {
        self.cfg.dims.users * self.cfg.fov.fov_size
    }

    fn choices(&self) -> usize {
        self.codec().choices()
    }

    fn reset_episode(&mut self, episode: u64) -> Result<Vec<f64>> {
        self.reset(episode)
    }

    fn act(&mut self, choices: &[usize]) -> Result<Feedback> {
        let sel = decode_action(choices, &self.codec(), self.fov()?)?;
        let out = self.step(&sel)?;
        Ok(Feedback {
            obs: out.observation,
            reward: out.reward,
            done: out.done,
            feasible: out.status == SolveStatus::Feasible,
        })
    }

    /// Quality level minus one; both compression variants of a level cost the same.
    fn choice_cost(&self) -> Vec<f64> {
        let codec = self.codec();
        (0..codec.choices()).map(|c| (c % codec.levels) as f64).collect()
    }

    /// Head (k, j) reads user k's four scalars and the distance and
    /// occlusion of its j-th visible tile.
    fn head_features(&self) -> Option<Vec<Vec<usize>>> {
        let fov = self.cfg.fov.fov_size;
        let per_user = 4 + 2 * fov;
        let heads = (0..self.cfg.dims.users).flat_map(|k| {
            (0..fov).map(move |j| {
                let base = k * per_user;
                let mut idx: Vec<usize> = (base..base + 4).collect();
                idx.extend([base + 4 + 2 * j, base + 5 + 2 * j]);
                idx
            })
        });
        Some(heads.collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn env(scheme: Scheme) -> HoloEnv {
        HoloEnv::new(Config::default().episode().unwrap(), scheme).unwrap()
    }

    #[test]
    fn head_features_point_at_user_and_tile_entries() {
        let e = env(Scheme::Proposed);
        let features = e.head_features().unwrap();
        assert_eq!(features.len(), Environment::heads(&e));
        // user 1, tile 2: user block starts at 16, the tile pair at 16 + 4 + 4
        assert_eq!(features[6 + 2], vec![16, 17, 18, 19, 24, 25]);
        let len = Environment::observation_len(&e);
        assert!(features.iter().flatten().all(|&i| i < len));
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::parse(s.as_str()).unwrap(), s);
        }
        assert!(Scheme::parse("B5").is_err());
    }

    #[test]
    fn reset_initialises_state() {
        let mut e = env(Scheme::Proposed);
        let obs = e.reset(0).unwrap();
        assert_eq!(obs.len(), Environment::observation_len(&e));
        let per_user = 4 + 2 * 6;
        for k in 0..3 {
            assert_eq!(obs[k * per_user], 0.0, "r(0) = 0");
            assert_eq!(obs[k * per_user + 1], 0.0, "Q(0) = 0");
        }
        assert_eq!(e.slot().unwrap(), 1);
        assert!(e.buffers().unwrap().iter().all(|&g| g == e.config().buffer_max / 2.0));
    }

    #[test]
    fn reset_is_reproducible_and_tau_in_range() {
        let mut e = env(Scheme::B1);
        let (lo, hi) = e.config().tau_range;
        let (clo, chi) = e.config().cmax_range;
        let mut distinct = std::collections::HashSet::new();
        for ep in 0..1000 {
            e.reset(ep).unwrap();
            let tau = e.tau().unwrap();
            assert!((lo..=hi).contains(&tau));
            assert!((clo..=chi).contains(&e.cmax().unwrap()));
            distinct.insert(tau.to_bits());
        }
        assert!(distinct.len() > 900);
        let a = e.reset(5).unwrap();
        let b = e.reset(5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_before_reset_and_after_done_fail() {
        let mut e = env(Scheme::B1);
        assert!(e.fov().is_err());
        e.reset(0).unwrap();
        loop {
            let sel = baseline_policy(Scheme::B1, e.fov().unwrap(), 5).unwrap();
            if e.step(&sel).unwrap().done {
                break;
            }
        }
        let sel = baseline_policy(Scheme::B1, e.fov().unwrap(), 5).unwrap();
        assert!(e.step(&sel).is_err());
    }

    #[test]
    fn baseline_selections() {
        let mut e = env(Scheme::B1);
        e.reset(3).unwrap();
        for _ in 0..3 {
            let sel = baseline_policy(Scheme::B1, e.fov().unwrap(), 5).unwrap();
            assert!(sel.users.iter().flatten().all(|r| r.level == 2 && !r.compressed));
            e.step(&sel).unwrap();
        }
        assert!(baseline_policy(Scheme::Proposed, e.fov().unwrap(), 5).is_none());
        assert_eq!(env(Scheme::B3).active_aps(), &[0]);
        assert_eq!(env(Scheme::B2).codec().choices(), 5);
        assert_eq!(env(Scheme::Proposed).codec().choices(), 10);
    }

    #[test]
    fn uncompressed_schemes_reject_compressed_requests() {
        let mut e = env(Scheme::B2);
        e.reset(0).unwrap();
        let sel = TileSelection::uniform(e.fov().unwrap(), 1, true);
        let err = e.step(&sel).unwrap_err();
        assert!(matches!(err, Error::Slot { slot: 1, .. }), "{err}");
    }
}
