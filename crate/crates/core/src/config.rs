//! Experiment configuration file (TOML) and its resolved runtime form.
//!
//! Every section is optional; missing keys take the defaults below. Physical
//! quantities are given in the units noted on each field, logarithmic ones
//! (dB, dBm) are converted to linear values by [`Config::episode`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{ActMode, PpoHyper};
use crate::channel::{db_to_linear, dbm_to_watts, PathlossMatrix, ScenarioDims};
use crate::error::{Error, Result};
use crate::media::{BitrateLadder, FovProcess};
use crate::qoe::{BufferMode, QoeWeights};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSection,
    pub channel: ChannelSection,
    pub power: PowerSection,
    pub media: MediaSection,
    pub fov: FovSection,
    pub qoe: QoeSection,
    pub observation: ObservationScales,
    pub ppo: PpoHyper,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub aps: usize,
    pub users: usize,
    pub antennas: usize,
    pub tiles: usize,
    pub levels: usize,
    pub slots: usize,
    /// Visible tiles per user per slot.
    pub fov_size: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            aps: 4,
            users: 3,
            antennas: 4,
            tiles: 15,
            levels: 5,
            slots: 20,
            fov_size: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    /// Large-scale gain applied to every link (dB), unless `pathloss_matrix_db` is set.
    pub pathloss_db: f64,
    /// Optional K x M per-link gains (dB).
    pub pathloss_matrix_db: Option<Vec<Vec<f64>>>,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            pathloss_db: -129.0,
            pathloss_matrix_db: None,
            noise_psd_dbm_hz: -174.0,
            bandwidth_hz: 28e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSection {
    /// Per-AP transmit power cap (dBm), unless `ap_power_dbm_each` is set.
    pub ap_power_dbm: f64,
    pub ap_power_dbm_each: Option<Vec<f64>>,
    /// Linear SINR floor ξ.
    pub sinr_threshold: f64,
}

impl Default for PowerSection {
    fn default() -> Self {
        Self {
            ap_power_dbm: 38.0,
            ap_power_dbm_each: None,
            sinr_threshold: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediaSection {
    /// Per-tile bitrate of each quality level (bit/s), ascending.
    pub ladder_bps: Vec<f64>,
    /// T_g (s).
    pub tile_play_time: f64,
    /// φ.
    pub compression_ratio: f64,
    /// b (bits decoded per CPU cycle).
    pub bits_per_cycle: f64,
    /// τ is drawn uniformly from this range at every reset (s).
    pub tau_range: [f64; 2],
    /// C_max is drawn uniformly from this range at every reset (cycles/s).
    pub cmax_range: [f64; 2],
}

impl Default for MediaSection {
    fn default() -> Self {
        Self {
            ladder_bps: vec![3.5e6, 7e6, 10.5e6, 14e6, 17.5e6],
            tile_play_time: 0.03,
            compression_ratio: 0.8,
            bits_per_cycle: 1.0,
            tau_range: [0.005, 0.025],
            cmax_range: [0.5e9, 3.0e9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FovSection {
    pub dist_range: [f64; 2],
    pub occ_max: f64,
}

impl Default for FovSection {
    fn default() -> Self {
        Self {
            dist_range: [1.0, 5.0],
            occ_max: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QoeSection {
    pub alpha1: f64,
    pub alpha2: f64,
    pub w_dist: f64,
    pub w_o: f64,
    /// Defaults to 2·μ_L/μ_1, which keeps every level's log term positive.
    pub w_mu: Option<f64>,
    /// G_max (s); defaults to 10·T_g.
    pub buffer_max: Option<f64>,
    /// G(0) (s); defaults to G_max/2.
    pub initial_buffer: Option<f64>,
    pub buffer_mode: BufferMode,
}

impl Default for QoeSection {
    fn default() -> Self {
        Self {
            alpha1: 0.5,
            alpha2: 0.5,
            w_dist: 1.0,
            w_o: 1.0,
            w_mu: None,
            buffer_max: None,
            initial_buffer: None,
            buffer_mode: BufferMode::Literal,
        }
    }
}

/// Divisors applied to raw observation features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationScales {
    pub rate: f64,
    pub quality: f64,
    pub tau: f64,
    pub cmax: f64,
    pub dist: f64,
    pub occ: f64,
}

impl Default for ObservationScales {
    fn default() -> Self {
        Self {
            rate: 1e8,
            quality: 10.0,
            tau: 0.01,
            cmax: 1e9,
            dist: 5.0,
            occ: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    pub train_episodes: usize,
    /// Evaluation episodes per seed.
    pub eval_episodes: usize,
    pub eval_seeds: Vec<u64>,
    /// Discount factors trained for the convergence comparison.
    pub discounts: Vec<f64>,
    pub bandwidth_grid_hz: Vec<f64>,
    pub tau_grid_s: Vec<f64>,
    pub cmax_grid: Vec<f64>,
    /// τ (s) held fixed in evaluations and in the W and C_max sweeps.
    pub operating_tau_s: f64,
    /// Fill the wall-time column of result rows; off keeps CSVs byte-stable.
    pub record_wall_time: bool,
    /// How learned policies act in evaluations: `sample` or `greedy`.
    pub eval_action: ActMode,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 1,
            train_episodes: 6000,
            eval_episodes: 10,
            eval_seeds: vec![101, 102, 103, 104],
            discounts: vec![0.90, 0.99],
            bandwidth_grid_hz: vec![10e6, 19e6, 28e6, 37e6, 46e6],
            tau_grid_s: vec![0.005, 0.010, 0.015, 0.020, 0.025],
            cmax_grid: vec![0.5e9, 1.0e9, 1.5e9, 2.0e9, 2.5e9, 3.0e9],
            operating_tau_s: 0.015,
            record_wall_time: false,
            eval_action: ActMode::Sample,
        }
    }
}

/// Everything one environment needs, in linear SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub dims: ScenarioDims,
    pub pathloss: PathlossMatrix,
    /// N0 (W/Hz).
    pub noise_psd: f64,
    /// W (Hz).
    pub bandwidth: f64,
    /// P_m (W).
    pub power_caps: Vec<f64>,
    pub sinr_threshold: f64,
    pub ladder: BitrateLadder,
    pub tile_play_time: f64,
    pub compression_ratio: f64,
    pub bits_per_cycle: f64,
    pub tau_range: (f64, f64),
    pub cmax_range: (f64, f64),
    pub fov: FovProcess,
    pub weights: QoeWeights,
    pub buffer_max: f64,
    pub initial_buffer: f64,
    pub buffer_mode: BufferMode,
    pub observation: ObservationScales,
    pub seed: u64,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dims(&self) -> ScenarioDims {
        let s = &self.scenario;
        ScenarioDims {
            aps: s.aps,
            users: s.users,
            antennas: s.antennas,
            tiles: s.tiles,
            levels: s.levels,
            slots: s.slots,
        }
    }

    /// Resolves defaults and units and validates every component.
    pub fn episode(&self) -> Result<EpisodeConfig> {
        let dims = self.dims();
        dims.validate()?;

        let pathloss = match &self.channel.pathloss_matrix_db {
            Some(rows) => {
                let linear: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&db| db_to_linear(db)).collect()).collect();
                PathlossMatrix::from_rows(&linear).map_err(|e| Error::Config(format!("channel.pathloss_matrix_db: {e}")))?
            }
            None => PathlossMatrix::uniform(dims.users, dims.aps, db_to_linear(self.channel.pathloss_db)),
        };
        if pathloss.users() != dims.users || pathloss.aps() != dims.aps {
            return Err(Error::Config(format!(
                "channel.pathloss_matrix_db is {}x{}, scenario is {}x{}",
                pathloss.users(),
                pathloss.aps(),
                dims.users,
                dims.aps
            )));
        }

        let power_caps: Vec<f64> = match &self.power.ap_power_dbm_each {
            Some(each) => each.iter().map(|&p| dbm_to_watts(p)).collect(),
            None => vec![dbm_to_watts(self.power.ap_power_dbm); dims.aps],
        };
        if power_caps.len() != dims.aps {
            return Err(Error::Config(format!(
                "power.ap_power_dbm_each has {} entries for {} APs",
                power_caps.len(),
                dims.aps
            )));
        }
        if !(self.power.sinr_threshold > 0.0) {
            return Err(Error::Config("power.sinr_threshold must be > 0".into()));
        }

        let ladder = BitrateLadder::new(self.media.ladder_bps.clone())
            .map_err(|e| Error::Config(format!("media.ladder_bps: {e}")))?;
        if ladder.levels() != dims.levels {
            return Err(Error::Config(format!(
                "media.ladder_bps has {} entries, scenario.levels is {}",
                ladder.levels(),
                dims.levels
            )));
        }

        let noise_psd = dbm_to_watts(self.channel.noise_psd_dbm_hz);
        let bandwidth = self.channel.bandwidth_hz;
        if !(bandwidth > 0.0) {
            return Err(Error::Config("channel.bandwidth_hz must be > 0".into()));
        }

        let m = &self.media;
        check_range("media.tau_range", m.tau_range)?;
        check_range("media.cmax_range", m.cmax_range)?;
        if !(m.tile_play_time > 0.0) || !(m.bits_per_cycle > 0.0) {
            return Err(Error::Config("media.tile_play_time and media.bits_per_cycle must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&m.compression_ratio) {
            return Err(Error::Config("media.compression_ratio must be in [0,1]".into()));
        }

        let fov = FovProcess {
            tiles: dims.tiles,
            fov_size: self.scenario.fov_size,
            dist_min: self.fov.dist_range[0],
            dist_max: self.fov.dist_range[1],
            occ_max: self.fov.occ_max,
        };
        fov.validate()?;

        let q = &self.qoe;
        let weights = QoeWeights {
            alpha1: q.alpha1,
            alpha2: q.alpha2,
            w_dist: q.w_dist,
            w_o: q.w_o,
            w_mu: q.w_mu.unwrap_or(2.0 * ladder.top() / ladder.as_slice()[0]),
        };
        weights.validate()?;
        let buffer_max = q.buffer_max.unwrap_or(10.0 * m.tile_play_time);
        let initial_buffer = q.initial_buffer.unwrap_or(buffer_max / 2.0);
        if !(buffer_max >= 0.0) || !(0.0..=buffer_max).contains(&initial_buffer) {
            return Err(Error::Config("need 0 <= qoe.initial_buffer <= qoe.buffer_max".into()));
        }

        Ok(EpisodeConfig {
            dims,
            pathloss,
            noise_psd,
            bandwidth,
            power_caps,
            sinr_threshold: self.power.sinr_threshold,
            ladder,
            tile_play_time: m.tile_play_time,
            compression_ratio: m.compression_ratio,
            bits_per_cycle: m.bits_per_cycle,
            tau_range: (m.tau_range[0], m.tau_range[1]),
            cmax_range: (m.cmax_range[0], m.cmax_range[1]),
            fov,
            weights,
            buffer_max,
            initial_buffer,
            buffer_mode: q.buffer_mode,
            observation: self.observation,
            seed: self.experiment.seed,
        })
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0] > 0.0 && r[1] >= r[0] && r[1].is_finite()) {
        return Err(Error::Config(format!("{name} must satisfy 0 < lo <= hi, got {r:?}")));
    }
    Ok(())
}

/// Parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "W")]
    Bandwidth,
    #[serde(rename = "tau")]
    Tau,
    #[serde(rename = "C_max")]
    Cmax,
    #[serde(rename = "discount")]
    Discount,
}

impl SweepVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVariable::Bandwidth => "W",
            SweepVariable::Tau => "tau",
            SweepVariable::Cmax => "C_max",
            SweepVariable::Discount => "discount",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "W" | "w" | "bandwidth" => Ok(SweepVariable::Bandwidth),
            "tau" => Ok(SweepVariable::Tau),
            "C_max" | "cmax" => Ok(SweepVariable::Cmax),
            "discount" | "gamma" => Ok(SweepVariable::Discount),
            other => Err(Error::Config(format!("unknown sweep variable `{other}` (W, tau, C_max, discount)"))),
        }
    }
}

impl EpisodeConfig {
    /// Copy with one environment parameter pinned to `value`.
    /// `Discount` is a training parameter and leaves the environment unchanged.
    pub fn with_override(&self, var: SweepVariable, value: f64) -> Self {
        let mut cfg = self.clone();
        match var {
            SweepVariable::Bandwidth => cfg.bandwidth = value,
            SweepVariable::Tau => cfg.tau_range = (value, value),
            SweepVariable::Cmax => cfg.cmax_range = (value, value),
            SweepVariable::Discount => {}
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = Config::default().episode().unwrap();
        assert_eq!(cfg.dims.aps, 4);
        assert_eq!(cfg.dims.users, 3);
        assert!((cfg.power_caps[0] - 6.309_573_444_801_933).abs() < 1e-12);
        assert!((cfg.noise_psd - 3.981_071_705_534_97e-21).abs() < 1e-30);
        assert_eq!(cfg.weights.alpha1, 0.5);
        // default w_mu keeps the lowest level's log argument above 1
        assert!(cfg.weights.w_mu / cfg.ladder.top() * cfg.ladder.as_slice()[0] > 1.0);
        assert!((cfg.buffer_max - 10.0 * cfg.tile_play_time).abs() < 1e-15);
        assert_eq!(cfg.initial_buffer, cfg.buffer_max / 2.0);
    }

    #[test]
    fn partial_file_overrides_defaults() {
        let text = "[scenario]\naps = 2\nusers = 2\n\n[channel]\nbandwidth_hz = 1e7\n";
        let cfg = Config::from_toml_str(text).unwrap();
        assert_eq!(cfg.scenario.aps, 2);
        assert_eq!(cfg.scenario.antennas, 4);
        let ep = cfg.episode().unwrap();
        assert_eq!(ep.bandwidth, 1e7);
        assert_eq!(ep.power_caps.len(), 2);
    }

    #[test]
    fn malformed_file_reports_location() {
        let err = Config::from_toml_str("[scenario]\naps = \"four\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        let err = Config::from_toml_str("[media]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut cfg = Config::default();
        cfg.media.tau_range = [0.02, 0.01];
        assert!(matches!(cfg.episode(), Err(Error::Config(_))));
        let mut cfg = Config::default();
        cfg.media.ladder_bps = vec![1e6, 2e6];
        assert!(matches!(cfg.episode(), Err(Error::Config(_))));
        let mut cfg = Config::default();
        cfg.scenario.fov_size = 16;
        assert!(cfg.episode().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = Config::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(Config::from_toml_str(&text).unwrap(), cfg);
    }
}
