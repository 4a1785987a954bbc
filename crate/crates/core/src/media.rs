//! Tiles, bitrate ladder, field of view, and the per-slot delivery budget.
//!
//! A slot is deliverable for user k when the FoV payload can be pushed over
//! the air and the compressed part decoded on the device within τ. Inverting
//! that budget through the Shannon rate gives the SINR each user needs, which
//! is what the beamforming stage consumes.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::NoiseModel;
use crate::error::{Error, Result};
use crate::seed::{self, TAG_FOV};

/// Ascending per-tile bitrates μ_1 ≤ … ≤ μ_L in bit/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BitrateLadder(Vec<f64>);

impl BitrateLadder {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Config("bitrate ladder is empty".into()));
        }
        if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::Config("bitrates must be positive and finite".into()));
        }
        if rates.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("bitrate ladder must be non-decreasing".into()));
        }
        Ok(Self(rates))
    }

    pub fn levels(&self) -> usize {
        self.0.len()
    }

    /// Bitrate of a 1-based quality level.
    pub fn rate(&self, level: usize) -> Result<f64> {
        if level == 0 || level > self.0.len() {
            return Err(Error::Selection(format!(
                "quality level {level} outside 1..={}",
                self.0.len()
            )));
        }
        Ok(self.0[level - 1])
    }

    pub fn top(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for BitrateLadder {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BitrateLadder> for Vec<f64> {
    fn from(l: BitrateLadder) -> Self {
        l.0
    }
}

/// One visible tile: virtual distance and occlusion level as seen by a user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileView {
    pub tile: usize,
    pub dist: f64,
    pub occ: f64,
}

/// Visible tiles N_k(t) for every user, in a fixed per-user order.
///
/// Fully occluded tiles never appear; every listed tile has `dist > 0`
/// and `occ >= 1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FovState {
    pub users: Vec<Vec<TileView>>,
}

impl FovState {
    pub fn user(&self, k: usize) -> &[TileView] {
        &self.users[k]
    }

    pub fn validate(&self, tiles: usize) -> Result<()> {
        for (k, views) in self.users.iter().enumerate() {
            if views.len() > tiles {
                return Err(Error::Dimension(format!("user {k} sees {} > N tiles", views.len())));
            }
            for v in views {
                if v.tile >= tiles {
                    return Err(Error::Dimension(format!("tile {} out of range (N={tiles})", v.tile)));
                }
                if !(v.dist > 0.0) || !(v.occ >= 1.0) {
                    return Err(Error::Domain(format!(
                        "tile {} for user {k}: dist={} occ={} (need dist>0, occ>=1)",
                        v.tile, v.dist, v.occ
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Requested version of one visible tile: `level` in 1..=L, `compressed` is η.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileRequest {
    pub tile: usize,
    pub level: usize,
    pub compressed: bool,
}

/// Per-user tile requests for one slot.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TileSelection {
    pub users: Vec<Vec<TileRequest>>,
}

impl TileSelection {
    /// Same choice for every visible tile of every user.
    pub fn uniform(fov: &FovState, level: usize, compressed: bool) -> Self {
        Self {
            users: fov
                .users
                .iter()
                .map(|views| {
                    views
                        .iter()
                        .map(|v| TileRequest {
                            tile: v.tile,
                            level,
                            compressed,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn user(&self, k: usize) -> &[TileRequest] {
        &self.users[k]
    }

    /// Checks that the selection covers exactly the FoV (same tiles, same
    /// order) and that every level is on the ladder.
    pub fn validate(&self, fov: &FovState, levels: usize) -> Result<()> {
        if self.users.len() != fov.users.len() {
            return Err(Error::Selection(format!(
                "selection has {} users, FoV has {}",
                self.users.len(),
                fov.users.len()
            )));
        }
        for (k, (reqs, views)) in self.users.iter().zip(&fov.users).enumerate() {
            if reqs.len() != views.len() {
                return Err(Error::Selection(format!(
                    "user {k}: {} requests for {} visible tiles",
                    reqs.len(),
                    views.len()
                )));
            }
            for (r, v) in reqs.iter().zip(views) {
                if r.tile != v.tile {
                    return Err(Error::Selection(format!(
                        "user {k}: tile {} requested but not in FoV position (expected {})",
                        r.tile, v.tile
                    )));
                }
                if r.level == 0 || r.level > levels {
                    return Err(Error::Selection(format!(
                        "user {k}, tile {}: level {} outside 1..={levels}",
                        r.tile, r.level
                    )));
                }
            }
        }
        Ok(())
    }
}

/// User-device decoding capability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    /// C_max in cycles/s.
    pub cmax: f64,
    /// b, bits decoded per cycle.
    pub bits_per_cycle: f64,
}

impl DeviceModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.cmax > 0.0) || !(self.bits_per_cycle > 0.0) {
            return Err(Error::Config("device cmax and bits_per_cycle must be > 0".into()));
        }
        Ok(())
    }

    /// Decoding throughput C_max·b in bit/s.
    pub fn throughput(&self) -> f64 {
        self.cmax * self.bits_per_cycle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    /// Slot duration τ (s).
    pub tau: f64,
    /// Play time of one tile T_g (s).
    pub tile_play_time: f64,
    /// Compressed-to-uncompressed size ratio φ.
    pub compression_ratio: f64,
}

impl TimingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.tile_play_time > 0.0) {
            return Err(Error::Config("tau and tile_play_time must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.compression_ratio) {
            return Err(Error::Config(format!(
                "compression_ratio must be in [0,1], got {}",
                self.compression_ratio
            )));
        }
        Ok(())
    }
}

fn user_requests(sel: &TileSelection, k: usize) -> Result<&[TileRequest]> {
    sel.users
        .get(k)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::Selection(format!("no requests for user {k}")))
}

/// Bits sent to user k: uncompressed tiles at μ_l·T_g, compressed at φ·μ_l·T_g.
pub fn payload_bits(sel: &TileSelection, ladder: &BitrateLadder, timing: &TimingConfig, k: usize) -> Result<f64> {
    let mut bits = 0.0;
    for r in user_requests(sel, k)? {
        let size = ladder.rate(r.level)? * timing.tile_play_time;
        let eta = if r.compressed { 1.0 } else { 0.0 };
        bits += (1.0 - eta) * size + timing.compression_ratio * eta * size;
    }
    Ok(bits)
}

/// Air time for `payload` bits at `rate` bit/s; infinite when the rate is zero.
pub fn transmission_time(payload: f64, rate: f64) -> Result<f64> {
    if rate.is_nan() || rate < 0.0 {
        return Err(Error::Domain(format!("rate must be >= 0, got {rate}")));
    }
    if payload < 0.0 {
        return Err(Error::Domain(format!("payload must be >= 0, got {payload}")));
    }
    if payload == 0.0 {
        return Ok(0.0);
    }
    if rate == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(payload / rate)
}

/// Device time to decompress user k's compressed tiles.
pub fn decoding_time(
    sel: &TileSelection,
    ladder: &BitrateLadder,
    timing: &TimingConfig,
    dev: &DeviceModel,
    k: usize,
) -> Result<f64> {
    let mut compressed_bits = 0.0;
    for r in user_requests(sel, k)? {
        if r.compressed {
            compressed_bits += timing.compression_ratio * ladder.rate(r.level)? * timing.tile_play_time;
        }
    }
    Ok(compressed_bits / dev.throughput())
}

/// Delivery and decoding both fit in the slot (non-strict).
pub fn slot_feasible(transmission: f64, decoding: f64, tau: f64) -> bool {
    transmission + decoding <= tau
}

/// Smallest SINR that meets both the reliability threshold `xi` and the slot
/// deadline for user k.
///
/// Returns `None` when decoding alone uses the whole slot, or when the
/// required SINR overflows, since then no beamformer can help.
pub fn required_sinr(
    sel: &TileSelection,
    ladder: &BitrateLadder,
    timing: &TimingConfig,
    dev: &DeviceModel,
    noise: &NoiseModel,
    xi: f64,
    k: usize,
) -> Result<Option<f64>> {
    let payload = payload_bits(sel, ladder, timing, k)?;
    let decode = decoding_time(sel, ladder, timing, dev, k)?;
    Ok(sinr_for_deadline(payload, decode, timing.tau, noise.bandwidth, xi))
}

/// max(ξ, 2^{D / (W (τ − T_d))} − 1) for `payload` bits D, or `None` when
/// T_d ≥ τ or the value overflows.
pub fn sinr_for_deadline(payload: f64, decode: f64, tau: f64, bandwidth: f64, xi: f64) -> Option<f64> {
    if decode >= tau {
        return None;
    }
    let gamma = (payload / (bandwidth * (tau - decode))).exp2() - 1.0;
    gamma.is_finite().then(|| xi.max(gamma))
}

/// Generates N_k(t) with virtual distances and occlusion levels.
///
/// Each (slot, user) draws `fov_size` distinct tiles uniformly from the N
/// tiles, listed in ascending tile order, with `dist ~ U[dist_min, dist_max]`
/// and `occ ~ U[1, occ_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovProcess {
    pub tiles: usize,
    pub fov_size: usize,
    pub dist_min: f64,
    pub dist_max: f64,
    pub occ_max: f64,
}

impl FovProcess {
    pub fn validate(&self) -> Result<()> {
        if self.fov_size == 0 || self.fov_size > self.tiles {
            return Err(Error::Config(format!(
                "fov_size must be in 1..={} (tiles), got {}",
                self.tiles, self.fov_size
            )));
        }
        if !(self.dist_min > 0.0 && self.dist_max >= self.dist_min) {
            return Err(Error::Config("need 0 < dist_min <= dist_max".into()));
        }
        if !(self.occ_max >= 1.0) {
            return Err(Error::Config("occ_max must be >= 1".into()));
        }
        Ok(())
    }

    pub fn sample(&self, users: usize, seed: u64, t: usize) -> FovState {
        let users = (0..users)
            .map(|k| {
                let mut rng = seed::stream(&[seed, TAG_FOV, t as u64, k as u64]);
                let mut ids = index::sample(&mut rng, self.tiles, self.fov_size).into_vec();
                ids.sort_unstable();
                ids.into_iter()
                    .map(|tile| TileView {
                        tile,
                        dist: uniform(&mut rng, self.dist_min, self.dist_max),
                        occ: uniform(&mut rng, 1.0, self.occ_max),
                    })
                    .collect()
            })
            .collect();
        FovState { users }
    }
}

pub(crate) fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_tile(level: usize, compressed: bool) -> TileSelection {
        TileSelection {
            users: vec![vec![TileRequest {
                tile: 0,
                level,
                compressed,
            }]],
        }
    }

    fn timing(tg: f64, phi: f64) -> TimingConfig {
        TimingConfig {
            tau: 0.015,
            tile_play_time: tg,
            compression_ratio: phi,
        }
    }

    #[test]
    fn ladder_validation() {
        assert!(BitrateLadder::new(vec![1.0, 2.0, 2.0, 3.0]).is_ok());
        assert!(BitrateLadder::new(vec![2.0, 1.0]).is_err());
        assert!(BitrateLadder::new(vec![0.0, 1.0]).is_err());
        assert!(BitrateLadder::new(vec![]).is_err());
    }

    #[test]
    fn payload_single_tile() {
        let ladder = BitrateLadder::new(vec![1e6]).unwrap();
        let t = timing(0.015, 0.8);
        let raw = payload_bits(&one_tile(1, false), &ladder, &t, 0).unwrap();
        let comp = payload_bits(&one_tile(1, true), &ladder, &t, 0).unwrap();
        assert!((raw - 15000.0).abs() < 1e-9);
        assert!((comp - 12000.0).abs() < 1e-9);
    }

    #[test]
    fn payload_matches_manual_sum() {
        let ladder = BitrateLadder::new(vec![1e6, 2.5e6, 4e6, 9e6]).unwrap();
        let t = timing(0.02, 0.7);
        let reqs = [(2, true), (1, false), (4, true), (3, false), (4, false), (1, true)];
        let sel = TileSelection {
            users: vec![reqs
                .iter()
                .enumerate()
                .map(|(i, &(level, compressed))| TileRequest { tile: i, level, compressed })
                .collect()],
        };
        // term by term: 0.7*2.5e6*0.02 + 1e6*0.02 + 0.7*9e6*0.02 + 4e6*0.02 + 9e6*0.02 + 0.7*1e6*0.02
        let manual = 35000.0 + 20000.0 + 126000.0 + 80000.0 + 180000.0 + 14000.0;
        let got = payload_bits(&sel, &ladder, &t, 0).unwrap();
        assert!((got - manual).abs() <= 1e-9 * manual);
    }

    #[test]
    fn transmission_time_examples() {
        assert!((transmission_time(15000.0, 1e6).unwrap() - 0.015).abs() < 1e-15);
        assert_eq!(transmission_time(0.0, 1e6).unwrap(), 0.0);
        assert_eq!(transmission_time(1.0, 0.0).unwrap(), f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p: f64 = rng.random_range(0.0..1e7);
            let r: f64 = rng.random_range(1.0..1e9);
            assert_eq!(transmission_time(p, r).unwrap(), p / r);
        }
    }

    #[test]
    fn decoding_time_examples() {
        let ladder = BitrateLadder::new(vec![1e6]).unwrap();
        let t = timing(0.015, 0.8);
        let dev = DeviceModel { cmax: 1e9, bits_per_cycle: 8.0 };
        assert_eq!(decoding_time(&one_tile(1, false), &ladder, &t, &dev, 0).unwrap(), 0.0);
        let td = decoding_time(&one_tile(1, true), &ladder, &t, &dev, 0).unwrap();
        assert!((td - 12000.0 / 8e9).abs() < 1e-18);
        let fast = DeviceModel { cmax: 2e9, ..dev };
        let td2 = decoding_time(&one_tile(1, true), &ladder, &t, &fast, 0).unwrap();
        assert!((td2 * 2.0 - td).abs() < 1e-18);
    }

    #[test]
    fn slot_feasibility_boundary() {
        assert!(slot_feasible(0.010, 0.001, 0.015));
        assert!(!slot_feasible(0.015, 0.001, 0.015));
        assert!(slot_feasible(0.25, 0.5, 0.75));
    }

    #[test]
    fn required_sinr_edges() {
        let ladder = BitrateLadder::new(vec![1e6]).unwrap();
        let noise = NoiseModel::new(1e-20, 1e6).unwrap();
        let dev = DeviceModel { cmax: 1e9, bits_per_cycle: 8.0 };
        let empty = TileSelection { users: vec![vec![]] };
        let t = timing(0.015, 0.8);
        assert_eq!(required_sinr(&empty, &ladder, &t, &dev, &noise, 0.8, 0).unwrap(), Some(0.8));

        // D = W·τ with no decoding -> 2^1 - 1 = 1.
        let t = TimingConfig { tau: 0.015, tile_play_time: 0.015, compression_ratio: 0.8 };
        let noise = NoiseModel::new(1e-20, 1e6).unwrap();
        let g = required_sinr(&one_tile(1, false), &ladder, &t, &dev, &noise, 0.8, 0).unwrap().unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        let g = required_sinr(&one_tile(1, false), &ladder, &t, &dev, &noise, 2.5, 0).unwrap().unwrap();
        assert_eq!(g, 2.5);

        // decoding alone exceeds the slot
        let slow = DeviceModel { cmax: 1.0, bits_per_cycle: 1.0 };
        assert_eq!(required_sinr(&one_tile(1, true), &ladder, &t, &slow, &noise, 0.8, 0).unwrap(), None);
    }

    #[test]
    fn selection_validation_catches_foreign_tiles() {
        let fov = FovState {
            users: vec![vec![TileView { tile: 3, dist: 1.0, occ: 1.0 }]],
        };
        assert!(TileSelection::uniform(&fov, 2, false).validate(&fov, 4).is_ok());
        let wrong = TileSelection {
            users: vec![vec![TileRequest { tile: 4, level: 1, compressed: false }]],
        };
        assert!(matches!(wrong.validate(&fov, 4), Err(Error::Selection(_))));
        let bad_level = TileSelection::uniform(&fov, 5, false);
        assert!(bad_level.validate(&fov, 4).is_err());
    }

    #[test]
    fn fov_process_shape_and_ranges() {
        let p = FovProcess { tiles: 15, fov_size: 6, dist_min: 1.0, dist_max: 5.0, occ_max: 4.0 };
        let a = p.sample(3, 9, 2);
        assert_eq!(a, p.sample(3, 9, 2));
        assert_ne!(a, p.sample(3, 9, 3));
        a.validate(15).unwrap();
        for views in &a.users {
            assert_eq!(views.len(), 6);
            assert!(views.windows(2).all(|w| w[0].tile < w[1].tile));
            assert!(views.iter().all(|v| (1.0..=5.0).contains(&v.dist) && (1.0..=4.0).contains(&v.occ)));
        }
    }

    fn arb_selection() -> impl Strategy<Value = Vec<(usize, bool)>> {
        prop::collection::vec((1usize..=4, any::<bool>()), 1..8)
    }

    fn to_sel(reqs: &[(usize, bool)]) -> TileSelection {
        TileSelection {
            users: vec![reqs
                .iter()
                .enumerate()
                .map(|(i, &(level, compressed))| TileRequest { tile: i, level, compressed })
                .collect()],
        }
    }

    proptest! {
        #[test]
        fn payload_monotone_in_level_and_eta(reqs in arb_selection(), idx in 0usize..8, phi in 0.0f64..=1.0) {
            let ladder = BitrateLadder::new(vec![1e6, 2e6, 4e6, 8e6]).unwrap();
            let t = timing(0.02, phi);
            let i = idx % reqs.len();
            let base = payload_bits(&to_sel(&reqs), &ladder, &t, 0).unwrap();
            let mut up = reqs.clone();
            up[i].0 = (up[i].0 + 1).min(4);
            prop_assert!(payload_bits(&to_sel(&up), &ladder, &t, 0).unwrap() >= base);
            let mut comp = reqs.clone();
            comp[i].1 = true;
            prop_assert!(payload_bits(&to_sel(&comp), &ladder, &t, 0).unwrap() <= base);
        }

        #[test]
        fn phi_one_makes_compression_free(reqs in arb_selection()) {
            let ladder = BitrateLadder::new(vec![1e6, 2e6, 4e6, 8e6]).unwrap();
            let t = timing(0.02, 1.0);
            let flipped: Vec<_> = reqs.iter().map(|&(l, c)| (l, !c)).collect();
            let a = payload_bits(&to_sel(&reqs), &ladder, &t, 0).unwrap();
            let b = payload_bits(&to_sel(&flipped), &ladder, &t, 0).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn required_sinr_round_trip(reqs in arb_selection(), cmax in 1e8f64..5e9, bw in 1e6f64..1e8) {
            let ladder = BitrateLadder::new(vec![1e6, 2e6, 4e6, 8e6]).unwrap();
            let t = timing(0.02, 0.8);
            let dev = DeviceModel { cmax, bits_per_cycle: 1.0 };
            let noise = NoiseModel::new(4e-21, bw).unwrap();
            let sel = to_sel(&reqs);
            if let Some(g) = required_sinr(&sel, &ladder, &t, &dev, &noise, 1e-9, 0).unwrap() {
                let r = crate::channel::rate(g, bw).unwrap();
                let tr = transmission_time(payload_bits(&sel, &ladder, &t, 0).unwrap(), r).unwrap();
                let td = decoding_time(&sel, &ladder, &t, &dev, 0).unwrap();
                if g > 1e-9 {
                    prop_assert!(((tr + td) - t.tau).abs() <= 1e-9 * t.tau);
                }
            }
        }
    }
}
