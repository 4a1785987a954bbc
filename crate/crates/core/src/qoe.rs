//! Per-slot quality of experience: visual quality, quality fluctuation,
//! and a rebuffering penalty driven by a playback buffer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{BitrateLadder, FovState, TileSelection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeWeights {
    /// Weight on the quality change |Q(t) - Q(t-1)|.
    pub alpha1: f64,
    /// Weight on a rebuffering event.
    pub alpha2: f64,
    pub w_dist: f64,
    pub w_o: f64,
    /// Bitrate scale inside the log: ln((w_mu / μ_L) · μ_l).
    pub w_mu: f64,
}

impl QoeWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return Err(Error::Config("alpha1 and alpha2 must be >= 0".into()));
        }
        if !(self.w_dist > 0.0 && self.w_o > 0.0 && self.w_mu > 0.0) {
            return Err(Error::Config("w_dist, w_o and w_mu must be > 0".into()));
        }
        Ok(())
    }
}

/// How the buffer evolves on a slot whose tiles were not delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BufferMode {
    /// G(t) = min(G_max, [G(t-1) + T_g - τ]⁺) on every slot.
    #[default]
    Literal,
    /// Same as literal on delivered slots; undelivered slots add no content,
    /// G(t) = min(G_max, [G(t-1) - τ]⁺).
    Strict,
}

/// One (user, slot) cell of the QoE log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeRecord {
    pub quality: f64,
    pub fluctuation: f64,
    pub rebuffer: u8,
    pub qoe: f64,
    /// Buffer level after this slot's update (s).
    pub buffer: f64,
    /// Whether the slot's tiles were actually delivered.
    pub feasible: bool,
}

/// Weighted log-bitrate quality summed over the visible tiles of user k.
pub fn video_quality(
    fov: &FovState,
    sel: &TileSelection,
    ladder: &BitrateLadder,
    weights: &QoeWeights,
    k: usize,
) -> Result<f64> {
    let views = fov
        .users
        .get(k)
        .ok_or_else(|| Error::Dimension(format!("no FoV for user {k}")))?;
    let reqs = sel
        .users
        .get(k)
        .ok_or_else(|| Error::Selection(format!("no requests for user {k}")))?;
    if views.len() != reqs.len() {
        return Err(Error::Selection(format!(
            "user {k}: {} requests for {} visible tiles",
            reqs.len(),
            views.len()
        )));
    }
    let scale = weights.w_mu / ladder.top();
    let mut q = 0.0;
    for (v, r) in views.iter().zip(reqs) {
        if v.tile != r.tile {
            return Err(Error::Selection(format!("user {k}: tile {} not in FoV", r.tile)));
        }
        let importance = weights.w_dist / v.dist + weights.w_o / v.occ;
        q += importance * (scale * ladder.rate(r.level)?).ln();
    }
    Ok(q)
}

pub fn quality_fluctuation(q: f64, q_prev: f64) -> f64 {
    (q - q_prev).abs()
}

/// G(t) = min(G_max, [G(t-1) + T_g - τ]⁺).
pub fn buffer_update(g_prev: f64, tile_play_time: f64, tau: f64, g_max: f64) -> f64 {
    g_max.min((g_prev + (tile_play_time - tau)).max(0.0))
}

/// 1 iff the buffer is empty.
pub fn rebuffer_indicator(g: f64) -> u8 {
    u8::from(g == 0.0)
}

pub fn qoe_slot(quality: f64, fluctuation: f64, rebuffer: u8, weights: &QoeWeights) -> f64 {
    quality - weights.alpha1 * fluctuation - weights.alpha2 * f64::from(rebuffer)
}

/// Dense (user, slot) grid of QoE records.
#[derive(Debug, Clone, PartialEq)]
pub struct QoeGrid {
    users: usize,
    slots: usize,
    cells: Vec<Option<QoeRecord>>,
}

impl QoeGrid {
    pub fn new(users: usize, slots: usize) -> Self {
        Self {
            users,
            slots,
            cells: vec![None; users * slots],
        }
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    /// `t` is 0-based here.
    pub fn set(&mut self, k: usize, t: usize, rec: QoeRecord) -> Result<()> {
        if k >= self.users || t >= self.slots {
            return Err(Error::Dimension(format!(
                "cell ({k},{t}) outside {}x{} grid",
                self.users, self.slots
            )));
        }
        self.cells[t * self.users + k] = Some(rec);
        Ok(())
    }

    pub fn get(&self, k: usize, t: usize) -> Option<&QoeRecord> {
        self.cells.get(t * self.users + k).and_then(Option::as_ref)
    }
}

/// Σ_t Σ_k QoE_k(t); every cell must be filled.
pub fn qoe_aggregate(grid: &QoeGrid) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..grid.slots {
        for k in 0..grid.users {
            total += grid
                .get(k, t)
                .ok_or_else(|| Error::Dimension(format!("missing QoE record for user {k}, slot {t}")))?
                .qoe;
        }
    }
    Ok(total)
}
