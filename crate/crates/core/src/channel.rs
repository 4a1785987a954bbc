//! Block-fading downlink channel, SINR and Shannon rate.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, TAG_CHANNEL};

/// Sizes of one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioDims {
    /// Number of cooperating access points (M).
    pub aps: usize,
    /// Number of single-antenna users (K).
    pub users: usize,
    /// Transmit antennas per AP (I).
    pub antennas: usize,
    /// Tiles in the scene (N).
    pub tiles: usize,
    /// Quality levels per tile (L).
    pub levels: usize,
    /// Slots per episode (T).
    pub slots: usize,
}

impl ScenarioDims {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("aps", self.aps),
            ("users", self.users),
            ("antennas", self.antennas),
            ("tiles", self.tiles),
            ("levels", self.levels),
            ("slots", self.slots),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("scenario.{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Length of a stacked per-user beamformer, `M * I`.
    pub fn stacked_len(&self) -> usize {
        self.aps * self.antennas
    }
}

/// Linear large-scale gain for every (user, AP) link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathlossMatrix {
    users: usize,
    aps: usize,
    gains: Vec<f64>,
}

impl PathlossMatrix {
    pub fn uniform(users: usize, aps: usize, gain: f64) -> Self {
        Self {
            users,
            aps,
            gains: vec![gain; users * aps],
        }
    }

    /// `rows[k][m]` is the gain between user k and AP m.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let users = rows.len();
        let aps = rows.first().map_or(0, Vec::len);
        if users == 0 || aps == 0 || rows.iter().any(|r| r.len() != aps) {
            return Err(Error::Dimension(
                "pathloss rows must be a non-empty rectangular K x M matrix".into(),
            ));
        }
        Ok(Self {
            users,
            aps,
            gains: rows.concat(),
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn aps(&self) -> usize {
        self.aps
    }

    pub fn get(&self, k: usize, m: usize) -> f64 {
        self.gains[k * self.aps + m]
    }
}

/// Complex vectors indexed by (user, AP, antenna), shared layout for
/// channels and beamformers.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTensor {
    users: usize,
    aps: usize,
    antennas: usize,
    data: Vec<Complex64>,
}

impl LinkTensor {
    pub fn zeros(users: usize, aps: usize, antennas: usize) -> Self {
        Self {
            users,
            aps,
            antennas,
            data: vec![Complex64::new(0.0, 0.0); users * aps * antennas],
        }
    }

    pub fn from_vec(users: usize, aps: usize, antennas: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != users * aps * antennas {
            return Err(Error::Dimension(format!(
                "expected {} coefficients for {users}x{aps}x{antennas}, got {}",
                users * aps * antennas,
                data.len()
            )));
        }
        Ok(Self {
            users,
            aps,
            antennas,
            data,
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn aps(&self) -> usize {
        self.aps
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.users, self.aps, self.antennas)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    fn offset(&self, k: usize, m: usize) -> usize {
        (k * self.aps + m) * self.antennas
    }

    pub fn link(&self, k: usize, m: usize) -> &[Complex64] {
        let o = self.offset(k, m);
        &self.data[o..o + self.antennas]
    }

    pub fn link_mut(&mut self, k: usize, m: usize) -> &mut [Complex64] {
        let o = self.offset(k, m);
        &mut self.data[o..o + self.antennas]
    }

    /// AP-major concatenation `[x_{k,1}; ...; x_{k,M}]`. Contiguous by layout.
    pub fn stacked(&self, k: usize) -> &[Complex64] {
        let o = self.offset(k, 0);
        &self.data[o..o + self.aps * self.antennas]
    }

    pub fn stacked_mut(&mut self, k: usize) -> &mut [Complex64] {
        let o = self.offset(k, 0);
        let len = self.aps * self.antennas;
        &mut self.data[o..o + len]
    }

    /// Keeps only the listed APs, in the given order.
    pub fn select_aps(&self, aps: &[usize]) -> Result<Self> {
        if let Some(&bad) = aps.iter().find(|&&m| m >= self.aps) {
            return Err(Error::Dimension(format!("AP index {bad} out of range (M={})", self.aps)));
        }
        let mut out = Self::zeros(self.users, aps.len(), self.antennas);
        for k in 0..self.users {
            for (dst, &m) in aps.iter().enumerate() {
                out.link_mut(k, dst).copy_from_slice(self.link(k, m));
            }
        }
        Ok(out)
    }
}

/// Per-slot channel vectors h_{k,m}.
pub type ChannelRealization = LinkTensor;

/// Per-user, per-AP transmit beamformers w_{k,m}.
pub type Beamformers = LinkTensor;

impl Beamformers {
    /// Σ_k ‖w_{k,m}‖² for AP m.
    pub fn ap_power(&self, m: usize) -> f64 {
        (0..self.users)
            .map(|k| self.link(k, m).iter().map(Complex64::norm_sqr).sum::<f64>())
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.data.iter().map(Complex64::norm_sqr).sum()
    }
}

/// Thermal noise: spectral density times bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// N0 in W/Hz.
    pub psd: f64,
    /// W in Hz.
    pub bandwidth: f64,
}

impl NoiseModel {
    pub fn new(psd: f64, bandwidth: f64) -> Result<Self> {
        if !(psd > 0.0 && psd.is_finite()) {
            return Err(Error::Domain(format!("noise PSD must be positive, got {psd}")));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { psd, bandwidth })
    }

    pub fn from_dbm_per_hz(psd_dbm_hz: f64, bandwidth: f64) -> Result<Self> {
        Self::new(dbm_to_watts(psd_dbm_hz), bandwidth)
    }

    /// N0·W in watts.
    pub fn power(&self) -> f64 {
        self.psd * self.bandwidth
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Draws one slot of i.i.d. Rayleigh fading.
///
/// Entry i of h_{k,m}(t) is CN(0, pathloss(k,m)). Each link has its own
/// generator keyed by `(seed, t, k, m)`, so any slot or link can be
/// regenerated on its own.
pub fn sample_channel(
    dims: &ScenarioDims,
    pathloss: &PathlossMatrix,
    seed: u64,
    t: usize,
) -> Result<ChannelRealization> {
    if pathloss.users() != dims.users || pathloss.aps() != dims.aps {
        return Err(Error::Dimension(format!(
            "pathloss is {}x{}, scenario is {}x{}",
            pathloss.users(),
            pathloss.aps(),
            dims.users,
            dims.aps
        )));
    }
    let mut h = LinkTensor::zeros(dims.users, dims.aps, dims.antennas);
    for k in 0..dims.users {
        for m in 0..dims.aps {
            let gain = pathloss.get(k, m);
            if !(gain > 0.0 && gain.is_finite()) {
                return Err(Error::Domain(format!(
                    "pathloss({k},{m}) must be positive and finite, got {gain}"
                )));
            }
            let sd = (gain / 2.0).sqrt();
            let mut rng = seed::stream(&[seed, TAG_CHANNEL, t as u64, k as u64, m as u64]);
            for c in h.link_mut(k, m) {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *c = Complex64::new(sd * re, sd * im);
            }
        }
    }
    Ok(h)
}

/// Σ_m h_{k,m}ᴴ w_{j,m}: the effective scalar channel from user j's stream to user k.
pub fn effective_gain(ch: &ChannelRealization, w: &Beamformers, k: usize, j: usize) -> Complex64 {
    ch.stacked(k)
        .iter()
        .zip(w.stacked(j))
        .map(|(h, w)| h.conj() * w)
        .sum()
}

fn check_shapes(ch: &ChannelRealization, w: &Beamformers) -> Result<()> {
    if ch.shape() != w.shape() {
        return Err(Error::Dimension(format!(
            "channel shape {:?} vs beamformer shape {:?}",
            ch.shape(),
            w.shape()
        )));
    }
    Ok(())
}

/// SINR of user `k` under joint transmission from all APs.
pub fn sinr(ch: &ChannelRealization, w: &Beamformers, noise: &NoiseModel, k: usize) -> Result<f64> {
    sinr_with_noise_power(ch, w, noise.power(), k)
}

/// [`sinr`] with the noise floor N0·W given directly in watts.
pub fn sinr_with_noise_power(ch: &ChannelRealization, w: &Beamformers, noise_power: f64, k: usize) -> Result<f64> {
    check_shapes(ch, w)?;
    if k >= ch.users() {
        return Err(Error::Dimension(format!("user {k} out of range (K={})", ch.users())));
    }
    let signal = effective_gain(ch, w, k, k).norm_sqr();
    let interference: f64 = (0..ch.users())
        .filter(|&j| j != k)
        .map(|j| effective_gain(ch, w, k, j).norm_sqr())
        .sum();
    Ok(signal / (interference + noise_power))
}

pub fn sinr_all(ch: &ChannelRealization, w: &Beamformers, noise: &NoiseModel) -> Result<Vec<f64>> {
    (0..ch.users()).map(|k| sinr(ch, w, noise, k)).collect()
}

/// Shannon rate W·log2(1+γ) in bit/s.
pub fn rate(gamma: f64, bandwidth: f64) -> Result<f64> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::Domain(format!("SINR must be >= 0, got {gamma}")));
    }
    Ok(bandwidth * gamma.ln_1p() / std::f64::consts::LN_2)
}
