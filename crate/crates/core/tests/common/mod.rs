//! Scenarios shared by the integration and acceptance tests.
#![allow(dead_code)]

use holostream::config::Config;
use holostream::environment::{HoloEnv, Scheme};
use holostream::media::{TileRequest, TileSelection};

/// One AP, one user, one always-visible tile, strong channel.
///
/// Ladder [1, 2] Mbit/s, T_g = 20 ms, φ = 0.5, b = 2, W = 10 MHz, ξ = 0.1,
/// α1 = 0.3, α2 = 0.7, w_dist = 2, w_o = 0.5, w_μ = 4, G_max = 0.1 s, G(0) = 0.
pub fn one_tile_config(tau: f64) -> Config {
    let text = format!(
        r#"
[scenario]
aps = 1
users = 1
antennas = 2
tiles = 1
levels = 2
slots = 3
fov_size = 1

[channel]
pathloss_db = -60.0
bandwidth_hz = 10e6

[power]
ap_power_dbm = 30.0
sinr_threshold = 0.1

[media]
ladder_bps = [1e6, 2e6]
tile_play_time = 0.02
compression_ratio = 0.5
bits_per_cycle = 2.0
tau_range = [{tau}, {tau}]
cmax_range = [1e9, 1e9]

[qoe]
alpha1 = 0.3
alpha2 = 0.7
w_dist = 2.0
w_o = 0.5
w_mu = 4.0
buffer_max = 0.1
initial_buffer = 0.0
"#
    );
    Config::from_toml_str(&text).expect("valid test config")
}

pub fn single(level: usize, compressed: bool) -> TileSelection {
    TileSelection {
        users: vec![vec![TileRequest {
            tile: 0,
            level,
            compressed,
        }]],
    }
}

/// Result of the hand-derived check: (environment value, hand value) pairs.
pub struct HandSlot {
    pub reward: (f64, f64),
    pub sinr_target: (f64, f64),
    pub rate: (f64, f64),
}

/// Plays slot 1 of the one-tile scenario with level 2, compressed, and
/// evaluates the same slot by hand.
///
/// With τ = 10 ms:
/// - payload D = φ·μ_2·T_g = 0.5 · 2e6 · 0.02 = 2e4 bit
/// - decoding T_d = D / (C_max·b) = 2e4 / 2e9 = 1e-5 s
/// - Γ = max(ξ, 2^{D / (W (τ − T_d))} − 1) = 2^{2e4 / (1e7 · 0.00999)} − 1 ≈ 0.1489
/// - Q = (w_dist/d + w_o/o) · ln(w_μ/μ_L · μ_2) = (2/d + 0.5/o) · ln 4
/// - ΔQ = |Q − 0| = Q (the previous quality starts at zero)
/// - G = min(G_max, [0 + T_g − τ]⁺) = 0.01 > 0, so no rebuffering
/// - R = Q − α1·Q − α2·0 = 0.7·Q
///
/// The minimum-power beamformer meets the single SINR constraint with
/// equality, so the achieved rate is W·log2(1 + Γ).
pub fn hand_computed_slot() -> HandSlot {
    let cfg = one_tile_config(0.01);
    let mut env = HoloEnv::new(cfg.episode().unwrap(), Scheme::Proposed).unwrap();
    env.reset(0).unwrap();
    let view = env.fov().unwrap().users[0][0];
    let out = env.step(&single(2, true)).unwrap();

    let (w, tau, tg): (f64, f64, f64) = (10e6, 0.01, 0.02);
    let payload = 0.5 * 2e6 * tg;
    let decode = payload / (1e9 * 2.0);
    let gamma = f64::max(0.1, (payload / (w * (tau - decode))).exp2() - 1.0);
    let q = (2.0 / view.dist + 0.5 / view.occ) * (4.0f64 / 2e6 * 2e6).ln();
    let reward = q - 0.3 * q;
    HandSlot {
        reward: (out.reward, reward),
        sinr_target: (out.sinr_targets[0].unwrap(), gamma),
        rate: (out.rates[0], w * (1.0 + gamma).log2()),
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
