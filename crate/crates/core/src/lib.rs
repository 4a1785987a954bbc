//! Cooperative holographic-video streaming over a multi-AP downlink.
//!
//! Per slot, a controller picks a quality level and a compression flag for
//! every visible tile of every user; the beamforming stage then looks for
//! per-AP transmit beamformers that deliver those tiles within the slot.
//! A PPO agent learns the tile decisions from the resulting QoE.

pub mod agent;
pub mod beamform;
pub mod channel;
pub mod config;
pub mod environment;
pub mod error;
pub mod experiments;
pub mod media;
pub mod qoe;
pub mod seed;

pub use error::{Error, Result};
