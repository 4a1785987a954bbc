//! JSON checkpoints with a format/version/architecture header.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::{ActionCodec, PolicyParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "holostream-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub obs_len: usize,
    pub heads: usize,
    pub choices: usize,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    /// Scheme the policy was trained for (e.g. `proposed`, `B2`).
    pub scheme: String,
    pub discount: f64,
    pub codec: ActionCodec,
    pub params: PolicyParams,
}

impl Checkpoint {
    pub fn new(scheme: &str, discount: f64, codec: ActionCodec, params: PolicyParams) -> Self {
        let sizes = params.actor.sizes();
        let architecture = Architecture {
            obs_len: params.obs_len(),
            heads: params.heads,
            choices: params.choices,
            hidden: sizes[1..sizes.len() - 1].to_vec(),
        };
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            architecture,
            scheme: scheme.into(),
            discount,
            codec,
            params,
        }
    }

    /// Checks the header against the stored networks.
    pub fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                self.format, self.version
            )));
        }
        let a = &self.architecture;
        let p = &self.params;
        let (actor_in, actor_out) = p.actor_io()?;
        let mut actor = vec![actor_in];
        actor.extend(&a.hidden);
        actor.push(actor_out);
        let mut critic = vec![a.obs_len];
        critic.extend(&a.hidden);
        critic.push(1);
        let nets_ok = p.actor.sizes() == actor.as_slice()
            && p.critic.sizes() == critic.as_slice()
            && p.critic_target.as_ref().is_none_or(|t| t.sizes() == critic.as_slice());
        if !nets_ok || p.heads != a.heads || p.choices != a.choices || self.codec.choices() != a.choices {
            return Err(Error::Config("checkpoint networks disagree with the architecture header".into()));
        }
        // re-run the parameter checks of the network constructor
        for net in [&p.actor, &p.critic].into_iter().chain(p.critic_target.as_ref()) {
            super::nn::Mlp::from_params(net.sizes().to_vec(), net.params().to_vec())?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let ck: Self = serde_json::from_reader(file)?;
        ck.validate()?;
        Ok(ck)
    }
}
