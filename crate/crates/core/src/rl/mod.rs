//! PPO with generalized advantage estimation, an AMP discriminator, and the
//! training loop that wires baseline variants onto the environment.

mod adam;
pub mod amp;
mod gae;
pub mod mlp;
pub mod policy;
pub mod ppo;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adam::{clip_grad_norm, Adam};
pub use amp::{amp_reward, frame_features, Discriminator, DiscStats, TransitionBuffer, AMP_FEATURE_DIM};
pub use gae::compute_gae;
pub use mlp::{Activation, Mlp};
pub use policy::{ActorCritic, LossParts, PolicySpec, PpoBatch};
pub use ppo::{ppo_update, RewardNormalizer, RolloutBuffer, UpdateStats};
pub use train::{evaluate, train, Checkpoint, IterationLog, TrainConfig, TrainOutput, Trainer};

use crate::env::{CommandSource, EnvConfig};
use crate::reward::RewardMode;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PPOConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub steps_per_rollout: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub clip_range: f64,
    pub normalize_rewards: bool,
    pub learning_rate: f64,
    pub num_envs: usize,
    pub max_grad_norm: f64,
}

impl Default for PPOConfig {
    fn default() -> Self {
        PPOConfig {
            gamma: 0.99,
            lambda: 0.95,
            steps_per_rollout: 21,
            epochs: 5,
            minibatches: 4,
            entropy_coef: 0.01,
            value_coef: 1.0,
            clip_range: 0.2,
            normalize_rewards: true,
            learning_rate: 1e-3,
            num_envs: 64,
            max_grad_norm: 1.0,
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("ppo: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad("gamma and lambda must lie in [0, 1]");
        }
        if self.steps_per_rollout == 0 || self.epochs == 0 || self.minibatches == 0 || self.num_envs == 0 {
            return bad("counts must be positive");
        }
        if self.minibatches > self.steps_per_rollout * self.num_envs {
            return bad("more minibatches than samples");
        }
        if !(self.learning_rate > 0.0 && self.clip_range > 0.0 && self.max_grad_norm > 0.0) {
            return bad("learning rate, clip range and gradient norm must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AMPConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub replay_size: usize,
    pub demo_size: usize,
    /// Demo transitions fetched from the motion set per iteration.
    pub demo_fetch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub reward_coef: f64,
    pub gradient_penalty: f64,
}

impl Default for AMPConfig {
    fn default() -> Self {
        AMPConfig {
            hidden: vec![1024, 512],
            activation: Activation::Relu,
            replay_size: 1_000_000,
            demo_size: 200_000,
            demo_fetch: 512,
            batch_size: 4096,
            learning_rate: 1e-4,
            reward_coef: 4.0,
            gradient_penalty: 1.0,
        }
    }
}

/// Training configurations compared in the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "exbody")]
    Exbody,
    #[serde(rename = "exbody+amp")]
    ExbodyAmp,
    #[serde(rename = "exbody+amp-noreg")]
    ExbodyAmpNoReg,
    #[serde(rename = "no-rsi")]
    NoRsi,
    #[serde(rename = "random-sample")]
    RandomSample,
    #[serde(rename = "full-body-tracking")]
    FullBodyTracking,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Exbody,
        Variant::ExbodyAmp,
        Variant::ExbodyAmpNoReg,
        Variant::NoRsi,
        Variant::RandomSample,
        Variant::FullBodyTracking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Exbody => "exbody",
            Variant::ExbodyAmp => "exbody+amp",
            Variant::ExbodyAmpNoReg => "exbody+amp-noreg",
            Variant::NoRsi => "no-rsi",
            Variant::RandomSample => "random-sample",
            Variant::FullBodyTracking => "full-body-tracking",
        }
    }

    pub fn reward_mode(self) -> RewardMode {
        match self {
            Variant::ExbodyAmp => RewardMode::ExbodyAmp,
            Variant::ExbodyAmpNoReg => RewardMode::ExbodyAmpNoReg,
            Variant::FullBodyTracking => RewardMode::FullBody,
            _ => RewardMode::Exbody,
        }
    }

    /// Writes the variant's reward mode, reset rule and command source into
    /// an environment configuration.
    pub fn apply(self, cfg: &mut EnvConfig) {
        cfg.reward_mode = self.reward_mode();
        cfg.rsi = self != Variant::NoRsi;
        cfg.commands = if self == Variant::RandomSample {
            CommandSource::Random
        } else {
            CommandSource::Dataset
        };
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}
