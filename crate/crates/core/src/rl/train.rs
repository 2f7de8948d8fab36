use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::amp::{demo_transition, snapshot_features, DiscStats, Discriminator, TransitionBuffer, AMP_FEATURE_DIM};
use super::mlp::batch;
use super::policy::{ActorCritic, PolicySpec};
use super::ppo::{ppo_update, RewardNormalizer, RolloutBuffer, UpdateStats};
use super::{AMPConfig, PPOConfig, Variant};
use crate::env::{Env, EnvConfig, VecEnv};
use crate::goals::MotionSet;
use crate::kinematics::{RobotModel, NUM_UPPER};
use crate::reward::TermGroup;
use crate::stats::{compute_metrics, EpisodeRecord, MetricsReport, StepRecord};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "exbody.checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub ppo: PPOConfig,
    pub amp: AMPConfig,
    pub policy: PolicySpec,
    pub iterations: usize,
    /// Worker threads for environment stepping; results do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: EnvConfig::default(),
            ppo: PPOConfig::default(),
            amp: AMPConfig::default(),
            policy: PolicySpec::default(),
            iterations: 200,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        if self.threads == 0 {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One line of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub env_steps: usize,
    /// Mean raw per-step reward over the rollout.
    pub mean_step_reward: f64,
    /// Episodes that ended during this iteration.
    pub episodes: usize,
    pub metrics: Option<MetricsReport>,
    pub update: UpdateStats,
    pub discriminator: Option<DiscStats>,
    pub mean_action_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub variant: Option<Variant>,
    pub seed: u64,
    pub iteration: usize,
    pub config: TrainConfig,
    pub policy: ActorCritic,
    pub normalizer: RewardNormalizer,
    pub discriminator: Option<Discriminator>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let c: Checkpoint =
            serde_path_to_error::deserialize(de).map_err(|e| Error::schema(e.path().to_string(), e.inner().to_string()))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(Error::schema("format", format!("expected {CHECKPOINT_FORMAT}, found {}", c.format)));
        }
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: c.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::error::write_string(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::error::read_to_string(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub curves: Vec<IterationLog>,
}

struct Amp {
    disc: Discriminator,
    replay: TransitionBuffer,
    demo: TransitionBuffer,
    motions: Arc<MotionSet>,
}

/// PPO training state over a batch of environments.
pub struct Trainer {
    cfg: TrainConfig,
    variant: Option<Variant>,
    seed: u64,
    envs: VecEnv,
    ac: ActorCritic,
    opt: Adam,
    normalizer: RewardNormalizer,
    buffer: RolloutBuffer,
    rng: ChaCha8Rng,
    amp: Option<Amp>,
    upper: [usize; NUM_UPPER],
    control_dt: f64,
    episodes: Vec<EpisodeRecord>,
    iteration: usize,
    env_steps: usize,
}

impl Trainer {
    /// Trains on `cfg.env` exactly as given.
    pub fn new(cfg: TrainConfig, model: Arc<RobotModel>, motions: Option<Arc<MotionSet>>, seed: u64) -> Result<Self> {
        Self::build(cfg, None, model, motions, seed)
    }

    /// Trains a baseline variant; its settings override `cfg.env`.
    pub fn for_variant(
        variant: Variant,
        mut cfg: TrainConfig,
        model: Arc<RobotModel>,
        motions: Option<Arc<MotionSet>>,
        seed: u64,
    ) -> Result<Self> {
        variant.apply(&mut cfg.env);
        Self::build(cfg, Some(variant), model, motions, seed)
    }

    fn build(
        cfg: TrainConfig,
        variant: Option<Variant>,
        model: Arc<RobotModel>,
        motions: Option<Arc<MotionSet>>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cfg.ppo.num_envs;
        let envs = VecEnv::new(&cfg.env, model.clone(), motions.clone(), n, rng.random())?.with_threads(cfg.threads);
        let obs_dim = envs.observation_dim();
        let ac = ActorCritic::new(&cfg.policy, obs_dim, &mut rng);
        let amp = if cfg.env.reward_mode.uses_style() {
            let motions = motions.ok_or_else(|| Error::Config("style reward needs motion clips".into()))?;
            Some(Amp {
                disc: Discriminator::new(&cfg.amp, AMP_FEATURE_DIM, &mut rng),
                replay: TransitionBuffer::new(AMP_FEATURE_DIM, cfg.amp.replay_size),
                demo: TransitionBuffer::new(AMP_FEATURE_DIM, cfg.amp.demo_size),
                motions,
            })
        } else {
            None
        };
        let control_dt = cfg.env.control_dt();
        Ok(Trainer {
            opt: Adam::new(ac.params.len(), cfg.ppo.learning_rate),
            normalizer: RewardNormalizer::new(n, cfg.ppo.gamma, cfg.ppo.normalize_rewards),
            buffer: RolloutBuffer::new(n, cfg.ppo.steps_per_rollout, obs_dim, cfg.policy.action_dim),
            episodes: vec![EpisodeRecord::new(control_dt); n],
            upper: *model.upper_indices(),
            control_dt,
            ac,
            envs,
            rng,
            amp,
            cfg,
            variant,
            seed,
            iteration: 0,
            env_steps: 0,
        })
    }

    pub fn policy(&self) -> &ActorCritic {
        &self.ac
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            variant: self.variant,
            seed: self.seed,
            iteration: self.iteration,
            config: self.cfg.clone(),
            policy: self.ac.clone(),
            normalizer: self.normalizer.clone(),
            discriminator: self.amp.as_ref().map(|a| a.disc.clone()),
        }
    }

    /// One rollout followed by the PPO (and discriminator) update.
    pub fn iterate(&mut self) -> Result<IterationLog> {
        let n = self.envs.len();
        let mut finished = Vec::new();
        let mut reward_sum = 0.0;
        for _ in 0..self.cfg.ppo.steps_per_rollout {
            let obs_rows = self.envs.observations().to_vec();
            let obs = batch(&obs_rows);
            let (actions, log_probs, values) = self.ac.act(obs.view(), &mut self.rng);
            let prev: Option<Vec<Vec<f64>>> = self.amp.as_ref().map(|_| {
                self.envs.envs().iter().map(|e| snapshot_features(&self.upper, e.snapshot())).collect()
            });
            let rows: Vec<Vec<f64>> = actions.rows().into_iter().map(|r| r.to_vec()).collect();
            let out = self.envs.step(&rows)?;
            let mut rewards: Vec<f64> = out.steps.iter().map(|s| s.reward.total).collect();
            let dones: Vec<bool> = out.steps.iter().map(|s| s.done).collect();

            let mut style = vec![0.0; n];
            if let (Some(amp), Some(prev)) = (&mut self.amp, prev) {
                let feats: Vec<Vec<f64>> = prev
                    .into_iter()
                    .zip(&out.steps)
                    .map(|(mut f, s)| {
                        f.extend(snapshot_features(&self.upper, &s.info.snapshot));
                        f
                    })
                    .collect();
                style = amp.disc.rewards(batch(&feats).view())?;
                for f in &feats {
                    amp.replay.push(f)?;
                }
            }
            for (e, s) in out.steps.iter().enumerate() {
                let mut b = s.reward.clone();
                if self.amp.is_some() {
                    b.push("style", TermGroup::Style, style[e] / self.cfg.amp.reward_coef, self.cfg.amp.reward_coef);
                    rewards[e] = b.total;
                }
                let mut rec = StepRecord::from_step(s, false);
                rec.reward = b.total;
                self.episodes[e].steps.push(rec);
                if s.done {
                    self.episodes[e].reason = s.reason.map(|r| r.as_str().to_string());
                    finished.push(std::mem::replace(&mut self.episodes[e], EpisodeRecord::new(self.control_dt)));
                }
            }
            reward_sum += rewards.iter().sum::<f64>();
            let normalized = self.normalizer.normalize(&rewards, &dones);
            self.buffer.push(&obs_rows, actions.view(), &log_probs, &values, &normalized, &dones)?;
        }
        self.env_steps += n * self.cfg.ppo.steps_per_rollout;
        let bootstrap = self.ac.value(batch(self.envs.observations()).view()).to_vec();
        let update = ppo_update(&mut self.buffer, &bootstrap, &mut self.ac, &mut self.opt, &self.cfg.ppo, &mut self.rng)?;
        let discriminator = self.update_discriminator()?;
        self.iteration += 1;
        let label = self.variant.map_or("custom", Variant::name);
        Ok(IterationLog {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_step_reward: reward_sum / (n * self.cfg.ppo.steps_per_rollout) as f64,
            episodes: finished.len(),
            metrics: if finished.is_empty() { None } else { Some(compute_metrics(&finished, label)?) },
            update,
            discriminator,
            mean_action_std: self.ac.log_std().iter().map(|s| s.exp()).sum::<f64>() / self.ac.action_dim() as f64,
        })
    }

    fn update_discriminator(&mut self) -> Result<Option<DiscStats>> {
        let Some(amp) = &mut self.amp else { return Ok(None) };
        for _ in 0..self.cfg.amp.demo_fetch {
            let f = demo_transition(&amp.motions, &self.upper, self.control_dt, &mut self.rng)?;
            amp.demo.push(&f)?;
        }
        let updates = self.cfg.ppo.epochs * self.cfg.ppo.minibatches;
        let mut acc = DiscStats::default();
        for _ in 0..updates {
            let d = amp.demo.sample(self.cfg.amp.batch_size, &mut self.rng)?;
            let p = amp.replay.sample(self.cfg.amp.batch_size, &mut self.rng)?;
            let s = amp.disc.train_step(d.view(), p.view())?;
            acc.loss += s.loss / updates as f64;
            acc.gradient_penalty += s.gradient_penalty / updates as f64;
            acc.demo_accuracy += s.demo_accuracy / updates as f64;
            acc.policy_accuracy += s.policy_accuracy / updates as f64;
        }
        Ok(Some(acc))
    }
}

/// Trains `variant` for `cfg.iterations` iterations.
pub fn train(
    variant: Variant,
    cfg: &TrainConfig,
    model: Arc<RobotModel>,
    motions: Option<Arc<MotionSet>>,
    seed: u64,
) -> Result<TrainOutput> {
    let mut t = Trainer::for_variant(variant, cfg.clone(), model, motions, seed)?;
    let curves = (0..cfg.iterations).map(|_| t.iterate()).collect::<Result<Vec<_>>>()?;
    Ok(TrainOutput {
        checkpoint: t.checkpoint(),
        curves,
    })
}

/// Runs `episodes` complete episodes of `policy` on a single environment.
/// With `deterministic` the mean action is used.
pub fn evaluate(
    policy: &ActorCritic,
    env_cfg: &EnvConfig,
    model: Arc<RobotModel>,
    motions: Option<Arc<MotionSet>>,
    episodes: usize,
    seed: u64,
    deterministic: bool,
) -> Result<Vec<EpisodeRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = Env::new(env_cfg.clone(), model, motions, rng.random())?;
    if env.observation_dim() != policy.obs_dim {
        return Err(Error::Dimension {
            what: "policy observation",
            expected: env.observation_dim(),
            got: policy.obs_dim,
        });
    }
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset()?;
        let mut rec = EpisodeRecord::new(env_cfg.control_dt());
        loop {
            let x = Array2::from_shape_vec((1, obs.len()), obs).expect("row shape");
            let a = if deterministic {
                policy.mean_action(x.view())
            } else {
                policy.act(x.view(), &mut rng).0
            };
            let s = env.step(a.row(0).as_slice().expect("contiguous"))?;
            rec.steps.push(StepRecord::from_step(&s, true));
            if s.done {
                rec.reason = s.reason.map(|r| r.as_str().to_string());
                break;
            }
            obs = s.obs;
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_version_is_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = PolicySpec {
            actor_hidden: vec![4],
            critic_hidden: vec![4],
            ..PolicySpec::default()
        };
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            variant: Some(Variant::Exbody),
            seed: 0,
            iteration: 0,
            config: TrainConfig::default(),
            policy: ActorCritic::new(&spec, 5, &mut rng),
            normalizer: RewardNormalizer::new(1, 0.99, true),
            discriminator: None,
        };
        let s = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&s).unwrap();
        assert_eq!(back.policy, ck.policy);
        assert_eq!(back.to_json().unwrap(), s);
        let bumped = s.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(Checkpoint::from_json(&bumped), Err(Error::Version { found: 2, .. })));
    }
}
