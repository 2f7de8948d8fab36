use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::gae::compute_gae;
use super::policy::{normalize, ActorCritic, PpoBatch};
use super::PPOConfig;
use crate::{Error, Result};

/// Transitions of one rollout, stored step-major: sample `t * envs + e`.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    num_envs: usize,
    steps: usize,
    obs_dim: usize,
    act_dim: usize,
    filled: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
}

impl RolloutBuffer {
    pub fn new(num_envs: usize, steps: usize, obs_dim: usize, act_dim: usize) -> Self {
        let cap = num_envs * steps;
        RolloutBuffer {
            num_envs,
            steps,
            obs_dim,
            act_dim,
            filled: 0,
            obs: Vec::with_capacity(cap * obs_dim),
            actions: Vec::with_capacity(cap * act_dim),
            log_probs: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
            rewards: Vec::with_capacity(cap),
            dones: Vec::with_capacity(cap),
        }
    }

    pub fn capacity(&self) -> usize {
        self.num_envs * self.steps
    }

    pub fn len(&self) -> usize {
        self.filled * self.num_envs
    }

    pub fn is_empty(&self) -> bool {
        self.filled == 0
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.steps
    }

    pub fn clear(&mut self) {
        self.filled = 0;
        self.obs.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.values.clear();
        self.rewards.clear();
        self.dones.clear();
    }

    /// Appends one step for every environment.
    pub fn push(
        &mut self,
        obs: &[Vec<f64>],
        actions: ArrayView2<f64>,
        log_probs: &[f64],
        values: &[f64],
        rewards: &[f64],
        dones: &[bool],
    ) -> Result<()> {
        let n = self.num_envs;
        if self.is_full() {
            return Err(Error::Config("rollout buffer is full".into()));
        }
        for (what, got) in [
            ("observation batch", obs.len()),
            ("action batch", actions.nrows()),
            ("log-prob batch", log_probs.len()),
            ("value batch", values.len()),
            ("reward batch", rewards.len()),
            ("done batch", dones.len()),
        ] {
            if got != n {
                return Err(Error::Dimension { what, expected: n, got });
            }
        }
        if actions.ncols() != self.act_dim {
            return Err(Error::Dimension {
                what: "action",
                expected: self.act_dim,
                got: actions.ncols(),
            });
        }
        for o in obs {
            if o.len() != self.obs_dim {
                return Err(Error::Dimension {
                    what: "observation",
                    expected: self.obs_dim,
                    got: o.len(),
                });
            }
            self.obs.extend_from_slice(o);
        }
        self.actions.extend(actions.iter());
        self.log_probs.extend_from_slice(log_probs);
        self.values.extend_from_slice(values);
        self.rewards.extend_from_slice(rewards);
        self.dones.extend_from_slice(dones);
        self.filled += 1;
        Ok(())
    }

    pub fn observations(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.len(), self.obs_dim), &self.obs).expect("buffer shape")
    }

    pub fn actions(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.len(), self.act_dim), &self.actions).expect("buffer shape")
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Per-environment GAE; returns step-major `(advantages, returns)`.
    pub fn advantages(&self, bootstrap: &[f64], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.num_envs;
        if bootstrap.len() != n {
            return Err(Error::Dimension {
                what: "bootstrap values",
                expected: n,
                got: bootstrap.len(),
            });
        }
        let mut adv = vec![0.0; self.len()];
        let mut ret = vec![0.0; self.len()];
        for e in 0..n {
            let col = |v: &[f64]| (0..self.filled).map(|t| v[t * n + e]).collect::<Vec<_>>();
            let d: Vec<bool> = (0..self.filled).map(|t| self.dones[t * n + e]).collect();
            let (a, r) = compute_gae(&col(&self.rewards), &col(&self.values), &d, bootstrap[e], gamma, lambda)?;
            for t in 0..self.filled {
                adv[t * n + e] = a[t];
                ret[t * n + e] = r[t];
            }
        }
        Ok((adv, ret))
    }
}

/// Mean and variance of a stream, merged batch by batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStat {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for RunningStat {
    fn default() -> Self {
        RunningStat {
            mean: 0.0,
            var: 1.0,
            count: 1e-4,
        }
    }
}

impl RunningStat {
    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let total = self.count + n;
        let delta = mean - self.mean;
        let m2 = self.var * self.count + var * n + delta * delta * self.count * n / total;
        self.mean += delta * n / total;
        self.var = m2 / total;
        self.count = total;
    }
}

/// Divides rewards by the running standard deviation of per-environment
/// discounted returns. Statistics persist across calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    pub enabled: bool,
    pub gamma: f64,
    pub epsilon: f64,
    returns: Vec<f64>,
    stat: RunningStat,
}

impl RewardNormalizer {
    pub fn new(num_envs: usize, gamma: f64, enabled: bool) -> Self {
        RewardNormalizer {
            enabled,
            gamma,
            epsilon: 1e-8,
            returns: vec![0.0; num_envs],
            stat: RunningStat::default(),
        }
    }

    pub fn stat(&self) -> &RunningStat {
        &self.stat
    }

    pub fn normalize(&mut self, rewards: &[f64], dones: &[bool]) -> Vec<f64> {
        if !self.enabled {
            return rewards.to_vec();
        }
        for (g, r) in self.returns.iter_mut().zip(rewards) {
            *g = *g * self.gamma + r;
        }
        self.stat.update(&self.returns);
        let scale = 1.0 / (self.stat.var + self.epsilon).sqrt();
        for (g, &d) in self.returns.iter_mut().zip(dones) {
            if d {
                *g = 0.0;
            }
        }
        rewards.iter().map(|r| r * scale).collect()
    }
}

/// Averages over all minibatch updates of one call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Clipped-surrogate optimization over a full buffer, which is cleared on
/// success. `bootstrap` holds the critic values after the last step.
pub fn ppo_update<R: Rng + ?Sized>(
    buffer: &mut RolloutBuffer,
    bootstrap: &[f64],
    ac: &mut ActorCritic,
    opt: &mut Adam,
    cfg: &PPOConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if !buffer.is_full() {
        return Err(Error::EmptyBatch("rollout buffer is not full"));
    }
    let (adv, ret) = buffer.advantages(bootstrap, cfg.gamma, cfg.lambda)?;
    let n = buffer.len();
    let mb = n / cfg.minibatches;
    if mb == 0 {
        return Err(Error::EmptyBatch("minibatch"));
    }
    let obs = buffer.observations();
    let actions = buffer.actions();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks_exact(mb) {
            let o: Array2<f64> = super::policy::gather_rows(obs, chunk);
            let a: Array2<f64> = super::policy::gather_rows(actions, chunk);
            let lp: Vec<f64> = chunk.iter().map(|&i| buffer.log_probs[i]).collect();
            let ad = normalize(&chunk.iter().map(|&i| adv[i]).collect::<Vec<_>>());
            let rt: Vec<f64> = chunk.iter().map(|&i| ret[i]).collect();
            let batch = PpoBatch {
                obs: o.view(),
                actions: a.view(),
                old_log_prob: &lp,
                advantages: &ad,
                returns: &rt,
            };
            let (parts, mut grad) = ac.ppo_loss(&batch, cfg);
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite PPO loss (policy {}, value {}, entropy {}, kl {})",
                    parts.policy, parts.value, parts.entropy, parts.approx_kl
                )));
            }
            stats.grad_norm += clip_grad_norm(&mut grad, cfg.max_grad_norm);
            opt.step(&mut ac.params, &grad);
            stats.policy_loss += parts.policy;
            stats.value_loss += parts.value;
            stats.entropy += parts.entropy;
            stats.approx_kl += parts.approx_kl;
            stats.clip_fraction += parts.clip_fraction;
            stats.minibatches += 1;
        }
    }
    ac.update_obs_stats(obs);
    let k = stats.minibatches as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_fraction /= k;
    stats.grad_norm /= k;
    buffer.clear();
    Ok(stats)
}
