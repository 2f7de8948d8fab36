use std::f64::consts::{E, PI};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp};
use super::PPOConfig;
use crate::kinematics::NUM_JOINTS;

/// Shapes of the actor and critic networks and the action distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySpec {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub activation: Activation,
    /// Initial state-independent log standard deviation.
    pub init_log_std: f64,
    pub action_dim: usize,
    /// Standardize observations with running statistics before the networks.
    pub normalize_observations: bool,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec {
            actor_hidden: vec![512, 256, 128],
            critic_hidden: vec![512, 256, 128],
            activation: Activation::Elu,
            init_log_std: 0.0,
            action_dim: NUM_JOINTS,
            normalize_observations: true,
        }
    }
}

/// Per-dimension running mean and variance used to standardize
/// observations. Updated between rollouts so one rollout and its update
/// see the same statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    pub clip: f64,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        ObsNormalizer {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 1e-4,
            clip: 5.0,
        }
    }

    pub fn update(&mut self, x: ArrayView2<f64>) {
        let n = x.nrows() as f64;
        if n == 0.0 {
            return;
        }
        let total = self.count + n;
        for (j, col) in x.columns().into_iter().enumerate() {
            let m = col.sum() / n;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / n;
            let d = m - self.mean[j];
            let m2 = self.var[j] * self.count + v * n + d * d * self.count * n / total;
            self.mean[j] += d * n / total;
            self.var[j] = m2 / total;
        }
        self.count = total;
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((*v - self.mean[j]) / (self.var[j] + 1e-8).sqrt()).clamp(-self.clip, self.clip);
            }
        }
        out
    }
}

/// Diagonal Gaussian actor and scalar critic over one flat parameter
/// vector laid out as `[actor | log_std | critic]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub spec: PolicySpec,
    pub obs_dim: usize,
    pub actor: Mlp,
    pub critic: Mlp,
    pub params: Vec<f64>,
    pub obs_norm: Option<ObsNormalizer>,
}

/// One PPO minibatch. Advantages are used as given.
#[derive(Debug, Clone, Copy)]
pub struct PpoBatch<'a> {
    pub obs: ArrayView2<'a, f64>,
    pub actions: ArrayView2<'a, f64>,
    pub old_log_prob: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Entropy of a diagonal Gaussian with the given log standard deviations.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (2.0 * PI * E).ln()).sum()
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for k in 0..mean.len() {
        let z = (action[k] - mean[k]) / log_std[k].exp();
        lp += -0.5 * z * z - log_std[k] - 0.5 * (2.0 * PI).ln();
    }
    lp
}

/// Per-sample clipped surrogate `-min(r A, clip(r) A)` and its derivative
/// with respect to the new log-probability.
pub fn clipped_surrogate(ratio: f64, adv: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    if unclipped <= clipped {
        (-unclipped, -unclipped)
    } else {
        (-clipped, 0.0)
    }
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(spec: &PolicySpec, obs_dim: usize, rng: &mut R) -> Self {
        let actor = Mlp::new(obs_dim, &spec.actor_hidden, spec.action_dim, spec.activation);
        let critic = Mlp::new(obs_dim, &spec.critic_hidden, 1, spec.activation);
        let mut params = actor.init(rng, 0.01);
        params.extend(std::iter::repeat_n(spec.init_log_std, spec.action_dim));
        params.extend(critic.init(rng, 1.0));
        ActorCritic {
            spec: spec.clone(),
            obs_dim,
            actor,
            critic,
            params,
            obs_norm: spec.normalize_observations.then(|| ObsNormalizer::new(obs_dim)),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.spec.action_dim
    }

    fn split(&self) -> (usize, usize) {
        let a = self.actor.num_params();
        (a, a + self.spec.action_dim)
    }

    pub fn actor_params(&self) -> &[f64] {
        &self.params[..self.split().0]
    }

    pub fn log_std(&self) -> &[f64] {
        let (a, b) = self.split();
        &self.params[a..b]
    }

    pub fn critic_params(&self) -> &[f64] {
        &self.params[self.split().1..]
    }

    /// Network input for raw observations.
    pub fn input(&self, obs: ArrayView2<f64>) -> Array2<f64> {
        match &self.obs_norm {
            Some(n) => n.apply(obs),
            None => obs.to_owned(),
        }
    }

    pub fn update_obs_stats(&mut self, obs: ArrayView2<f64>) {
        if let Some(n) = &mut self.obs_norm {
            n.update(obs);
        }
    }

    pub fn mean_action(&self, obs: ArrayView2<f64>) -> Array2<f64> {
        self.actor.predict(self.actor_params(), self.input(obs).view())
    }

    pub fn value(&self, obs: ArrayView2<f64>) -> Array1<f64> {
        self.critic.predict(self.critic_params(), self.input(obs).view()).column(0).to_owned()
    }

    /// Samples actions; returns `(actions, log_probs, values)`.
    pub fn act<R: Rng + ?Sized>(&self, obs: ArrayView2<f64>, rng: &mut R) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
        let mean = self.mean_action(obs);
        let log_std = self.log_std();
        let mut actions = mean.clone();
        for mut row in actions.rows_mut() {
            for (k, a) in row.iter_mut().enumerate() {
                let e: f64 = StandardNormal.sample(rng);
                *a += log_std[k].exp() * e;
            }
        }
        let logp = mean
            .rows()
            .into_iter()
            .zip(actions.rows())
            .map(|(m, a)| gaussian_log_prob(m.as_slice().unwrap(), log_std, a.as_slice().unwrap()))
            .collect();
        (actions, logp, self.value(obs).to_vec())
    }

    /// Clipped-surrogate PPO loss with value and entropy terms, and its
    /// gradient with respect to `self.params`.
    pub fn ppo_loss(&self, b: &PpoBatch, cfg: &PPOConfig) -> (LossParts, Vec<f64>) {
        let n = b.obs.nrows();
        let nf = n as f64;
        let k = self.action_dim();
        let (sa, sc) = self.split();
        let mut grad = vec![0.0; self.params.len()];
        let log_std = self.log_std().to_vec();
        let inv_var: Vec<f64> = log_std.iter().map(|s| (-2.0 * s).exp()).collect();

        let x = self.input(b.obs);
        let fa = self.actor.forward(self.actor_params(), x.view());
        let mean = fa.output();
        let mut d_mean = Array2::zeros((n, k));
        let mut parts = LossParts::default();
        for i in 0..n {
            let m = mean.row(i);
            let a = b.actions.row(i);
            let lp = gaussian_log_prob(m.as_slice().unwrap(), &log_std, a.as_slice().unwrap());
            let log_ratio = lp - b.old_log_prob[i];
            let ratio = log_ratio.exp();
            let (l, dl_dlp) = clipped_surrogate(ratio, b.advantages[i], cfg.clip_range);
            parts.policy += l / nf;
            parts.approx_kl += ((ratio - 1.0) - log_ratio) / nf;
            if (ratio - 1.0).abs() > cfg.clip_range {
                parts.clip_fraction += 1.0 / nf;
            }
            let g = dl_dlp / nf;
            for j in 0..k {
                let diff = a[j] - m[j];
                d_mean[[i, j]] = g * diff * inv_var[j];
                grad[sa + j] += g * (diff * diff * inv_var[j] - 1.0);
            }
        }
        self.actor.backward(self.actor_params(), &fa, d_mean.view(), &mut grad[..sa]);

        parts.entropy = gaussian_entropy(&log_std);
        for j in 0..k {
            grad[sa + j] -= cfg.entropy_coef;
        }

        let fc = self.critic.forward(self.critic_params(), x.view());
        let v = fc.output();
        let mut d_v = Array2::zeros((n, 1));
        for i in 0..n {
            let e = v[[i, 0]] - b.returns[i];
            parts.value += e * e / nf;
            d_v[[i, 0]] = cfg.value_coef * 2.0 * e / nf;
        }
        self.critic.backward(self.critic_params(), &fc, d_v.view(), &mut grad[sc..]);

        parts.total = parts.policy + cfg.value_coef * parts.value - cfg.entropy_coef * parts.entropy;
        (parts, grad)
    }
}

/// Mean and standard deviation normalization of a slice.
pub fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    x.iter().map(|v| (v - mean) / std).collect()
}

/// Rows `idx` of `a` stacked.
pub fn gather_rows(a: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    a.select(Axis(0), idx)
}
