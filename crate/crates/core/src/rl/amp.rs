use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::mlp::Mlp;
use super::AMPConfig;
use crate::goals::{state_at, InitialState, MotionSet};
use crate::kinematics::{JointVec, Vec3, NUM_JOINTS, NUM_UPPER};
use crate::reward::{style_value, EnvStateSnapshot};
use crate::{Error, Result};

/// Per-frame features: upper-body joint positions, all joint velocities,
/// root roll and pitch, body-frame angular velocity.
pub const FRAME_FEATURE_DIM: usize = NUM_UPPER + NUM_JOINTS + 2 + 3;
/// Two consecutive frames.
pub const AMP_FEATURE_DIM: usize = 2 * FRAME_FEATURE_DIM;

pub fn frame_features(
    upper: &[usize; NUM_UPPER],
    q: &JointVec,
    dq: &JointVec,
    rpy: [f64; 3],
    omega_body: [f64; 3],
) -> Vec<f64> {
    let mut f = Vec::with_capacity(FRAME_FEATURE_DIM);
    f.extend(upper.iter().map(|&i| q[i]));
    f.extend_from_slice(dq);
    f.extend_from_slice(&rpy[..2]);
    f.extend_from_slice(&omega_body);
    f
}

pub fn snapshot_features(upper: &[usize; NUM_UPPER], s: &EnvStateSnapshot) -> Vec<f64> {
    frame_features(upper, &s.q, &s.dq, s.rpy, s.omega)
}

pub fn state_features(upper: &[usize; NUM_UPPER], s: &InitialState) -> Vec<f64> {
    let omega = s.root.orientation.conjugate().rotate(&Vec3::from(s.omega));
    frame_features(upper, &s.q, &s.dq, s.root.orientation.to_rpy(), omega.into())
}

/// A dataset transition `(s_t, s_{t+dt})` at a duration-weighted random
/// time.
pub fn demo_transition<R: Rng + ?Sized>(
    set: &MotionSet,
    upper: &[usize; NUM_UPPER],
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (c, t) = set.sample_time(rng);
    let clip = set.get(c);
    let t0 = t.min((clip.duration() - dt).max(0.0));
    let t1 = (t0 + dt).min(clip.duration());
    let mut f = state_features(upper, &state_at(clip, t0)?);
    f.extend(state_features(upper, &state_at(clip, t1)?));
    Ok(f)
}

/// Fixed-capacity ring of feature rows.
#[derive(Debug, Clone)]
pub struct TransitionBuffer {
    dim: usize,
    capacity: usize,
    next: usize,
    data: Vec<f64>,
}

impl TransitionBuffer {
    pub fn new(dim: usize, capacity: usize) -> Self {
        TransitionBuffer {
            dim,
            capacity: capacity.max(1),
            next: 0,
            data: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimension {
                what: "transition features",
                expected: self.dim,
                got: row.len(),
            });
        }
        if self.len() < self.capacity {
            self.data.extend_from_slice(row);
        } else {
            self.data[self.next * self.dim..(self.next + 1) * self.dim].copy_from_slice(row);
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    /// `n` rows drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Array2<f64>> {
        let len = self.len();
        if len == 0 {
            return Err(Error::EmptyBatch("transition buffer"));
        }
        let mut out = Array2::zeros((n, self.dim));
        for mut row in out.rows_mut() {
            let i = rng.random_range(0..len);
            row.assign(&ndarray::aview1(&self.data[i * self.dim..(i + 1) * self.dim]));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscStats {
    pub loss: f64,
    pub gradient_penalty: f64,
    pub demo_accuracy: f64,
    pub policy_accuracy: f64,
}

impl DiscStats {
    pub fn accuracy(&self) -> f64 {
        0.5 * (self.demo_accuracy + self.policy_accuracy)
    }
}

/// Least-squares discriminator: demos are pushed toward +1, policy
/// transitions toward -1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discriminator {
    pub net: Mlp,
    pub params: Vec<f64>,
    pub reward_coef: f64,
    pub gradient_penalty: f64,
    opt: Adam,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(cfg: &AMPConfig, input: usize, rng: &mut R) -> Self {
        let net = Mlp::new(input, &cfg.hidden, 1, cfg.activation);
        let params = net.init(rng, 1.0);
        let opt = Adam::new(params.len(), cfg.learning_rate);
        Discriminator {
            net,
            params,
            reward_coef: cfg.reward_coef,
            gradient_penalty: cfg.gradient_penalty,
            opt,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn check(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                what: "discriminator input",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.net.predict(&self.params, x).column(0).to_vec())
    }

    pub fn rewards(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.predict(x)?.into_iter().map(|d| self.reward_coef * style_value(d)).collect())
    }

    /// Loss `mean (D(demo) - 1)^2 + mean (D(policy) + 1)^2 + c mean |dD/dx(demo)|^2`
    /// and its parameter gradient.
    pub fn loss_and_grad(&self, demo: ArrayView2<f64>, policy: ArrayView2<f64>) -> Result<(DiscStats, Vec<f64>)> {
        self.check(demo)?;
        self.check(policy)?;
        if demo.nrows() == 0 || policy.nrows() == 0 {
            return Err(Error::EmptyBatch("discriminator batch"));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut stats = DiscStats::default();
        for (x, target) in [(demo, 1.0), (policy, -1.0)] {
            let n = x.nrows() as f64;
            let fwd = self.net.forward(&self.params, x);
            let d = fwd.output().column(0).to_owned();
            let mut g = Array2::zeros((x.nrows(), 1));
            let mut correct = 0usize;
            for (i, &di) in d.iter().enumerate() {
                let e = di - target;
                stats.loss += e * e / n;
                g[[i, 0]] = 2.0 * e / n;
                if di * target > 0.0 {
                    correct += 1;
                }
            }
            let acc = correct as f64 / n;
            if target > 0.0 {
                stats.demo_accuracy = acc;
            } else {
                stats.policy_accuracy = acc;
            }
            self.net.backward(&self.params, &fwd, g.view(), &mut grad);
        }
        if self.gradient_penalty > 0.0 {
            stats.gradient_penalty = self.net.gradient_penalty(&self.params, demo, self.gradient_penalty, &mut grad);
            stats.loss += self.gradient_penalty * stats.gradient_penalty;
        }
        Ok((stats, grad))
    }

    /// One optimizer step; the returned accuracies are measured before it.
    pub fn train_step(&mut self, demo: ArrayView2<f64>, policy: ArrayView2<f64>) -> Result<DiscStats> {
        let (stats, grad) = self.loss_and_grad(demo, policy)?;
        if !stats.loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite discriminator loss {}", stats.loss)));
        }
        self.opt.step(&mut self.params, &grad);
        Ok(stats)
    }
}

/// Style reward `coef * max(0, 1 - 0.25 (d - 1)^2)` of one transition.
pub fn amp_reward(disc: &Discriminator, features: &[f64]) -> Result<f64> {
    let x = ArrayView2::from_shape((1, features.len()), features).expect("row shape");
    Ok(disc.rewards(x)?[0])
}
