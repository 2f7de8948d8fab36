use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Env, EnvConfig, Step};
use crate::goals::MotionSet;
use crate::kinematics::RobotModel;
use crate::{Error, Result};

/// Result of stepping every instance once.
#[derive(Debug, Clone)]
pub struct VecStep {
    /// Per-instance step results; `obs` there is the terminal observation
    /// when the episode ended.
    pub steps: Vec<Step>,
    /// Observation to act on next, taken after the automatic reset.
    pub obs: Vec<Vec<f64>>,
}

/// A batch of independently owned environments with automatic reset.
#[derive(Debug, Clone)]
pub struct VecEnv {
    envs: Vec<Env>,
    obs: Vec<Vec<f64>>,
    threads: usize,
}

impl VecEnv {
    /// `n` instances whose random streams are derived from `seed`.
    pub fn new(
        cfg: &EnvConfig,
        model: Arc<RobotModel>,
        motions: Option<Arc<MotionSet>>,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("at least one environment is required".into()));
        }
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let envs = (0..n)
            .map(|_| Env::new(cfg.clone(), model.clone(), motions.clone(), seeds.random()))
            .collect::<Result<Vec<_>>>()?;
        let obs = envs.iter().map(Env::observation).collect();
        Ok(VecEnv { envs, obs, threads: 1 })
    }

    /// Worker threads used by [`VecEnv::step`]; results do not depend on it.
    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    pub fn envs_mut(&mut self) -> &mut [Env] {
        &mut self.envs
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.obs
    }

    pub fn observation_dim(&self) -> usize {
        self.envs[0].observation_dim()
    }

    pub fn reset_all(&mut self) -> Result<&[Vec<f64>]> {
        for (e, o) in self.envs.iter_mut().zip(&mut self.obs) {
            *o = e.reset()?;
        }
        Ok(&self.obs)
    }

    pub fn step(&mut self, actions: &[Vec<f64>]) -> Result<VecStep> {
        if actions.len() != self.envs.len() {
            return Err(Error::Dimension {
                what: "action batch",
                expected: self.envs.len(),
                got: actions.len(),
            });
        }
        let run = |envs: &mut [Env], acts: &[Vec<f64>]| -> Result<Vec<(Step, Vec<f64>)>> {
            envs.iter_mut()
                .zip(acts)
                .map(|(e, a)| {
                    let s = e.step(a)?;
                    let next = if s.done { e.reset()? } else { s.obs.clone() };
                    Ok((s, next))
                })
                .collect()
        };
        let results: Vec<(Step, Vec<f64>)> = if self.threads == 1 {
            run(&mut self.envs, actions)?
        } else {
            let chunk = self.envs.len().div_ceil(self.threads);
            let parts: Vec<Result<Vec<(Step, Vec<f64>)>>> = std::thread::scope(|s| {
                let handles: Vec<_> = self
                    .envs
                    .chunks_mut(chunk)
                    .zip(actions.chunks(chunk))
                    .map(|(e, a)| s.spawn(move || run(e, a)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("environment worker panicked")).collect()
            });
            let mut all = Vec::with_capacity(self.envs.len());
            for p in parts {
                all.extend(p?);
            }
            all
        };
        let (steps, obs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        self.obs = obs.clone();
        Ok(VecStep { steps, obs })
    }
}
