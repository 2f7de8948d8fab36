//! Goal-conditioned environment around two lightweight dynamics backends.
//!
//! Neither backend is a physics simulator in the usual sense. The
//! kinematic-replay backend moves joints toward their PD targets with a
//! first-order lag and integrates the root from the movement command; it is
//! exact enough to check that goals, rewards and observations agree. The
//! planar-biped backend is a sagittal rigid body on spring-damper foot
//! contacts with servoed joints, which gives a policy something to balance.

mod dynamics;
mod vec;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::goals::{
    default_state, delta_yaw, expression_joints, extract_goals, heading_keypoints, sample_random_command,
    to_heading, CommandRanges, ExpressionGoal, GoalScope, InitialState, MotionSet, MovementGoal,
};
use crate::kinematics::{wrap_angle, JointVec, Quaternion, RobotModel, RootPose, Vec3, NUM_JOINTS};
use crate::reward::{total_reward, EnvStateSnapshot, FootState, RewardBreakdown, RewardContext, RewardMode, RewardWeights};
use crate::{Error, Result};

pub use dynamics::PlanarParams;
pub use vec::{VecEnv, VecStep};

/// Observation length for upper-body expression goals.
pub const OBS_DIM: usize = 96;

/// Observation length for a given expression scope.
///
/// Layout: body angular velocity (3), roll, pitch, yaw error (3), joint
/// positions (19), joint velocities (19), previous action (19), expression
/// joint targets, expression keypoints, commanded heading-frame velocity (3),
/// commanded roll and pitch (2), commanded height (1).
pub fn observation_dim(model: &RobotModel, scope: GoalScope) -> usize {
    let goal = match scope {
        GoalScope::Upper => 9 + 18,
        GoalScope::Full => NUM_JOINTS + model.full_keypoint_dim(),
    };
    6 + 3 * NUM_JOINTS + goal + 6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    KinematicReplay,
    PlanarBiped,
}

/// Where root-movement goals come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandSource {
    #[default]
    Dataset,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    /// Stiffness of the legs and torso (N m/rad).
    pub kp_legs: f64,
    /// Stiffness of the arms (N m/rad).
    pub kp_arms: f64,
    /// Damping of every joint (N m s/rad).
    pub kd: f64,
    pub torque_limit_legs: f64,
    pub torque_limit_arms: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains {
            kp_legs: 60.0,
            kp_arms: 40.0,
            kd: 2.0,
            torque_limit_legs: 200.0,
            torque_limit_arms: 40.0,
        }
    }
}

/// Per-joint PD law with torque saturation.
#[derive(Debug, Clone, PartialEq)]
pub struct PDController {
    pub kp: JointVec,
    pub kd: JointVec,
    pub torque_limit: JointVec,
}

impl PDController {
    pub fn new(kp: JointVec, kd: JointVec, torque_limit: JointVec) -> Result<Self> {
        let ok = |v: &JointVec| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !ok(&kp) || !ok(&kd) || !ok(&torque_limit) {
            return Err(Error::Config("PD gains and torque limits must be positive".into()));
        }
        Ok(PDController { kp, kd, torque_limit })
    }

    /// Leg gains for the legs and torso, arm gains for the arms.
    pub fn from_gains(model: &RobotModel, g: &PdGains) -> Result<Self> {
        let mut kp = [g.kp_arms; NUM_JOINTS];
        let mut limit = [g.torque_limit_arms; NUM_JOINTS];
        for i in legs_and_torso(model) {
            kp[i] = g.kp_legs;
            limit[i] = g.torque_limit_legs;
        }
        Self::new(kp, [g.kd; NUM_JOINTS], limit)
    }
}

fn legs_and_torso(model: &RobotModel) -> Vec<usize> {
    let mut v = model.lower_indices().to_vec();
    v.extend(model.joint_index("torso"));
    v
}

/// `tau = kp (target - q) - kd dq`, clamped to the torque limits.
pub fn pd_torque(target: &JointVec, q: &JointVec, dq: &JointVec, pd: &PDController) -> JointVec {
    std::array::from_fn(|i| {
        let t = pd.kp[i] * (target[i] - q[i]) - pd.kd[i] * dq[i];
        t.clamp(-pd.torque_limit[i], pd.torque_limit[i])
    })
}

/// Policy input for one step. Root linear velocity, absolute height and
/// absolute yaw are deliberately absent; yaw only enters as the error to the
/// commanded heading.
pub fn build_observation(s: &EnvStateSnapshot, ge: &ExpressionGoal, gm: &MovementGoal, a_prev: &JointVec) -> Vec<f64> {
    let mut o = Vec::with_capacity(OBS_DIM);
    o.extend_from_slice(&s.omega);
    o.push(s.rpy[0]);
    o.push(s.rpy[1]);
    o.push(delta_yaw(s.rpy[2], gm.rpy_ref[2]));
    o.extend_from_slice(&s.q);
    o.extend_from_slice(&s.dq);
    o.extend_from_slice(a_prev);
    o.extend_from_slice(&ge.q_ref);
    o.extend_from_slice(&ge.p_ref);
    o.extend_from_slice(&gm.v_ref);
    o.push(gm.rpy_ref[0]);
    o.push(gm.rpy_ref[1]);
    o.push(gm.h_ref);
    o
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Physics step (s).
    pub dt: f64,
    /// Physics steps per control step.
    pub decimation: usize,
    /// Episode cap (s).
    pub episode_length: f64,
    pub max_roll: f64,
    pub max_pitch: f64,
    /// Minimum root height (m).
    pub min_height: f64,
    pub backend: Backend,
    /// Reset to dataset states instead of the default pose.
    pub rsi: bool,
    pub commands: CommandSource,
    pub command_ranges: CommandRanges,
    /// Seconds between random command draws.
    pub command_interval: f64,
    pub reward_mode: RewardMode,
    pub weights: RewardWeights,
    pub pd: PdGains,
    /// PD target = default pose + `action_scale` * action.
    pub action_scale: f64,
    /// Time constant of the replay backend's joint and root lag (s).
    pub replay_lag: f64,
    pub planar: PlanarParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            dt: 0.005,
            decimation: 4,
            episode_length: 20.0,
            max_roll: 1.0,
            max_pitch: 1.0,
            min_height: 0.4,
            backend: Backend::default(),
            rsi: true,
            commands: CommandSource::Dataset,
            command_ranges: CommandRanges::default(),
            command_interval: 10.0,
            reward_mode: RewardMode::Exbody,
            weights: RewardWeights::default(),
            pd: PdGains::default(),
            action_scale: 0.25,
            replay_lag: 0.01,
            planar: PlanarParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.decimation < 1 {
            return Err(Error::Config("decimation must be at least 1".into()));
        }
        if !(self.episode_length > 0.0) || !(self.command_interval > 0.0) {
            return Err(Error::Config("episode length and command interval must be positive".into()));
        }
        if !(self.action_scale > 0.0) || !(self.replay_lag > 0.0) {
            return Err(Error::Config("action scale and replay lag must be positive".into()));
        }
        self.command_ranges.validate()?;
        self.planar.validate()
    }

    pub fn control_dt(&self) -> f64 {
        self.dt * self.decimation as f64
    }

    pub fn max_steps(&self) -> usize {
        (self.episode_length / self.control_dt()).round() as usize
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: EnvConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoneReason {
    Orientation,
    Height,
    Timeout,
}

impl DoneReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DoneReason::Orientation => "orientation",
            DoneReason::Height => "height",
            DoneReason::Timeout => "timeout",
        }
    }
}

/// Rigid-body and joint state of the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub q: JointVec,
    pub dq: JointVec,
    /// World-frame root position.
    pub position: [f64; 3],
    /// Root roll, pitch and yaw (intrinsic Z-Y-X). Kept as angles so that the
    /// heading-local quantities never pass through the absolute yaw.
    pub rpy: [f64; 3],
    /// World-frame root linear velocity.
    pub v: [f64; 3],
    /// World-frame root angular velocity.
    pub omega: [f64; 3],
}

impl BodyState {
    pub fn from_initial(s: &InitialState) -> Self {
        BodyState {
            q: s.q,
            dq: s.dq,
            position: s.root.position,
            rpy: s.root.rpy(),
            v: s.v,
            omega: s.omega,
        }
    }

    pub fn root(&self) -> RootPose {
        pose_from_rpy(self.position, self.rpy)
    }

    /// Root orientation with the yaw removed.
    pub fn tilt(&self) -> Quaternion {
        Quaternion::from_rpy(self.rpy[0], self.rpy[1], 0.0)
    }

    pub fn yaw(&self) -> f64 {
        wrap_angle(self.rpy[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Clip supplying the goals, if any.
    pub clip_id: Option<String>,
    pub clip_time: f64,
    /// Control steps since the last reset, including this one.
    pub episode_step: usize,
    pub snapshot: EnvStateSnapshot,
    pub movement_goal: MovementGoal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub reason: Option<DoneReason>,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy)]
struct FootMemory {
    air_time: f64,
    in_contact: bool,
}

#[derive(Debug, Clone)]
struct GoalCursor {
    clip: Option<usize>,
    time: f64,
    command: Option<MovementGoal>,
    since_command: f64,
}

/// One environment instance. Owns its random stream; nothing is shared
/// mutably between instances.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    model: Arc<RobotModel>,
    motions: Option<Arc<MotionSet>>,
    ctx: RewardContext,
    pd: PDController,
    rng: ChaCha8Rng,
    body: BodyState,
    backend: dynamics::State,
    feet: [FootMemory; 2],
    action: JointVec,
    prev_action: JointVec,
    cursor: GoalCursor,
    goals: (ExpressionGoal, MovementGoal),
    snapshot: EnvStateSnapshot,
    steps: usize,
    rest_goal: ExpressionGoal,
}

impl Env {
    pub fn new(cfg: EnvConfig, model: Arc<RobotModel>, motions: Option<Arc<MotionSet>>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if motions.is_none() && (cfg.rsi || cfg.commands == CommandSource::Dataset) {
            return Err(Error::Config(
                "reference state initialization and dataset commands need motion clips".into(),
            ));
        }
        let pd = PDController::from_gains(&model, &cfg.pd)?;
        let ctx = RewardContext::from_model(&model);
        let rest = default_state(&model);
        let scope = cfg.reward_mode.scope();
        let rest_goal = ExpressionGoal {
            q_ref: expression_joints(&model, &rest.q, scope),
            p_ref: heading_keypoints(&model, &rest.root, &rest.q, scope),
        };
        let body = BodyState::from_initial(&rest);
        let backend = dynamics::State::new(&cfg, &model);
        let snapshot = EnvStateSnapshot::at_rest(rest.q, rest.root.height(), Vec::new());
        let mut env = Env {
            ctx,
            pd,
            rng: ChaCha8Rng::seed_from_u64(seed),
            body,
            backend,
            feet: [FootMemory {
                air_time: 0.0,
                in_contact: true,
            }; 2],
            action: [0.0; NUM_JOINTS],
            prev_action: [0.0; NUM_JOINTS],
            cursor: GoalCursor {
                clip: None,
                time: 0.0,
                command: None,
                since_command: 0.0,
            },
            goals: (rest_goal.clone(), MovementGoal::default()),
            snapshot,
            steps: 0,
            rest_goal,
            cfg,
            model,
            motions,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn observation_dim(&self) -> usize {
        observation_dim(&self.model, self.cfg.reward_mode.scope())
    }

    pub fn body(&self) -> &BodyState {
        &self.body
    }

    /// Overwrites the body state; the snapshot is refreshed immediately.
    pub fn set_body(&mut self, body: BodyState) {
        self.body = body;
        self.backend.resync(&self.model, &self.body);
        self.snapshot = self.make_snapshot([0.0; NUM_JOINTS], [0.0; NUM_JOINTS]);
    }

    pub fn snapshot(&self) -> &EnvStateSnapshot {
        &self.snapshot
    }

    pub fn goals(&self) -> (&ExpressionGoal, &MovementGoal) {
        (&self.goals.0, &self.goals.1)
    }

    pub fn clip_time(&self) -> f64 {
        self.cursor.time
    }

    pub fn clip_id(&self) -> Option<&str> {
        let (m, c) = (self.motions.as_ref()?, self.cursor.clip?);
        Some(&m.get(c).meta.id)
    }

    pub fn observation(&self) -> Vec<f64> {
        build_observation(&self.snapshot, &self.goals.0, &self.goals.1, &self.action)
    }

    /// Episode start: a dataset state when reference state initialization is
    /// on, otherwise the default pose at standing height. Without it the goal
    /// clip and time are still drawn the same way.
    pub fn reset(&mut self) -> Result<Vec<f64>> {
        let (clip, time, init) = match &self.motions {
            Some(m) => {
                let (c, t) = m.sample_time(&mut self.rng);
                let init = if self.cfg.rsi {
                    let mut s = crate::goals::state_at(m.get(c), t)?;
                    s.clip = c;
                    s
                } else {
                    default_state(&self.model)
                };
                (Some(c), t, init)
            }
            None => (None, 0.0, default_state(&self.model)),
        };
        self.reset_to(&init, clip, time)
    }

    /// Reset to an explicit state with goals from `clip` at `time`.
    pub fn reset_to(&mut self, init: &InitialState, clip: Option<usize>, time: f64) -> Result<Vec<f64>> {
        if let (Some(c), Some(m)) = (clip, &self.motions) {
            if c >= m.len() {
                return Err(Error::Config(format!("clip index {c} out of range")));
            }
        }
        self.reset_body(BodyState::from_initial(init), clip, time)
    }

    /// Like [`Env::reset_to`] with the body given directly.
    pub fn reset_body(&mut self, body: BodyState, clip: Option<usize>, time: f64) -> Result<Vec<f64>> {
        if let (Some(c), Some(m)) = (clip, &self.motions) {
            if c >= m.len() {
                return Err(Error::Config(format!("clip index {c} out of range")));
            }
        }
        self.body = self.backend.admit(body);
        self.backend.resync(&self.model, &self.body);
        self.cursor = GoalCursor {
            clip,
            time,
            command: None,
            since_command: 0.0,
        };
        self.action = self.neutral_action(&self.body.q);
        self.prev_action = self.action;
        self.feet = [FootMemory {
            air_time: 0.0,
            in_contact: true,
        }; 2];
        self.steps = 0;
        self.refresh_goals()?;
        self.snapshot = self.make_snapshot([0.0; NUM_JOINTS], [0.0; NUM_JOINTS]);
        for (m, f) in self.feet.iter_mut().zip(&self.snapshot.feet) {
            m.in_contact = f.in_contact;
        }
        Ok(self.observation())
    }

    /// Action whose PD target equals `q`.
    pub fn neutral_action(&self, q: &JointVec) -> JointVec {
        let d = self.model.default_pose();
        std::array::from_fn(|i| (q[i] - d[i]) / self.cfg.action_scale)
    }

    /// Action whose PD target is the goal clip's pose one control step ahead.
    pub fn oracle_action(&self) -> Option<JointVec> {
        let (m, c) = (self.motions.as_ref()?, self.cursor.clip?);
        let clip = m.get(c);
        let t = self.wrap_time(clip.duration(), self.cursor.time + self.cfg.control_dt());
        let s = crate::goals::state_at(clip, t).ok()?;
        Some(self.neutral_action(&s.q))
    }

    fn wrap_time(&self, duration: f64, t: f64) -> f64 {
        if duration <= 0.0 {
            0.0
        } else {
            t.rem_euclid(duration)
        }
    }

    fn refresh_goals(&mut self) -> Result<()> {
        let scope = self.cfg.reward_mode.scope();
        let dataset = match (&self.motions, self.cursor.clip) {
            (Some(m), Some(c)) => Some(extract_goals(m.get(c), self.cursor.time, &self.model, scope)?),
            _ => None,
        };
        let ge = dataset.as_ref().map_or_else(|| self.rest_goal.clone(), |(e, _)| e.clone());
        let gm = match self.cfg.commands {
            CommandSource::Dataset => dataset.map(|(_, m)| m).ok_or(Error::EmptyLibrary)?,
            CommandSource::Random => {
                let due = self.cursor.command.is_none() || self.cursor.since_command >= self.cfg.command_interval;
                if due {
                    let mut g = sample_random_command(&self.cfg.command_ranges, &mut self.rng);
                    g.rpy_ref[2] = self.body.yaw();
                    self.cursor.command = Some(g);
                    self.cursor.since_command = 0.0;
                }
                self.cursor.command.unwrap()
            }
        };
        self.goals = (ge, gm);
        Ok(())
    }

    fn make_snapshot(&self, tau: JointVec, ddq: JointVec) -> EnvStateSnapshot {
        let b = &self.body;
        let rpy = [b.rpy[0], b.rpy[1], b.yaw()];
        let contacts = self.backend.contacts();
        let feet = std::array::from_fn(|i| {
            let c = &contacts.feet[i];
            let m = &self.feet[i];
            let new_contact = c.in_contact && !m.in_contact;
            FootState {
                height: c.height,
                air_time: m.air_time,
                in_contact: c.in_contact,
                new_contact,
                force: c.force,
                velocity: c.velocity,
            }
        });
        let tilt = RootPose::new(Vec3::zeros(), b.tilt());
        let inv = tilt.orientation.conjugate();
        let omega = inv.rotate(&Vec3::from(to_heading(&b.omega, rpy[2])));
        let g = inv.rotate(&Vec3::new(0.0, 0.0, -1.0));
        EnvStateSnapshot {
            q: b.q,
            dq: b.dq,
            ddq,
            tau,
            v: to_heading(&b.v, rpy[2]),
            omega: omega.into(),
            rpy,
            height: b.position[2],
            keypoints: self.model.full_body_keypoints(&tilt, &b.q),
            feet,
            action: self.action,
            prev_action: self.prev_action,
            collision: contacts.collision,
            projected_gravity: g.into(),
        }
    }

    /// Why the episode would end in the current state, if it would.
    pub fn termination(&self) -> Option<DoneReason> {
        let [r, p, _] = self.snapshot.rpy;
        if r.abs() > self.cfg.max_roll || p.abs() > self.cfg.max_pitch {
            Some(DoneReason::Orientation)
        } else if self.snapshot.height < self.cfg.min_height {
            Some(DoneReason::Height)
        } else if self.steps >= self.cfg.max_steps() {
            Some(DoneReason::Timeout)
        } else {
            None
        }
    }

    /// Advances one control step. The episode is not reset automatically.
    pub fn step(&mut self, action: &[f64]) -> Result<Step> {
        if action.len() != NUM_JOINTS {
            return Err(Error::Dimension {
                what: "action",
                expected: NUM_JOINTS,
                got: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        self.prev_action = self.action;
        self.action.copy_from_slice(action);
        let default = self.model.default_pose();
        let target: JointVec = std::array::from_fn(|i| default[i] + self.cfg.action_scale * self.action[i]);

        let ctrl_dt = self.cfg.control_dt();
        if let (Some(m), Some(c)) = (&self.motions, self.cursor.clip) {
            self.cursor.time = self.wrap_time(m.get(c).duration(), self.cursor.time + ctrl_dt);
        }
        self.cursor.since_command += ctrl_dt;
        self.refresh_goals()?;

        let dq_before = self.body.dq;
        let mut tau = [0.0; NUM_JOINTS];
        for _ in 0..self.cfg.decimation {
            tau = pd_torque(&target, &self.body.q, &self.body.dq, &self.pd);
            self.backend
                .substep(&self.cfg, &self.model, &mut self.body, &target, &tau, &self.goals.1);
        }
        if !self.body.q.iter().chain(&self.body.position).chain(&self.body.rpy).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("body state"));
        }
        let ddq = std::array::from_fn(|i| (self.body.dq[i] - dq_before[i]) / ctrl_dt);
        self.steps += 1;

        let contacts = self.backend.contacts();
        for (m, c) in self.feet.iter_mut().zip(&contacts.feet) {
            if !c.in_contact {
                m.air_time += ctrl_dt;
            }
        }
        self.snapshot = self.make_snapshot(tau, ddq);
        for (m, f) in self.feet.iter_mut().zip(&self.snapshot.feet) {
            if f.in_contact {
                m.air_time = 0.0;
            }
            m.in_contact = f.in_contact;
        }

        let (ge, gm) = &self.goals;
        let reward = total_reward(&self.snapshot, ge, gm, &self.cfg.weights, &self.ctx, self.cfg.reward_mode)?;
        let reason = self.termination();
        Ok(Step {
            obs: self.observation(),
            reward,
            done: reason.is_some(),
            reason,
            info: StepInfo {
                clip_id: self.clip_id().map(str::to_owned),
                clip_time: self.cursor.time,
                episode_step: self.steps,
                snapshot: self.snapshot.clone(),
                movement_goal: self.goals.1,
            },
        })
    }

    /// Draw from the environment's own random stream.
    pub fn random_unit(&mut self) -> f64 {
        self.rng.random()
    }
}

/// Root pose with the given roll, pitch and yaw at `position`.
pub fn pose_from_rpy(position: [f64; 3], rpy: [f64; 3]) -> RootPose {
    RootPose {
        position,
        orientation: Quaternion::from_rpy(rpy[0], rpy[1], rpy[2]),
    }
}
