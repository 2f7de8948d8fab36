//! Tracking and regularization rewards.
//!
//! Vector residuals use the L2 norm and scalar residuals the absolute value.
//! Every term is reported with its raw value and its weighted contribution;
//! the grand total is the plain sum of the weighted values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goals::{delta_yaw, ExpressionGoal, GoalScope, MovementGoal};
use crate::kinematics::{wrap_angle, JointVec, RobotModel, NUM_JOINTS, NUM_LOWER, NUM_UPPER};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub dof_position: f64,
    pub keypoint: f64,
    pub linear_velocity: f64,
    pub roll_pitch: f64,
    pub yaw: f64,
    pub feet_height: f64,
    pub feet_air_time: f64,
    pub feet_drag: f64,
    pub contact_force: f64,
    pub stumble: f64,
    pub dof_acceleration: f64,
    pub action_rate: f64,
    pub energy: f64,
    pub collision: f64,
    pub dof_limit: f64,
    pub dof_deviation: f64,
    pub vertical_velocity: f64,
    pub horizontal_angular_velocity: f64,
    pub projected_gravity: f64,
    /// Contact-force threshold F_th (N).
    pub contact_force_threshold: f64,
    /// Foot clearance above which the height term starts (m).
    pub feet_height_threshold: f64,
    /// Upper bound on the raw feet-height value.
    pub feet_height_cap: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            dof_position: 3.0,
            keypoint: 2.0,
            linear_velocity: 6.0,
            roll_pitch: 1.0,
            yaw: 1.0,
            feet_height: 2.0,
            feet_air_time: 10.0,
            feet_drag: -0.1,
            contact_force: -3e-3,
            stumble: -2.0,
            dof_acceleration: -3e-7,
            action_rate: -0.1,
            energy: -1e-3,
            collision: -0.1,
            dof_limit: -10.0,
            dof_deviation: -10.0,
            vertical_velocity: -1.0,
            horizontal_angular_velocity: -0.4,
            projected_gravity: -2.0,
            contact_force_threshold: 350.0,
            feet_height_threshold: 0.2,
            feet_height_cap: 0.3,
        }
    }
}

/// Reward composition of a training variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// Upper-body expression, root movement and regularization.
    #[default]
    Exbody,
    /// Whole-body joint and keypoint tracking.
    FullBody,
    /// Exbody plus a discriminator style term.
    ExbodyAmp,
    /// Expression, movement and style; no regularization.
    ExbodyAmpNoReg,
}

impl RewardMode {
    pub fn scope(self) -> GoalScope {
        match self {
            RewardMode::FullBody => GoalScope::Full,
            _ => GoalScope::Upper,
        }
    }

    pub fn regularized(self) -> bool {
        self != RewardMode::ExbodyAmpNoReg
    }

    pub fn uses_style(self) -> bool {
        matches!(self, RewardMode::ExbodyAmp | RewardMode::ExbodyAmpNoReg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FootState {
    /// Height of the lowest foot point above ground (m).
    pub height: f64,
    /// Airborne time; on a new-contact step it holds the finished flight.
    pub air_time: f64,
    pub in_contact: bool,
    pub new_contact: bool,
    /// Ground reaction force (N), world frame.
    pub force: [f64; 3],
    /// Foot velocity (m/s), world frame.
    pub velocity: [f64; 3],
}

/// Everything the reward needs about one control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvStateSnapshot {
    pub q: JointVec,
    pub dq: JointVec,
    pub ddq: JointVec,
    pub tau: JointVec,
    /// Root linear velocity in the heading frame (m/s).
    pub v: [f64; 3],
    /// Root angular velocity in the body frame (rad/s).
    pub omega: [f64; 3],
    /// Roll, pitch, yaw (rad).
    pub rpy: [f64; 3],
    pub height: f64,
    /// Heading-frame keypoints: 6 upper then 4 lower (30 values).
    pub keypoints: Vec<f64>,
    pub feet: [FootState; 2],
    pub action: JointVec,
    pub prev_action: JointVec,
    pub collision: bool,
    /// Unit gravity direction in the body frame.
    pub projected_gravity: [f64; 3],
}

impl EnvStateSnapshot {
    /// Robot at rest in `q` with both feet planted.
    pub fn at_rest(q: JointVec, height: f64, keypoints: Vec<f64>) -> Self {
        let planted = FootState {
            in_contact: true,
            ..FootState::default()
        };
        EnvStateSnapshot {
            q,
            dq: [0.0; NUM_JOINTS],
            ddq: [0.0; NUM_JOINTS],
            tau: [0.0; NUM_JOINTS],
            v: [0.0; 3],
            omega: [0.0; 3],
            rpy: [0.0; 3],
            height,
            keypoints,
            feet: [planted; 2],
            action: q,
            prev_action: q,
            collision: false,
            projected_gravity: [0.0, 0.0, -1.0],
        }
    }
}

/// Model quantities used by the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardContext {
    pub upper: [usize; NUM_UPPER],
    pub lower: [usize; NUM_LOWER],
    pub default_low: [f64; NUM_LOWER],
    pub limits: [[f64; 2]; NUM_JOINTS],
}

impl RewardContext {
    pub fn from_model(model: &RobotModel) -> Self {
        let d = model.default_pose();
        let lower = *model.lower_indices();
        RewardContext {
            upper: *model.upper_indices(),
            lower,
            default_low: lower.map(|i| d[i]),
            limits: std::array::from_fn(|i| model.joints[i].limits),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord, Hash)]
#[serde(rename_all = "lowercase")]
pub enum TermGroup {
    Expression,
    Movement,
    Regularization,
    Style,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub group: TermGroup,
    pub raw: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub terms: BTreeMap<String, Term>,
    pub expression: f64,
    pub movement: f64,
    pub regularization: f64,
    pub style: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// Adds a term and refreshes the totals.
    pub fn push(&mut self, name: &str, group: TermGroup, raw: f64, weight: f64) {
        self.terms.insert(
            name.to_string(),
            Term {
                group,
                raw,
                weighted: weight * raw,
            },
        );
        self.refresh();
    }

    pub fn merge(&mut self, other: RewardBreakdown) {
        self.terms.extend(other.terms);
        self.refresh();
    }

    fn refresh(&mut self) {
        let sum = |g: Option<TermGroup>| {
            self.terms
                .values()
                .filter(|t| g.is_none_or(|g| t.group == g))
                .map(|t| t.weighted)
                .sum::<f64>()
        };
        self.expression = sum(Some(TermGroup::Expression));
        self.movement = sum(Some(TermGroup::Movement));
        self.regularization = sum(Some(TermGroup::Regularization));
        self.style = sum(Some(TermGroup::Style));
        self.total = sum(None);
    }

    pub fn weighted(&self, name: &str) -> f64 {
        self.terms.get(name).map_or(0.0, |t| t.weighted)
    }

    pub fn raw(&self, name: &str) -> f64 {
        self.terms.get(name).map_or(0.0, |t| t.raw)
    }

    /// Expression plus movement tracking.
    pub fn tracking(&self) -> f64 {
        self.expression + self.movement
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// DoF position `exp(-0.7 |q_ref - q|)` and keypoint `exp(-|p_ref - p|)`.
pub fn expression_reward(
    s: &EnvStateSnapshot,
    g: &ExpressionGoal,
    w: &RewardWeights,
    ctx: &RewardContext,
    scope: GoalScope,
) -> Result<RewardBreakdown> {
    let (q, p): (Vec<f64>, &[f64]) = match scope {
        GoalScope::Upper => (ctx.upper.iter().map(|&i| s.q[i]).collect(), s.keypoints.get(..18).unwrap_or(&[])),
        GoalScope::Full => (s.q.to_vec(), &s.keypoints[..]),
    };
    if g.q_ref.len() != q.len() {
        return Err(Error::Dimension {
            what: "expression joint target",
            expected: q.len(),
            got: g.q_ref.len(),
        });
    }
    if g.p_ref.len() != p.len() || p.is_empty() {
        return Err(Error::Dimension {
            what: "expression keypoint target",
            expected: p.len(),
            got: g.p_ref.len(),
        });
    }
    let mut b = RewardBreakdown::default();
    b.push("dof_position", TermGroup::Expression, (-0.7 * l2(&g.q_ref, &q)).exp(), w.dof_position);
    b.push("keypoint", TermGroup::Expression, (-l2(&g.p_ref, p)).exp(), w.keypoint);
    Ok(b)
}

/// Linear velocity `exp(-4 |v_ref - v|)`, roll/pitch `exp(-|rp_ref - rp|)`
/// and yaw `exp(-|dy|)`.
pub fn movement_reward(s: &EnvStateSnapshot, g: &MovementGoal, w: &RewardWeights) -> RewardBreakdown {
    let mut b = RewardBreakdown::default();
    b.push(
        "linear_velocity",
        TermGroup::Movement,
        (-4.0 * l2(&g.v_ref, &s.v)).exp(),
        w.linear_velocity,
    );
    let dr = wrap_angle(g.rpy_ref[0] - s.rpy[0]);
    let dp = wrap_angle(g.rpy_ref[1] - s.rpy[1]);
    b.push("roll_pitch", TermGroup::Movement, (-dr.hypot(dp)).exp(), w.roll_pitch);
    b.push(
        "yaw",
        TermGroup::Movement,
        (-delta_yaw(s.rpy[2], g.rpy_ref[2]).abs()).exp(),
        w.yaw,
    );
    b
}

/// Feet, smoothness and posture regularization.
pub fn regularization_reward(s: &EnvStateSnapshot, w: &RewardWeights, ctx: &RewardContext) -> RewardBreakdown {
    let mut b = RewardBreakdown::default();
    let g = TermGroup::Regularization;

    let clearance: f64 = s
        .feet
        .iter()
        .map(|f| (f.height.abs() - w.feet_height_threshold).max(0.0))
        .sum();
    b.push("feet_height", g, clearance.min(w.feet_height_cap), w.feet_height);

    let air: f64 = s
        .feet
        .iter()
        .filter(|f| f.new_contact)
        .map(|f| f.air_time)
        .sum();
    b.push("feet_air_time", g, air, w.feet_air_time);

    let drag: f64 = s
        .feet
        .iter()
        .filter(|f| f.in_contact && !f.new_contact)
        .map(|f| f.velocity[0].hypot(f.velocity[1]))
        .sum();
    b.push("feet_drag", g, drag, w.feet_drag);

    let excess: f64 = s
        .feet
        .iter()
        .map(|f| f.force[2].abs())
        .filter(|&fz| fz >= w.contact_force_threshold)
        .map(|fz| fz - w.contact_force_threshold)
        .sum();
    b.push("contact_force", g, excess, w.contact_force);

    let stumble = s
        .feet
        .iter()
        .any(|f| f.force[0].hypot(f.force[1]) > 4.0 * f.force[2].abs());
    b.push("stumble", g, stumble as u8 as f64, w.stumble);

    b.push("dof_acceleration", g, sq(&s.ddq), w.dof_acceleration);
    b.push("action_rate", g, l2(&s.prev_action, &s.action), w.action_rate);
    let power: f64 = s.tau.iter().zip(&s.dq).map(|(t, v)| (t * v).abs()).sum();
    b.push("energy", g, power, w.energy);
    b.push("collision", g, s.collision as u8 as f64, w.collision);

    let outside = s
        .q
        .iter()
        .zip(&ctx.limits)
        .filter(|(q, l)| **q > l[1] || **q < l[0])
        .count();
    b.push("dof_limit", g, outside as f64, w.dof_limit);

    let low: Vec<f64> = ctx.lower.iter().map(|&i| s.q[i]).collect();
    let dev = l2(&ctx.default_low, &low);
    b.push("dof_deviation", g, dev * dev, w.dof_deviation);

    b.push("vertical_velocity", g, s.v[2] * s.v[2], w.vertical_velocity);
    b.push(
        "horizontal_angular_velocity",
        g,
        sq(&s.omega[..2]),
        w.horizontal_angular_velocity,
    );
    b.push("projected_gravity", g, sq(&s.projected_gravity[..2]), w.projected_gravity);
    b
}

/// Discriminator style reward `max(0, 1 - 0.25 (d - 1)^2)`, unweighted.
pub fn style_value(d: f64) -> f64 {
    (1.0 - 0.25 * (d - 1.0) * (d - 1.0)).max(0.0)
}

/// Task reward for one step. The style term of the AMP modes is added by
/// the trainer with [`RewardBreakdown::push`].
pub fn total_reward(
    s: &EnvStateSnapshot,
    ge: &ExpressionGoal,
    gm: &MovementGoal,
    w: &RewardWeights,
    ctx: &RewardContext,
    mode: RewardMode,
) -> Result<RewardBreakdown> {
    let mut b = expression_reward(s, ge, w, ctx, mode.scope())?;
    b.merge(movement_reward(s, gm, w));
    if mode.regularized() {
        b.merge(regularization_reward(s, w, ctx));
    }
    Ok(b)
}
