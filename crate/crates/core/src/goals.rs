//! Expression and root-movement goals, reference state initialization and
//! random commands.
//!
//! Keypoint targets are expressed in the heading frame of the root: the
//! root sits at the origin and its yaw is removed while roll and pitch are
//! kept. Velocity targets are rotated into the same heading frame.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{wrap_angle, JointVec, Quaternion, RobotModel, RootPose, Vec3, NUM_JOINTS};
use crate::mocap::MotionLibrary;
use crate::retarget::RetargetedClip;

/// Which joints and keypoints an expression goal covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GoalScope {
    /// The 9 upper-body joints and 6 upper keypoints.
    #[default]
    Upper,
    /// All 19 joints and the upper plus lower keypoints.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionGoal {
    pub q_ref: Vec<f64>,
    pub p_ref: Vec<f64>,
}

impl ExpressionGoal {
    pub fn scope(&self) -> Option<GoalScope> {
        match (self.q_ref.len(), self.p_ref.len()) {
            (9, 18) => Some(GoalScope::Upper),
            (19, 30) => Some(GoalScope::Full),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MovementGoal {
    /// Heading-frame root velocity (m/s).
    pub v_ref: [f64; 3],
    /// Roll, pitch and absolute yaw (rad).
    pub rpy_ref: [f64; 3],
    /// Root height (m).
    pub h_ref: f64,
}

/// Closed sampling interval.
pub type Range = [f64; 2];

/// Uniform ranges for random root-movement commands. Yaw is not sampled.
/// The defaults are approximate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandRanges {
    pub v_x: Range,
    pub v_y: Range,
    pub roll: Range,
    pub pitch: Range,
    pub height: Range,
}

impl Default for CommandRanges {
    fn default() -> Self {
        CommandRanges {
            v_x: [-1.0, 1.0],
            v_y: [-0.5, 0.5],
            roll: [-0.4, 0.4],
            pitch: [-0.4, 0.4],
            height: [0.7, 1.1],
        }
    }
}

impl CommandRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("v_x", self.v_x),
            ("v_y", self.v_y),
            ("roll", self.roll),
            ("pitch", self.pitch),
            ("height", self.height),
        ] {
            if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::Config(format!("command range `{name}` has min > max")));
            }
        }
        if self.height[0] <= 0.0 {
            return Err(Error::Config("command height must be positive".into()));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(r: Range, rng: &mut R) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

/// Independent uniform draws per field. The yaw entry is left at zero; the
/// environment holds the heading it had when the command was drawn.
pub fn sample_random_command<R: Rng + ?Sized>(ranges: &CommandRanges, rng: &mut R) -> MovementGoal {
    let v_x = uniform(ranges.v_x, rng);
    let v_y = uniform(ranges.v_y, rng);
    let roll = uniform(ranges.roll, rng);
    let pitch = uniform(ranges.pitch, rng);
    let h = uniform(ranges.height, rng);
    MovementGoal {
        v_ref: [v_x, v_y, 0.0],
        rpy_ref: [roll, pitch, 0.0],
        h_ref: h,
    }
}

/// `wrap(current - desired)` in `(-pi, pi]`.
pub fn delta_yaw(current: f64, desired: f64) -> f64 {
    wrap_angle(current - desired)
}

/// Rotates a world-frame vector into the heading frame of `yaw`.
pub fn to_heading(v: &[f64; 3], yaw: f64) -> [f64; 3] {
    let (s, c) = yaw.sin_cos();
    [c * v[0] + s * v[1], -s * v[0] + c * v[1], v[2]]
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * t).collect()
}

fn lerp_arr<const N: usize>(a: &[f64; N], b: &[f64; N], t: f64) -> [f64; N] {
    std::array::from_fn(|k| a[k] + (b[k] - a[k]) * t)
}

/// Frame index and blend weight for time `t`.
fn bracket(clip: &RetargetedClip, t: f64) -> Result<(usize, usize, f64)> {
    let duration = clip.duration();
    if !(t >= 0.0 && t <= duration) {
        return Err(Error::TimeOutOfRange { t, duration });
    }
    let last = clip.frames.len() - 1;
    let x = t * clip.frame_rate;
    let i = (x.floor() as usize).min(last);
    if i == last {
        return Ok((last, last, 0.0));
    }
    Ok((i, i + 1, x - i as f64))
}

/// Expression keypoints for one pose in the heading frame.
pub fn heading_keypoints(model: &RobotModel, root: &RootPose, q: &JointVec, scope: GoalScope) -> Vec<f64> {
    let local = root.heading_local();
    match scope {
        GoalScope::Upper => model.forward_kinematics(&local, q).to_vec(),
        GoalScope::Full => model.full_body_keypoints(&local, q),
    }
}

/// Joint targets of an expression goal for the given scope.
pub fn expression_joints(model: &RobotModel, q: &JointVec, scope: GoalScope) -> Vec<f64> {
    match scope {
        GoalScope::Upper => model.upper_of(q).to_vec(),
        GoalScope::Full => q.to_vec(),
    }
}

/// Goals at time `t`: linear interpolation of joints, keypoints, velocity and
/// height between the bracketing frames, spherical interpolation of the root
/// orientation before extracting roll/pitch/yaw.
pub fn extract_goals(
    clip: &RetargetedClip,
    t: f64,
    model: &RobotModel,
    scope: GoalScope,
) -> Result<(ExpressionGoal, MovementGoal)> {
    let (i, j, a) = bracket(clip, t)?;
    let (f0, f1) = (&clip.frames[i], &clip.frames[j]);
    let q0 = expression_joints(model, &f0.q, scope);
    let p0 = heading_keypoints(model, &f0.root, &f0.q, scope);
    let (q_ref, p_ref) = if a == 0.0 {
        (q0, p0)
    } else {
        let q1 = expression_joints(model, &f1.q, scope);
        let p1 = heading_keypoints(model, &f1.root, &f1.q, scope);
        (lerp(&q0, &q1, a), lerp(&p0, &p1, a))
    };
    let orientation = f0.root.orientation.slerp(&f1.root.orientation, a);
    let rpy = orientation.to_rpy();
    let v_world = lerp_arr(&f0.v, &f1.v, a);
    let h = f0.root.position[2] + (f1.root.position[2] - f0.root.position[2]) * a;
    Ok((
        ExpressionGoal { q_ref, p_ref },
        MovementGoal {
            v_ref: to_heading(&v_world, rpy[2]),
            rpy_ref: rpy,
            h_ref: h,
        },
    ))
}

/// Full robot state sampled from a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub clip: usize,
    pub clip_id: String,
    pub time: f64,
    pub q: JointVec,
    pub dq: JointVec,
    pub root: RootPose,
    /// World-frame root velocities.
    pub v: [f64; 3],
    pub omega: [f64; 3],
}

/// Interpolated state of `clip` at time `t`.
pub fn state_at(clip: &RetargetedClip, t: f64) -> Result<InitialState> {
    let (i, j, a) = bracket(clip, t)?;
    let (f0, f1) = (&clip.frames[i], &clip.frames[j]);
    let root = RootPose {
        position: lerp_arr(&f0.root.position, &f1.root.position, a),
        orientation: f0.root.orientation.slerp(&f1.root.orientation, a),
    };
    Ok(InitialState {
        clip: 0,
        clip_id: clip.meta.id.clone(),
        time: t,
        q: lerp_arr(&f0.q, &f1.q, a),
        dq: lerp_arr(&f0.dq, &f1.dq, a),
        root,
        v: lerp_arr(&f0.v, &f1.v, a),
        omega: lerp_arr(&f0.omega, &f1.omega, a),
    })
}

/// Retargeted clips prepared for duration-weighted sampling.
#[derive(Debug, Clone, Default)]
pub struct MotionSet {
    clips: Vec<RetargetedClip>,
    cumulative: Vec<f64>,
}

impl MotionSet {
    pub fn new(clips: Vec<RetargetedClip>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        let mut acc = 0.0;
        let cumulative = clips
            .iter()
            .map(|c| {
                acc += c.duration();
                acc
            })
            .collect();
        Ok(MotionSet { clips, cumulative })
    }

    /// All retargeted clips of a library, in id order.
    pub fn from_library(lib: &MotionLibrary) -> Result<Self> {
        Self::new(lib.retargeted().cloned().collect())
    }

    pub fn clips(&self) -> &[RetargetedClip] {
        &self.clips
    }

    pub fn get(&self, i: usize) -> &RetargetedClip {
        &self.clips[i]
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// A point drawn uniformly on the concatenated timeline, so clips are
    /// chosen in proportion to their duration.
    pub fn sample_time<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let total = self.total_duration();
        let u = rng.random_range(0.0..total);
        let c = self.cumulative.partition_point(|&x| x <= u).min(self.clips.len() - 1);
        let start = if c == 0 { 0.0 } else { self.cumulative[c - 1] };
        let t = (u - start).clamp(0.0, self.clips[c].duration());
        (c, t)
    }
}

/// Reference state initialization: a duration-weighted clip and a uniform
/// time offset within it.
pub fn sample_rsi<R: Rng + ?Sized>(set: &MotionSet, rng: &mut R) -> Result<InitialState> {
    if set.is_empty() || set.total_duration() <= 0.0 {
        return Err(Error::EmptyLibrary);
    }
    let (c, t) = set.sample_time(rng);
    let mut s = state_at(&set.clips[c], t)?;
    s.clip = c;
    Ok(s)
}

/// Joint-space default state at the model's standing height.
pub fn default_state(model: &RobotModel) -> InitialState {
    InitialState {
        clip: 0,
        clip_id: String::new(),
        time: 0.0,
        q: model.default_pose(),
        dq: [0.0; NUM_JOINTS],
        root: RootPose::new(Vec3::new(0.0, 0.0, model.default_root_height()), Quaternion::IDENTITY),
        v: [0.0; 3],
        omega: [0.0; 3],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mocap::{Category, ClipMeta};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ramp_clip(model: &RobotModel, id: &str, seconds: f64, rate: f64) -> RetargetedClip {
        let n = (seconds * rate).round() as usize + 1;
        let qs = (0..n)
            .map(|i| {
                let mut q = model.default_pose();
                q[12] += 0.5 * (i as f64 / n as f64);
                q
            })
            .collect();
        let roots = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                RootPose::new(
                    Vec3::new(0.2 * t + 0.05 * t * t, 0.0, 1.0),
                    Quaternion::from_rpy(0.0, 0.0, 0.3),
                )
            })
            .collect();
        RetargetedClip::from_trajectory(ClipMeta::new(id, "", Category::Walk), rate, qs, roots, model).unwrap()
    }

    #[test]
    fn delta_yaw_examples() {
        assert_eq!(delta_yaw(0.3, 0.3), 0.0);
        assert_abs_diff_eq!(delta_yaw(PI - 0.1, -PI + 0.1), -0.2, epsilon = 1e-12);
        assert_eq!(delta_yaw(0.0, PI), PI);
    }

    #[test]
    fn goals_on_frame_equal_stored_values() {
        let model = RobotModel::h1();
        let clip = ramp_clip(&model, "a", 1.0, 10.0);
        let (e, m) = extract_goals(&clip, 0.3, &model, GoalScope::Upper).unwrap();
        let f = &clip.frames[3];
        assert_eq!(e.q_ref, model.upper_of(&f.q).to_vec());
        let kp = model.forward_kinematics(&f.root.heading_local(), &f.q);
        for (a, b) in e.p_ref.iter().zip(&kp) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(m.h_ref, 1.0);
        assert_abs_diff_eq!(m.rpy_ref[2], 0.3, epsilon = 1e-12);
        let vh = to_heading(&f.v, 0.3);
        assert_abs_diff_eq!(m.v_ref[0], vh[0], epsilon = 1e-12);
    }

    #[test]
    fn velocity_is_interpolated_linearly() {
        let model = RobotModel::h1();
        let mut clip = ramp_clip(&model, "a", 1.0, 10.0);
        clip.frames[2].v = [0.2, 0.0, 0.0];
        clip.frames[3].v = [0.4, 0.0, 0.0];
        for f in &mut clip.frames {
            f.root.orientation = Quaternion::IDENTITY;
        }
        let (_, m) = extract_goals(&clip, 0.25, &model, GoalScope::Upper).unwrap();
        assert_abs_diff_eq!(m.v_ref[0], 0.3, epsilon = 1e-12);
    }

    #[test]
    fn time_out_of_range() {
        let model = RobotModel::h1();
        let clip = ramp_clip(&model, "a", 1.0, 10.0);
        assert!(extract_goals(&clip, 1.0, &model, GoalScope::Upper).is_ok());
        assert!(matches!(
            extract_goals(&clip, 1.01, &model, GoalScope::Upper),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(extract_goals(&clip, -0.01, &model, GoalScope::Upper).is_err());
    }

    #[test]
    fn full_scope_dimensions() {
        let model = RobotModel::h1();
        let clip = ramp_clip(&model, "a", 1.0, 10.0);
        let (e, _) = extract_goals(&clip, 0.55, &model, GoalScope::Full).unwrap();
        assert_eq!(e.scope(), Some(GoalScope::Full));
    }

    #[test]
    fn rsi_single_clip_and_state_matches_frame() {
        let model = RobotModel::h1();
        let set = MotionSet::new(vec![ramp_clip(&model, "only", 2.0, 20.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = sample_rsi(&set, &mut rng).unwrap();
            assert_eq!(s.clip_id, "only");
            assert!(s.time >= 0.0 && s.time <= 2.0);
        }
        let s = state_at(set.get(0), 0.5).unwrap();
        assert_eq!(s.q, set.get(0).frames[10].q);
    }

    #[test]
    fn empty_set_is_error() {
        assert!(matches!(MotionSet::new(vec![]), Err(Error::EmptyLibrary)));
    }

    #[test]
    fn degenerate_command_ranges() {
        let r = CommandRanges {
            v_x: [0.3, 0.3],
            v_y: [0.0, 0.0],
            roll: [0.1, 0.1],
            pitch: [0.0, 0.0],
            height: [0.9, 0.9],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = sample_random_command(&r, &mut rng);
        assert_eq!(g.v_ref, [0.3, 0.0, 0.0]);
        assert_eq!(g.rpy_ref, [0.1, 0.0, 0.0]);
        assert_eq!(g.h_ref, 0.9);
        assert!(CommandRanges {
            v_x: [1.0, -1.0],
            ..r
        }
        .validate()
        .is_err());
    }
}
