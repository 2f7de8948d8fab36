//! Retargeting of human clips onto the robot model.
//!
//! Hips and shoulders are treated as spherical joints: the bone rotation is
//! converted to its rotation vector `m = theta * a` and distributed over the
//! three perpendicular motor axes. Elbows, knees, ankles and the torso are
//! hinges and take the projection of the rotation vector onto their axis.

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};
use crate::kinematics::{
    quat_to_axis_angle, AxisTracker, JointVec, Keypoints, Quaternion, RobotModel, RootPose, Vec3,
    NUM_JOINTS,
};
use crate::mocap::{Clip, ClipMeta, MotionLibrary, RawMotionClip};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalEntry {
    pub human: String,
    pub robot: [String; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HingeEntry {
    pub human: String,
    pub robot: String,
    #[serde(default)]
    pub axis: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingFile {
    name: String,
    human_root: String,
    basis: [[f64; 3]; 3],
    spherical: Vec<SphericalEntry>,
    hinge: Vec<HingeEntry>,
}

#[derive(Debug, Clone)]
pub struct SphericalMap {
    pub human: String,
    pub joints: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct HingeMap {
    pub human: String,
    pub joint: usize,
    pub axis: Vec3,
}

/// Human-to-robot joint correspondence, resolved against a model.
#[derive(Debug, Clone)]
pub struct JointMapping {
    pub name: String,
    pub human_root: String,
    /// Rotation taking human world-frame vectors to the robot world frame.
    pub basis: Quaternion,
    pub spherical: Vec<SphericalMap>,
    pub hinge: Vec<HingeMap>,
}

impl JointMapping {
    /// The bundled CMU-to-H1 mapping resolved against `model`.
    pub fn cmu_h1(model: &RobotModel) -> Self {
        Self::from_toml_str(include_str!("../../data/h1_cmu.toml"), model)
            .expect("bundled mapping is valid")
    }

    pub fn load(path: &Path, model: &RobotModel) -> Result<Self> {
        Self::from_toml_str(&read_to_string(path)?, model)
    }

    pub fn from_toml_str(s: &str, model: &RobotModel) -> Result<Self> {
        let file: MappingFile = toml::from_str(s)?;
        let b = Matrix3::from_fn(|r, c| file.basis[r][c]);
        if (b * b.transpose() - Matrix3::identity()).amax() > 1e-9 || (b.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation("mapping basis is not a proper rotation".into()));
        }
        let joint = |name: &str| model.joint_index(name).ok_or_else(|| Error::MissingJoint(name.to_string()));
        let mut seen = [0usize; NUM_JOINTS];
        let mut spherical = Vec::new();
        for e in &file.spherical {
            let joints = [joint(&e.robot[0])?, joint(&e.robot[1])?, joint(&e.robot[2])?];
            if !model.spherical_triples().contains(&joints) {
                return Err(Error::Validation(format!(
                    "`{}` does not map onto a spherical triple of the model",
                    e.human
                )));
            }
            joints.iter().for_each(|&j| seen[j] += 1);
            spherical.push(SphericalMap {
                human: e.human.clone(),
                joints,
            });
        }
        let mut hinge = Vec::new();
        for e in &file.hinge {
            let j = joint(&e.robot)?;
            let axis = match e.axis {
                Some(a) => {
                    let a = Vec3::from(a);
                    if (a.norm() - 1.0).abs() > 1e-6 {
                        return Err(Error::NonUnitAxis(a.norm()));
                    }
                    a
                }
                None => model.axis(j),
            };
            seen[j] += 1;
            hinge.push(HingeMap {
                human: e.human.clone(),
                joint: j,
                axis,
            });
        }
        if let Some(j) = seen.iter().position(|&n| n != 1) {
            return Err(Error::Validation(format!(
                "robot joint `{}` appears in {} mapping entries, expected exactly 1",
                model.joints[j].name, seen[j]
            )));
        }
        Ok(JointMapping {
            name: file.name,
            human_root: file.human_root,
            basis: Quaternion::from_matrix(&b),
            spherical,
            hinge,
        })
    }

    fn to_robot(&self, q: &Quaternion) -> Quaternion {
        (self.basis * *q * self.basis.conjugate()).normalized()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitViolation {
    pub joint: String,
    pub index: usize,
    /// Largest distance outside the closed limit interval (radians).
    pub max_excess: f64,
    /// Number of frames outside the limits.
    pub frames: usize,
}

/// Off-axis rotation discarded by a hinge projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HingeResidual {
    pub joint: String,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub violations: Vec<LimitViolation>,
    #[serde(default)]
    pub hinge_residuals: Vec<HingeResidual>,
}

impl LimitReport {
    /// True iff no frame leaves the joint limits.
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violation(&self, joint: &str) -> Option<&LimitViolation> {
        self.violations.iter().find(|v| v.joint == joint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetargetedFrame {
    pub q: JointVec,
    pub root: RootPose,
    pub keypoints: Keypoints,
    pub dq: JointVec,
    /// World-frame root linear velocity.
    pub v: [f64; 3],
    /// World-frame root angular velocity.
    pub omega: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetargetedClip {
    pub meta: ClipMeta,
    pub frame_rate: f64,
    pub model: String,
    pub frames: Vec<RetargetedFrame>,
    pub limit_report: LimitReport,
}

/// Central differences, one-sided at both ends.
fn finite_difference<const N: usize>(x: &[[f64; N]], rate: f64) -> Vec<[f64; N]> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let (a, b, span) = match i {
                0 => (0, 1, 1.0),
                i if i == n - 1 => (n - 2, n - 1, 1.0),
                i => (i - 1, i + 1, 2.0),
            };
            std::array::from_fn(|k| (x[b][k] - x[a][k]) * rate / span)
        })
        .collect()
}

fn angular_velocity(rot: &[Quaternion], rate: f64) -> Vec<[f64; 3]> {
    let n = rot.len();
    (0..n)
        .map(|i| {
            let (a, b, span) = match i {
                0 => (0, 1, 1.0),
                i if i == n - 1 => (n - 2, n - 1, 1.0),
                i => (i - 1, i + 1, 2.0),
            };
            let d = rot[b] * rot[a].conjugate();
            (d.to_rotation_vector() * rate / span).into()
        })
        .collect()
}

impl RetargetedClip {
    /// Builds a clip from joint and root trajectories, filling keypoints by
    /// forward kinematics and velocities by finite differences.
    pub fn from_trajectory(
        meta: ClipMeta,
        frame_rate: f64,
        q: Vec<JointVec>,
        roots: Vec<RootPose>,
        model: &RobotModel,
    ) -> Result<Self> {
        if !(frame_rate > 0.0) || !frame_rate.is_finite() {
            return Err(Error::FrameRate(frame_rate));
        }
        if q.len() != roots.len() {
            return Err(Error::Dimension {
                what: "root trajectory",
                expected: q.len(),
                got: roots.len(),
            });
        }
        if q.len() < 2 {
            return Err(Error::Validation(format!(
                "clip `{}` has {} frames, need at least 2",
                meta.id,
                q.len()
            )));
        }
        let dq = finite_difference(&q, frame_rate);
        let pos: Vec<[f64; 3]> = roots.iter().map(|r| r.position).collect();
        let v = finite_difference(&pos, frame_rate);
        let rot: Vec<Quaternion> = roots.iter().map(|r| r.orientation).collect();
        let omega = angular_velocity(&rot, frame_rate);
        let frames = (0..q.len())
            .map(|i| RetargetedFrame {
                q: q[i],
                root: roots[i],
                keypoints: model.forward_kinematics(&roots[i], &q[i]),
                dq: dq[i],
                v: v[i],
                omega: omega[i],
            })
            .collect();
        let mut meta = meta;
        meta.duration = (q.len() - 1) as f64 / frame_rate;
        let mut clip = RetargetedClip {
            meta,
            frame_rate,
            model: model.name.clone(),
            frames,
            limit_report: LimitReport::default(),
        };
        clip.limit_report = validate_limits(&clip, model);
        Ok(clip)
    }

    pub fn duration(&self) -> f64 {
        (self.frames.len().saturating_sub(1)) as f64 / self.frame_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    /// Checks the structural invariants and that stored keypoints agree
    /// with forward kinematics within `1e-9`.
    pub fn validate(&self, model: &RobotModel) -> Result<()> {
        self.validate_structure()?;
        for (i, f) in self.frames.iter().enumerate() {
            let kp = model.forward_kinematics(&f.root, &f.q);
            let err = kp
                .iter()
                .zip(&f.keypoints)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if err > 1e-9 {
                return Err(Error::Validation(format!(
                    "frame {i}: stored keypoints differ from forward kinematics by {err}"
                )));
            }
        }
        Ok(())
    }

    /// Model-free checks: frame rate, frame count, finiteness, unit root
    /// orientations and the duration bookkeeping.
    pub fn validate_structure(&self) -> Result<()> {
        if !(self.frame_rate > 0.0) || !self.frame_rate.is_finite() {
            return Err(Error::FrameRate(self.frame_rate));
        }
        if self.frames.len() < 2 {
            return Err(Error::Validation(format!(
                "clip `{}` has {} frames, need at least 2",
                self.meta.id,
                self.frames.len()
            )));
        }
        for (i, f) in self.frames.iter().enumerate() {
            let finite = f
                .q
                .iter()
                .chain(&f.dq)
                .chain(&f.keypoints)
                .chain(&f.v)
                .chain(&f.omega)
                .chain(&f.root.position)
                .all(|v| v.is_finite())
                && f.root.orientation.is_finite();
            if !finite {
                return Err(Error::Validation(format!("frame {i}: non-finite value")));
            }
            if (f.root.orientation.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "frame {i}: root orientation is not a unit quaternion"
                )));
            }
        }
        if (self.meta.duration - self.duration()).abs() > 1.0 / self.frame_rate {
            return Err(Error::Validation(format!(
                "duration {} disagrees with {} frames at {} Hz",
                self.meta.duration,
                self.frames.len(),
                self.frame_rate
            )));
        }
        Ok(())
    }
}

/// Rotation vector `theta * a` of a spherical joint rotation.
pub fn exp_map_spherical(q: &Quaternion) -> Result<Vec3> {
    Ok(quat_to_axis_angle(q, None)?.rotation_vector())
}

/// Per-joint maximum excess over the model's position limits. Values on a
/// limit are inside (closed interval).
pub fn validate_limits(clip: &RetargetedClip, model: &RobotModel) -> LimitReport {
    let mut excess = [0.0f64; NUM_JOINTS];
    let mut count = [0usize; NUM_JOINTS];
    for f in &clip.frames {
        for (j, e) in model.limit_violations(&f.q) {
            excess[j] = excess[j].max(e);
            count[j] += 1;
        }
    }
    let violations = (0..NUM_JOINTS)
        .filter(|&j| count[j] > 0)
        .map(|j| LimitViolation {
            joint: model.joints[j].name.clone(),
            index: j,
            max_excess: excess[j],
            frames: count[j],
        })
        .collect();
    LimitReport {
        violations,
        hinge_residuals: clip.limit_report.hinge_residuals.clone(),
    }
}

/// Retargets every raw clip of a library; already retargeted clips are
/// kept as they are.
pub fn retarget_library(lib: &MotionLibrary, mapping: &JointMapping, model: &RobotModel) -> Result<MotionLibrary> {
    let mut out = MotionLibrary::new();
    for c in lib.clips() {
        out.insert(match c {
            Clip::Raw(raw) => Clip::Retargeted(retarget_clip(raw, mapping, model)?),
            Clip::Retargeted(r) => Clip::Retargeted(r.clone()),
        })?;
    }
    out.report = lib.report.clone();
    Ok(out)
}

/// Maps a raw human clip onto the robot. Joint values are not clamped; the
/// root is shifted vertically so the lowest foot point over the clip is at
/// `z = 0`.
pub fn retarget_clip(raw: &RawMotionClip, mapping: &JointMapping, model: &RobotModel) -> Result<RetargetedClip> {
    if !(raw.frame_rate > 0.0) || !raw.frame_rate.is_finite() {
        return Err(Error::FrameRate(raw.frame_rate));
    }
    let skel = &raw.skeleton;
    let bone = |name: &str| skel.bone_index(name).ok_or_else(|| Error::MissingJoint(name.to_string()));
    let root_bone = bone(&mapping.human_root)?;
    let sph_bones = mapping
        .spherical
        .iter()
        .map(|s| bone(&s.human))
        .collect::<Result<Vec<_>>>()?;
    let hinge_bones = mapping
        .hinge
        .iter()
        .map(|h| bone(&h.human))
        .collect::<Result<Vec<_>>>()?;

    let mut trackers = vec![AxisTracker::new(); mapping.spherical.len()];
    let mut residual_max = vec![0.0f64; mapping.hinge.len()];
    let mut residual_sum = vec![0.0f64; mapping.hinge.len()];
    let mut qs = Vec::with_capacity(raw.frames.len());
    let mut roots = Vec::with_capacity(raw.frames.len());
    for frame in &raw.frames {
        let mut q = [0.0; NUM_JOINTS];
        for ((s, &b), tracker) in mapping.spherical.iter().zip(&sph_bones).zip(&mut trackers) {
            let m = tracker.convert(&mapping.to_robot(&frame.rotations[b]))?.rotation_vector();
            for &j in &s.joints {
                q[j] = m.dot(&model.axis(j));
            }
        }
        for (k, (h, &b)) in mapping.hinge.iter().zip(&hinge_bones).enumerate() {
            let m = mapping.to_robot(&frame.rotations[b]).to_rotation_vector();
            let along = m.dot(&h.axis);
            q[h.joint] = along;
            let off = (m - h.axis * along).norm();
            residual_max[k] = residual_max[k].max(off);
            residual_sum[k] += off;
        }
        qs.push(q);
        let pos = mapping.basis.rotate(&Vec3::from(frame.root_translation));
        let orient = mapping.to_robot(&frame.rotations[root_bone]);
        roots.push(RootPose::new(pos, orient));
    }

    let ground = qs
        .iter()
        .zip(&roots)
        .map(|(q, r)| model.min_foot_height(r, q))
        .fold(f64::INFINITY, f64::min);
    for r in &mut roots {
        r.position[2] -= ground;
    }

    let mut clip = RetargetedClip::from_trajectory(raw.meta.clone(), raw.frame_rate, qs, roots, model)?;
    let n = raw.frames.len() as f64;
    clip.limit_report.hinge_residuals = mapping
        .hinge
        .iter()
        .enumerate()
        .map(|(k, h)| HingeResidual {
            joint: model.joints[h.joint].name.clone(),
            max: residual_max[k],
            mean: residual_sum[k] / n,
        })
        .collect();
    Ok(clip)
}
