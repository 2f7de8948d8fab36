//! Robot model data file and forward kinematics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::rotation::{Quaternion, Vec3};
use crate::error::{read_to_string, Error, Result};

pub const NUM_JOINTS: usize = 19;
pub const NUM_UPPER: usize = 9;
pub const NUM_LOWER: usize = 10;
pub const NUM_KEYPOINTS: usize = 6;
pub const KEYPOINT_DIM: usize = 3 * NUM_KEYPOINTS;

pub type JointVec = [f64; NUM_JOINTS];
pub type Keypoints = [f64; KEYPOINT_DIM];

const H1_MODEL: &str = include_str!("../../data/h1.toml");

/// Name of the floating base link that root-attached joints hang from.
pub const ROOT_LINK: &str = "pelvis";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub parent: String,
    pub axis: [f64; 3],
    pub limits: [f64; 2],
    pub offset: [f64; 3],
    #[serde(default)]
    pub default: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KeypointSpec {
    pub name: String,
    pub joint: String,
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FootSpec {
    pub name: String,
    pub joint: String,
    pub offset: [f64; 3],
    pub toe: f64,
    pub heel: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    name: String,
    mass: f64,
    nominal_height: f64,
    upper_body: Vec<String>,
    lower_body: Vec<String>,
    spherical: Vec<[String; 3]>,
    joints: Vec<JointSpec>,
    keypoints: Vec<KeypointSpec>,
    #[serde(default)]
    lower_keypoints: Vec<KeypointSpec>,
    feet: Vec<FootSpec>,
}

/// Validated kinematic model. Immutable after construction.
#[derive(Debug, Clone)]
pub struct RobotModel {
    pub name: String,
    pub mass: f64,
    pub nominal_height: f64,
    pub joints: Vec<JointSpec>,
    pub keypoints: Vec<KeypointSpec>,
    pub lower_keypoints: Vec<KeypointSpec>,
    pub feet: Vec<FootSpec>,
    upper: [usize; NUM_UPPER],
    lower: [usize; NUM_LOWER],
    spherical: Vec<[usize; 3]>,
    parents: Vec<Option<usize>>,
    axes: Vec<Vec3>,
    keypoint_joints: Vec<usize>,
    lower_keypoint_joints: Vec<usize>,
    foot_joints: Vec<usize>,
}

/// World pose of one joint frame.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub position: Vec3,
    pub rotation: Quaternion,
}

impl Frame {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.position + self.rotation.rotate(p)
    }
}

/// Root (pelvis) pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RootPose {
    pub position: [f64; 3],
    pub orientation: Quaternion,
}

impl RootPose {
    pub fn new(position: Vec3, orientation: Quaternion) -> Self {
        RootPose {
            position: position.into(),
            orientation,
        }
    }

    pub fn pos(&self) -> Vec3 {
        Vec3::from(self.position)
    }

    pub fn rpy(&self) -> [f64; 3] {
        self.orientation.to_rpy()
    }

    pub fn roll(&self) -> f64 {
        self.rpy()[0]
    }

    pub fn pitch(&self) -> f64 {
        self.rpy()[1]
    }

    pub fn yaw(&self) -> f64 {
        self.rpy()[2]
    }

    pub fn height(&self) -> f64 {
        self.position[2]
    }

    /// Same roll and pitch at the origin with zero yaw: the frame in which
    /// expression keypoints are compared.
    pub fn heading_local(&self) -> RootPose {
        RootPose {
            position: [0.0; 3],
            orientation: self.orientation.without_yaw(),
        }
    }
}

impl RobotModel {
    /// The bundled approximate H1 model.
    pub fn h1() -> Self {
        Self::from_toml_str(H1_MODEL).expect("bundled robot model is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read_to_string(path)?)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: ModelFile = toml::from_str(s)?;
        Self::from_file(file)
    }

    fn from_file(f: ModelFile) -> Result<Self> {
        if f.joints.len() != NUM_JOINTS {
            return Err(Error::Dimension {
                what: "robot joints",
                expected: NUM_JOINTS,
                got: f.joints.len(),
            });
        }
        if f.keypoints.len() != NUM_KEYPOINTS {
            return Err(Error::Dimension {
                what: "keypoint links",
                expected: NUM_KEYPOINTS,
                got: f.keypoints.len(),
            });
        }
        if !(f.mass > 0.0 && f.nominal_height > 0.0) {
            return Err(Error::Config("mass and nominal height must be positive".into()));
        }
        let index_of = |name: &str, before: usize| -> Result<usize> {
            f.joints[..before]
                .iter()
                .position(|j| j.name == name)
                .ok_or_else(|| Error::Config(format!("unknown or out-of-order joint `{name}`")))
        };

        let mut parents = Vec::with_capacity(NUM_JOINTS);
        let mut axes = Vec::with_capacity(NUM_JOINTS);
        for (i, j) in f.joints.iter().enumerate() {
            if f.joints[..i].iter().any(|o| o.name == j.name) {
                return Err(Error::Config(format!("duplicate joint `{}`", j.name)));
            }
            let parent = if j.parent == ROOT_LINK {
                None
            } else {
                Some(index_of(&j.parent, i)?)
            };
            parents.push(parent);
            let axis = Vec3::from(j.axis);
            if ((axis.norm()) - 1.0).abs() > 1e-9 {
                return Err(Error::NonUnitAxis(axis.norm()));
            }
            axes.push(axis);
            if j.limits[0] > j.limits[1] {
                return Err(Error::Config(format!("joint `{}` has inverted limits", j.name)));
            }
        }

        let names = |list: &[String], what: &'static str, n: usize| -> Result<Vec<usize>> {
            if list.len() != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    got: list.len(),
                });
            }
            list.iter().map(|s| index_of(s, NUM_JOINTS)).collect()
        };
        let upper: [usize; NUM_UPPER] = names(&f.upper_body, "upper-body joints", NUM_UPPER)?
            .try_into()
            .unwrap();
        let lower: [usize; NUM_LOWER] = names(&f.lower_body, "lower-body joints", NUM_LOWER)?
            .try_into()
            .unwrap();

        let mut spherical = Vec::new();
        for triple in &f.spherical {
            let idx = [
                index_of(&triple[0], NUM_JOINTS)?,
                index_of(&triple[1], NUM_JOINTS)?,
                index_of(&triple[2], NUM_JOINTS)?,
            ];
            for a in 0..3 {
                for b in (a + 1)..3 {
                    if axes[idx[a]].dot(&axes[idx[b]]).abs() > 1e-9 {
                        return Err(Error::Config(format!(
                            "spherical triple {triple:?} axes are not perpendicular"
                        )));
                    }
                }
            }
            spherical.push(idx);
        }

        let kp = |list: &[KeypointSpec]| -> Result<Vec<usize>> {
            list.iter().map(|k| index_of(&k.joint, NUM_JOINTS)).collect()
        };
        let keypoint_joints = kp(&f.keypoints)?;
        let lower_keypoint_joints = kp(&f.lower_keypoints)?;
        if f.feet.len() != 2 {
            return Err(Error::Dimension {
                what: "feet",
                expected: 2,
                got: f.feet.len(),
            });
        }
        let foot_joints = f
            .feet
            .iter()
            .map(|ft| index_of(&ft.joint, NUM_JOINTS))
            .collect::<Result<Vec<_>>>()?;

        Ok(RobotModel {
            name: f.name,
            mass: f.mass,
            nominal_height: f.nominal_height,
            joints: f.joints,
            keypoints: f.keypoints,
            lower_keypoints: f.lower_keypoints,
            feet: f.feet,
            upper,
            lower,
            spherical,
            parents,
            axes,
            keypoint_joints,
            lower_keypoint_joints,
            foot_joints,
        })
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn joint_names(&self) -> Vec<String> {
        self.joints.iter().map(|j| j.name.clone()).collect()
    }

    pub fn axis(&self, joint: usize) -> Vec3 {
        self.axes[joint]
    }

    pub fn limits(&self, joint: usize) -> (f64, f64) {
        let l = self.joints[joint].limits;
        (l[0], l[1])
    }

    /// Indices of the 9 upper-body joints in expression-goal order.
    pub fn upper_indices(&self) -> &[usize; NUM_UPPER] {
        &self.upper
    }

    pub fn lower_indices(&self) -> &[usize; NUM_LOWER] {
        &self.lower
    }

    pub fn spherical_triples(&self) -> &[[usize; 3]] {
        &self.spherical
    }

    pub fn default_pose(&self) -> JointVec {
        let mut q = [0.0; NUM_JOINTS];
        for (i, j) in self.joints.iter().enumerate() {
            q[i] = j.default;
        }
        q
    }

    pub fn upper_of(&self, q: &JointVec) -> [f64; NUM_UPPER] {
        self.upper.map(|i| q[i])
    }

    /// World frames of all joints for the given root pose and joint angles.
    pub fn joint_frames(&self, root: &RootPose, q: &JointVec) -> Vec<Frame> {
        let base = Frame {
            position: root.pos(),
            rotation: root.orientation,
        };
        let mut frames: Vec<Frame> = Vec::with_capacity(NUM_JOINTS);
        for (i, j) in self.joints.iter().enumerate() {
            let parent = self.parents[i].map_or(base, |p| frames[p]);
            let position = parent.apply(&Vec3::from(j.offset));
            let rotation = parent.rotation * Quaternion::from_axis_angle_unchecked(&self.axes[i], q[i]);
            frames.push(Frame { position, rotation });
        }
        frames
    }

    fn keypoints_from(&self, frames: &[Frame], specs: &[KeypointSpec], joints: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * specs.len());
        for (k, &j) in specs.iter().zip(joints) {
            let p = frames[j].apply(&Vec3::from(k.offset));
            out.extend_from_slice(p.as_slice());
        }
        out
    }

    /// The 6 tracked keypoints stacked as L-shoulder, R-shoulder, L-elbow,
    /// R-elbow, L-hand, R-hand.
    pub fn forward_kinematics(&self, root: &RootPose, q: &JointVec) -> Keypoints {
        let frames = self.joint_frames(root, q);
        self.keypoints_from(&frames, &self.keypoints, &self.keypoint_joints)
            .try_into()
            .unwrap()
    }

    /// Upper keypoints followed by the lower-body keypoints.
    pub fn full_body_keypoints(&self, root: &RootPose, q: &JointVec) -> Vec<f64> {
        let frames = self.joint_frames(root, q);
        let mut out = self.keypoints_from(&frames, &self.keypoints, &self.keypoint_joints);
        out.extend(self.keypoints_from(&frames, &self.lower_keypoints, &self.lower_keypoint_joints));
        out
    }

    pub fn full_keypoint_dim(&self) -> usize {
        3 * (self.keypoints.len() + self.lower_keypoints.len())
    }

    /// Sole reference frames of both feet.
    pub fn foot_frames(&self, frames: &[Frame]) -> [Frame; 2] {
        let f = |i: usize| {
            let spec = &self.feet[i];
            let j = frames[self.foot_joints[i]];
            Frame {
                position: j.apply(&Vec3::from(spec.offset)),
                rotation: j.rotation,
            }
        };
        [f(0), f(1)]
    }

    /// Toe and heel contact points for each foot, `[[toe, heel]; 2]`.
    pub fn foot_contacts(&self, frames: &[Frame]) -> [[Vec3; 2]; 2] {
        let soles = self.foot_frames(frames);
        let pts = |i: usize| {
            let s = &soles[i];
            let spec = &self.feet[i];
            [
                s.apply(&Vec3::new(spec.toe, 0.0, 0.0)),
                s.apply(&Vec3::new(spec.heel, 0.0, 0.0)),
            ]
        };
        [pts(0), pts(1)]
    }

    /// Lowest contact point height over both feet.
    pub fn min_foot_height(&self, root: &RootPose, q: &JointVec) -> f64 {
        let frames = self.joint_frames(root, q);
        self.foot_contacts(&frames)
            .iter()
            .flatten()
            .map(|p| p.z)
            .fold(f64::INFINITY, f64::min)
    }

    /// Pelvis height at which the default pose stands with its lowest foot
    /// point on the ground.
    pub fn default_root_height(&self) -> f64 {
        let root = RootPose::default();
        -self.min_foot_height(&root, &self.default_pose())
    }

    /// Joint indices violating their position limits (closed interval).
    pub fn limit_violations<'a>(&'a self, q: &'a JointVec) -> impl Iterator<Item = (usize, f64)> + 'a {
        q.iter().enumerate().filter_map(move |(i, &v)| {
            let (lo, hi) = self.limits(i);
            if v > hi {
                Some((i, v - hi))
            } else if v < lo {
                Some((i, lo - v))
            } else {
                None
            }
        })
    }
}
