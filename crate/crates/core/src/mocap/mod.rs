//! Motion-capture ingestion: CMU-style skeleton (`.asf`) and motion (`.amc`)
//! parsing, the canonical clip format, and keyword curation.

mod amc;
mod asf;
pub mod canonical;
pub mod corpus;
mod curate;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use amc::parse_motion;
pub use asf::parse_skeleton;
pub use corpus::{load_corpus, CorpusEntry, CorpusIndex};
pub use curate::{
    curate, default_exclude_keywords, default_include_keywords, CurationDecision, CurationReport,
    DEFAULT_EXCLUDE, DEFAULT_INCLUDE,
};

use crate::error::{Error, Result};
use crate::kinematics::{Quaternion, Vec3};
use crate::retarget::RetargetedClip;

/// Meters per inch; ASF lengths are expressed in inches divided by the
/// declared length unit.
pub const METERS_PER_INCH: f64 = 0.0254;

/// Frame rate of CMU captures when a motion file does not state one.
pub const CMU_FRAME_RATE: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Tx,
    Ty,
    Tz,
    Rx,
    Ry,
    Rz,
}

impl Channel {
    pub fn is_rotation(self) -> bool {
        matches!(self, Channel::Rx | Channel::Ry | Channel::Rz)
    }

    /// Principal axis index (0 = x, 1 = y, 2 = z).
    pub fn axis(self) -> usize {
        match self {
            Channel::Tx | Channel::Rx => 0,
            Channel::Ty | Channel::Ry => 1,
            Channel::Tz | Channel::Rz => 2,
        }
    }
}

impl FromStr for Channel {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.to_ascii_lowercase().as_str() {
            "tx" => Ok(Channel::Tx),
            "ty" => Ok(Channel::Ty),
            "tz" => Ok(Channel::Tz),
            "rx" => Ok(Channel::Rx),
            "ry" => Ok(Channel::Ry),
            "rz" => Ok(Channel::Rz),
            _ => Err(()),
        }
    }
}

/// Composes principal rotations applied in the listed order, i.e. for
/// `[(x, a), (y, b), (z, c)]` the result is `Rz(c) * Ry(b) * Rx(a)`.
pub fn compose_euler(parts: impl IntoIterator<Item = (usize, f64)>) -> Quaternion {
    parts
        .into_iter()
        .fold(Quaternion::IDENTITY, |acc, (axis, angle)| {
            Quaternion::about_principal(axis, angle) * acc
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bone {
    pub name: String,
    pub parent: Option<String>,
    /// Unit direction from the bone's start to its tip, rest pose, world frame.
    pub direction: [f64; 3],
    /// Meters.
    pub length: f64,
    /// Orientation of the bone's local axes (radians), applied in `axis_order`.
    pub axis: [f64; 3],
    /// Principal-axis indices for `axis`, e.g. `[0, 1, 2]` for "XYZ".
    pub axis_order: [usize; 3],
    pub dof: Vec<Channel>,
}

impl Bone {
    /// Rotation from the bone's local axes to the world-aligned rest frame.
    pub fn axis_rotation(&self) -> Quaternion {
        compose_euler(self.axis_order.iter().map(|&k| (k, self.axis[k])))
    }

    pub fn offset(&self) -> Vec3 {
        Vec3::from(self.direction) * self.length
    }
}

/// Unit multipliers declared by a skeleton file. Motion files are read with
/// the units of the skeleton they belong to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FileUnits {
    /// File length value to meters.
    pub length_to_m: f64,
    /// File angle value to radians.
    pub angle_to_rad: f64,
}

impl Default for FileUnits {
    fn default() -> Self {
        FileUnits {
            length_to_m: METERS_PER_INCH,
            angle_to_rad: std::f64::consts::PI / 180.0,
        }
    }
}

/// Parsed skeleton. `bones[0]` is the root; parents precede children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonDef {
    pub name: String,
    pub bones: Vec<Bone>,
    /// Channel ordering of the root's translation and rotation values.
    pub root_order: Vec<Channel>,
    /// Rest position of the root (meters).
    pub root_position: [f64; 3],
    pub file_units: FileUnits,
}

impl SkeletonDef {
    pub fn bone_index(&self, name: &str) -> Option<usize> {
        self.bones.iter().position(|b| b.name == name)
    }

    pub fn parent_index(&self, bone: usize) -> Option<usize> {
        self.bones[bone]
            .parent
            .as_deref()
            .and_then(|p| self.bone_index(p))
    }

    pub fn validate(&self) -> Result<()> {
        if self.bones.is_empty() {
            return Err(Error::Validation("skeleton has no bones".into()));
        }
        let roots = self.bones.iter().filter(|b| b.parent.is_none()).count();
        if roots != 1 || self.bones[0].parent.is_some() {
            return Err(Error::Validation(format!(
                "skeleton must have exactly one root listed first, found {roots}"
            )));
        }
        for (i, b) in self.bones.iter().enumerate() {
            if let Some(p) = &b.parent {
                match self.bone_index(p) {
                    Some(pi) if pi < i => {}
                    _ => {
                        return Err(Error::Validation(format!(
                            "bone `{}` listed before its parent `{p}`",
                            b.name
                        )))
                    }
                }
            }
            let n = Vec3::from(b.direction).norm();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "bone `{}` direction has norm {n}",
                    b.name
                )));
            }
            if !(b.length >= 0.0) {
                return Err(Error::Validation(format!("bone `{}` has negative length", b.name)));
            }
        }
        Ok(())
    }

    /// World rotation of every bone and the world position of every bone tip
    /// for one frame. The root's tip is the root position.
    pub fn forward(&self, frame: &RawFrame) -> (Vec<Quaternion>, Vec<Vec3>) {
        let n = self.bones.len();
        let mut rot = Vec::with_capacity(n);
        let mut tip: Vec<Vec3> = Vec::with_capacity(n);
        for i in 0..n {
            let local = frame.rotations[i];
            match self.parent_index(i) {
                None => {
                    rot.push(local);
                    tip.push(Vec3::from(frame.root_translation));
                }
                Some(p) => {
                    let r = rot[p] * local;
                    let t = tip[p] + r.rotate(&self.bones[i].offset());
                    rot.push(r);
                    tip.push(t);
                }
            }
        }
        (rot, tip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Walk,
    Dance,
    Basketball,
    Punch,
    Others,
    Test,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::Walk => "walk",
            Category::Dance => "dance",
            Category::Basketball => "basketball",
            Category::Punch => "punch",
            Category::Others => "others",
            Category::Test => "test",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub id: String,
    pub description: String,
    pub category: Category,
    /// Seconds.
    pub duration: f64,
}

impl ClipMeta {
    pub fn new(id: impl Into<String>, description: impl Into<String>, category: Category) -> Self {
        ClipMeta {
            id: id.into(),
            description: description.into(),
            category,
            duration: 0.0,
        }
    }
}

/// One frame of local bone rotations (indexed like `SkeletonDef::bones`,
/// root first) plus the root translation in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFrame {
    pub root_translation: [f64; 3],
    pub rotations: Vec<Quaternion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawMotionClip {
    pub skeleton: SkeletonDef,
    pub frame_rate: f64,
    pub frames: Vec<RawFrame>,
    pub meta: ClipMeta,
}

impl RawMotionClip {
    pub fn duration(&self) -> f64 {
        (self.frames.len().saturating_sub(1)) as f64 / self.frame_rate
    }

    pub fn validate(&self) -> Result<()> {
        self.skeleton.validate()?;
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
        for (f, frame) in self.frames.iter().enumerate() {
            if frame.rotations.len() != self.skeleton.bones.len() {
                return Err(Error::Validation(format!(
                    "frame {f} has {} rotations for {} bones",
                    frame.rotations.len(),
                    self.skeleton.bones.len()
                )));
            }
            if frame.root_translation.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("frame {f}: non-finite root translation")));
            }
            for (b, q) in frame.rotations.iter().enumerate() {
                if !q.is_finite() || (q.norm() - 1.0).abs() > 1e-6 {
                    return Err(Error::Validation(format!(
                        "frame {f}: bone `{}` rotation is not a unit quaternion",
                        self.skeleton.bones[b].name
                    )));
                }
            }
        }
        let period = 1.0 / self.frame_rate;
        if (self.meta.duration - self.duration()).abs() > period {
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

/// A clip held by a [`MotionLibrary`].
#[derive(Debug, Clone)]
pub enum Clip {
    Raw(RawMotionClip),
    Retargeted(RetargetedClip),
}

impl Clip {
    pub fn meta(&self) -> &ClipMeta {
        match self {
            Clip::Raw(c) => &c.meta,
            Clip::Retargeted(c) => &c.meta,
        }
    }

    pub fn as_retargeted(&self) -> Option<&RetargetedClip> {
        match self {
            Clip::Retargeted(c) => Some(c),
            Clip::Raw(_) => None,
        }
    }
}

/// Id-keyed clip collection plus the report of the last curation pass.
#[derive(Debug, Clone, Default)]
pub struct MotionLibrary {
    clips: BTreeMap<String, Clip>,
    pub report: CurationReport,
}

impl MotionLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a clip; ids must be unique.
    pub fn insert(&mut self, clip: Clip) -> Result<()> {
        let id = clip.meta().id.clone();
        if self.clips.contains_key(&id) {
            return Err(Error::Validation(format!("duplicate clip id `{id}`")));
        }
        self.clips.insert(id, clip);
        Ok(())
    }

    pub fn from_clips(clips: impl IntoIterator<Item = Clip>) -> Result<Self> {
        let mut lib = Self::new();
        for c in clips {
            lib.insert(c)?;
        }
        Ok(lib)
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Clip> {
        self.clips.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.clips.keys().map(String::as_str)
    }

    pub fn clips(&self) -> impl Iterator<Item = &Clip> {
        self.clips.values()
    }

    pub fn retargeted(&self) -> impl Iterator<Item = &RetargetedClip> {
        self.clips.values().filter_map(Clip::as_retargeted)
    }

    pub(crate) fn retain(&mut self, mut keep: impl FnMut(&Clip) -> bool) {
        self.clips.retain(|_, c| keep(c));
    }
}
