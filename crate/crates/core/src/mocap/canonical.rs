//! Canonical clip documents.
//!
//! A clip is stored as a JSON object:
//!
//! ```text
//! {
//!   "format": "exbody.clip", "version": 1, "kind": "raw" | "retargeted",
//!   "units": {"length": "m", "angle": "rad", "frame_rate": "Hz", "time": "s"},
//!   "meta": {...}, "frame_rate": 60.0,
//!   raw:        "skeleton": {...}, "frames": [{"root_translation", "rotations"}]
//!   retargeted: "model", "joint_names", "frames": [{"q", "root"}],
//!               "derived": {"keypoints", "dq", "v", "omega"}, "limit_report"
//! }
//! ```
//!
//! Quaternions are `[x, y, z, w]`. Floats are written with round-trip
//! precision so a save/load cycle is exact.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Clip, ClipMeta, RawFrame, RawMotionClip, SkeletonDef};
use crate::error::{read_to_string, write_string, Error, Result};
use crate::kinematics::{JointVec, Keypoints, RootPose};
use crate::retarget::{LimitReport, RetargetedClip, RetargetedFrame};

pub const FORMAT: &str = "exbody.clip";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub length: String,
    pub angle: String,
    pub frame_rate: String,
    pub time: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            length: "m".into(),
            angle: "rad".into(),
            frame_rate: "Hz".into(),
            time: "s".into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    format: String,
    version: u32,
    kind: String,
    units: Units,
    meta: ClipMeta,
    frame_rate: f64,
    skeleton: SkeletonDef,
    frames: Vec<RawFrame>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFrame {
    q: JointVec,
    root: RootPose,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Derived {
    keypoints: Vec<Keypoints>,
    dq: Vec<JointVec>,
    v: Vec<[f64; 3]>,
    omega: Vec<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RetargetedDoc {
    format: String,
    version: u32,
    kind: String,
    units: Units,
    meta: ClipMeta,
    frame_rate: f64,
    model: String,
    #[serde(default)]
    joint_names: Vec<String>,
    frames: Vec<PoseFrame>,
    derived: Derived,
    limit_report: LimitReport,
}

/// Serializes a clip after checking its invariants.
pub fn save_canonical(clip: &Clip) -> Result<String> {
    match clip {
        Clip::Raw(c) => save_raw(c),
        Clip::Retargeted(c) => save_retargeted(c, &[]),
    }
}

pub fn save_raw(clip: &RawMotionClip) -> Result<String> {
    clip.validate()?;
    let doc = RawDoc {
        format: FORMAT.into(),
        version: VERSION,
        kind: "raw".into(),
        units: Units::default(),
        meta: clip.meta.clone(),
        frame_rate: clip.frame_rate,
        skeleton: clip.skeleton.clone(),
        frames: clip.frames.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// `joint_names` is informational and may be empty.
pub fn save_retargeted(clip: &RetargetedClip, joint_names: &[String]) -> Result<String> {
    clip.validate_structure()?;
    let doc = RetargetedDoc {
        format: FORMAT.into(),
        version: VERSION,
        kind: "retargeted".into(),
        units: Units::default(),
        meta: clip.meta.clone(),
        frame_rate: clip.frame_rate,
        model: clip.model.clone(),
        joint_names: joint_names.to_vec(),
        frames: clip
            .frames
            .iter()
            .map(|f| PoseFrame { q: f.q, root: f.root })
            .collect(),
        derived: Derived {
            keypoints: clip.frames.iter().map(|f| f.keypoints).collect(),
            dq: clip.frames.iter().map(|f| f.dq).collect(),
            v: clip.frames.iter().map(|f| f.v).collect(),
            omega: clip.frames.iter().map(|f| f.omega).collect(),
        },
        limit_report: clip.limit_report.clone(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

fn typed<T: DeserializeOwned>(value: serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(path, e.into_inner().to_string())
    })
}

fn header_str<'a>(v: &'a serde_json::Value, field: &str) -> Result<&'a str> {
    v.get(field)
        .and_then(|x| x.as_str())
        .ok_or_else(|| Error::schema(field, "missing or not a string"))
}

/// Parses a canonical document, checking format, version, units and
/// per-frame array lengths.
pub fn load_canonical(text: &str) -> Result<Clip> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
    if !value.is_object() {
        return Err(Error::schema("$", "expected an object"));
    }
    let format = header_str(&value, "format")?;
    if format != FORMAT {
        return Err(Error::schema("format", format!("expected `{FORMAT}`, found `{format}`")));
    }
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::schema("version", "missing or not an integer"))?;
    if version != VERSION as u64 {
        return Err(Error::Version {
            found: version as u32,
            expected: VERSION,
        });
    }
    let kind = header_str(&value, "kind")?.to_string();
    match kind.as_str() {
        "raw" => {
            let doc: RawDoc = typed(value)?;
            check_units(&doc.units)?;
            let clip = RawMotionClip {
                skeleton: doc.skeleton,
                frame_rate: doc.frame_rate,
                frames: doc.frames,
                meta: doc.meta,
            };
            clip.validate()?;
            Ok(Clip::Raw(clip))
        }
        "retargeted" => {
            let doc: RetargetedDoc = typed(value)?;
            check_units(&doc.units)?;
            let n = doc.frames.len();
            let d = &doc.derived;
            for (name, len) in [
                ("derived.keypoints", d.keypoints.len()),
                ("derived.dq", d.dq.len()),
                ("derived.v", d.v.len()),
                ("derived.omega", d.omega.len()),
            ] {
                if len != n {
                    return Err(Error::schema(name, format!("has {len} entries for {n} frames")));
                }
            }
            let frames = doc
                .frames
                .into_iter()
                .enumerate()
                .map(|(i, f)| RetargetedFrame {
                    q: f.q,
                    root: f.root,
                    keypoints: doc.derived.keypoints[i],
                    dq: doc.derived.dq[i],
                    v: doc.derived.v[i],
                    omega: doc.derived.omega[i],
                })
                .collect();
            let clip = RetargetedClip {
                meta: doc.meta,
                frame_rate: doc.frame_rate,
                model: doc.model,
                frames,
                limit_report: doc.limit_report,
            };
            clip.validate_structure()?;
            Ok(Clip::Retargeted(clip))
        }
        other => Err(Error::schema("kind", format!("unknown clip kind `{other}`"))),
    }
}

fn check_units(u: &Units) -> Result<()> {
    let want = Units::default();
    for (field, got, exp) in [
        ("units.length", &u.length, &want.length),
        ("units.angle", &u.angle, &want.angle),
        ("units.frame_rate", &u.frame_rate, &want.frame_rate),
        ("units.time", &u.time, &want.time),
    ] {
        if got != exp {
            return Err(Error::schema(field, format!("expected `{exp}`, found `{got}`")));
        }
    }
    Ok(())
}

pub fn save_file(path: &Path, clip: &Clip) -> Result<()> {
    write_string(path, &save_canonical(clip)?)
}

pub fn load_file(path: &Path) -> Result<Clip> {
    load_canonical(&read_to_string(path)?)
}
