//! Acclaim motion file (`.amc`) parser.
//!
//! Besides the usual `:FULLY-SPECIFIED` and `:DEGREES`/`:RADIANS` headers,
//! an optional `:SAMPLES-PER-SECOND <hz>` header sets the frame rate;
//! without it CMU's 120 Hz is assumed.

use std::collections::HashMap;

use super::{compose_euler, Channel, ClipMeta, Category, RawFrame, RawMotionClip, SkeletonDef, CMU_FRAME_RATE};
use crate::error::{Error, Result};
use crate::kinematics::{Quaternion, Vec3};

struct PendingFrame {
    index: usize,
    line: usize,
    values: HashMap<usize, Vec<f64>>,
}

/// Parses a motion file against its skeleton. Euler channels are composed in
/// their listed order and conjugated by the bone's axis rotation, so every
/// stored rotation is a unit quaternion in the world-aligned rest frame.
pub fn parse_motion(text: &str, skeleton: &SkeletonDef) -> Result<RawMotionClip> {
    let mut angle_to_rad = skeleton.file_units.angle_to_rad;
    let mut frame_rate = CMU_FRAME_RATE;
    let mut frames: Vec<RawFrame> = Vec::new();
    let mut pending: Option<PendingFrame> = None;
    let mut last_index: Option<usize> = None;

    let axis_rot: Vec<Quaternion> = skeleton.bones.iter().map(|b| b.axis_rotation()).collect();

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix(':') {
            let toks: Vec<&str> = header.split_whitespace().collect();
            match toks.first().map(|s| s.to_ascii_uppercase()).as_deref() {
                Some("DEGREES") => angle_to_rad = std::f64::consts::PI / 180.0,
                Some("RADIANS") => angle_to_rad = 1.0,
                Some("SAMPLES-PER-SECOND") => {
                    frame_rate = toks
                        .get(1)
                        .and_then(|v| v.parse::<f64>().ok())
                        .ok_or_else(|| Error::Syntax {
                            line: line_no,
                            msg: "bad samples-per-second value".into(),
                        })?;
                    if !(frame_rate > 0.0) || !frame_rate.is_finite() {
                        return Err(Error::FrameRate(frame_rate));
                    }
                }
                _ => {}
            }
            continue;
        }

        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() == 1 && toks[0].bytes().all(|b| b.is_ascii_digit()) {
            let index: usize = toks[0].parse().map_err(|_| Error::Syntax {
                line: line_no,
                msg: "bad frame index".into(),
            })?;
            if let Some(prev) = last_index {
                if index <= prev {
                    return Err(Error::FrameOrder { prev, next: index });
                }
            }
            last_index = Some(index);
            if let Some(p) = pending.take() {
                frames.push(build_frame(skeleton, &axis_rot, angle_to_rad, p)?);
            }
            pending = Some(PendingFrame {
                index,
                line: line_no,
                values: HashMap::new(),
            });
            continue;
        }

        let frame = pending.as_mut().ok_or_else(|| Error::Syntax {
            line: line_no,
            msg: "bone values before the first frame index".into(),
        })?;
        let bone = skeleton.bone_index(toks[0]).ok_or_else(|| Error::Syntax {
            line: line_no,
            msg: format!("unknown bone `{}`", toks[0]),
        })?;
        let values = toks[1..]
            .iter()
            .map(|t| {
                t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Syntax {
                    line: line_no,
                    msg: format!("expected a number, found `{t}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let expected = if bone == 0 {
            skeleton.root_order.len()
        } else {
            skeleton.bones[bone].dof.len()
        };
        if values.len() != expected {
            return Err(Error::ChannelCount {
                frame: frame.index,
                bone: toks[0].to_string(),
                got: values.len(),
                expected,
            });
        }
        frame.values.insert(bone, values);
    }
    if let Some(p) = pending.take() {
        frames.push(build_frame(skeleton, &axis_rot, angle_to_rad, p)?);
    }

    let mut meta = ClipMeta::new(skeleton.name.clone(), "", Category::Others);
    meta.duration = frames.len().saturating_sub(1) as f64 / frame_rate;
    let clip = RawMotionClip {
        skeleton: skeleton.clone(),
        frame_rate,
        frames,
        meta,
    };
    clip.validate()?;
    Ok(clip)
}

fn build_frame(
    skeleton: &SkeletonDef,
    axis_rot: &[Quaternion],
    angle_to_rad: f64,
    p: PendingFrame,
) -> Result<RawFrame> {
    let length_to_m = skeleton.file_units.length_to_m;
    let mut root_translation = skeleton.root_position;
    let mut rotations = Vec::with_capacity(skeleton.bones.len());
    for (b, bone) in skeleton.bones.iter().enumerate() {
        let channels: &[Channel] = if b == 0 { &skeleton.root_order } else { &bone.dof };
        let local = match p.values.get(&b) {
            None => Quaternion::IDENTITY,
            Some(values) => {
                let mut euler = Vec::with_capacity(3);
                for (c, v) in channels.iter().zip(values) {
                    if c.is_rotation() {
                        euler.push((c.axis(), v * angle_to_rad));
                    } else if b == 0 {
                        root_translation[c.axis()] = skeleton.root_position[c.axis()] + v * length_to_m;
                    } else {
                        return Err(Error::Syntax {
                            line: p.line,
                            msg: format!("translation channel on non-root bone `{}`", bone.name),
                        });
                    }
                }
                let m = compose_euler(euler);
                let c = axis_rot[b];
                (c * m * c.conjugate()).normalized()
            }
        };
        rotations.push(local);
    }
    debug_assert!(Vec3::from(root_translation).iter().all(|v| v.is_finite()));
    Ok(RawFrame {
        root_translation,
        rotations,
    })
}
