//! Synthetic CMU-style corpus.
//!
//! Motions are authored as robot joint-angle and root trajectories and then
//! written out as human skeleton/motion text by inverting the bundled joint
//! mapping, so retargeting a generated clip recovers the authored angles up
//! to text rounding. The rest pose has the arms hanging down.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{CorpusEntry, CorpusIndex, INDEX_FILE};
use super::{parse_motion, parse_skeleton, Category, Clip, MotionLibrary, METERS_PER_INCH};
use crate::error::{write_string, Result};
use crate::kinematics::{JointVec, Quaternion, RobotModel, Vec3};
use crate::retarget::JointMapping;

/// Length unit declared by generated skeletons (CMU files use 0.45).
pub const LENGTH_UNIT: f64 = 0.45;
pub const SKELETON_FILE: &str = "synth.asf";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Style {
    Walk,
    Sidestep,
    Dance,
    Wave,
    Punch,
    Basketball,
    Climb,
    Sit,
    Hang,
    Stand,
}

/// Parameters of one authored motion.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSpec {
    pub style: Style,
    /// Heading-frame forward speed (m/s).
    pub speed: f64,
    /// Heading-frame lateral speed (m/s), positive to the left.
    pub lateral: f64,
    /// Yaw rate (rad/s).
    pub turn_rate: f64,
    /// Gait or gesture frequency (Hz).
    pub freq: f64,
    pub phase: f64,
    pub duration: f64,
    pub height: f64,
}

#[derive(Debug, Clone)]
pub struct SynthClip {
    pub id: String,
    pub description: String,
    pub category: Category,
    pub spec: MotionSpec,
    pub motion: String,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub skeleton: String,
    pub clips: Vec<SynthClip>,
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub seed: u64,
    pub frame_rate: f64,
    pub min_duration: f64,
    pub max_duration: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            frame_rate: 60.0,
            min_duration: 4.0,
            max_duration: 8.0,
        }
    }
}

struct Bone {
    name: &'static str,
    parent: &'static str,
    /// Rest direction in the robot frame.
    dir: [f64; 3],
    length: f64,
    /// Bone axis (degrees, XYZ).
    axis: [f64; 3],
}

const fn bone(name: &'static str, parent: &'static str, dir: [f64; 3], length: f64) -> Bone {
    Bone {
        name,
        parent,
        dir,
        length,
        axis: [0.0; 3],
    }
}

const BONES: [Bone; 21] = [
    bone("lhipjoint", "root", [0.0, 1.0, 0.0], 0.09),
    bone("lfemur", "lhipjoint", [0.0, 0.0, -1.0], 0.42),
    bone("ltibia", "lfemur", [0.0, 0.0, -1.0], 0.42),
    bone("lfoot", "ltibia", [1.0, 0.0, 0.0], 0.14),
    bone("rhipjoint", "root", [0.0, -1.0, 0.0], 0.09),
    bone("rfemur", "rhipjoint", [0.0, 0.0, -1.0], 0.42),
    bone("rtibia", "rfemur", [0.0, 0.0, -1.0], 0.42),
    bone("rfoot", "rtibia", [1.0, 0.0, 0.0], 0.14),
    bone("lowerback", "root", [0.0, 0.0, 1.0], 0.12),
    bone("upperback", "lowerback", [0.0, 0.0, 1.0], 0.14),
    bone("thorax", "upperback", [0.0, 0.0, 1.0], 0.14),
    bone("head", "thorax", [0.0, 0.0, 1.0], 0.2),
    bone("lclavicle", "thorax", [0.0, 1.0, 0.0], 0.17),
    Bone {
        name: "lhumerus",
        parent: "lclavicle",
        dir: [0.0, 0.0, -1.0],
        length: 0.29,
        axis: [0.0, 0.0, 20.0],
    },
    bone("lradius", "lhumerus", [0.0, 0.0, -1.0], 0.25),
    bone("lhand", "lradius", [0.0, 0.0, -1.0], 0.08),
    bone("rclavicle", "thorax", [0.0, -1.0, 0.0], 0.17),
    Bone {
        name: "rhumerus",
        parent: "rclavicle",
        dir: [0.0, 0.0, -1.0],
        length: 0.29,
        axis: [0.0, 0.0, -20.0],
    },
    bone("rradius", "rhumerus", [0.0, 0.0, -1.0], 0.25),
    bone("rhand", "rradius", [0.0, 0.0, -1.0], 0.08),
    bone("lowerneck", "thorax", [0.0, 0.0, 1.0], 0.05),
];

/// How a bone's rotation is written: three Euler channels or one signed
/// principal channel.
#[derive(Clone, Copy)]
enum Dof {
    None,
    Euler,
    Single { axis: usize },
}

struct Writer {
    model: RobotModel,
    mapping: JointMapping,
    dof: Vec<Dof>,
}

fn axis_letter(k: usize) -> &'static str {
    ["rx", "ry", "rz"][k]
}

impl Writer {
    fn new() -> Self {
        let model = RobotModel::h1();
        let mapping = JointMapping::cmu_h1(&model);
        let dof = BONES
            .iter()
            .map(|b| {
                if mapping.spherical.iter().any(|s| s.human == b.name) {
                    return Dof::Euler;
                }
                match mapping.hinge.iter().find(|h| h.human == b.name) {
                    Some(h) => {
                        let a = mapping.basis.conjugate().rotate(&h.axis);
                        Dof::Single { axis: a.iamax() }
                    }
                    None => Dof::None,
                }
            })
            .collect();
        Writer { model, mapping, dof }
    }

    fn to_human(&self, v: &Vec3) -> Vec3 {
        self.mapping.basis.conjugate().rotate(v)
    }

    fn rot_to_human(&self, q: &Quaternion) -> Quaternion {
        let b = self.mapping.basis;
        (b.conjugate() * *q * b).normalized()
    }

    fn skeleton_text(&self) -> String {
        let to_file = LENGTH_UNIT / METERS_PER_INCH;
        let mut s = String::new();
        s.push_str(":version 1.10\n:name synth\n:units\n  mass 1.0\n");
        let _ = writeln!(s, "  length {LENGTH_UNIT}");
        s.push_str("  angle deg\n:documentation\n  generated skeleton, arms down at rest\n");
        s.push_str(":root\n  order TX TY TZ RX RY RZ\n  axis XYZ\n  position 0 0 0\n  orientation 0 0 0\n");
        s.push_str(":bonedata\n");
        for (i, b) in BONES.iter().enumerate() {
            let d = self.to_human(&Vec3::from(b.dir));
            let _ = writeln!(s, "  begin\n    id {}\n    name {}", i + 1, b.name);
            let _ = writeln!(s, "    direction {} {} {}", d.x, d.y, d.z);
            let _ = writeln!(s, "    length {}", b.length * to_file);
            let _ = writeln!(s, "    axis {} {} {} XYZ", b.axis[0], b.axis[1], b.axis[2]);
            match self.dof[i] {
                Dof::None => {}
                Dof::Euler => {
                    s.push_str("    dof rx ry rz\n    limits (-180.0 180.0)\n      (-180.0 180.0)\n      (-180.0 180.0)\n")
                }
                Dof::Single { axis, .. } => {
                    let _ = writeln!(s, "    dof {}\n    limits (-180.0 180.0)", axis_letter(axis));
                }
            }
            s.push_str("  end\n");
        }
        s.push_str(":hierarchy\n  begin\n");
        let mut parents: Vec<&str> = Vec::new();
        for b in &BONES {
            if !parents.contains(&b.parent) {
                parents.push(b.parent);
            }
        }
        for p in parents {
            let kids: Vec<&str> = BONES.iter().filter(|b| b.parent == p).map(|b| b.name).collect();
            let _ = writeln!(s, "    {p} {}", kids.join(" "));
        }
        s.push_str("  end\n");
        s
    }

    /// Robot-frame rotation of each mapped bone for joint angles `q`.
    fn bone_rotation(&self, name: &str, q: &JointVec) -> Quaternion {
        if let Some(s) = self.mapping.spherical.iter().find(|s| s.human == name) {
            let m: Vec3 = s.joints.iter().map(|&j| self.model.axis(j) * q[j]).sum();
            return Quaternion::from_rotation_vector(&m);
        }
        if let Some(h) = self.mapping.hinge.iter().find(|h| h.human == name) {
            return Quaternion::from_rotation_vector(&(h.axis * q[h.joint]));
        }
        Quaternion::IDENTITY
    }

    fn frame_text(&self, out: &mut String, index: usize, pose: &Pose) {
        let to_file = LENGTH_UNIT / METERS_PER_INCH;
        let p = self.to_human(&Vec3::from(pose.position)) * to_file;
        let r = self.rot_to_human(&Quaternion::from_rpy(pose.rpy[0], pose.rpy[1], pose.rpy[2]));
        let [rx, ry, rz] = r.to_rpy().map(f64::to_degrees);
        let _ = writeln!(out, "{index}");
        let _ = writeln!(out, "root {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}", p.x, p.y, p.z, rx, ry, rz);
        for (i, b) in BONES.iter().enumerate() {
            let world = self.rot_to_human(&self.bone_rotation(b.name, &pose.q));
            match self.dof[i] {
                Dof::None => {}
                Dof::Euler => {
                    let c = super::compose_euler((0..3).map(|k| (k, b.axis[k].to_radians())));
                    let m = c.conjugate() * world * c;
                    let [x, y, z] = m.to_rpy().map(f64::to_degrees);
                    let _ = writeln!(out, "{} {x:.9} {y:.9} {z:.9}", b.name);
                }
                Dof::Single { axis } => {
                    let angle = world.to_rotation_vector()[axis];
                    let _ = writeln!(out, "{} {:.9}", b.name, angle.to_degrees());
                }
            }
        }
    }
}

/// Authored robot-frame pose at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub position: [f64; 3],
    pub rpy: [f64; 3],
    pub q: JointVec,
}

fn idx(model: &RobotModel, name: &str) -> usize {
    model.joint_index(name).expect("joint exists in bundled model")
}

/// Pose of `spec` at time `t`, in robot joint order.
pub fn authored_pose(spec: &MotionSpec, t: f64, model: &RobotModel) -> Pose {
    let j = |n: &str| idx(model, n);
    let mut q = model.default_pose();
    let phi = TAU * spec.freq * t + spec.phase;
    let (s, c) = phi.sin_cos();
    let mut rpy = [0.0, 0.0, spec.turn_rate * t];
    let mut z = spec.height;

    let legs = |q: &mut JointVec, pitch_amp: f64, roll_amp: f64, lift: f64| {
        for (side, sign) in [("left", 1.0), ("right", -1.0)] {
            let ls = s * sign;
            let lc = c * sign;
            q[j(&format!("{side}_hip_pitch"))] = -0.4 - pitch_amp * ls;
            q[j(&format!("{side}_hip_roll"))] = roll_amp * ls * sign;
            q[j(&format!("{side}_knee"))] = 0.8 + lift * (-lc).max(0.0);
            q[j(&format!("{side}_ankle"))] = -0.4 + 0.5 * pitch_amp * ls;
        }
    };
    let arms_relaxed = |q: &mut JointVec, swing: f64| {
        q[j("left_shoulder_pitch")] = swing * s;
        q[j("right_shoulder_pitch")] = -swing * s;
        q[j("left_shoulder_roll")] = 0.12;
        q[j("right_shoulder_roll")] = -0.12;
        q[j("left_elbow")] = 0.35 + 0.1 * s;
        q[j("right_elbow")] = 0.35 - 0.1 * s;
    };

    match spec.style {
        Style::Walk | Style::Basketball => {
            let stride = (0.2 + 0.3 * spec.speed.abs()).min(0.5) * spec.speed.signum();
            legs(&mut q, stride, 0.04, 0.5);
            arms_relaxed(&mut q, 0.6 * stride);
            q[j("torso")] = 0.12 * stride * s;
            rpy[0] = 0.02 * s;
            rpy[1] = 0.06 * spec.speed;
            z += 0.015 * (2.0 * phi).cos();
            if spec.style == Style::Basketball {
                let d = (TAU * 2.0 * spec.freq * t).sin();
                q[j("right_shoulder_pitch")] = -0.7 + 0.25 * d;
                q[j("right_shoulder_roll")] = -0.25;
                q[j("right_elbow")] = 0.9 + 0.35 * d;
            }
        }
        Style::Sidestep => {
            legs(&mut q, 0.05, 0.18 * spec.lateral.signum(), 0.4);
            arms_relaxed(&mut q, 0.05);
            rpy[0] = 0.03 * s;
            z += 0.01 * (2.0 * phi).cos();
        }
        Style::Dance => {
            let slow = (0.5 * phi).sin();
            legs(&mut q, 0.1, 0.05, 0.3);
            q[j("left_hip_yaw")] = 0.15 * slow;
            q[j("right_hip_yaw")] = -0.15 * slow;
            q[j("torso")] = 0.5 * slow;
            q[j("left_shoulder_roll")] = 1.1 + 0.7 * s;
            q[j("right_shoulder_roll")] = -1.1 + 0.7 * c;
            q[j("left_shoulder_pitch")] = -0.6 * c;
            q[j("right_shoulder_pitch")] = -0.6 * s;
            q[j("left_shoulder_yaw")] = 0.4 * slow;
            q[j("right_shoulder_yaw")] = -0.4 * slow;
            q[j("left_elbow")] = 0.9 + 0.6 * s;
            q[j("right_elbow")] = 0.9 - 0.6 * c;
            rpy = [0.1 * s, 0.08 * c, 0.5 * slow];
            z += 0.05 * (2.0 * phi).sin() - 0.03;
        }
        Style::Wave => {
            arms_relaxed(&mut q, 0.0);
            q[j("left_shoulder_roll")] = 2.3;
            q[j("left_shoulder_yaw")] = 0.3 * s;
            q[j("left_elbow")] = 0.9 + 0.5 * s;
            rpy[0] = -0.04;
        }
        Style::Punch => {
            let pl = (0.5 + 0.5 * s).powi(2);
            let pr = (0.5 - 0.5 * s).powi(2);
            q[j("left_shoulder_pitch")] = -0.3 - 1.1 * pl;
            q[j("right_shoulder_pitch")] = -0.3 - 1.1 * pr;
            q[j("left_shoulder_roll")] = 0.15;
            q[j("right_shoulder_roll")] = -0.15;
            q[j("left_elbow")] = 1.7 - 1.5 * pl;
            q[j("right_elbow")] = 1.7 - 1.5 * pr;
            q[j("torso")] = 0.35 * s;
            rpy[1] = 0.05;
        }
        Style::Climb | Style::Hang => {
            q[j("left_shoulder_pitch")] = -2.6 + 0.3 * s;
            q[j("right_shoulder_pitch")] = -2.6 - 0.3 * s;
            q[j("left_elbow")] = 0.6 + 0.4 * s;
            q[j("right_elbow")] = 0.6 - 0.4 * s;
            if spec.style == Style::Climb {
                legs(&mut q, 0.5, 0.0, 0.9);
                z += 0.2 * t;
            }
        }
        Style::Sit => {
            let k = (t / spec.duration.max(1e-9)).min(1.0);
            for side in ["left", "right"] {
                q[j(&format!("{side}_hip_pitch"))] = -0.4 - 1.1 * k;
                q[j(&format!("{side}_knee"))] = 0.8 + 0.9 * k;
            }
            arms_relaxed(&mut q, 0.0);
            z -= 0.4 * k;
        }
        Style::Stand => arms_relaxed(&mut q, 0.0),
    }

    // Root position: integrate heading-frame velocity with constant yaw rate.
    let (v, l, w) = (spec.speed, spec.lateral, spec.turn_rate);
    let (x, y) = if w.abs() < 1e-9 {
        (v * t, l * t)
    } else {
        let (sw, cw) = (w * t).sin_cos();
        (
            (v * sw + l * (cw - 1.0)) / w,
            (v * (1.0 - cw) + l * sw) / w,
        )
    };
    let mut position = [x, y, z];
    if spec.style == Style::Dance {
        position[0] += 0.1 * (0.5 * phi).sin();
    }
    Pose { position, rpy, q }
}

fn motion_text(writer: &Writer, spec: &MotionSpec, frame_rate: f64) -> String {
    let n = (spec.duration * frame_rate).round() as usize + 1;
    let mut out = String::new();
    out.push_str(":FULLY-SPECIFIED\n:DEGREES\n");
    let _ = writeln!(out, ":SAMPLES-PER-SECOND {frame_rate}");
    for i in 0..n {
        let pose = authored_pose(spec, i as f64 / frame_rate, &writer.model);
        writer.frame_text(&mut out, i + 1, &pose);
    }
    out
}

struct Plan {
    description: &'static str,
    category: Category,
    style: Style,
    speed: (f64, f64),
    lateral: f64,
    turn: (f64, f64),
}

const fn plan(description: &'static str, category: Category, style: Style, speed: (f64, f64)) -> Plan {
    Plan {
        description,
        category,
        style,
        speed,
        lateral: 0.0,
        turn: (0.0, 0.0),
    }
}

fn plans() -> Vec<Plan> {
    use Category::*;
    let mut v = vec![
        plan("walk forward", Walk, Style::Walk, (0.6, 1.0)),
        plan("walk forward", Walk, Style::Walk, (0.4, 0.8)),
        plan("slow walk", Walk, Style::Walk, (0.3, 0.5)),
        plan("fast walk", Walk, Style::Walk, (0.9, 1.2)),
        Plan {
            turn: (0.2, 0.4),
            ..plan("walk and turn left", Walk, Style::Walk, (0.5, 0.8))
        },
        Plan {
            turn: (-0.4, -0.2),
            ..plan("walk and turn right", Walk, Style::Walk, (0.5, 0.8))
        },
        plan("navigate around obstacles", Walk, Style::Walk, (0.4, 0.7)),
        plan("walking in place then forward", Walk, Style::Walk, (0.2, 0.5)),
        plan("walk backwards", Walk, Style::Walk, (-0.5, -0.3)),
        plan("walk backwards slowly", Walk, Style::Walk, (-0.3, -0.2)),
        plan("russian dance", Dance, Style::Dance, (0.0, 0.0)),
        plan("salsa dance", Dance, Style::Dance, (0.0, 0.0)),
        plan("modern dance", Dance, Style::Dance, (0.0, 0.0)),
        plan("dance, arms overhead", Dance, Style::Dance, (0.0, 0.0)),
        plan("wave hello", Others, Style::Wave, (0.0, 0.0)),
        plan("wave goodbye", Others, Style::Wave, (0.0, 0.0)),
        plan("punch and jab", Punch, Style::Punch, (0.0, 0.0)),
        plan("boxing: punch combination", Punch, Style::Punch, (0.0, 0.0)),
        plan("basketball dribble", Basketball, Style::Basketball, (0.2, 0.4)),
        plan("basketball: dribble and walk", Basketball, Style::Basketball, (0.3, 0.5)),
        plan("climb ladder", Others, Style::Climb, (0.0, 0.0)),
        plan("walk on uneven terrain", Walk, Style::Walk, (0.3, 0.5)),
        plan("sit on stool", Others, Style::Sit, (0.0, 0.0)),
        plan("hang from bar", Others, Style::Hang, (0.0, 0.0)),
        plan("stand still", Others, Style::Stand, (0.0, 0.0)),
        plan("carry box while walking", Others, Style::Walk, (0.3, 0.5)),
    ];
    // Sidesteps come in mirrored pairs so the lateral velocity is balanced.
    for (d_left, d_right, speed) in [
        ("walk sideways to the left", "walk sideways to the right", 0.3),
        ("side walk left", "side walk right", 0.45),
    ] {
        v.push(Plan {
            lateral: speed,
            ..plan(d_left, Category::Walk, Style::Sidestep, (0.0, 0.0))
        });
        v.push(Plan {
            lateral: -speed,
            ..plan(d_right, Category::Walk, Style::Sidestep, (0.0, 0.0))
        });
    }
    v
}

/// Generates the corpus. Identical configs give identical text.
pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let writer = Writer::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut clips = Vec::new();
    let mut pair_duration = 0.0;
    for (i, p) in plans().into_iter().enumerate() {
        let mut u = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
        let speed = u(p.speed.0, p.speed.1);
        let turn = u(p.turn.0, p.turn.1);
        // Mirrored sidesteps share duration and phase.
        let duration = if p.style == Style::Sidestep && p.lateral < 0.0 {
            pair_duration
        } else {
            let d = (u(cfg.min_duration, cfg.max_duration) * 2.0).round() / 2.0;
            pair_duration = d;
            d
        };
        let freq = match p.style {
            Style::Walk | Style::Basketball => 0.9 + 0.6 * speed.abs(),
            Style::Sidestep => 1.0,
            Style::Dance => u(0.6, 1.0),
            Style::Wave => u(1.2, 1.8),
            Style::Punch => u(0.8, 1.2),
            _ => 0.5,
        };
        let spec = MotionSpec {
            style: p.style,
            speed,
            lateral: p.lateral,
            turn_rate: turn,
            freq,
            phase: 0.0,
            duration,
            height: 1.0,
        };
        clips.push(SynthClip {
            id: format!("s{:02}", i + 1),
            description: p.description.to_string(),
            category: p.category,
            motion: motion_text(&writer, &spec, cfg.frame_rate),
            spec,
        });
    }
    SynthCorpus {
        skeleton: writer.skeleton_text(),
        clips,
    }
}

impl SynthCorpus {
    pub fn index(&self) -> CorpusIndex {
        CorpusIndex {
            clip: self
                .clips
                .iter()
                .map(|c| CorpusEntry {
                    id: c.id.clone(),
                    description: c.description.clone(),
                    category: c.category,
                    skeleton: SKELETON_FILE.into(),
                    motion: format!("{}.amc", c.id),
                })
                .collect(),
        }
    }

    /// Writes `synth.asf`, one `.amc` per clip and `index.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_string(&dir.join(SKELETON_FILE), &self.skeleton)?;
        for c in &self.clips {
            write_string(&dir.join(format!("{}.amc", c.id)), &c.motion)?;
        }
        write_string(&dir.join(INDEX_FILE), &self.index().to_toml()?)
    }

    /// Parses the generated text into a library of raw clips.
    pub fn library(&self) -> Result<MotionLibrary> {
        let skel = parse_skeleton(&self.skeleton)?;
        let mut lib = MotionLibrary::new();
        for c in &self.clips {
            let mut clip = parse_motion(&c.motion, &skel)?;
            clip.meta.id = c.id.clone();
            clip.meta.description = c.description.clone();
            clip.meta.category = c.category;
            lib.insert(Clip::Raw(clip))?;
        }
        Ok(lib)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            max_duration: 4.5,
            ..SynthConfig::default()
        };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.skeleton, b.skeleton);
        assert_eq!(a.clips[3].motion, b.clips[3].motion);
        assert_eq!(a.clips.len(), 30);
    }

    #[test]
    fn skeleton_parses_with_arms_down() {
        let c = generate(&SynthConfig::default());
        let skel = parse_skeleton(&c.skeleton).unwrap();
        let h = skel.bone_index("lhumerus").unwrap();
        // human frame: y up
        assert!(skel.bones[h].direction[1] < -0.99);
    }
}
