use serde::{Deserialize, Serialize};

use super::{Backend, BodyState, EnvConfig};
use crate::goals::{to_heading, MovementGoal};
use crate::kinematics::{wrap_angle, JointVec, Quaternion, RobotModel, RootPose, Vec3, NUM_JOINTS};
use crate::{Error, Result};

const GRAVITY: f64 = 9.81;

/// Parameters of the planar-biped backend. The mass comes from the robot
/// model; the pitch inertia defaults to that of a uniform rod of the model's
/// nominal height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanarParams {
    pub pitch_inertia: Option<f64>,
    /// Center of mass relative to the pelvis in the body x-z plane (m).
    /// Defaults to pelvis height above the middle of the default-pose feet.
    pub com_offset: Option<[f64; 2]>,
    /// Reflected inertia of leg and torso joints (kg m^2).
    pub joint_inertia_legs: f64,
    pub joint_inertia_arms: f64,
    /// Normal stiffness per contact point (N/m).
    pub ground_stiffness: f64,
    /// Normal damping per contact point (N s/m).
    pub ground_damping: f64,
    /// Tangential stiffness per contact point toward where it touched down
    /// (N/m); the anchor slides once friction saturates.
    pub tangential_stiffness: f64,
    /// Tangential damping per contact point (N s/m).
    pub tangential_damping: f64,
    pub friction: f64,
    /// Restoring stiffness past a joint limit (N m/rad).
    pub limit_stiffness: f64,
    /// Height below which a replayed foot counts as touching the ground (m).
    pub contact_margin: f64,
}

impl Default for PlanarParams {
    fn default() -> Self {
        PlanarParams {
            pitch_inertia: None,
            com_offset: None,
            joint_inertia_legs: 0.4,
            joint_inertia_arms: 0.1,
            ground_stiffness: 5e4,
            ground_damping: 1000.0,
            tangential_stiffness: 2e4,
            tangential_damping: 200.0,
            friction: 0.8,
            limit_stiffness: 500.0,
            contact_margin: 0.02,
        }
    }
}

impl PlanarParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.joint_inertia_legs,
            self.joint_inertia_arms,
            self.ground_stiffness,
            self.ground_damping,
            self.tangential_stiffness,
            self.tangential_damping,
            self.friction,
            self.contact_margin,
        ];
        if positive.iter().any(|x| !(*x > 0.0)) || self.pitch_inertia.is_some_and(|i| !(i > 0.0)) || self.limit_stiffness < 0.0 {
            return Err(Error::Config("planar parameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct FootContact {
    pub height: f64,
    pub in_contact: bool,
    pub force: [f64; 3],
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Contacts {
    pub feet: [FootContact; 2],
    pub collision: bool,
}

type Points = [[Vec3; 2]; 2];

/// Backend memory between substeps.
#[derive(Debug, Clone)]
pub(crate) struct State {
    backend: Backend,
    params: PlanarParams,
    mass: f64,
    pitch_inertia: f64,
    com_offset: Vec3,
    inertia: JointVec,
    shoulder_pitch: Vec<usize>,
    points: Points,
    velocity: Points,
    anchors: [[Option<f64>; 2]; 2],
    force: [[f64; 3]; 2],
    collision: bool,
}

fn feet_and_collision(model: &RobotModel, body: &BodyState) -> (Points, bool) {
    let root = body.root();
    let frames = model.joint_frames(&root, &body.q);
    let points = model.foot_contacts(&frames);
    let knees = ["left_knee", "right_knee"]
        .iter()
        .filter_map(|n| model.joint_index(n))
        .any(|i| frames[i].position.z < 0.0);
    let hands = model.forward_kinematics(&root, &body.q);
    let hand_low = hands.chunks(3).any(|p| p[2] < 0.0);
    (points, knees || hand_low || body.position[2] < 0.0)
}

fn default_support_center(model: &RobotModel) -> Vec3 {
    let frames = model.joint_frames(&RootPose::default(), &model.default_pose());
    let pts = model.foot_contacts(&frames);
    let x = pts.iter().flatten().map(|p| p.x).sum::<f64>() / 4.0;
    Vec3::new(x, 0.0, 0.0)
}

impl State {
    pub fn new(cfg: &EnvConfig, model: &RobotModel) -> Self {
        let p = &cfg.planar;
        let mut inertia = [p.joint_inertia_arms; NUM_JOINTS];
        for i in super::legs_and_torso(model) {
            inertia[i] = p.joint_inertia_legs;
        }
        State {
            backend: cfg.backend,
            params: *p,
            mass: model.mass,
            pitch_inertia: p
                .pitch_inertia
                .unwrap_or(model.mass * model.nominal_height * model.nominal_height / 12.0),
            com_offset: match p.com_offset {
                Some([x, z]) => Vec3::new(x, 0.0, z),
                None => default_support_center(model),
            },
            inertia,
            shoulder_pitch: ["left_shoulder_pitch", "right_shoulder_pitch"]
                .iter()
                .filter_map(|n| model.joint_index(n))
                .collect(),
            points: [[Vec3::zeros(); 2]; 2],
            velocity: [[Vec3::zeros(); 2]; 2],
            anchors: [[None; 2]; 2],
            force: [[0.0; 3]; 2],
            collision: false,
        }
    }

    /// Restricts a state to what the backend can represent. The planar
    /// backend keeps forward position, height and pitch only.
    pub fn admit(&self, mut b: BodyState) -> BodyState {
        if self.backend == Backend::PlanarBiped {
            let v = to_heading(&b.v, b.rpy[2]);
            let w_body = b.root().orientation.conjugate().rotate(&Vec3::from(b.omega));
            b.position[1] = 0.0;
            b.rpy = [0.0, b.rpy[1], 0.0];
            b.v = [v[0], 0.0, v[2]];
            b.omega = [0.0, w_body.y, 0.0];
        }
        b
    }

    /// Re-derives contact geometry from `body` with zero point velocities.
    pub fn resync(&mut self, model: &RobotModel, body: &BodyState) {
        let (points, collision) = feet_and_collision(model, body);
        self.points = points;
        self.velocity = [[Vec3::zeros(); 2]; 2];
        self.anchors = [[None; 2]; 2];
        self.collision = collision;
        self.force = match self.backend {
            Backend::PlanarBiped => self.ground_forces(&self.com(body)).0,
            Backend::KinematicReplay => self.synthetic_forces(self.params.contact_margin),
        };
    }

    fn synthetic_forces(&self, margin: f64) -> [[f64; 3]; 2] {
        let touching: Vec<bool> = self
            .points
            .iter()
            .map(|f| f.iter().map(|p| p.z).fold(f64::INFINITY, f64::min) < margin)
            .collect();
        let n = touching.iter().filter(|&&t| t).count();
        std::array::from_fn(|i| {
            if touching[i] {
                [0.0, 0.0, self.mass * GRAVITY / n as f64]
            } else {
                [0.0; 3]
            }
        })
    }

    /// Per-foot forces and the pitch torque about `com`, without touching the
    /// friction anchors.
    fn ground_forces(&self, com: &Vec3) -> ([[f64; 3]; 2], f64) {
        let mut anchors = self.anchors;
        self.ground_forces_with(com, &mut anchors)
    }

    fn ground_forces_with(&self, com: &Vec3, anchors: &mut [[Option<f64>; 2]; 2]) -> ([[f64; 3]; 2], f64) {
        let p = self.params;
        let mut force = [[0.0; 3]; 2];
        let mut torque = 0.0;
        for f in 0..2 {
            for k in 0..2 {
                let (x, v) = (self.points[f][k], self.velocity[f][k]);
                if x.z >= 0.0 {
                    anchors[f][k] = None;
                    continue;
                }
                let fz = (-p.ground_stiffness * x.z - p.ground_damping * v.z).max(0.0);
                let cap = p.friction * fz;
                let a = *anchors[f][k].get_or_insert(x.x);
                let mut fx = -p.tangential_stiffness * (x.x - a) - p.tangential_damping * v.x;
                if fx.abs() > cap {
                    fx = fx.clamp(-cap, cap);
                    // slip: move the anchor so the spring alone carries the cap
                    anchors[f][k] = Some(x.x + fx / p.tangential_stiffness);
                }
                force[f][0] += fx;
                force[f][2] += fz;
                let r = x - com;
                torque += r.z * fx - r.x * fz;
            }
        }
        (force, torque)
    }

    pub fn contacts(&self) -> Contacts {
        let margin = self.params.contact_margin;
        let feet = std::array::from_fn(|i| {
            let low = self.points[i].iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
            let v = (self.velocity[i][0] + self.velocity[i][1]) * 0.5;
            let in_contact = match self.backend {
                Backend::PlanarBiped => self.force[i][2] > 0.0,
                Backend::KinematicReplay => low < margin,
            };
            FootContact {
                height: low.max(0.0),
                in_contact,
                force: self.force[i],
                velocity: v.into(),
            }
        });
        Contacts {
            feet,
            collision: self.collision,
        }
    }

    pub fn substep(
        &mut self,
        cfg: &EnvConfig,
        model: &RobotModel,
        body: &mut BodyState,
        target: &JointVec,
        tau: &JointVec,
        gm: &MovementGoal,
    ) {
        match self.backend {
            Backend::KinematicReplay => replay(cfg, body, target, gm),
            Backend::PlanarBiped => self.planar_joints(cfg, model, body, tau),
        }
        let (points, collision) = feet_and_collision(model, body);
        for f in 0..2 {
            for k in 0..2 {
                self.velocity[f][k] = (points[f][k] - self.points[f][k]) / cfg.dt;
            }
        }
        self.points = points;
        self.collision = collision;
        match self.backend {
            Backend::KinematicReplay => self.force = self.synthetic_forces(self.params.contact_margin),
            Backend::PlanarBiped => self.planar_root(cfg, body, tau),
        }
    }

    fn planar_joints(&self, cfg: &EnvConfig, model: &RobotModel, body: &mut BodyState, tau: &JointVec) {
        let k_lim = cfg.planar.limit_stiffness;
        for i in 0..NUM_JOINTS {
            let (lo, hi) = model.limits(i);
            let q = body.q[i];
            let stop = if q > hi {
                -k_lim * (q - hi)
            } else if q < lo {
                k_lim * (lo - q)
            } else {
                0.0
            };
            body.dq[i] += (tau[i] + stop) / self.inertia[i] * cfg.dt;
            body.q[i] += body.dq[i] * cfg.dt;
        }
    }

    fn com(&self, body: &BodyState) -> Vec3 {
        let root = body.root();
        root.pos() + root.orientation.rotate(&self.com_offset)
    }

    fn planar_root(&mut self, cfg: &EnvConfig, body: &mut BodyState, tau: &JointVec) {
        let dt = cfg.dt;
        let root = body.root();
        let arm = root.orientation.rotate(&self.com_offset);
        let com = root.pos() + arm;
        let mut anchors = self.anchors;
        let (force, mut torque) = self.ground_forces_with(&com, &mut anchors);
        self.anchors = anchors;
        self.force = force;
        // arm swing reacts on the trunk
        torque -= self.shoulder_pitch.iter().map(|&i| tau[i]).sum::<f64>();
        let fx = force[0][0] + force[1][0];
        let fz = force[0][2] + force[1][2];

        let w = body.omega[1];
        let mut vx = body.v[0] + w * arm.z;
        let mut vz = body.v[2] - w * arm.x;
        vx += fx / self.mass * dt;
        vz += (fz / self.mass - GRAVITY) * dt;
        let w = w + torque / self.pitch_inertia * dt;
        let pitch = wrap_angle(body.rpy[1] + w * dt);
        let orientation = Quaternion::from_rpy(0.0, pitch, 0.0);
        let com = com + Vec3::new(vx, 0.0, vz) * dt;
        let arm = orientation.rotate(&self.com_offset);
        body.position = (com - arm).into();
        body.rpy = [0.0, pitch, 0.0];
        body.v = [vx - w * arm.z, 0.0, vz + w * arm.x];
        body.omega = [0.0, w, 0.0];
    }
}

/// First-order lag of joints toward their targets and of the root toward the
/// commanded orientation and height; horizontal position integrates the
/// commanded heading-frame velocity.
fn replay(cfg: &EnvConfig, body: &mut BodyState, target: &JointVec, gm: &MovementGoal) {
    let dt = cfg.dt;
    let a = 1.0 - (-dt / cfg.replay_lag).exp();
    for i in 0..NUM_JOINTS {
        let q = body.q[i] + a * (target[i] - body.q[i]);
        body.dq[i] = (q - body.q[i]) / dt;
        body.q[i] = q;
    }
    let old = body.root().orientation;
    let [r, p, y] = body.rpy;
    let r = r + a * wrap_angle(gm.rpy_ref[0] - r);
    let p = p + a * wrap_angle(gm.rpy_ref[1] - p);
    let y = wrap_angle(y + a * wrap_angle(gm.rpy_ref[2] - y));
    let orientation = Quaternion::from_rpy(r, p, y);
    let (s, c) = y.sin_cos();
    let [vx, vy, _] = gm.v_ref;
    let z = body.position[2];
    let z_new = z + a * (gm.h_ref - z);
    body.v = [c * vx - s * vy, s * vx + c * vy, (z_new - z) / dt];
    body.position[0] += body.v[0] * dt;
    body.position[1] += body.v[1] * dt;
    body.position[2] = z_new;
    body.rpy = [r, p, y];
    body.omega = ((orientation * old.conjugate()).to_rotation_vector() / dt).into();
}
