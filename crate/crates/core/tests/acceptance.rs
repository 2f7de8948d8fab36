//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line
//! and the test fails if any criterion fails.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use exbody::env::{Backend, BodyState, CommandSource, Env, EnvConfig};
use exbody::goals::{heading_keypoints, ExpressionGoal, GoalScope, MotionSet, MovementGoal};
use exbody::kinematics::{
    axis_angle_to_quat, quat_to_axis_angle, Quaternion, AXIS_EPSILON, DEFAULT_AXIS, RobotModel, RootPose, Vec3, NUM_JOINTS,
};
use exbody::mocap::synth::{generate, SynthConfig};
use exbody::mocap::{curate, default_exclude_keywords, default_include_keywords, parse_skeleton};
use exbody::mocap::{Category, ClipMeta, CurationDecision, RawFrame, RawMotionClip};
use exbody::retarget::{exp_map_spherical, retarget_clip, retarget_library, JointMapping, RetargetedClip};
use exbody::reward::{regularization_reward, style_value, total_reward, EnvStateSnapshot, RewardContext, RewardMode, RewardWeights};
use exbody::rl::amp::demo_transition;
use exbody::rl::{
    compute_gae, evaluate, Activation, ActorCritic, AMPConfig, Discriminator, PPOConfig, PolicySpec, PpoBatch,
    TrainConfig, Trainer, Variant, AMP_FEATURE_DIM,
};
use exbody::stats::{clip_samples, compute_metrics, distribution_report, EpisodeRecord, Field, DEFAULT_HAND_SAMPLES};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use serde::Deserialize;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn curated_motions(cfg: &SynthConfig) -> Arc<MotionSet> {
    let model = RobotModel::h1();
    let lib = curate(
        generate(cfg).library().unwrap(),
        &default_include_keywords(),
        &default_exclude_keywords(),
    );
    let lib = retarget_library(&lib, &JointMapping::cmu_h1(&model), &model).unwrap();
    Arc::new(MotionSet::from_library(&lib).unwrap())
}

fn short_motions() -> Arc<MotionSet> {
    curated_motions(&SynthConfig {
        min_duration: 2.0,
        max_duration: 3.0,
        ..SynthConfig::default()
    })
}

fn random_rotation(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> (Vec3, f64, Quaternion) {
    let a: [f64; 3] = UnitSphere.sample(rng);
    let axis = Vec3::new(a[0], a[1], a[2]).normalize();
    let angle = rng.random_range(lo..hi);
    (axis, angle, axis_angle_to_quat(&axis, angle).unwrap())
}

fn quat_close_up_to_sign(a: &Quaternion, b: &Quaternion) -> f64 {
    let d = |s: f64| {
        (a.x - s * b.x)
            .abs()
            .max((a.y - s * b.y).abs())
            .max((a.z - s * b.z).abs())
            .max((a.w - s * b.w).abs())
    };
    d(1.0).min(d(-1.0))
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (_, _, q) = random_rotation(&mut rng, 1e-3, std::f64::consts::PI - 1e-3);
        let aa = quat_to_axis_angle(&q, None).map_err(|e| e.to_string())?;
        ensure!(!aa.used_fallback, "fallback taken for angle {}", aa.angle);
        let back = axis_angle_to_quat(&aa.axis, aa.angle).map_err(|e| e.to_string())?;
        worst = worst.max(quat_close_up_to_sign(&q, &back));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    ensure!(worst <= 1e-9, "round-trip error {worst:e}");
    ensure!(elapsed < 1.0, "took {elapsed:.3} s");

    // Near-identity rotations take the fallback axis with the angle as
    // computed, so the rebuilt vector part can differ from the original by at
    // most 2 * AXIS_EPSILON; below 1e-9 rad that is already inside 1e-9.
    let last = Vec3::new(0.0, 1.0, 0.0);
    let mut cases = 0;
    for angle in [0.0, 1e-12, 1e-9, 1e-7, 1e-6] {
        let (axis, _, _) = random_rotation(&mut rng, 0.0, 1.0);
        let q = axis_angle_to_quat(&axis, angle).unwrap();
        for hint in [None, Some(&last)] {
            let aa = quat_to_axis_angle(&q, hint).map_err(|e| e.to_string())?;
            ensure!(aa.used_fallback, "angle {angle} did not take the fallback");
            let want_axis = hint.copied().unwrap_or_else(|| Vec3::from(DEFAULT_AXIS));
            ensure!(aa.axis == want_axis, "fallback axis {:?}", aa.axis);
            ensure!(aa.angle == 2.0 * q.canonical().w.min(1.0).acos(), "fallback angle {}", aa.angle);
            let back = axis_angle_to_quat(&aa.axis, aa.angle).unwrap();
            let err = quat_close_up_to_sign(&q, &back);
            let tol = if angle <= 1e-9 { 1e-9 } else { 2.0 * AXIS_EPSILON };
            ensure!(err <= tol, "angle {angle}: error {err:e}");
            cases += 1;
        }
    }
    // just outside the fallback band the exact path holds again
    for angle in [1e-5, 1e-4] {
        let (axis, _, _) = random_rotation(&mut rng, 0.0, 1.0);
        let q = axis_angle_to_quat(&axis, angle).unwrap();
        let aa = quat_to_axis_angle(&q, None).map_err(|e| e.to_string())?;
        ensure!(!aa.used_fallback, "angle {angle} took the fallback");
        let err = quat_close_up_to_sign(&q, &axis_angle_to_quat(&aa.axis, aa.angle).unwrap());
        ensure!(err <= 1e-9, "angle {angle}: error {err:e}");
        cases += 1;
    }
    Ok(format!("10000 rotations, max error {worst:.1e}, {elapsed:.3} s; {cases} small-angle cases"))
}

/// Raw clip on the synthetic skeleton whose left forearm rotates by
/// `angle(t)` about the robot elbow axis.
fn elbow_clip(rate: f64, frames: usize, angle: impl Fn(f64) -> f64) -> RawMotionClip {
    let model = RobotModel::h1();
    let mapping = JointMapping::cmu_h1(&model);
    let corpus = generate(&SynthConfig {
        min_duration: 2.0,
        max_duration: 2.5,
        ..SynthConfig::default()
    });
    let skel = parse_skeleton(&corpus.skeleton).unwrap();
    let bone = skel.bone_index("lradius").unwrap();
    let axis = model.axis(model.joint_index("left_elbow").unwrap());
    let b = mapping.basis;
    let frames = (0..frames)
        .map(|i| {
            let mut rotations = vec![Quaternion::IDENTITY; skel.bones.len()];
            let r = Quaternion::from_rotation_vector(&(axis * angle(i as f64 / rate)));
            rotations[bone] = b.conjugate() * r * b;
            RawFrame {
                root_translation: Vec3::zeros().into(),
                rotations,
            }
        })
        .collect::<Vec<_>>();
    let mut meta = ClipMeta::new("elbow", "wave", Category::Test);
    meta.duration = (frames.len() - 1) as f64 / rate;
    RawMotionClip {
        skeleton: skel,
        frame_rate: rate,
        frames,
        meta,
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (_, _, q) = random_rotation(&mut rng, 1e-3, std::f64::consts::PI - 1e-3);
        let m = exp_map_spherical(&q).map_err(|e| e.to_string())?;
        let back = axis_angle_to_quat(&(m / m.norm()), m.norm()).unwrap();
        worst = worst.max(quat_close_up_to_sign(&q, &back));
    }
    ensure!(worst <= 1e-9, "exp-map reconstruction error {worst:e}");

    let model = RobotModel::h1();
    let clip = retarget_clip(&elbow_clip(100.0, 101, |t| t), &JointMapping::cmu_h1(&model), &model)
        .map_err(|e| e.to_string())?;
    let e = model.joint_index("left_elbow").unwrap();
    let mut dq_err = 0.0f64;
    for f in &clip.frames[1..100] {
        dq_err = dq_err.max((f.dq[e] - 1.0).abs());
    }
    ensure!(dq_err <= 0.02, "elbow velocity off by {dq_err}");
    Ok(format!("exp-map error {worst:.1e}; elbow dq max relative error {dq_err:.1e}"))
}

/// Neumaier-compensated sum.
fn csum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    csum(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y))).sqrt()
}

fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r - std::f64::consts::TAU
    } else {
        r
    }
}

fn rest_state(model: &RobotModel) -> (EnvStateSnapshot, ExpressionGoal, MovementGoal) {
    let q = model.default_pose();
    let kp = heading_keypoints(model, &RootPose::default(), &q, GoalScope::Full);
    let s = EnvStateSnapshot::at_rest(q, 1.0, kp.clone());
    let ge = ExpressionGoal {
        q_ref: model.upper_of(&q).to_vec(),
        p_ref: kp[..18].to_vec(),
    };
    let gm = MovementGoal {
        v_ref: [0.0; 3],
        rpy_ref: [0.0; 3],
        h_ref: 1.0,
    };
    (s, ge, gm)
}

const TRACKING: [&str; 5] = ["dof_position", "keypoint", "linear_velocity", "roll_pitch", "yaw"];

fn criterion_3() -> Outcome {
    let model = RobotModel::h1();
    let ctx = RewardContext::from_model(&model);
    let w = RewardWeights::default();

    let (s, ge, gm) = rest_state(&model);
    let b = total_reward(&s, &ge, &gm, &w, &ctx, RewardMode::Exbody).map_err(|e| e.to_string())?;
    let tracking: f64 = TRACKING.iter().map(|n| b.weighted(n)).sum();
    ensure!(tracking == 13.0, "perfect tracking scored {tracking}");
    ensure!(b.expression + b.movement == 13.0, "group totals {} + {}", b.expression, b.movement);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let upper = *model.upper_indices();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (mut s, mut ge, mut gm) = rest_state(&model);
        let mut r = |scale: f64| rng.random_range(-scale..scale);
        for j in 0..NUM_JOINTS {
            s.q[j] += r(0.5);
        }
        for k in &mut s.keypoints {
            *k += r(0.3);
        }
        s.v = [r(1.5), r(1.0), r(0.3)];
        s.rpy = [r(0.6), r(0.6), r(3.1)];
        for x in ge.q_ref.iter_mut().chain(ge.p_ref.iter_mut()) {
            *x += r(0.4);
        }
        gm.v_ref = [r(1.0), r(0.5), r(0.1)];
        gm.rpy_ref = [r(0.4), r(0.4), r(3.1)];

        let b = total_reward(&s, &ge, &gm, &w, &ctx, RewardMode::Exbody).map_err(|e| e.to_string())?;
        let q_up: Vec<f64> = upper.iter().map(|&i| s.q[i]).collect();
        let rp = [wrap(gm.rpy_ref[0] - s.rpy[0]), wrap(gm.rpy_ref[1] - s.rpy[1])];
        let want = [
            3.0 * (-0.7 * dist(&ge.q_ref, &q_up)).exp(),
            2.0 * (-dist(&ge.p_ref, &s.keypoints[..18])).exp(),
            6.0 * (-4.0 * dist(&gm.v_ref, &s.v)).exp(),
            (-dist(&rp, &[0.0, 0.0])).exp(),
            (-wrap(s.rpy[2] - gm.rpy_ref[2]).abs()).exp(),
        ];
        for (name, want) in TRACKING.iter().zip(want) {
            let err = (b.weighted(name) - want).abs();
            ensure!(err < 1e-12, "{name}: {} vs {want}", b.weighted(name));
            worst = worst.max(err);
        }
    }

    let e = model.joint_index("left_elbow").unwrap();
    let hip = model.joint_index("left_hip_pitch").unwrap();
    type Set = Box<dyn Fn(&mut EnvStateSnapshot)>;
    let cases: Vec<(&str, Set)> = vec![
        ("feet_height", Box::new(|s| s.feet[0].height = 0.35)),
        (
            "feet_air_time",
            Box::new(|s| {
                s.feet[0].new_contact = true;
                s.feet[0].air_time = 0.5;
            }),
        ),
        ("feet_drag", Box::new(|s| s.feet[1].velocity = [0.3, 0.4, 0.0])),
        ("contact_force", Box::new(|s| s.feet[0].force = [0.0, 0.0, 400.0])),
        ("stumble", Box::new(|s| s.feet[1].force = [50.0, 0.0, 10.0])),
        ("dof_acceleration", Box::new(|s| s.ddq[0] = 100.0)),
        ("action_rate", Box::new(|s| s.action[3] += 0.5)),
        (
            "energy",
            Box::new(|s| {
                s.tau[2] = -10.0;
                s.dq[2] = 2.0;
            }),
        ),
        ("collision", Box::new(|s| s.collision = true)),
        ("dof_limit", Box::new(move |s| s.q[e] = 3.0)),
        ("dof_deviation", Box::new(move |s| s.q[hip] += 0.2)),
        ("vertical_velocity", Box::new(|s| s.v[2] = 0.5)),
        ("horizontal_angular_velocity", Box::new(|s| s.omega = [0.3, 0.4, 0.0])),
        ("projected_gravity", Box::new(|s| s.projected_gravity = [0.6, 0.0, -0.8])),
    ];
    let s0 = rest_state(&model).0;
    let at_rest = regularization_reward(&s0, &w, &ctx);
    ensure!(at_rest.terms.len() == cases.len(), "{} regularization terms", at_rest.terms.len());
    for (name, set) in &cases {
        ensure!(at_rest.weighted(name) == 0.0, "{name} active at rest");
        let mut s = s0.clone();
        set(&mut s);
        let v = regularization_reward(&s, &w, &ctx).weighted(name);
        ensure!(v != 0.0, "{name} did not activate");
    }
    Ok(format!(
        "perfect tracking 13.0; 1000 random states max error {worst:.1e}; {} regularization terms activate",
        cases.len()
    ))
}

fn criterion_4() -> Outcome {
    let model = Arc::new(RobotModel::h1());
    let cfg = EnvConfig {
        rsi: false,
        commands: CommandSource::Random,
        ..EnvConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checks = 0;
    for k in 0..50 {
        let mut q = model.default_pose();
        let mut dq = [0.0; NUM_JOINTS];
        for i in 0..NUM_JOINTS {
            q[i] += rng.random_range(-0.3..0.3);
            dq[i] = rng.random_range(-2.0..2.0);
        }
        let body = BodyState {
            q,
            dq,
            position: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0],
            rpy: [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), 0.0],
            v: [0.0; 3],
            omega: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        };
        let mut env = Env::new(cfg.clone(), model.clone(), None, k).map_err(|e| e.to_string())?;
        env.set_body(body);
        let base = env.observation();

        let mut b = body;
        b.v = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)];
        env.set_body(b);
        ensure!(env.observation() == base, "root linear velocity changed the observation");

        let mut b = body;
        b.position[2] += rng.random_range(-0.4..0.4);
        env.set_body(b);
        ensure!(env.observation() == base, "absolute height changed the observation");

        // A fresh reset re-draws the command relative to the body heading, so
        // the heading error stays fixed while the absolute yaw moves. Angular
        // velocity is kept vertical so that it is the same vector in every
        // yawed frame without rounding.
        let reset_obs = |yaw: f64| {
            let mut env = Env::new(cfg.clone(), model.clone(), None, 1000 + k).unwrap();
            let b = BodyState {
                rpy: [body.rpy[0], body.rpy[1], yaw],
                omega: [0.0, 0.0, body.omega[2]],
                ..body
            };
            env.reset_body(b, None, 0.0).unwrap()
        };
        let ref_obs = reset_obs(0.0);
        for yaw in [1.3, -2.9, 3.1] {
            ensure!(reset_obs(yaw) == ref_obs, "absolute yaw {yaw} changed the observation");
        }
        checks += 5;
    }
    Ok(format!("{checks} perturbations, all observations bit-identical"))
}

#[derive(Deserialize)]
struct Golden {
    case: Vec<GoldenCase>,
}

#[derive(Deserialize)]
struct GoldenCase {
    description: String,
    included: bool,
}

fn criterion_5() -> Outcome {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/curation_golden.toml"))
        .map_err(|e| e.to_string())?;
    let golden: Golden = toml::from_str(&text).map_err(|e| e.to_string())?;
    ensure!(golden.case.len() == 30, "{} golden cases", golden.case.len());
    let (inc, exc) = (default_include_keywords(), default_exclude_keywords());
    let mut kept = 0;
    for (i, c) in golden.case.iter().enumerate() {
        let d = CurationDecision::evaluate(&format!("g{i:02}"), &c.description, &inc, &exc);
        ensure!(d.included == c.included, "{:?}: got {} want {}", c.description, d.included, c.included);
        kept += d.included as usize;
    }
    Ok(format!("30/30 descriptions match, {kept} included"))
}

fn gae_oracle(r: &[f64], v: &[f64], d: &[bool], boot: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let next = |t: usize| if t + 1 < n { v[t + 1] } else { boot };
    let delta: Vec<f64> = (0..n)
        .map(|t| r[t] + if d[t] { 0.0 } else { gamma * next(t) } - v[t])
        .collect();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            for k in 0..n - t {
                sum += (gamma * lambda).powi(k as i32) * delta[t + k];
                if d[t + k] {
                    break;
                }
            }
            sum
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let gamma = rng.random_range(0.5..1.0);
        let lambda = rng.random_range(0.0..1.0);
        let p_done = rng.random_range(0.0..0.3);
        let r: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..50).map(|_| rng.random_bool(p_done)).collect();
        let boot = rng.random_range(-5.0..5.0);
        let (adv, _) = compute_gae(&r, &v, &d, boot, gamma, lambda).map_err(|e| e.to_string())?;
        for (a, w) in adv.iter().zip(gae_oracle(&r, &v, &d, boot, gamma, lambda)) {
            worst = worst.max((a - w).abs());
        }
    }
    ensure!(worst <= 1e-10, "GAE error {worst:e}");

    let cfg = PPOConfig::default();
    let spec = PolicySpec {
        actor_hidden: vec![3],
        critic_hidden: vec![3],
        activation: Activation::Elu,
        init_log_std: -0.3,
        action_dim: 2,
        normalize_observations: false,
    };
    let mut checked = 0;
    let mut worst_rel = 0.0f64;
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(60 + seed);
        let mut ac = ActorCritic::new(&spec, 3, &mut rng);
        for p in ac.params.iter_mut() {
            *p += rng.random_range(-0.5..0.5);
        }
        let n = 16;
        let obs = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let (actions, logp, _) = ac.act(obs.view(), &mut rng);
        // ratios away from the clip kinks
        let old: Vec<f64> = logp
            .iter()
            .map(|lp| loop {
                let s: f64 = rng.random_range(-0.5..0.5);
                let r = s.exp();
                let c = cfg.clip_range;
                if (r - 1.0 - c).abs() > 0.02 && (r - 1.0 + c).abs() > 0.02 && (r - 1.0).abs() > 0.02 {
                    break lp - s;
                }
            })
            .collect();
        let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let ret: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = PpoBatch {
            obs: obs.view(),
            actions: actions.view(),
            old_log_prob: &old,
            advantages: &adv,
            returns: &ret,
        };
        let (_, grad) = ac.ppo_loss(&batch, &cfg);
        let h = 1e-6;
        for i in 0..ac.params.len() {
            let x = ac.params[i];
            ac.params[i] = x + h;
            let up = ac.ppo_loss(&batch, &cfg).0.total;
            ac.params[i] = x - h;
            let down = ac.ppo_loss(&batch, &cfg).0.total;
            ac.params[i] = x;
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs());
            let err = (fd - grad[i]).abs();
            ensure!(err <= 1e-4 * scale + 1e-8, "seed {seed} param {i}: analytic {} fd {fd}", grad[i]);
            if scale > 1e-6 {
                worst_rel = worst_rel.max(err / scale);
            }
            checked += 1;
        }
    }
    Ok(format!(
        "500 GAE instances max error {worst:.1e}; {checked} gradient entries max relative error {worst_rel:.1e}"
    ))
}

fn mean_return(eps: &[EpisodeRecord]) -> f64 {
    eps.iter().map(|e| e.total_reward()).sum::<f64>() / eps.len() as f64
}

/// Compact networks for the desk-budget training criteria.
fn small_nets(cfg: &mut TrainConfig) {
    cfg.policy.actor_hidden = vec![128, 64];
    cfg.policy.critic_hidden = vec![128, 64];
}

fn criterion_7() -> Outcome {
    let t0 = Instant::now();
    let model = Arc::new(RobotModel::h1());
    let mut cfg = TrainConfig::default();
    cfg.env.backend = Backend::PlanarBiped;
    cfg.env.rsi = false;
    cfg.env.commands = CommandSource::Random;
    small_nets(&mut cfg);
    ensure!(cfg.ppo.num_envs == 64, "{} environments", cfg.ppo.num_envs);
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let mut tr = Trainer::new(cfg.clone(), model.clone(), None, seed).map_err(|e| e.to_string())?;
        let before = mean_return(&evaluate(tr.policy(), &cfg.env, model.clone(), None, 20, 99, false).unwrap());
        for _ in 0..200 {
            tr.iterate().map_err(|e| e.to_string())?;
        }
        let after = mean_return(&evaluate(tr.policy(), &cfg.env, model.clone(), None, 20, 99, false).unwrap());
        ok &= after >= 2.0 * before;
        lines.push(format!("seed {seed} {before:.1} -> {after:.1}"));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let summary = format!("{}; {elapsed:.0} s", lines.join(", "));
    ensure!(ok, "return did not double: {summary}");
    ensure!(elapsed < 600.0, "too slow: {summary}");
    Ok(summary)
}

fn criterion_8() -> Outcome {
    let model = Arc::new(RobotModel::h1());
    let set = curated_motions(&SynthConfig::default());
    let mut cfg = TrainConfig::default();
    cfg.env.backend = Backend::PlanarBiped;
    small_nets(&mut cfg);
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let mut mel = [0.0; 2];
        for (k, variant) in [Variant::Exbody, Variant::NoRsi].into_iter().enumerate() {
            let mut tr = Trainer::for_variant(variant, cfg.clone(), model.clone(), Some(set.clone()), seed)
                .map_err(|e| e.to_string())?;
            for _ in 0..200 {
                tr.iterate().map_err(|e| e.to_string())?;
            }
            // each variant is measured under its own initialization
            let eps = evaluate(tr.policy(), &tr.config().env, model.clone(), Some(set.clone()), 20, 99, false)
                .map_err(|e| e.to_string())?;
            mel[k] = compute_metrics(&eps, &variant.to_string()).map_err(|e| e.to_string())?.mel;
        }
        ok &= mel[1] < mel[0];
        lines.push(format!("seed {seed} rsi {:.2} s, no-rsi {:.2} s", mel[0], mel[1]));
    }
    let summary = lines.join("; ");
    ensure!(ok, "no-rsi MEL not below rsi MEL on every seed: {summary}");
    Ok(summary)
}

fn criterion_9() -> Outcome {
    let set = short_motions();
    let upper = *RobotModel::h1().upper_indices();
    let cfg = AMPConfig {
        hidden: vec![64, 32],
        batch_size: 256,
        learning_rate: 1e-3,
        ..AMPConfig::default()
    };
    let demo = |n: usize, rng: &mut ChaCha8Rng| {
        let rows: Vec<f64> = (0..n)
            .flat_map(|_| demo_transition(&set, &upper, 0.02, rng).unwrap())
            .collect();
        Array2::from_shape_vec((n, AMP_FEATURE_DIM), rows).unwrap()
    };
    let noise = |n: usize, rng: &mut ChaCha8Rng| {
        Array2::from_shape_fn((n, AMP_FEATURE_DIM), |_| StandardNormal.sample(rng))
    };
    let accuracy = |disc: &Discriminator, d: &Array2<f64>, p: &Array2<f64>| {
        let a = disc.predict(d.view()).unwrap();
        let b = disc.predict(p.view()).unwrap();
        let hits = a.iter().filter(|&&x| x > 0.0).count() + b.iter().filter(|&&x| x < 0.0).count();
        hits as f64 / (a.len() + b.len()) as f64
    };

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut disc = Discriminator::new(&cfg, AMP_FEATURE_DIM, &mut rng);
    for _ in 0..500 {
        let (d, p) = (demo(cfg.batch_size, &mut rng), noise(cfg.batch_size, &mut rng));
        disc.train_step(d.view(), p.view()).map_err(|e| e.to_string())?;
    }
    let separated = accuracy(&disc, &demo(2000, &mut rng), &noise(2000, &mut rng));

    let mut disc = Discriminator::new(&cfg, AMP_FEATURE_DIM, &mut rng);
    for _ in 0..200 {
        let (d, p) = (demo(cfg.batch_size, &mut rng), demo(cfg.batch_size, &mut rng));
        disc.train_step(d.view(), p.view()).map_err(|e| e.to_string())?;
    }
    let chance = accuracy(&disc, &demo(4000, &mut rng), &demo(4000, &mut rng));

    let at_one = AMPConfig::default().reward_coef * style_value(1.0);
    ensure!(separated >= 0.9, "clip-vs-noise accuracy {separated}");
    ensure!((chance - 0.5).abs() <= 0.05, "identical-data accuracy {chance}");
    ensure!(at_one == 4.0, "style reward at d = 1 is {at_one}");
    Ok(format!("clip-vs-noise {separated:.3}; identical {chance:.3}; style reward at d = 1 is {at_one}"))
}

fn criterion_10() -> Outcome {
    let set = curated_motions(&SynthConfig::default());
    let clips: Vec<RetargetedClip> = set.clips().to_vec();
    let samples = clip_samples(&clips, 1.0).map_err(|e| e.to_string())?;
    let r = distribution_report("clips", &samples, &Field::ALL).map_err(|e| e.to_string())?;
    let [vx, vy, _] = r.mean_v;
    ensure!(vx > 0.0, "mean v_x {vx}");
    ensure!(vy.abs() <= 0.1 * vx.abs(), "mean v_y {vy} against mean v_x {vx}");
    ensure!(DEFAULT_HAND_SAMPLES == 10_000, "hand samples default {DEFAULT_HAND_SAMPLES}");
    Ok(format!(
        "{} clips, {} samples: mean v_x {vx:.3}, mean v_y {vy:.4}; hand samples {DEFAULT_HAND_SAMPLES}",
        clips.len(),
        r.samples
    ))
}

fn criterion_11() -> Outcome {
    let model = Arc::new(RobotModel::h1());
    let set = short_motions();
    let mut env = Env::new(EnvConfig::default(), model, Some(set.clone()), 11).map_err(|e| e.to_string())?;
    let mut worst = f64::INFINITY;
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..4 * set.len() {
        env.reset().map_err(|e| e.to_string())?;
        seen.insert(env.clip_id().unwrap().to_string());
        // the lag transient restarts whenever the goal clip loops
        let (mut settle_from, mut prev_t) = (10, env.clip_time());
        for k in 0..150 {
            let a = env.oracle_action().ok_or("no oracle action")?;
            let s = env.step(&a).map_err(|e| e.to_string())?;
            if s.info.clip_time < prev_t {
                settle_from = k + 10;
            }
            prev_t = s.info.clip_time;
            if k >= settle_from {
                worst = worst.min(s.reward.expression);
                ensure!(
                    s.reward.expression >= 0.95 * 5.0,
                    "clip {:?} step {k}: expression reward {}",
                    env.clip_id(),
                    s.reward.expression
                );
            }
            if s.done {
                break;
            }
        }
    }
    Ok(format!("{} clips replayed, lowest settled expression reward {worst:.3} of 5.0", seen.len()))
}

#[test]
fn acceptance_criteria() {
    let criteria: [(u32, fn() -> Outcome); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let mut failed = Vec::new();
    for (n, run) in criteria {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let line = match &outcome {
            Ok(detail) => format!("criterion {n}: PASS ({detail}) [{:.1} s]", t0.elapsed().as_secs_f64()),
            Err(why) => {
                failed.push(n);
                format!("criterion {n}: FAIL ({why}) [{:.1} s]", t0.elapsed().as_secs_f64())
            }
        };
        // bypass the test harness capture so every line reaches the log
        writeln!(std::io::stdout(), "{line}").unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
