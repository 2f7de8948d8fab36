use exbody::goals::{heading_keypoints, ExpressionGoal, GoalScope, MovementGoal};
use exbody::kinematics::{RobotModel, RootPose, NUM_JOINTS};
use exbody::reward::{
    expression_reward, movement_reward, regularization_reward, total_reward, EnvStateSnapshot,
    RewardContext, RewardMode, RewardWeights,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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
    let mut r = a;
    while r > std::f64::consts::PI {
        r -= std::f64::consts::TAU;
    }
    while r <= -std::f64::consts::PI {
        r += std::f64::consts::TAU;
    }
    r
}

fn base() -> (RobotModel, EnvStateSnapshot, ExpressionGoal, MovementGoal) {
    let model = RobotModel::h1();
    let q = model.default_pose();
    let kp = heading_keypoints(&model, &RootPose::default(), &q, GoalScope::Full);
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
    (model, s, ge, gm)
}

fn random_state(rng: &mut ChaCha8Rng) -> (EnvStateSnapshot, ExpressionGoal, MovementGoal) {
    let (model, mut s, mut ge, mut gm) = base();
    let mut r = |scale: f64| rng.random_range(-scale..scale);
    for j in 0..NUM_JOINTS {
        s.q[j] += r(0.5);
    }
    for k in &mut s.keypoints {
        *k += r(0.3);
    }
    s.v = [r(1.5), r(1.0), r(0.3)];
    s.rpy = [r(0.6), r(0.6), r(3.1)];
    for x in &mut ge.q_ref {
        *x += r(0.5);
    }
    for x in &mut ge.p_ref {
        *x += r(0.3);
    }
    gm.v_ref = [r(1.0), r(0.5), r(0.1)];
    gm.rpy_ref = [r(0.4), r(0.4), r(3.1)];
    let _ = model;
    (s, ge, gm)
}

#[test]
fn tracking_terms_match_independent_formulas() {
    let (model, ..) = base();
    let ctx = RewardContext::from_model(&model);
    let w = RewardWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let upper = *model.upper_indices();
    for _ in 0..1000 {
        let (s, ge, gm) = random_state(&mut rng);
        let b = total_reward(&s, &ge, &gm, &w, &ctx, RewardMode::Exbody).unwrap();
        let q_up: Vec<f64> = upper.iter().map(|&i| s.q[i]).collect();
        let dof = 3.0 * (-0.7 * dist(&ge.q_ref, &q_up)).exp();
        let kp = 2.0 * (-dist(&ge.p_ref, &s.keypoints[..18])).exp();
        let lin = 6.0 * (-4.0 * dist(&gm.v_ref, &s.v)).exp();
        let rp = 1.0
            * (-dist(
                &[wrap(gm.rpy_ref[0] - s.rpy[0]), wrap(gm.rpy_ref[1] - s.rpy[1])],
                &[0.0, 0.0],
            ))
            .exp();
        let yaw = 1.0 * (-wrap(s.rpy[2] - gm.rpy_ref[2]).abs()).exp();
        for (name, want) in [
            ("dof_position", dof),
            ("keypoint", kp),
            ("linear_velocity", lin),
            ("roll_pitch", rp),
            ("yaw", yaw),
        ] {
            let got = b.weighted(name);
            assert!((got - want).abs() < 1e-12, "{name}: {got} vs {want}");
        }
    }
}

#[test]
fn every_regularization_term_activates() {
    let (model, s0, ..) = base();
    let ctx = RewardContext::from_model(&model);
    let w = RewardWeights::default();
    let zero = regularization_reward(&s0, &w, &ctx);
    for (name, t) in &zero.terms {
        assert_eq!(t.weighted, 0.0, "{name} nonzero at rest");
    }
    let e = model.joint_index("left_elbow").unwrap();
    let hip = model.joint_index("left_hip_pitch").unwrap();
    let cases: Vec<(&str, Box<dyn Fn(&mut EnvStateSnapshot)>, f64)> = vec![
        ("feet_height", Box::new(|s| s.feet[0].height = 0.35), 2.0 * 0.15),
        (
            "feet_air_time",
            Box::new(|s| {
                s.feet[0].new_contact = true;
                s.feet[0].air_time = 0.5;
            }),
            5.0,
        ),
        ("feet_drag", Box::new(|s| s.feet[1].velocity = [0.3, 0.4, 0.0]), -0.1 * 0.5),
        ("contact_force", Box::new(|s| s.feet[0].force = [0.0, 0.0, 400.0]), -3e-3 * 50.0),
        (
            "stumble",
            Box::new(|s| s.feet[1].force = [50.0, 0.0, 10.0]),
            -2.0,
        ),
        ("dof_acceleration", Box::new(|s| s.ddq[0] = 100.0), -3e-7 * 1e4),
        ("action_rate", Box::new(|s| s.action[3] += 0.5), -0.1 * 0.5),
        (
            "energy",
            Box::new(|s| {
                s.tau[2] = -10.0;
                s.dq[2] = 2.0;
            }),
            -1e-3 * 20.0,
        ),
        ("collision", Box::new(|s| s.collision = true), -0.1),
        ("dof_limit", Box::new(move |s| s.q[e] = 3.0), -10.0),
        ("dof_deviation", Box::new(move |s| s.q[hip] += 0.2), -10.0 * 0.04),
        ("vertical_velocity", Box::new(|s| s.v[2] = 0.5), -0.25),
        ("horizontal_angular_velocity", Box::new(|s| s.omega = [0.3, 0.4, 9.0]), -0.4 * 0.25),
        ("projected_gravity", Box::new(|s| s.projected_gravity = [0.6, 0.0, -0.8]), -2.0 * 0.36),
    ];
    assert_eq!(cases.len(), 14);
    for (name, set, want) in cases {
        let mut s = s0.clone();
        set(&mut s);
        let b = regularization_reward(&s, &w, &ctx);
        let got = b.weighted(name);
        assert!((got - want).abs() < 1e-12, "{name}: {got} vs {want}");
    }
}

#[test]
fn feet_height_is_capped() {
    let (model, mut s, ..) = base();
    let ctx = RewardContext::from_model(&model);
    s.feet[0].height = 2.0;
    s.feet[1].height = 2.0;
    let b = regularization_reward(&s, &RewardWeights::default(), &ctx);
    assert_eq!(b.raw("feet_height"), 0.3);
}

#[test]
fn full_body_perfect_tracking() {
    let (model, s, _, gm) = base();
    let ctx = RewardContext::from_model(&model);
    let ge = ExpressionGoal {
        q_ref: s.q.to_vec(),
        p_ref: s.keypoints.clone(),
    };
    let b = total_reward(&s, &ge, &gm, &RewardWeights::default(), &ctx, RewardMode::FullBody).unwrap();
    assert_eq!(b.weighted("dof_position"), 3.0);
    assert_eq!(b.weighted("keypoint"), 2.0);
}

proptest! {
    #[test]
    fn terms_respect_sign_and_bounds(seed in any::<u64>()) {
        let (model, ..) = base();
        let ctx = RewardContext::from_model(&model);
        let w = RewardWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, ge, gm) = random_state(&mut rng);
        s.feet[0].height = rng.random_range(0.0..0.5);
        s.feet[1].force = [rng.random_range(-100.0..100.0), 0.0, rng.random_range(0.0..600.0)];
        s.tau[4] = rng.random_range(-50.0..50.0);
        s.dq[4] = rng.random_range(-5.0..5.0);
        s.collision = rng.random_bool(0.5);
        let b = total_reward(&s, &ge, &gm, &w, &ctx, RewardMode::Exbody).unwrap();
        for name in ["dof_position", "keypoint", "linear_velocity", "roll_pitch", "yaw"] {
            let t = b.terms[name];
            prop_assert!(t.raw > 0.0 && t.raw <= 1.0);
        }
        for (name, t) in &b.terms {
            if t.group == exbody::reward::TermGroup::Regularization {
                if name == "feet_height" || name == "feet_air_time" {
                    prop_assert!(t.weighted >= 0.0);
                } else {
                    prop_assert!(t.weighted <= 0.0, "{} = {}", name, t.weighted);
                }
            }
        }
        // the total is the plain sum over the breakdown map
        let sum: f64 = b.terms.values().map(|t| t.weighted).sum();
        prop_assert_eq!(sum, b.total);
        let again = total_reward(&s, &ge, &gm, &w, &ctx, RewardMode::Exbody).unwrap();
        prop_assert_eq!(again, b);
    }

    #[test]
    fn tracking_terms_decrease_with_error(seed in any::<u64>(), bump in 0.01f64..1.0) {
        let (model, ..) = base();
        let ctx = RewardContext::from_model(&model);
        let w = RewardWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, ge, gm) = random_state(&mut rng);
        let e0 = expression_reward(&s, &ge, &w, &ctx, GoalScope::Upper).unwrap();
        let m0 = movement_reward(&s, &gm, &w);

        // push the joint error further from the target along its own direction
        let upper = *model.upper_indices();
        let mut ge2 = ge.clone();
        let i = 0;
        let d = ge.q_ref[i] - s.q[upper[i]];
        ge2.q_ref[i] += bump * if d >= 0.0 { 1.0 } else { -1.0 };
        let e1 = expression_reward(&s, &ge2, &w, &ctx, GoalScope::Upper).unwrap();
        prop_assert!(e1.weighted("dof_position") < e0.weighted("dof_position"));
        prop_assert_eq!(e1.weighted("keypoint"), e0.weighted("keypoint"));

        let mut gm2 = gm;
        let dv = gm.v_ref[0] - s.v[0];
        gm2.v_ref[0] += bump * if dv >= 0.0 { 1.0 } else { -1.0 };
        let m1 = movement_reward(&s, &gm2, &w);
        prop_assert!(m1.weighted("linear_velocity") < m0.weighted("linear_velocity"));
        prop_assert_eq!(m1.weighted("yaw"), m0.weighted("yaw"));
    }
}
