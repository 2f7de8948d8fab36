use std::sync::Arc;

use exbody::env::{Backend, BodyState, CommandSource, DoneReason, Env, EnvConfig, VecEnv};
use exbody::goals::{heading_keypoints, state_at, GoalScope, MotionSet};
use exbody::kinematics::{RobotModel, NUM_JOINTS};
use exbody::mocap::synth::{generate, SynthConfig};
use exbody::retarget::{retarget_library, JointMapping};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn motions(model: &RobotModel) -> Arc<MotionSet> {
    let corpus = generate(&SynthConfig {
        min_duration: 2.0,
        max_duration: 3.0,
        ..SynthConfig::default()
    });
    let lib = retarget_library(&corpus.library().unwrap(), &JointMapping::cmu_h1(model), model).unwrap();
    Arc::new(MotionSet::from_library(&lib).unwrap())
}

fn random_commands() -> EnvConfig {
    EnvConfig {
        rsi: false,
        commands: CommandSource::Random,
        ..EnvConfig::default()
    }
}

fn random_body(rng: &mut ChaCha8Rng, model: &RobotModel, yaw: f64) -> BodyState {
    let mut q = model.default_pose();
    let mut dq = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        q[i] += rng.random_range(-0.3..0.3);
        dq[i] = rng.random_range(-2.0..2.0);
    }
    BodyState {
        q,
        dq,
        position: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0],
        rpy: [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), yaw],
        v: [0.0; 3],
        omega: [0.0; 3],
    }
}

#[test]
fn linear_velocity_and_height_are_not_observed() {
    let model = Arc::new(RobotModel::h1());
    let mut env = Env::new(random_commands(), model.clone(), None, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let yaw = rng.random_range(-3.0..3.0);
        let mut body = random_body(&mut rng, &model, yaw);
        body.omega = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        env.set_body(body.clone());
        let base = env.observation();

        let mut b = body.clone();
        b.v = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)];
        env.set_body(b);
        assert_eq!(env.observation(), base, "root linear velocity leaked");

        let mut b = body.clone();
        b.position[2] += rng.random_range(-0.4..0.4);
        env.set_body(b);
        assert_eq!(env.observation(), base, "absolute height leaked");
    }
}

#[test]
fn absolute_yaw_is_not_observed() {
    let model = Arc::new(RobotModel::h1());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..30 {
        let body = random_body(&mut rng, &model, 0.0);
        let mut obs = Vec::new();
        for yaw in [0.0, 1.3, -2.9, 3.1] {
            // the command heading follows the body, so the heading error is fixed
            let mut env = Env::new(random_commands(), model.clone(), None, k).unwrap();
            let b = BodyState {
                rpy: [body.rpy[0], body.rpy[1], yaw],
                ..body
            };
            obs.push(env.reset_body(b, None, 0.0).unwrap());
        }
        for o in &obs[1..] {
            let d: Vec<(usize, f64)> = o.iter().zip(&obs[0]).enumerate().filter(|(_, (a, b))| a != b).map(|(i, (a, b))| (i, a - b)).collect();
            assert!(d.is_empty(), "absolute yaw leaked {d:?}");
        }
    }
}

#[test]
fn rsi_reset_matches_clip_state() {
    let model = Arc::new(RobotModel::h1());
    let set = motions(&model);
    let mut env = Env::new(EnvConfig::default(), model.clone(), Some(set.clone()), 21).unwrap();
    for _ in 0..20 {
        env.reset().unwrap();
        let id = env.clip_id().unwrap().to_string();
        let clip = set.clips().iter().find(|c| c.meta.id == id).unwrap();
        let s = state_at(clip, env.clip_time()).unwrap();
        let b = env.body();
        for i in 0..NUM_JOINTS {
            assert!((b.q[i] - s.q[i]).abs() < 1e-9);
            assert!((b.dq[i] - s.dq[i]).abs() < 1e-9);
        }
        for k in 0..3 {
            assert!((b.position[k] - s.root.position[k]).abs() < 1e-9);
            assert!((b.v[k] - s.v[k]).abs() < 1e-9);
        }
        assert!(b.root().orientation.same_rotation(&s.root.orientation, 1e-9));
        let want = heading_keypoints(&model, &s.root, &s.q, GoalScope::Full);
        for (a, w) in env.snapshot().keypoints.iter().zip(&want) {
            assert!((a - w).abs() < 1e-9);
        }
    }
}

#[test]
fn termination_reasons() {
    let model = Arc::new(RobotModel::h1());
    let mut env = Env::new(random_commands(), model.clone(), None, 1).unwrap();
    let zero = [0.0; NUM_JOINTS];

    env.reset().unwrap();
    assert_eq!(env.termination(), None);
    let rest = *env.body();
    for (rpy, want) in [
        ([1.01, 0.0, 0.0], Some(DoneReason::Orientation)),
        ([-1.01, 0.0, 2.0], Some(DoneReason::Orientation)),
        ([0.0, 1.01, 0.0], Some(DoneReason::Orientation)),
        ([0.0, -1.01, 0.0], Some(DoneReason::Orientation)),
        ([0.99, -0.99, 3.0], None),
    ] {
        env.set_body(BodyState { rpy, ..rest });
        assert_eq!(env.termination(), want, "{rpy:?}");
    }
    for (h, want) in [(0.39, Some(DoneReason::Height)), (0.41, None)] {
        let mut b = rest;
        b.position[2] = h;
        env.set_body(b);
        assert_eq!(env.termination(), want, "{h}");
    }

    // a fall far below the floor is still below it one step later
    env.reset().unwrap();
    let mut b = *env.body();
    b.position[2] = -5.0;
    env.set_body(b);
    let s = env.step(&zero).unwrap();
    assert!(s.done);
    assert_eq!(s.reason, Some(DoneReason::Height));

    let cfg = EnvConfig {
        episode_length: 0.4,
        ..random_commands()
    };
    let mut env = Env::new(cfg, model, None, 1).unwrap();
    let mut last = None;
    for k in 1..=20 {
        let s = env.step(&zero).unwrap();
        assert_eq!(s.done, k == 20);
        last = s.reason;
    }
    assert_eq!(last, Some(DoneReason::Timeout));
}

#[test]
fn planar_biped_stands_with_neutral_action() {
    let model = Arc::new(RobotModel::h1());
    let cfg = EnvConfig {
        backend: Backend::PlanarBiped,
        ..random_commands()
    };
    let mut env = Env::new(cfg, model, None, 5).unwrap();
    let zero = [0.0; NUM_JOINTS];
    for k in 0..env.config().max_steps() {
        let s = env.step(&zero).unwrap();
        assert!(!s.done || s.reason == Some(DoneReason::Timeout), "fell at step {k}: {:?}", s.reason);
        assert!(s.info.snapshot.rpy[1].abs() < 0.1);
    }
}

#[test]
fn steps_are_deterministic_and_thread_independent() {
    let model = Arc::new(RobotModel::h1());
    let set = motions(&model);
    for backend in [Backend::KinematicReplay, Backend::PlanarBiped] {
        let cfg = EnvConfig {
            backend,
            ..EnvConfig::default()
        };
        let mut a = VecEnv::new(&cfg, model.clone(), Some(set.clone()), 6, 77).unwrap();
        let mut b = VecEnv::new(&cfg, model.clone(), Some(set.clone()), 6, 77).unwrap().with_threads(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..60 {
            let acts: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..NUM_JOINTS).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let sa = a.step(&acts).unwrap();
            let sb = b.step(&acts).unwrap();
            assert_eq!(sa.obs, sb.obs);
            for (x, y) in sa.steps.iter().zip(&sb.steps) {
                assert_eq!(x, y);
            }
        }
    }
}

#[test]
fn invalid_actions_are_rejected() {
    let model = Arc::new(RobotModel::h1());
    let mut env = Env::new(random_commands(), model, None, 0).unwrap();
    assert!(env.step(&[0.0; 3]).is_err());
    let mut a = [0.0; NUM_JOINTS];
    a[4] = f64::NAN;
    assert!(env.step(&a).is_err());
    assert!(Env::new(EnvConfig::default(), Arc::new(RobotModel::h1()), None, 0).is_err());
}

#[test]
fn replay_oracle_tracks_expression() {
    let model = Arc::new(RobotModel::h1());
    let set = motions(&model);
    let mut env = Env::new(EnvConfig::default(), model, Some(set), 2).unwrap();
    for _ in 0..5 {
        env.reset().unwrap();
        // the lag transient restarts whenever the goal clip loops
        let (mut settle_from, mut prev_t) = (10, env.clip_time());
        for k in 0..150 {
            let a = env.oracle_action().unwrap();
            let s = env.step(&a).unwrap();
            if s.info.clip_time < prev_t {
                settle_from = k + 10;
            }
            prev_t = s.info.clip_time;
            if k >= settle_from {
                assert!(s.reward.expression >= 0.95 * 5.0, "step {k}: {}", s.reward.expression);
            }
            if s.done {
                break;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rewards_and_observations_stay_finite(seed in 0u64..1000, scale in 0.0f64..2.0) {
        let model = Arc::new(RobotModel::h1());
        let cfg = EnvConfig { backend: Backend::PlanarBiped, ..random_commands() };
        let mut env = Env::new(cfg, model, None, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let a: Vec<f64> = (0..NUM_JOINTS).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            let s = env.step(&a).unwrap();
            prop_assert!(s.reward.total.is_finite());
            prop_assert!(s.obs.iter().all(|x| x.is_finite()));
            if s.done {
                env.reset().unwrap();
            }
        }
    }
}
