use super::*;
use crate::embodiment::{generate_embodiment, BaseMode, EmbodimentSpec, FamilyParams, SimState};
use crate::motion::{generate_library, MotionFrame, MotionLibrary, StyleParams};
use crate::netcore::{actor_forward, critic_forward, log_prob, PolicyParams};
use crate::peft::{inject, InjectionScope, Method as PeftMethod, PeftHyper, ScopeFlags};
use crate::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain(n: usize) -> (EmbodimentSpec, MotionLibrary) {
    let spec = generate_embodiment(3, &FamilyParams::serial_chain(n)).unwrap();
    let lib = generate_library(4, &spec, 3, 2.0, &StyleParams::default()).unwrap();
    (spec, lib)
}

fn tiny(n_envs: usize, steps: usize) -> TrainConfig {
    TrainConfig {
        n_envs,
        steps_per_env: steps,
        total_env_steps: n_envs * steps,
        minibatches: 2,
        epochs_per_iter: 2,
        net: NetShape::small_mlp(8),
        deterministic: true,
        ..TrainConfig::default()
    }
}

fn params_for(setup: &TaskSetup, config: &TrainConfig, seed: u64) -> PolicyParams {
    PolicyParams::init(&config.net.config(setup.d_p, setup.d_r, setup.d_priv, setup.action_dim), seed).unwrap()
}

fn batch_on(setup: TaskSetup, config: &TrainConfig, params: &PolicyParams, threads: usize) -> RolloutBatch {
    let mut set = EnvSet::new(setup, config.dr.clone(), config.reward.clone(), config.n_envs, config.seed, threads).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    collect_rollouts(&mut set, params, config.steps_per_env, &mut rng).unwrap()
}

fn synthetic(n_envs: usize, steps: usize, rewards: Vec<f64>, values: Vec<f64>, dones: Vec<bool>, bootstrap: Vec<f64>) -> RolloutBatch {
    let total = n_envs * steps;
    let z = crate::netcore::Tensor::zeros(total, 1);
    RolloutBatch {
        n_envs,
        steps,
        obs: z.clone(),
        privileged: z.clone(),
        actions: z,
        log_probs: vec![0.0; total],
        values,
        rewards,
        dones,
        r_joint: vec![0.0; total],
        r_base: vec![0.0; total],
        r_smooth: vec![0.0; total],
        terminations: vec![None; total],
        bootstrap,
        aligned: false,
    }
}

#[test]
fn reward_examples() {
    let (spec, _) = chain(3);
    let w = RewardWeights::default();
    let mut state = SimState::rest(&spec);
    state.q = vec![0.1, -0.2, 0.3];
    state.last_action = vec![0.5; 3];
    let frame = MotionFrame {
        q_ref: state.q.clone(),
        base_ref: [0.0; 3],
    };
    let r = tracking_reward(&state, &frame, &[0.5; 3], BaseMode::Fixed, &w);
    assert_eq!(r.r_joint, 1.0);
    assert_eq!(r.r_smooth, 0.0);
    assert_eq!(r.r_base, 1.0);
    assert!((r.r_total - (w.w_jp + w.w_bp)).abs() < 1e-15);

    // error vector of norm sigma_jp
    let off = w.sigma_jp / 3f64.sqrt();
    let shifted = MotionFrame {
        q_ref: state.q.iter().map(|q| q + off).collect(),
        base_ref: [0.0; 3],
    };
    let r = tracking_reward(&state, &shifted, &[0.5; 3], BaseMode::Fixed, &w);
    assert!((r.r_joint - (-1f64).exp()).abs() < 1e-12);

    let r = tracking_reward(&state, &frame, &[0.0, 0.5, 0.5], BaseMode::Fixed, &w);
    assert!((r.r_smooth + 0.25).abs() < 1e-15);
}

proptest! {
    #[test]
    fn reward_is_bounded_and_monotone(
        q in prop::collection::vec(-2.0..2.0f64, 4),
        dir in prop::collection::vec(-1.0..1.0f64, 4),
        a in 0.0..2.0f64,
        b in 0.0..2.0f64,
        base in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        prop_assume!(dir.iter().map(|d| d * d).sum::<f64>() > 1e-6);
        let w = RewardWeights::default();
        let (spec, _) = chain(4);
        let mut state = SimState::rest(&spec);
        state.q = q.clone();
        state.base_pose = [base[0], base[1], base[2]];
        let at = |t: f64| MotionFrame { q_ref: q.iter().zip(&dir).map(|(x, d)| x + t * d).collect(), base_ref: [0.0; 3] };
        let (near, far) = (a.min(b), a.max(b));
        let rn = tracking_reward(&state, &at(near), &[0.3; 4], BaseMode::FloatingPlanar, &w);
        let rf = tracking_reward(&state, &at(far), &[0.3; 4], BaseMode::FloatingPlanar, &w);
        prop_assert!(rf.r_joint <= rn.r_joint);
        for r in [rn, rf] {
            prop_assert!(r.r_joint > 0.0 || far > 1.0);
            prop_assert!(r.r_joint <= 1.0 && r.r_joint >= 0.0);
            prop_assert!(r.r_base > 0.0 && r.r_base <= 1.0);
            prop_assert!(r.r_smooth <= 0.0);
        }
    }

    #[test]
    fn gae_matches_brute_force(
        seed in 0u64..1000,
        n_envs in 1usize..4,
        steps in 1usize..12,
        gamma in 0.0..1.0f64,
        lam in 0.0..1.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = n_envs * steps;
        let rewards: Vec<f64> = (0..total).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..total).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dones: Vec<bool> = (0..total).map(|_| rng.random_bool(0.2)).collect();
        let bootstrap: Vec<f64> = (0..n_envs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = synthetic(n_envs, steps, rewards.clone(), values.clone(), dones.clone(), bootstrap.clone());
        let (adv, ret) = gae_raw(&batch, gamma, lam);
        for env in 0..n_envs {
            let at = |s: usize| s * n_envs + env;
            let v_next = |s: usize| if s + 1 < steps { values[at(s + 1)] } else { bootstrap[env] };
            let delta = |s: usize| rewards[at(s)] + gamma * v_next(s) * if dones[at(s)] { 0.0 } else { 1.0 } - values[at(s)];
            for t in 0..steps {
                let mut expect = 0.0;
                let mut weight = 1.0;
                for k in t..steps {
                    expect += weight * delta(k);
                    if dones[at(k)] {
                        break;
                    }
                    weight *= gamma * lam;
                }
                prop_assert!((adv[at(t)] - expect).abs() < 1e-10);
                prop_assert!((ret[at(t)] - expect - values[at(t)]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn gae_closed_forms() {
    let steps = 30;
    let gamma = 0.9;
    let batch = synthetic(1, steps, vec![1.0; steps], vec![0.0; steps], vec![false; steps], vec![0.0]);
    let (adv, _) = gae_raw(&batch, gamma, 1.0);
    for (t, a) in adv.iter().enumerate() {
        let n = (steps - t) as i32;
        let geometric = (1.0 - gamma.powi(n)) / (1.0 - gamma);
        assert!((a - geometric).abs() < 1e-12);
    }

    let rewards = vec![0.5, -1.0, 2.0, 0.25];
    let values = vec![0.1, 0.2, -0.3, 0.4];
    let batch = synthetic(2, 2, rewards.clone(), values.clone(), vec![false, true, false, false], vec![7.0, -3.0]);
    let (adv, _) = gae_raw(&batch, 0.0, 0.95);
    for i in 0..4 {
        assert!((adv[i] - (rewards[i] - values[i])).abs() < 1e-15);
    }

    let batch = synthetic(3, 5, vec![0.0; 15], vec![0.0; 15], vec![false; 15], vec![0.0; 3]);
    let (adv, ret) = compute_gae(&batch, 0.99, 0.95);
    assert!(adv.iter().chain(&ret).all(|&v| v == 0.0));

    let batch = synthetic(1, 6, vec![0.0, 1.0, 3.0, 0.5, 2.0, 1.0], vec![0.0; 6], vec![false; 6], vec![0.0]);
    let (adv, _) = compute_gae(&batch, 0.9, 0.9);
    let mean = adv.iter().sum::<f64>() / 6.0;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 6.0;
    assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-6);
}

#[test]
fn single_transition_batch() {
    let (spec, lib) = chain(3);
    let config = tiny(1, 1);
    let setup = TaskSetup::native(&spec, &lib, 1).unwrap();
    let params = params_for(&setup, &config, 1);
    let batch = batch_on(setup, &config, &params, 1);
    assert_eq!(batch.len(), 1);
    assert_eq!(batch.bootstrap.len(), 1);
    let (v, _) = critic_forward(&params, &batch.obs, &batch.privileged).unwrap();
    assert_eq!(batch.values[0], v.at(0, 0));
    let (mean, _) = actor_forward(&params, &batch.obs).unwrap();
    let lp = log_prob(batch.actions.row(0), mean.row(0), &params.tensor("actor.log_std").data);
    assert!((batch.log_probs[0] - lp).abs() < 1e-12);
}

#[test]
fn collection_is_deterministic_and_thread_independent() {
    let (spec, lib) = chain(3);
    let config = tiny(5, 30);
    let config = TrainConfig {
        net: NetShape { history: 2, ..config.net },
        ..config
    };
    let setup = TaskSetup::native(&spec, &lib, 2).unwrap();
    let params = params_for(&setup, &config, 2);
    let a = batch_on(setup.clone(), &config, &params, 1);
    let b = batch_on(setup.clone(), &config, &params, 1);
    let c = batch_on(setup, &config, &params, 3);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(a.obs.is_finite() && a.log_probs.iter().all(|v| v.is_finite()));
}

#[test]
fn identity_alignment_changes_nothing() {
    let (spec, lib) = chain(3);
    let config = tiny(3, 20);
    let maps = crate::align::build_alignment(&spec, &spec).unwrap();
    let native = TaskSetup::native(&spec, &lib, 1).unwrap();
    let aligned = TaskSetup::aligned(&spec, &spec, &maps, &lib, 1).unwrap();
    let params = params_for(&native, &config, 3);
    let a = batch_on(native, &config, &params, 1);
    let mut b = batch_on(aligned, &config, &params, 1);
    assert!(b.aligned);
    b.aligned = false;
    assert_eq!(a, b);
}

fn loss_setup() -> (PolicyParams, RolloutBatch, Vec<f64>, Vec<f64>) {
    let (spec, lib) = chain(3);
    let config = tiny(4, 6);
    let setup = TaskSetup::native(&spec, &lib, 1).unwrap();
    let params = params_for(&setup, &config, 5);
    let batch = batch_on(setup, &config, &params, 1);
    let (adv, ret) = compute_gae(&batch, 0.9, 0.9);
    (params, batch, adv, ret)
}

#[test]
fn zero_advantages_leave_the_actor_alone() {
    let (mut params, batch, _, ret) = loss_setup();
    let zeros = vec![0.0; batch.len()];
    let coefs = LossCoefs {
        clip_eps: 0.2,
        value_coef: 1.0,
        entropy_coef: 0.0,
    };
    let idx: Vec<usize> = (0..batch.len()).collect();
    let (stats, grads) = minibatch_loss(&params, &batch, &idx, &zeros, &ret, &coefs).unwrap();
    assert_eq!(stats.policy_loss, 0.0);
    let before = params.clone();
    let config = TrainConfig {
        entropy_coef: 0.0,
        ..tiny(4, 6)
    };
    let mut adam = crate::netcore::Adam::new(1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    ppo_update(&mut params, &mut adam, &batch, &zeros, &ret, &config, &mut rng).unwrap();
    for name in before.names() {
        if name.starts_with("actor.") {
            assert!(grads.get(&name).unwrap().data.iter().all(|&g| g == 0.0), "{name}");
            assert_eq!(params.tensor(&name), before.tensor(&name), "{name}");
        }
    }
    assert_ne!(params.tensor("critic.out.w"), before.tensor("critic.out.w"));
}

#[test]
fn unit_ratio_gives_minus_advantage() {
    let (params, batch, adv, ret) = loss_setup();
    let coefs = LossCoefs::from(&TrainConfig::default());
    for i in [0, 3, 7] {
        let (stats, _) = minibatch_loss(&params, &batch, &[i], &adv, &ret, &coefs).unwrap();
        assert!((stats.policy_loss + adv[i]).abs() < 1e-12);
        assert!(stats.kl_estimate.abs() < 1e-12);
    }
}

fn nudged(params: &PolicyParams) -> PolicyParams {
    let mut p = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for name in p.names() {
        for v in &mut p.value_mut(&name).unwrap().data {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    p
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let (params, batch, adv, ret) = loss_setup();
    let params = nudged(&params);
    let coefs = LossCoefs {
        clip_eps: 0.2,
        value_coef: 0.7,
        entropy_coef: 0.01,
    };
    let idx: Vec<usize> = (0..batch.len()).step_by(2).collect();
    let (_, grads) = minibatch_loss(&params, &batch, &idx, &adv, &ret, &coefs).unwrap();
    let eps = 1e-6;
    let mut checked = 0;
    for name in params.names() {
        let len = params.tensor(&name).len();
        for i in (0..len).step_by(len.div_ceil(3)) {
            let mut probe = params.clone();
            probe.value_mut(&name).unwrap().data[i] += eps;
            let plus = minibatch_loss(&probe, &batch, &idx, &adv, &ret, &coefs).unwrap().0.total_loss;
            probe.value_mut(&name).unwrap().data[i] -= 2.0 * eps;
            let minus = minibatch_loss(&probe, &batch, &idx, &adv, &ret, &coefs).unwrap().0.total_loss;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(&name).unwrap().data[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
            assert!(rel < 1e-5, "{name}[{i}] analytic {analytic} numeric {numeric}");
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn huge_clip_is_the_plain_surrogate() {
    let (params, batch, adv, ret) = loss_setup();
    let moved = nudged(&params);
    let coefs = LossCoefs {
        clip_eps: 1e300,
        value_coef: 1.0,
        entropy_coef: 0.0,
    };
    let idx: Vec<usize> = (0..batch.len()).collect();
    let (stats, _) = minibatch_loss(&moved, &batch, &idx, &adv, &ret, &coefs).unwrap();
    let (mean, _) = actor_forward(&moved, &batch.obs).unwrap();
    let log_std = &moved.tensor("actor.log_std").data;
    let plain: f64 = -(0..batch.len())
        .map(|i| (log_prob(batch.actions.row(i), mean.row(i), log_std) - batch.log_probs[i]).exp() * adv[i])
        .sum::<f64>()
        / batch.len() as f64;
    assert!((stats.policy_loss - plain).abs() < 1e-10);
}

#[test]
fn one_iteration_budget_gives_one_row() {
    let (spec, lib) = chain(3);
    let config = tiny(4, 8);
    let out = train(&config, None, &TrainTask::native(&spec, &lib)).unwrap();
    assert_eq!(out.curves.len(), 1);
    assert_eq!(out.curves[0].env_steps, 32);
    assert_eq!(out.curves[0].wall_time_s, 0.0);
    let again = train(&config, None, &TrainTask::native(&spec, &lib)).unwrap();
    assert_eq!(out.curves, again.curves);
    assert_eq!(out.params, again.params);
}

#[test]
fn method_and_checkpoint_mismatches_are_config_errors() {
    let (source, target) = transfer_pair(0).unwrap();
    let lib = generate_library(1, &source, 2, 1.0, &StyleParams::default()).unwrap();
    let task = TrainTask::transfer(&source, &target, &lib);
    let scratch = tiny(2, 4);
    let ck = train(&scratch, None, &TrainTask::native(&source, &lib)).unwrap().params;
    let is_config = |r: crate::Result<TrainOutcome>| matches!(r, Err(Error::Config { .. }));

    assert!(is_config(train(&scratch, Some(&ck), &task)));
    for m in [Method::FullFtNoAlign, Method::FullFtAlign, Method::Any2AnyLora] {
        let c = TrainConfig { method: m, ..scratch.clone() };
        assert!(is_config(train(&c, None, &task)), "{m:?}");
    }
    let c = TrainConfig {
        method: Method::FullFtAlign,
        ..scratch.clone()
    };
    assert!(is_config(train(&c, Some(&ck), &TrainTask::native(&target, &crate::motion::retarget_library(&lib, &crate::align::build_alignment(&source, &target).unwrap()).unwrap()))));
    // history differs from the checkpoint's
    let c = TrainConfig {
        method: Method::Any2AnyLora,
        net: NetShape { history: 2, ..scratch.net.clone() },
        ..scratch.clone()
    };
    assert!(is_config(train(&c, Some(&ck), &task)));
    // a chain checkpoint does not fit the 8-joint task
    let (spec, clib) = chain(3);
    let small = train(&scratch, None, &TrainTask::native(&spec, &clib)).unwrap().params;
    let c = TrainConfig {
        method: Method::FullFtAlign,
        ..scratch.clone()
    };
    assert!(is_config(train(&c, Some(&small), &task)));

    let bad = TrainConfig { gamma: 1.5, ..scratch.clone() };
    assert!(matches!(bad.validate(), Err(Error::Config { path, .. }) if path == "gamma"));
    let bad = TrainConfig { n_envs: 0, ..scratch };
    assert!(matches!(bad.validate(), Err(Error::Config { path, .. }) if path == "n_envs"));
}

#[test]
fn frozen_tensors_survive_training_bit_exact() {
    let (source, target) = transfer_pair(0).unwrap();
    let lib = generate_library(1, &source, 2, 1.0, &StyleParams::default()).unwrap();
    let base = tiny(3, 8);
    let ck = train(&base, None, &TrainTask::native(&source, &lib)).unwrap().params;
    for m in [Method::Any2AnyLora, Method::Any2AnyAdapter, Method::Any2AnyPrefix] {
        let c = TrainConfig {
            method: m,
            total_env_steps: 3 * 8 * 4,
            peft: PeftHyper {
                rank: 2,
                ..PeftHyper::default()
            },
            ..base.clone()
        };
        let out = train(&c, Some(&ck), &TrainTask::transfer(&source, &target, &lib)).unwrap();
        for (name, p) in ck.iter() {
            if name != "actor.log_std" {
                assert_eq!(out.params.tensor(name), &p.value, "{m:?} {name}");
            }
        }
        assert_ne!(out.params.tensor("actor.log_std"), ck.tensor("actor.log_std"));
        assert!(out.adapted.is_some());
    }
}

#[test]
fn empty_injection_fully_unfrozen_is_full_fine_tuning() {
    let (source, target) = transfer_pair(0).unwrap();
    let lib = generate_library(1, &source, 2, 1.0, &StyleParams::default()).unwrap();
    let base = tiny(3, 8);
    let ck = train(&base, None, &TrainTask::native(&source, &lib)).unwrap().params;
    let task = TrainTask::transfer(&source, &target, &lib);
    let config = TrainConfig {
        method: Method::FullFtAlign,
        total_env_steps: 3 * 8 * 3,
        ..base
    };
    let full = train(&config, Some(&ck), &task).unwrap();

    let empty = InjectionScope::custom(ScopeFlags::default());
    let mut p = inject(&ck, PeftMethod::LoRA, &empty, &PeftHyper::default(), 0).unwrap().params;
    p.unfreeze_all();
    let setup = task.setup(Method::FullFtAlign, config.net.history).unwrap();
    let (params, curves) = run_training(&config, setup, p, |_| {}).unwrap();
    assert_eq!(curves, full.curves);
    for (name, q) in full.params.iter() {
        assert_eq!(params.tensor(name), &q.value);
    }
}

#[test]
fn zero_policy_falls_behind_a_fast_clip() {
    let (spec, _) = chain(3);
    // every joint ramps to 1.5 rad over two seconds
    let frames = (0..100)
        .map(|k| MotionFrame {
            q_ref: vec![1.5 * k as f64 / 99.0; 3],
            base_ref: [0.0; 3],
        })
        .collect();
    let clip = crate::motion::MotionClip {
        id: "ramp".into(),
        frame_rate: 50.0,
        frames,
    };
    let lib = MotionLibrary::new(vec![clip]).unwrap();
    let setup = TaskSetup::native(&spec, &lib, 0).unwrap();
    let dr = DrRanges::disabled();
    let mut env = Env::new(&setup, &dr, 0, 0).unwrap();
    env.reset_to(&setup, &dr, 0, 0).unwrap();
    let mut end = None;
    for _ in 0..lib.clips[0].n_frames() {
        let o = env.step(&setup, &dr, &RewardWeights::default(), &[0.0; 3]).unwrap();
        if o.termination.is_some() {
            end = o.termination;
            break;
        }
    }
    assert_eq!(end, Some(Termination::JointErrorExceeded));
}

#[test]
fn reset_starts_on_the_reference() {
    let (spec, lib) = chain(3);
    let setup = TaskSetup::native(&spec, &lib, 1).unwrap();
    let dr = DrRanges::default();
    let mut env = Env::new(&setup, &dr, 4, 2).unwrap();
    env.reset_to(&setup, &dr, 1, 10).unwrap();
    assert_eq!(env.cursor(), (1, 10));
    assert_eq!(env.state().q, env.reference(&setup).q_ref);
    let mut obs = vec![0.0; setup.window_width()];
    env.observe(&mut obs);
    let w = setup.step_width();
    assert_eq!(obs[..w], obs[w..]);
    let last = lib.clips[1].n_frames() - 1;
    assert!(env.reset_to(&setup, &dr, 1, last).is_err());
}

#[test]
fn ablation_matrices() {
    let base = TrainConfig::tracking();
    let names = |a| plan_ablation(a, &base).into_iter().map(|r| r.name).collect::<Vec<_>>();
    assert_eq!(names(Ablation::Alignment), ["Scratch", "FullFT_NoAlign", "FullFT_Align", "Any2Any_LoRA"]);
    assert_eq!(names(Ablation::Scope), ["S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "S9"]);
    assert_eq!(names(Ablation::Peft).len(), 6);
    assert!(names(Ablation::Peft).contains(&"Any2Any_Prefix_Transformer".to_string()));
    let data = plan_ablation(Ablation::DataScale, &base);
    assert_eq!(data.len(), 6);
    assert_eq!(data[0].name, "Scratch_4k");
    assert_eq!(data[5].frame_budget, Some(400_000));
    let sampling = plan_ablation(Ablation::Sampling, &base);
    let per_iter: Vec<usize> = sampling.iter().map(|r| r.config.batch_size()).collect();
    assert_eq!(per_iter, [1024, 1024, 4096, 4096, 16384, 16384]);
    assert_eq!(sampling[4].name, "Scratch_16k");
    let iterations = base.total_env_steps / 16384;
    for r in &sampling {
        assert_eq!(r.config.iterations(), iterations);
        assert_eq!(r.config.total_env_steps, iterations * r.config.batch_size());
    }
    for a in Ablation::ALL {
        assert_eq!(Ablation::parse(a.name()), Some(a));
        for r in plan_ablation(a, &base) {
            r.config.validate().unwrap();
            if a != Ablation::Sampling {
                assert_eq!(r.config.total_env_steps, base.total_env_steps);
            }
        }
    }
}

#[test]
fn transfer_pair_differs_from_its_source() {
    let (s, t) = transfer_pair(0).unwrap();
    assert_eq!(s.n_joints, 8);
    assert_eq!(t.joint_semantic_names[1], s.joint_semantic_names[4]);
    assert!((t.links.iter().map(|l| l.mass).sum::<f64>() / s.links.iter().map(|l| l.mass).sum::<f64>() - 1.3).abs() < 1e-12);
    assert!(t.hip_coupling.is_some());
}

#[test]
fn curves_round_trip_through_csv() {
    let rows = vec![CurveRow {
        iteration: 1,
        env_steps: 64,
        wall_time_s: 0.0,
        r_total: 1.25,
        r_joint: 0.5,
        r_base: 1.0,
        policy_loss: -0.01,
        value_loss: 0.3,
        kl: 1e-3,
    }];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    write_curves_csv(&rows, &path).unwrap();
    assert_eq!(read_curves_csv(&path).unwrap(), rows);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("iteration,env_steps,wall_time_s,r_total,r_joint,r_base,policy_loss,value_loss,kl"));
}
