//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! `ACCEPTANCE_ONLY=8,14` runs a subset; `ACCEPTANCE_SEEDS=1` shortens the
//! trend experiments while iterating.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_6;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crossbody::align::{build_alignment, build_hip_decoupling};
use crossbody::embodiment::{
    dynamics_residual, dynamics_residual_termwise, dynamics_terms, generate_embodiment, inverse_dynamics, EmbodimentSpec, FamilyParams, HipCoupling,
};
use crossbody::evalreport::{compute_metrics, evaluate_library, pd_steady_state_bound, EpisodeResult, ReferenceOracle};
use crossbody::motion::{generate_library, save_library, subsample_library, MotionLibrary, StyleParams};
use crossbody::netcore::{actor_forward, critic_forward, gradient_check, Head, NetConfig, PolicyParams, Tensor};
use crossbody::peft::{inject, merge_lora, trainable_stats, InjectionScope, Method as Peft, PeftHyper, PRESETS};
use crossbody::rl::{
    train, transfer_pair, CurveRow, Method, TaskSetup, Termination, TrainConfig, TrainOutcome, TrainTask, DATA_BUDGETS,
};
use crossbody::GRAVITY;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn inf_norm_identity_residual(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    (m - DMatrix::<f64>::identity(n, n)).iter().fold(0.0, |a, v| a.max(v.abs()))
}

// 1 -------------------------------------------------------------------------

fn random_target(source: &EmbodimentSpec, rng: &mut ChaCha8Rng) -> EmbodimentSpec {
    let n = source.n_joints;
    // random declaration order that still lists parents first
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let ready: Vec<usize> = (0..n)
            .filter(|j| !order.contains(j) && source.parent(*j).is_none_or(|p| order.contains(&p)))
            .collect();
        order.push(ready[rng.random_range(0..ready.len())]);
    }
    let mut t = source.reordered(&order).unwrap().with_mass_scale(rng.random_range(0.7..1.5));
    let idx = |name: &str| t.joint_index(name).unwrap();
    t.hip_coupling = Some(HipCoupling {
        left_pair: (idx("L_hip_pitch"), idx("L_hip_roll")),
        right_pair: (idx("R_hip_pitch"), idx("R_hip_roll")),
        alpha: rng.random_range(-1.4..1.4),
    });
    // unit lower-triangular mixing among a few joints: always invertible
    let mut j = DMatrix::<f64>::identity(n, n);
    let mut picked: Vec<usize> = (0..n).collect();
    picked.shuffle(rng);
    picked.truncate(rng.random_range(2..=4));
    picked.sort();
    for (a, &r) in picked.iter().enumerate() {
        for &c in &picked[..a] {
            j[(r, c)] = rng.random_range(-0.8..0.8);
        }
    }
    t.chain_coupling = Some(j);
    t.validate().unwrap();
    t
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for i in 0..1000 {
        let family = FamilyParams {
            n_joints_range: (6, 12),
            ..FamilyParams::default()
        };
        let source = generate_embodiment(i, &family).unwrap();
        let target = random_target(&source, &mut rng);
        let maps = build_alignment(&source, &target).unwrap();
        worst = worst.max(inf_norm_identity_residual(&(&maps.phi_plus * &maps.phi)));
    }
    verdict(worst < 1e-10, format!("max |PhiPlus Phi - I|_inf = {worst:.2e} over 1000 pairs"))
}

// 2 -------------------------------------------------------------------------

fn criterion_2() -> Verdict {
    let d = build_hip_decoupling((0, 1), (2, 3), FRAC_PI_6, 4).unwrap();
    let block = |r: usize| [d[(r, r)], d[(r, r + 1)], d[(r + 1, r)], d[(r + 1, r + 1)]];
    let expect_l = [0.8660254, 0.0, -0.5, 1.0];
    let expect_r = [0.8660254, 0.0, 0.5, 1.0];
    let err = block(0)
        .iter()
        .zip(expect_l)
        .chain(block(2).iter().zip(expect_r))
        .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
    verdict(err < 1e-7, format!("max deviation from the hip blocks {err:.1e}"))
}

// 3 -------------------------------------------------------------------------

fn two_link(m1: f64, m2: f64) -> EmbodimentSpec {
    let mut spec = generate_embodiment(5, &FamilyParams::serial_chain(2)).unwrap();
    spec.links[0].mass = m1;
    spec.links[1].mass = m2;
    spec
}

/// Double pendulum in relative angles measured from the downward vertical.
fn double_pendulum(spec: &EmbodimentSpec, q: [f64; 2], qd: [f64; 2]) -> ([[f64; 2]; 2], [f64; 2], [f64; 2]) {
    let (a, b) = (&spec.links[0], &spec.links[1]);
    let (l1, m1, c1, i1) = (a.length, a.mass, a.com_offset, a.inertia);
    let (m2, c2, i2) = (b.mass, b.com_offset, b.inertia);
    let k = m2 * l1 * c2;
    let m11 = i1 + i2 + m1 * c1 * c1 + m2 * (l1 * l1 + c2 * c2) + 2.0 * k * q[1].cos();
    let m12 = i2 + m2 * c2 * c2 + k * q[1].cos();
    let m22 = i2 + m2 * c2 * c2;
    let h = k * q[1].sin();
    let c = [-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), h * qd[0] * qd[0]];
    let g2 = m2 * c2 * GRAVITY * (q[0] + q[1]).sin();
    let g = [(m1 * c1 + m2 * l1) * GRAVITY * q[0].sin() + g2, g2];
    ([[m11, m12], [m12, m22]], c, g)
}

fn criterion_3() -> Verdict {
    let spec = two_link(1.3, 0.9);
    let axis = |j: usize| spec.topology[j].axis_sign;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let qd = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let t = dynamics_terms(&spec, &q, &qd).unwrap();
        // joint axes flip the sign of the angle, not the physics
        let (m, c, g) = double_pendulum(&spec, [axis(0) * q[0], axis(1) * q[1]], [axis(0) * qd[0], axis(1) * qd[1]]);
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max(rel(t.mass[(i, j)], axis(i) * axis(j) * m[i][j]));
            }
            worst = worst.max(rel(t.coriolis[i], axis(i) * c[i]));
            worst = worst.max(rel(t.gravity[i], axis(i) * g[i]));
        }
    }
    let mut residual_gap = 0.0_f64;
    for seed in 0..20 {
        let source = generate_embodiment(seed, &FamilyParams::default()).unwrap();
        let target = source.with_mass_scale(rng.random_range(0.5..2.0));
        let n = source.dof();
        for _ in 0..5 {
            let v = |rng: &mut ChaCha8Rng, s: f64| (0..n).map(|_| rng.random_range(-s..s)).collect::<Vec<f64>>();
            let (q, qd, qdd) = (v(&mut rng, 2.0), v(&mut rng, 4.0), v(&mut rng, 8.0));
            let a = dynamics_residual(&source, &target, &q, &qd, &qdd).unwrap();
            let b = dynamics_residual_termwise(&source, &target, &q, &qd, &qdd).unwrap();
            let tau = inverse_dynamics(&target, &q, &qd, &qdd).unwrap();
            let scale = tau.amax().max(1.0);
            residual_gap = residual_gap.max((a - b).amax() / scale);
        }
    }
    verdict(
        worst < 1e-10 && residual_gap < 1e-8,
        format!("double pendulum rel err {worst:.1e}, residual paths differ by {residual_gap:.1e}"),
    )
}

// 4-7 -----------------------------------------------------------------------

/// Observation/action sizes of the 8-joint transfer task.
fn task_dims() -> (usize, usize, usize, usize) {
    let (source, _) = transfer_pair(0).unwrap();
    let lib = generate_library(0, &source, 2, 1.0, &StyleParams::default()).unwrap();
    let s = TaskSetup::native(&source, &lib, 1).unwrap();
    (s.d_p, s.d_r, s.d_priv, s.action_dim)
}

fn nets() -> Vec<NetConfig> {
    let (p, r, v, a) = task_dims();
    vec![
        NetConfig {
            h: 2,
            ..NetConfig::mlp(p, r, v, a)
        },
        NetConfig {
            h: 2,
            ..NetConfig::transformer(p, r, v, a)
        },
    ]
}

fn frozen(config: &NetConfig, seed: u64) -> PolicyParams {
    let mut p = PolicyParams::init(config, seed).unwrap();
    p.freeze_all();
    p
}

fn outputs(p: &PolicyParams, obs: &Tensor, privileged: &Tensor) -> (Tensor, Tensor) {
    (actor_forward(p, obs).unwrap().0, critic_forward(p, obs, privileged).unwrap().0)
}

fn max_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data.iter().zip(&b.data).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for config in nets() {
        let base = frozen(&config, 1);
        let obs = random(8, config.window_width(), &mut rng);
        let privileged = random(8, config.d_priv, &mut rng);
        let (a0, v0) = outputs(&base, &obs, &privileged);
        for method in [Peft::LoRA, Peft::Adapter, Peft::Prefix] {
            for preset in PRESETS {
                let adapted = inject(&base, method, &InjectionScope::preset(preset).unwrap(), &PeftHyper::default(), 2).unwrap();
                let (a, v) = outputs(&adapted.params, &obs, &privileged);
                worst = worst.max(max_diff(&a, &a0)).max(max_diff(&v, &v0));
                cases += 1;
            }
        }
    }
    verdict(worst <= 1e-12, format!("{cases} method/scope/backbone cases, max deviation {worst:.1e}"))
}

/// Random values in every injected tensor, so equality is not trivial.
fn perturb(params: &mut PolicyParams, base: &PolicyParams, rng: &mut ChaCha8Rng) {
    for name in params.names() {
        if !base.contains(&name) {
            for v in &mut params.value_mut(&name).unwrap().data {
                *v = rng.random_range(-0.3..0.3);
            }
        }
    }
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0_f64;
    for config in nets() {
        let base = frozen(&config, 2);
        let mut adapted = inject(&base, Peft::LoRA, &InjectionScope::preset("S9").unwrap(), &PeftHyper::default(), 3).unwrap();
        perturb(&mut adapted.params, &base, &mut rng);
        let merged = merge_lora(&adapted).unwrap();
        for _ in 0..100 {
            let obs = random(1, config.window_width(), &mut rng);
            let privileged = random(1, config.d_priv, &mut rng);
            let (a1, v1) = outputs(&adapted.params, &obs, &privileged);
            let (a2, v2) = outputs(&merged, &obs, &privileged);
            worst = worst.max(max_diff(&a1, &a2)).max(max_diff(&v1, &v2));
        }
    }
    verdict(worst < 1e-10, format!("100 observations x 2 backbones, max deviation {worst:.1e}"))
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let small = |backbone_tf: bool| {
        let base = NetConfig {
            h: 2,
            mlp_layers: 2,
            mlp_hidden: 12,
            tf_dim: 8,
            tf_blocks: 2,
            tf_heads: 2,
            ..NetConfig::mlp(5, 6, 3, 4)
        };
        if backbone_tf {
            NetConfig {
                backbone: crossbody::netcore::Backbone::Transformer,
                ..base
            }
        } else {
            base
        }
    };
    let hyper = PeftHyper {
        rank: 2,
        bottleneck: 4,
        prefix_len: 3,
    };
    let mut lines = Vec::new();
    let mut pass = true;
    for (tf, tol) in [(false, 1e-6), (true, 1e-5)] {
        let config = small(tf);
        let mut full = PolicyParams::init(&config, 7).unwrap();
        for name in full.names() {
            for v in &mut full.value_mut(&name).unwrap().data {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let mut worst = 0.0_f64;
        let mut check = |params: &PolicyParams, rng: &mut ChaCha8Rng| {
            let obs = random(3, config.window_width(), rng);
            let privileged = random(3, config.d_priv, rng);
            for (head, width) in [(Head::Actor, config.action_dim), (Head::Critic, 1)] {
                let up = random(3, width, rng);
                let r = gradient_check(params, head, &obs, &privileged, &up, 1e-5, 200, |_| true).unwrap();
                assert!(r.tensors > 0);
                worst = worst.max(r.max_rel_err);
            }
        };
        check(&full, &mut rng);
        let mut base = full.clone();
        base.freeze_all();
        for method in [Peft::LoRA, Peft::Adapter, Peft::Prefix] {
            let mut adapted = inject(&base, method, &InjectionScope::preset("S9").unwrap(), &hyper, 1).unwrap();
            perturb(&mut adapted.params, &base, &mut rng);
            check(&adapted.params, &mut rng);
        }
        pass &= worst < tol;
        lines.push(format!("{} {worst:.1e} (tol {tol:.0e})", if tf { "transformer" } else { "mlp" }));
    }
    verdict(pass, lines.join(", "))
}

fn criterion_7() -> Verdict {
    let (p, r, v, a) = task_dims();
    let config = NetConfig::transformer(p, r, v, a);
    let stats = |seed| {
        let base = frozen(&config, seed);
        let hyper = PeftHyper {
            rank: 8,
            ..PeftHyper::default()
        };
        trainable_stats(&inject(&base, Peft::LoRA, &InjectionScope::preset("S7").unwrap(), &hyper, seed).unwrap().params)
    };
    let (s0, s1, s0b) = (stats(0), stats(1), stats(0));
    let stable = s0 == s1 && s0 == s0b;
    verdict(
        s0.ratio < 0.10 && stable,
        format!(
            "trainable {} of {} ({:.2}%), {}",
            s0.trainable_count,
            s0.total_count,
            100.0 * s0.ratio,
            if stable { "identical across seeds and reruns" } else { "count varies" }
        ),
    )
}

// 8 -------------------------------------------------------------------------

fn final_r(curves: &[CurveRow]) -> f64 {
    let tail = &curves[curves.len().saturating_sub(5)..];
    tail.iter().map(|r| r.r_joint).sum::<f64>() / tail.len() as f64
}

fn three_link() -> (EmbodimentSpec, MotionLibrary) {
    let spec = generate_embodiment(0, &FamilyParams::serial_chain(3)).unwrap();
    let lib = generate_library(1, &spec, 20, 4.0, &StyleParams::default()).unwrap();
    (spec, lib)
}

fn criterion_8() -> Verdict {
    let (spec, lib) = three_link();
    let tracking = TrainConfig::tracking();
    // whole iterations only, so the run never exceeds the budget
    let config = TrainConfig {
        total_env_steps: 200_000 / tracking.batch_size() * tracking.batch_size(),
        ..tracking
    };
    let out = train(&config, None, &TrainTask::native(&spec, &lib)).unwrap();
    let first = out.curves[0].r_joint;
    let last = final_r(&out.curves);
    verdict(
        last >= 1.5 * first && out.curves.last().unwrap().env_steps <= 200_000,
        format!("r_joint {first:.3} -> {last:.3} ({:.2}x) in {} steps", last / first, out.curves.last().unwrap().env_steps),
    )
}

// 9-12 ----------------------------------------------------------------------

const PRETRAIN_STEPS: usize = 400_000;
const TARGET_STEPS: usize = 200_000;
/// 2000 clips of 4 s at 50 Hz: the 400k-frame budget is the whole library.
const LIBRARY_CLIPS: usize = 2000;
const HELD_OUT_CLIPS: usize = 16;
/// Iterations of every sampling-sweep run.
const SAMPLING_ITERATIONS: usize = 40;

struct SeedRuns {
    curves: HashMap<String, Vec<CurveRow>>,
    mpjpe: HashMap<String, f64>,
}

fn held_out_mpjpe(
    source: &EmbodimentSpec,
    target: &EmbodimentSpec,
    held: &MotionLibrary,
    method: Method,
    out: &TrainOutcome,
) -> f64 {
    let setup = TrainTask::transfer(source, target, held).setup(method, out.params.config.h).unwrap();
    let results = evaluate_library(&out.params, &setup, true, 0).unwrap();
    compute_metrics(&results).unwrap().mpjpe
}

fn seed_runs(seed: u64) -> SeedRuns {
    let t0 = Instant::now();
    let (source, target) = transfer_pair(seed).unwrap();
    let library = generate_library(seed, &source, LIBRARY_CLIPS, 4.0, &StyleParams::default()).unwrap();
    let held = generate_library(seed + 1000, &source, HELD_OUT_CLIPS, 4.0, &StyleParams::default()).unwrap();
    let base = TrainConfig {
        seed,
        ..TrainConfig::tracking()
    };
    let pre = train(
        &TrainConfig {
            total_env_steps: PRETRAIN_STEPS,
            ..base.clone()
        },
        None,
        &TrainTask::native(&source, &library),
    )
    .unwrap();
    eprintln!(
        "  seed {seed}: source r_joint {:.3} ({:.0}s)",
        final_r(&pre.curves),
        t0.elapsed().as_secs_f64()
    );

    let mut runs = SeedRuns {
        curves: HashMap::new(),
        mpjpe: HashMap::new(),
    };
    let mut run = |name: String, config: TrainConfig, lib: &MotionLibrary, eval: bool| {
        let checkpoint = config.method.needs_checkpoint().then_some(&pre.params);
        let out = train(&config, checkpoint, &TrainTask::transfer(&source, &target, lib)).unwrap();
        if eval {
            let m = held_out_mpjpe(&source, &target, &held, config.method, &out);
            runs.mpjpe.insert(name.clone(), m);
        }
        eprintln!(
            "  seed {seed}: {name:24} r_joint {:.3} ({:.0}s)",
            final_r(&out.curves),
            t0.elapsed().as_secs_f64()
        );
        runs.curves.insert(name, out.curves);
    };
    let with = |method: Method| TrainConfig {
        method,
        total_env_steps: TARGET_STEPS,
        ..base.clone()
    };
    for &budget in &DATA_BUDGETS {
        let lib = subsample_library(&library, budget, seed).unwrap();
        for m in [Method::Scratch, Method::Any2AnyLora] {
            run(format!("{}_{}k", m.name(), budget / 1000), with(m), &lib, true);
        }
    }
    for m in [Method::FullFtNoAlign, Method::FullFtAlign] {
        run(m.name().to_string(), with(m), &library, false);
    }
    for (n_envs, tag) in [(16, "1k"), (256, "16k")] {
        for m in [Method::Scratch, Method::Any2AnyLora] {
            let config = TrainConfig {
                n_envs,
                steps_per_env: 64,
                total_env_steps: SAMPLING_ITERATIONS * n_envs * 64,
                ..with(m)
            };
            run(format!("{}_batch{tag}", m.name()), config, &library, false);
        }
    }
    runs
}

/// Env steps at which `curve` first reaches `level`, or `None`.
fn steps_to_reach(curve: &[CurveRow], level: f64) -> Option<usize> {
    curve.iter().find(|r| r.r_joint >= level).map(|r| r.env_steps)
}

fn criterion_9(runs: &[SeedRuns]) -> Verdict {
    let full = format!("_{}k", DATA_BUDGETS[2] / 1000);
    let mut fractions = Vec::new();
    for r in runs {
        let scratch = &r.curves[&format!("Scratch{full}")];
        let lora = &r.curves[&format!("Any2Any_LoRA{full}")];
        let budget = scratch.last().unwrap().env_steps as f64;
        let level = final_r(scratch);
        // never reaching counts as twice the budget
        let steps = steps_to_reach(lora, level).map_or(2.0 * budget, |s| s as f64);
        fractions.push(steps / budget);
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    verdict(
        mean <= 0.5,
        format!("LoRA reaches Scratch's final r_joint at {:.1}% of its budget (per seed {})", 100.0 * mean, fmt_list(&fractions)),
    )
}

fn criterion_10(runs: &[SeedRuns]) -> Verdict {
    let pairs: Vec<(f64, f64)> = runs
        .iter()
        .map(|r| (final_r(&r.curves["FullFT_NoAlign"]), final_r(&r.curves["FullFT_Align"])))
        .collect();
    let wins = pairs.iter().filter(|(no, yes)| no < yes).count();
    let detail = pairs.iter().map(|(a, b)| format!("{a:.3}<{b:.3}")).collect::<Vec<_>>().join(" ");
    verdict(wins == runs.len(), format!("NoAlign below Align on {wins}/{} seeds: {detail}", runs.len()))
}

fn criterion_11(runs: &[SeedRuns]) -> Verdict {
    let mean = |key: String| runs.iter().map(|r| r.mpjpe[&key]).sum::<f64>() / runs.len() as f64;
    let mut gaps = Vec::new();
    let mut detail = Vec::new();
    for b in DATA_BUDGETS {
        let (s, a) = (mean(format!("Scratch_{}k", b / 1000)), mean(format!("Any2Any_LoRA_{}k", b / 1000)));
        gaps.push(s - a);
        detail.push(format!("{}k scratch {s:.3} any2any {a:.3}", b / 1000));
    }
    let pass = gaps.iter().all(|g| *g >= 0.0) && gaps[0] > gaps[2];
    verdict(pass, format!("mean MPJPE (m): {}; gap 4k {:.3} vs 400k {:.3}", detail.join(", "), gaps[0], gaps[2]))
}

fn criterion_12(runs: &[SeedRuns]) -> Verdict {
    let drop = |method: &str| {
        let pct: Vec<f64> = runs
            .iter()
            .map(|r| {
                let big = final_r(&r.curves[&format!("{method}_batch16k")]);
                let small = final_r(&r.curves[&format!("{method}_batch1k")]);
                100.0 * (big - small) / big
            })
            .collect();
        pct.iter().sum::<f64>() / pct.len() as f64
    };
    let (scratch, any2any) = (drop("Scratch"), drop("Any2Any_LoRA"));
    verdict(
        scratch > any2any,
        format!("r_joint drop 16k->1k per iteration: Scratch {scratch:.1}%, Any2Any {any2any:.1}%"),
    )
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/")
}

// 13 ------------------------------------------------------------------------

fn criterion_13() -> Verdict {
    let spec = generate_embodiment(2, &FamilyParams::serial_chain(3)).unwrap();
    let lib = generate_library(5, &spec, 6, 4.0, &StyleParams::quasi_static()).unwrap();
    let setup = TaskSetup::native(&spec, &lib, 1).unwrap();
    let results = evaluate_library(&ReferenceOracle, &setup, true, 0).unwrap();
    let m = compute_metrics(&results).unwrap();
    let bound = pd_steady_state_bound(&spec);

    // hand-built episode: every keypoint 0.1 m off, then everything doubled
    let frame = |k: f64| vec![[0.0, 0.0], [0.3 * k, -0.2 * k], [0.5 * k + 0.1, -0.1 * k]];
    let reference = |k: f64| vec![[0.0, 0.0], [0.3 * k, -0.2 * k], [0.5 * k, -0.1 * k]];
    let episode = |s: f64| EpisodeResult {
        clip_id: "unit".into(),
        success: true,
        keypoints: (0..10).map(|f| frame(f as f64).iter().map(|p| [s * p[0], s * p[1]]).collect()).collect(),
        ref_keypoints: (0..10).map(|f| reference(f as f64).iter().map(|p| [s * p[0], s * p[1]]).collect()).collect(),
        base_poses: vec![[0.0; 3]; 10],
        ref_base_poses: vec![[0.0; 3]; 10],
        actions: vec![vec![0.0; 3]; 10],
        termination: Termination::ClipComplete,
    };
    let one = compute_metrics(&[episode(1.0)]).unwrap().mpjpe;
    let two = compute_metrics(&[episode(2.0)]).unwrap().mpjpe;
    let expected = 0.1 / 3.0;
    let units = (one - expected).abs() < 1e-12 && (two - 2.0 * one).abs() < 1e-12;
    verdict(
        m.success_rate == 1.0 && m.mpjpe < bound && units,
        format!(
            "oracle success {:.2}, mpjpe {:.4} m < bound {bound:.4} m; unit check {one:.4} -> {two:.4}",
            m.success_rate, m.mpjpe
        ),
    )
}

// 14 ------------------------------------------------------------------------

fn a2a(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_a2a")).current_dir(dir).args(args).output().unwrap();
    assert!(out.status.success(), "a2a {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn criterion_14() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (spec, lib) = three_link();
    spec.save(dir.join("robot.json")).unwrap();
    save_library(&lib, dir.join("lib")).unwrap();
    fs::write(
        dir.join("c.json"),
        r#"{"source": "robot.json", "target": "robot.json", "library": "lib", "method": "Scratch", "train": {"total_env_steps": 16384}}"#,
    )
    .unwrap();
    let mut same = Vec::new();
    for (cmd, file) in [("pretrain", "curves.csv"), ("eval", "metrics.csv")] {
        let mut bytes = Vec::new();
        for out in ["a", "b"] {
            let out_dir = format!("{cmd}_{out}");
            match cmd {
                "pretrain" => a2a(dir, &["pretrain", "--config", "c.json", "--out", &out_dir, "--deterministic"]),
                _ => a2a(
                    dir,
                    &["eval", "--config", "c.json", "--checkpoint", "pretrain_a/policy.ckpt", "--out", &out_dir, "--deterministic"],
                ),
            }
            bytes.push(fs::read(dir.join(&out_dir).join(file)).unwrap());
        }
        same.push((cmd, bytes[0] == bytes[1]));
    }
    let pass = same.iter().all(|s| s.1);
    let detail = same.iter().map(|(c, s)| format!("{c} {}", if *s { "identical" } else { "differs" })).collect::<Vec<_>>();
    verdict(pass, detail.join(", "))
}

// runner --------------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let n_seeds: u64 = std::env::var("ACCEPTANCE_SEEDS").ok().and_then(|s| s.parse().ok()).unwrap_or(3);

    let mut failed = 0;
    let mut report = |n: usize, start: Instant, v: Verdict| {
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:2}: {status} {} ({:.1}s)", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed += 1;
        }
    };

    let simple: [(usize, fn() -> Verdict); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    for (n, f) in simple {
        if wanted(n) {
            let t = Instant::now();
            report(n, t, guarded(f));
        }
    }

    if (9..=12).any(wanted) {
        let t = Instant::now();
        let runs = catch_unwind(|| (0..n_seeds).map(seed_runs).collect::<Vec<_>>());
        let trend: [(usize, fn(&[SeedRuns]) -> Verdict); 4] =
            [(9, criterion_9), (10, criterion_10), (11, criterion_11), (12, criterion_12)];
        for (n, f) in trend {
            if wanted(n) {
                let v = match &runs {
                    Ok(r) => guarded(|| f(r)),
                    Err(_) => verdict(false, "trend experiment panicked"),
                };
                report(n, t, v);
            }
        }
    }

    for (n, f) in [(13, criterion_13 as fn() -> Verdict), (14, criterion_14)] {
        if wanted(n) {
            let t = Instant::now();
            report(n, t, guarded(f));
        }
    }

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
