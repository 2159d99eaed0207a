use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_mlp() -> NetConfig {
    NetConfig {
        h: 1,
        mlp_layers: 2,
        mlp_hidden: 6,
        ..NetConfig::mlp(3, 4, 2, 3)
    }
}

fn small_tf() -> NetConfig {
    NetConfig {
        h: 2,
        tf_dim: 4,
        tf_blocks: 1,
        tf_heads: 1,
        ..NetConfig::transformer(3, 4, 2, 3)
    }
}

fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Larger random weights so the checks exercise every nonlinearity.
fn jittered(config: &NetConfig, seed: u64) -> PolicyParams {
    let mut p = PolicyParams::init(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for name in p.names() {
        let t = p.value_mut(&name).unwrap();
        for v in &mut t.data {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    p
}

#[test]
fn zero_network_outputs_zero() {
    for config in [small_mlp(), small_tf()] {
        let mut p = PolicyParams::init(&config, 0).unwrap();
        for name in p.names() {
            p.value_mut(&name).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
        }
        let obs = random(3, config.window_width(), 1);
        let (mean, _) = actor_forward(&p, &obs).unwrap();
        assert!(mean.data.iter().all(|&v| v == 0.0));
        let (value, _) = critic_forward(&p, &obs, &random(3, config.d_priv, 2)).unwrap();
        assert!(value.data.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn linear_mlp_matches_matrix_oracle() {
    // With inputs kept in GELU's near-linear zone would still be nonlinear, so
    // compare against the exact composition computed by hand instead.
    let config = NetConfig {
        h: 0,
        mlp_layers: 1,
        mlp_hidden: 3,
        ..NetConfig::mlp(2, 1, 1, 3)
    };
    let mut p = PolicyParams::init(&config, 3).unwrap();
    for name in p.names() {
        if name.ends_with(".b") {
            p.value_mut(&name).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let eye = Tensor::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 });
    p.insert("actor.out.w", eye, false);
    let obs = Tensor::from_vec(1, 3, vec![0.4, -0.7, 0.2]);
    let (mean, _) = actor_forward(&p, &obs).unwrap();
    let wp = p.tensor("actor.prop_in.w");
    let wr = p.tensor("actor.ref_in.w");
    let wh = p.tensor("actor.hidden.0.w");
    let h0: Vec<f64> = (0..3).map(|i| wp.at(i, 0) * 0.4 + wp.at(i, 1) * -0.7 + wr.at(i, 0) * 0.2).collect();
    for i in 0..3 {
        let pre: f64 = (0..3).map(|k| wh.at(i, k) * h0[k]).sum();
        assert!((mean.at(0, i) - gelu(pre)).abs() < 1e-14);
    }
}

#[test]
fn transformer_is_causal_over_time() {
    let config = NetConfig {
        h: 3,
        tf_dim: 8,
        tf_blocks: 2,
        tf_heads: 2,
        ..NetConfig::transformer(3, 4, 2, 3)
    };
    let p = jittered(&config, 4);
    let obs = random(2, config.window_width(), 5);
    let (_, base) = actor_forward(&p, &obs).unwrap();
    let width = config.d_p + config.d_r;
    let seq = 2 * config.steps();
    for t in 1..config.steps() {
        let mut moved = obs.clone();
        for c in t * width..(t + 1) * width {
            *moved.at_mut(1, c) += 0.5;
        }
        let (_, cache) = actor_forward(&p, &moved).unwrap();
        for blk in 0..2 {
            let label = format!("actor.blocks.{blk}.out");
            let (a, b) = (base.activation(&label).unwrap(), cache.activation(&label).unwrap());
            for tok in 0..seq {
                let changed = a.row(seq + tok) != b.row(seq + tok);
                assert_eq!(changed, tok / 2 >= t, "block {blk} token {tok} step {t}");
                assert_eq!(a.row(tok), b.row(tok), "other sample untouched");
            }
        }
    }
}

#[test]
fn critic_reads_privileged_inputs() {
    for config in [small_mlp(), small_tf()] {
        let p = jittered(&config, 6);
        let obs = random(1, config.window_width(), 7);
        let priv_a = Tensor::from_vec(1, 2, vec![0.1, 0.2]);
        let priv_b = Tensor::from_vec(1, 2, vec![0.1, 0.9]);
        let (a, _) = critic_forward(&p, &obs, &priv_a).unwrap();
        let (b, _) = critic_forward(&p, &obs, &priv_b).unwrap();
        assert_ne!(a, b);
    }
}

#[test]
fn gradients_match_finite_differences() {
    for (config, tol) in [(small_mlp(), 1e-6), (small_tf(), 1e-5)] {
        let p = jittered(&config, 8);
        let obs = random(3, config.window_width(), 9);
        let privileged = random(3, config.d_priv, 10);
        for (head, width) in [(Head::Actor, config.action_dim), (Head::Critic, 1)] {
            let up = random(3, width, 11);
            let r = gradient_check(&p, head, &obs, &privileged, &up, 1e-5, 1000, |_| true).unwrap();
            assert!(r.max_rel_err < tol, "{:?} {head:?}: {} ({})", config.backbone, r.max_rel_err, r.worst);
            assert!(r.tensors > 5);
        }
    }
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let config = small_tf();
    let p = jittered(&config, 12);
    let obs = random(2, config.window_width(), 13);
    let (out, cache) = actor_forward(&p, &obs).unwrap();
    let g = backward(&p, &cache, &Tensor::zeros(out.rows, out.cols)).unwrap();
    assert!(g.is_zero());
    assert_eq!(g.tensors.len(), p.names().len());
}

#[test]
fn frozen_tensors_get_zero_gradients_and_stay_put() {
    let config = small_mlp();
    let mut p = jittered(&config, 14);
    p.set_frozen("actor.hidden.0.w", true);
    let before = p.tensor("actor.hidden.0.w").clone();
    let obs = random(4, config.window_width(), 15);
    let mut adam = Adam::new(1e-2);
    for _ in 0..5 {
        let (out, cache) = actor_forward(&p, &obs).unwrap();
        let g = backward(&p, &cache, &out).unwrap();
        assert!(g.get("actor.hidden.0.w").unwrap().data.iter().all(|&v| v == 0.0));
        assert!(g.get("actor.hidden.1.w").unwrap().data.iter().any(|&v| v != 0.0));
        adam.step(&mut p, &g);
    }
    assert_eq!(p.tensor("actor.hidden.0.w"), &before);
}

#[test]
fn stale_cache_is_rejected() {
    let config = small_mlp();
    let mut p = PolicyParams::init(&config, 0).unwrap();
    let obs = random(1, config.window_width(), 1);
    let (out, cache) = actor_forward(&p, &obs).unwrap();
    p.value_mut("actor.out.b").unwrap().data[0] = 1.0;
    assert!(matches!(backward(&p, &cache, &out), Err(crate::Error::StaleCache { .. })));
}

#[test]
fn shape_and_finiteness_errors() {
    let config = small_mlp();
    let p = PolicyParams::init(&config, 0).unwrap();
    assert!(matches!(actor_forward(&p, &random(1, 5, 0)), Err(crate::Error::ShapeMismatch(_))));
    let mut obs = random(1, config.window_width(), 0);
    obs.data[0] = f64::NAN;
    assert!(actor_forward(&p, &obs).is_err());
    let mut bad = p.clone();
    bad.value_mut("actor.out.w").unwrap().data[0] = f64::INFINITY;
    let obs = random(1, config.window_width(), 0);
    assert!(matches!(actor_forward(&bad, &obs), Err(crate::Error::NonFiniteActivation(_))));
}

#[test]
fn forward_is_deterministic() {
    let config = small_tf();
    let p = PolicyParams::init(&config, 21).unwrap();
    assert_eq!(p, PolicyParams::init(&config, 21).unwrap());
    let obs = random(5, config.window_width(), 22);
    assert_eq!(actor_forward(&p, &obs).unwrap().0, actor_forward(&p, &obs).unwrap().0);
}

#[test]
fn gaussian_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mean = [0.3, -1.2, 2.0];
    let (a, _) = sample_action(&mean, &[-20.0; 3], &mut rng);
    for (x, m) in a.iter().zip(&mean) {
        assert!((x - m).abs() < 1e-8);
    }
    let ls = [-0.5, 0.1, -1.0];
    let expect: f64 = -ls.iter().map(|l| l + 0.5 * (2.0 * std::f64::consts::PI).ln()).sum::<f64>();
    assert!((log_prob(&mean, &mean, &ls) - expect).abs() < 1e-12);

    let n = 100_000;
    let mut sums = [0.0; 3];
    for _ in 0..n {
        let (x, lp) = sample_action(&mean, &ls, &mut rng);
        assert!((lp - log_prob(&x, &mean, &ls)).abs() < 1e-12);
        for k in 0..3 {
            sums[k] += x[k];
        }
    }
    for k in 0..3 {
        let sigma = ls[k].exp();
        assert!((sums[k] / n as f64 - mean[k]).abs() < 3.0 * sigma / (n as f64).sqrt());
    }
    let mut r1 = ChaCha8Rng::seed_from_u64(5);
    let mut r2 = ChaCha8Rng::seed_from_u64(5);
    assert_eq!(sample_action(&mean, &ls, &mut r1), sample_action(&mean, &ls, &mut r2));
}

#[test]
fn checkpoint_round_trip() {
    let config = small_tf();
    let mut p = PolicyParams::init(&config, 30).unwrap();
    p.set_frozen("actor.out.w", true);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    p.save(&path, Some(serde_json::json!({ "note": "x" }))).unwrap();
    let (back, header) = PolicyParams::load(&path).unwrap();
    assert_eq!(header["note"], "x");
    assert_eq!(back.config, p.config);
    assert!(back.is_frozen("actor.out.w"));
    for (name, param) in p.iter() {
        assert_eq!(back.tensor(name), &param.value);
    }
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(PolicyParams::load(&path).is_err());
    std::fs::write(&path, b"nope").unwrap();
    assert!(matches!(PolicyParams::load(&path), Err(crate::Error::Checkpoint(_))));
}
