//! LoRA, adapter and prefix adaptation of a frozen actor-critic.
//!
//! Injected factors live in the same [`PolicyParams`] store as the frozen
//! backbone, under `<site>.lora_a`, `<site>.adapter.*` and `*.prefix*`
//! names, so the ordinary netcore forward and backward passes run adapted
//! policies unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::netcore::{backbone_sites, matmul_nn, Backbone, PolicyParams, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    LoRA,
    Adapter,
    Prefix,
}

/// Which actor/critic sites receive factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScopeFlags {
    pub actor_backbone: bool,
    pub actor_ref_in: bool,
    pub actor_prop_in: bool,
    pub actor_out: bool,
    pub critic_backbone: bool,
    pub critic_in: bool,
    pub critic_out: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionScope {
    pub flags: ScopeFlags,
    /// Preset name (`S1`..`S9`); presets skip sites a method cannot host
    /// instead of failing.
    pub preset: Option<String>,
}

pub const PRESETS: [&str; 9] = ["S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "S9"];

impl InjectionScope {
    pub fn preset(name: &str) -> Result<InjectionScope> {
        let f = |ab, ar, ap, ao, cb, ci, co| ScopeFlags {
            actor_backbone: ab,
            actor_ref_in: ar,
            actor_prop_in: ap,
            actor_out: ao,
            critic_backbone: cb,
            critic_in: ci,
            critic_out: co,
        };
        let flags = match name {
            "S1" => f(true, false, false, false, false, false, false),
            "S2" => f(true, false, false, false, true, false, false),
            "S3" => f(true, true, false, false, true, false, false),
            "S4" => f(true, false, true, false, true, false, false),
            "S5" => f(true, false, false, true, true, false, false),
            "S6" => f(true, false, false, false, true, true, false),
            "S7" => f(true, false, true, true, true, false, false),
            "S8" => f(true, true, true, true, false, false, false),
            "S9" => f(true, true, true, true, true, true, true),
            other => return Err(Error::config("scope", format!("unknown scope preset `{other}` (S1..S9)"))),
        };
        Ok(InjectionScope {
            flags,
            preset: Some(name.to_string()),
        })
    }

    pub fn custom(flags: ScopeFlags) -> InjectionScope {
        InjectionScope { flags, preset: None }
    }

    /// `(site, is_backbone)` pairs selected for `config`.
    pub fn sites(&self, params: &PolicyParams) -> Vec<(String, bool)> {
        let c = &params.config;
        let f = &self.flags;
        let mut out = Vec::new();
        let mut add = |on: bool, sites: Vec<String>, backbone: bool| {
            if on {
                out.extend(sites.into_iter().map(|s| (s, backbone)));
            }
        };
        add(f.actor_backbone, backbone_sites(c, "actor"), true);
        add(f.actor_ref_in, vec!["actor.ref_in".into()], false);
        add(f.actor_prop_in, vec!["actor.prop_in".into()], false);
        add(f.actor_out, vec!["actor.out".into()], false);
        add(f.critic_backbone, backbone_sites(c, "critic"), true);
        add(f.critic_in, vec!["critic.prop_in".into(), "critic.ref_in".into()], false);
        add(f.critic_out, vec!["critic.out".into()], false);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeftHyper {
    pub rank: usize,
    pub bottleneck: usize,
    pub prefix_len: usize,
}

impl Default for PeftHyper {
    fn default() -> Self {
        PeftHyper {
            rank: 8,
            bottleneck: 16,
            prefix_len: 8,
        }
    }
}

/// A frozen policy plus its injected trainable factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedPolicy {
    pub params: PolicyParams,
    pub method: Method,
    pub scope: InjectionScope,
    pub hyper: PeftHyper,
    /// Sites that actually received factors.
    pub sites: Vec<String>,
}

/// LoRA rank used at a site: `k` capped at a quarter of the smaller
/// dimension (at least 1).
pub fn site_rank(k: usize, d_in: usize, d_out: usize) -> usize {
    k.min((d_in.min(d_out) / 4).max(1))
}

/// Freeze `params` and add zero-initialised factors of `method` at the
/// sites of `scope`. The actor's `log_std` stays trainable.
pub fn inject(
    params: &PolicyParams,
    method: Method,
    scope: &InjectionScope,
    hyper: &PeftHyper,
    seed: u64,
) -> Result<AdaptedPolicy> {
    let mut p = params.clone();
    p.freeze_all();
    p.set_frozen("actor.log_std", false);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lenient = scope.preset.is_some();
    let mut sites = Vec::new();
    match method {
        Method::LoRA => {
            if hyper.rank == 0 {
                return Err(Error::InvalidRank("rank must be at least 1".into()));
            }
            for (site, backbone) in scope.sites(&p) {
                let (d_in, d_out) = p
                    .site_dims(&site)
                    .ok_or_else(|| Error::UnsupportedSite(site.clone()))?;
                if backbone && hyper.rank > (d_in.min(d_out) / 4).max(1) {
                    return Err(Error::InvalidRank(format!(
                        "rank {} exceeds min(d_in, d_out)/4 = {} at {site}",
                        hyper.rank,
                        d_in.min(d_out) / 4
                    )));
                }
                let k = site_rank(hyper.rank, d_in, d_out);
                let normal = Normal::new(0.0, (1.0 / d_in as f64).sqrt()).expect("finite std");
                p.insert(&format!("{site}.lora_a"), Tensor::from_fn(k, d_in, |_, _| normal.sample(&mut rng)), false);
                p.insert(&format!("{site}.lora_b"), Tensor::zeros(d_out, k), false);
                sites.push(site);
            }
        }
        Method::Adapter => {
            if hyper.bottleneck == 0 {
                return Err(Error::InvalidRank("adapter bottleneck must be at least 1".into()));
            }
            for (site, _) in scope.sites(&p) {
                let (_, d) = p
                    .site_dims(&site)
                    .ok_or_else(|| Error::UnsupportedSite(site.clone()))?;
                if d < 2 {
                    if lenient {
                        continue;
                    }
                    return Err(Error::UnsupportedSite(format!("{site} (output width {d} leaves no bottleneck)")));
                }
                let m = hyper.bottleneck.min((d / 2).max(1));
                let normal = Normal::new(0.0, (1.0 / d as f64).sqrt()).expect("finite std");
                p.insert(&format!("{site}.adapter.down_w"), Tensor::from_fn(m, d, |_, _| normal.sample(&mut rng)), false);
                p.insert(&format!("{site}.adapter.down_b"), Tensor::zeros(1, m), false);
                p.insert(&format!("{site}.adapter.up_w"), Tensor::zeros(d, m), false);
                p.insert(&format!("{site}.adapter.up_b"), Tensor::zeros(1, d), false);
                sites.push(site);
            }
        }
        Method::Prefix => {
            let mut heads = Vec::new();
            for (site, backbone) in scope.sites(&p) {
                if !backbone {
                    if lenient {
                        continue;
                    }
                    return Err(Error::UnsupportedSite(format!("{site} (prefixes attach to the backbone only)")));
                }
                let head = site.split('.').next().expect("site has a head").to_string();
                if !heads.contains(&head) {
                    heads.push(head);
                }
            }
            let plen = hyper.prefix_len;
            for head in heads {
                if plen == 0 {
                    continue;
                }
                let c = p.config.clone();
                let unit = Normal::new(0.0, 1.0).expect("finite std");
                match c.backbone {
                    Backbone::Mlp => {
                        p.insert(&format!("{head}.prefix.virtual"), Tensor::from_fn(1, plen, |_, _| unit.sample(&mut rng)), false);
                        p.insert(&format!("{head}.hidden.0.prefix_ext"), Tensor::zeros(c.mlp_hidden, plen), false);
                        sites.push(format!("{head}.hidden.0"));
                    }
                    Backbone::Transformer => {
                        for i in 0..c.tf_blocks {
                            let b = format!("{head}.blocks.{i}");
                            p.insert(&format!("{b}.prefix_k"), Tensor::from_fn(plen, c.tf_dim, |_, _| unit.sample(&mut rng)), false);
                            p.insert(&format!("{b}.prefix_v"), Tensor::from_fn(plen, c.tf_dim, |_, _| unit.sample(&mut rng)), false);
                            p.insert(&format!("{b}.prefix_gate"), Tensor::zeros(1, c.tf_heads), false);
                            sites.push(b);
                        }
                    }
                }
            }
        }
    }
    Ok(AdaptedPolicy {
        params: p,
        method,
        scope: scope.clone(),
        hyper: hyper.clone(),
        sites,
    })
}

/// Dense policy with `W' = W + B A` at every LoRA site; nothing trainable.
pub fn merge_lora(adapted: &AdaptedPolicy) -> Result<PolicyParams> {
    if adapted.method != Method::LoRA {
        return Err(Error::WrongMethod(format!("{:?}", adapted.method)));
    }
    let mut p = adapted.params.clone();
    let lora_sites: Vec<String> = p
        .names()
        .iter()
        .filter_map(|n| n.strip_suffix(".lora_a").map(str::to_string))
        .collect();
    for site in lora_sites {
        let a = p.remove(&format!("{site}.lora_a")).expect("listed").value;
        let b = p.remove(&format!("{site}.lora_b")).expect("paired factor").value;
        let delta = matmul_nn(&b, &a);
        p.value_mut(&format!("{site}.w")).expect("base weight").add_assign(&delta);
    }
    p.freeze_all();
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainableStats {
    pub trainable_count: usize,
    pub total_count: usize,
    pub ratio: f64,
}

pub fn trainable_stats(params: &PolicyParams) -> TrainableStats {
    let trainable_count = params.trainable_count();
    let total_count = params.total_count();
    TrainableStats {
        trainable_count,
        total_count,
        ratio: if total_count == 0 { 0.0 } else { trainable_count as f64 / total_count as f64 },
    }
}

#[derive(Serialize, Deserialize)]
struct PeftHeader {
    method: Method,
    scope: InjectionScope,
    hyper: PeftHyper,
    sites: Vec<String>,
}

impl AdaptedPolicy {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = PeftHeader {
            method: self.method,
            scope: self.scope.clone(),
            hyper: self.hyper.clone(),
            sites: self.sites.clone(),
        };
        self.params.save(path, Some(serde_json::json!({ "peft": header })))
    }

    /// Loads an adapted checkpoint, or `Ok(None)` for a plain one.
    pub fn load(path: impl AsRef<Path>) -> Result<(PolicyParams, Option<AdaptedPolicy>)> {
        let (params, header) = PolicyParams::load(path)?;
        match header.get("peft") {
            None | Some(serde_json::Value::Null) => Ok((params, None)),
            Some(h) => {
                let h: PeftHeader = serde_json::from_value(h.clone())?;
                let adapted = AdaptedPolicy {
                    params: params.clone(),
                    method: h.method,
                    scope: h.scope,
                    hyper: h.hyper,
                    sites: h.sites,
                };
                Ok((params, Some(adapted)))
            }
        }
    }
}
