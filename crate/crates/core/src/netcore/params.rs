use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::{Error, Result};

pub const LOG_STD_INIT: f64 = -1.0;
const MAGIC: &[u8; 4] = b"A2A1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backbone {
    #[serde(rename = "MLP")]
    Mlp,
    Transformer,
}

/// Network shapes. Each observation window holds `h + 1` timesteps of
/// `d_p` proprioceptive and `d_r` reference features; the critic also sees a
/// `d_priv`-wide privileged vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub backbone: Backbone,
    pub h: usize,
    pub d_p: usize,
    pub d_r: usize,
    pub d_priv: usize,
    pub mlp_layers: usize,
    pub mlp_hidden: usize,
    pub tf_dim: usize,
    pub tf_blocks: usize,
    pub tf_heads: usize,
    pub action_dim: usize,
}

impl NetConfig {
    pub fn mlp(d_p: usize, d_r: usize, d_priv: usize, action_dim: usize) -> NetConfig {
        NetConfig {
            backbone: Backbone::Mlp,
            h: 4,
            d_p,
            d_r,
            d_priv,
            mlp_layers: 3,
            mlp_hidden: 256,
            tf_dim: 64,
            tf_blocks: 2,
            tf_heads: 4,
            action_dim,
        }
    }

    pub fn transformer(d_p: usize, d_r: usize, d_priv: usize, action_dim: usize) -> NetConfig {
        NetConfig {
            backbone: Backbone::Transformer,
            ..NetConfig::mlp(d_p, d_r, d_priv, action_dim)
        }
    }

    /// Observed timesteps, `H + 1`.
    pub fn steps(&self) -> usize {
        self.h + 1
    }

    /// Flattened width of one observation window.
    pub fn window_width(&self) -> usize {
        self.steps() * (self.d_p + self.d_r)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.d_p, self.d_r, self.action_dim].iter().all(|&v| v > 0);
        let shape_ok = match self.backbone {
            Backbone::Mlp => self.mlp_layers > 0 && self.mlp_hidden > 0,
            Backbone::Transformer => {
                self.tf_dim > 0 && self.tf_blocks > 0 && self.tf_heads > 0 && self.tf_dim.is_multiple_of(self.tf_heads)
            }
        };
        if positive && shape_ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("invalid network config {self:?}")))
        }
    }
}

/// Backbone sites (linear layers between the input and output projections).
pub fn backbone_sites(config: &NetConfig, head: &str) -> Vec<String> {
    match config.backbone {
        Backbone::Mlp => (0..config.mlp_layers).map(|l| format!("{head}.hidden.{l}")).collect(),
        Backbone::Transformer => (0..config.tf_blocks)
            .flat_map(|i| [format!("{head}.blocks.{i}.ff1"), format!("{head}.blocks.{i}.ff2")])
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Tensor,
    pub frozen: bool,
}

/// Every tensor of an actor-critic pair, each with its own freeze flag.
///
/// Any mutable access bumps `version`, which invalidates forward caches.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: NetConfig,
    tensors: BTreeMap<String, Param>,
    version: u64,
}

impl PolicyParams {
    pub fn empty(config: NetConfig) -> PolicyParams {
        PolicyParams {
            config,
            tensors: BTreeMap::new(),
            version: 0,
        }
    }

    /// Fresh trainable actor and critic. Weights are `N(0, 1/d_in)` (the
    /// actor output layer scaled by 0.01), biases zero, layer norms identity.
    pub fn init(config: &NetConfig, seed: u64) -> Result<PolicyParams> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = PolicyParams::empty(config.clone());
        let c = config;
        let mut dense = |p: &mut PolicyParams, site: &str, d_in: usize, d_out: usize, gain: f64| {
            let normal = Normal::new(0.0, gain / (d_in as f64).sqrt()).expect("finite std");
            let w = Tensor::from_fn(d_out, d_in, |_, _| normal.sample(&mut rng));
            p.insert(&format!("{site}.w"), w, false);
            p.insert(&format!("{site}.b"), Tensor::zeros(1, d_out), false);
        };
        for (head, prop_w, out_w, out_gain) in [
            ("actor", c.d_p, c.action_dim, 0.01),
            ("critic", c.d_p + c.d_priv, 1, 1.0),
        ] {
            match c.backbone {
                Backbone::Mlp => {
                    let hid = c.mlp_hidden;
                    dense(&mut p, &format!("{head}.prop_in"), c.steps() * prop_w, hid, 1.0);
                    dense(&mut p, &format!("{head}.ref_in"), c.steps() * c.d_r, hid, 1.0);
                    for l in 0..c.mlp_layers {
                        dense(&mut p, &format!("{head}.hidden.{l}"), hid, hid, 1.0);
                    }
                    dense(&mut p, &format!("{head}.out"), hid, out_w, out_gain);
                }
                Backbone::Transformer => {
                    let d = c.tf_dim;
                    dense(&mut p, &format!("{head}.prop_in"), prop_w, d, 1.0);
                    dense(&mut p, &format!("{head}.ref_in"), c.d_r, d, 1.0);
                    for i in 0..c.tf_blocks {
                        let b = format!("{head}.blocks.{i}");
                        for ln in ["ln1", "ln2"] {
                            p.insert(&format!("{b}.{ln}.g"), Tensor::from_vec(1, d, vec![1.0; d]), false);
                            p.insert(&format!("{b}.{ln}.b"), Tensor::zeros(1, d), false);
                        }
                        for proj in ["q", "k", "v", "o"] {
                            dense(&mut p, &format!("{b}.{proj}"), d, d, 1.0);
                        }
                        dense(&mut p, &format!("{b}.ff1"), d, 4 * d, 1.0);
                        dense(&mut p, &format!("{b}.ff2"), 4 * d, d, 1.0);
                    }
                    p.insert(&format!("{head}.ln_f.g"), Tensor::from_vec(1, d, vec![1.0; d]), false);
                    p.insert(&format!("{head}.ln_f.b"), Tensor::zeros(1, d), false);
                    dense(&mut p, &format!("{head}.out"), d, out_w, out_gain);
                }
            }
        }
        if c.backbone == Backbone::Transformer {
            let normal = Normal::new(0.0, 0.02).expect("finite std");
            for head in ["actor", "critic"] {
                let pos = Tensor::from_fn(c.steps(), c.tf_dim, |_, _| normal.sample(&mut rng));
                let modality = Tensor::from_fn(2, c.tf_dim, |_, _| normal.sample(&mut rng));
                p.insert(&format!("{head}.pos"), pos, false);
                p.insert(&format!("{head}.modality"), modality, false);
            }
        }
        p.insert(
            "actor.log_std",
            Tensor::from_vec(1, c.action_dim, vec![LOG_STD_INIT; c.action_dim]),
            false,
        );
        Ok(p)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name).map(|p| &p.value)
    }

    /// Panics on unknown names; use [`PolicyParams::get`] when unsure.
    pub fn tensor(&self, name: &str) -> &Tensor {
        match self.get(name) {
            Some(t) => t,
            None => panic!("no parameter `{name}`"),
        }
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.tensors.get(name).is_none_or(|p| p.frozen)
    }

    pub fn insert(&mut self, name: &str, value: Tensor, frozen: bool) {
        self.version += 1;
        self.tensors.insert(name.to_string(), Param { value, frozen });
    }

    pub fn remove(&mut self, name: &str) -> Option<Param> {
        self.version += 1;
        self.tensors.remove(name)
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.version += 1;
        self.tensors.get_mut(name).map(|p| &mut p.value)
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) {
        if let Some(p) = self.tensors.get_mut(name) {
            p.frozen = frozen;
            self.version += 1;
        }
    }

    pub fn freeze_all(&mut self) {
        self.tensors.values_mut().for_each(|p| p.frozen = true);
        self.version += 1;
    }

    pub fn unfreeze_all(&mut self) {
        self.tensors.values_mut().for_each(|p| p.frozen = false);
        self.version += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.tensors.keys().cloned().collect()
    }

    pub fn total_count(&self) -> usize {
        self.tensors.values().map(|p| p.value.len()).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.tensors.values().filter(|p| !p.frozen).map(|p| p.value.len()).sum()
    }

    /// Linear sites (`<site>.w` / `<site>.b` pairs) of the base network.
    pub fn linear_sites(&self) -> Vec<String> {
        self.tensors
            .keys()
            .filter_map(|k| k.strip_suffix(".w"))
            .filter(|s| !s.contains(".adapter."))
            .map(str::to_string)
            .collect()
    }

    /// `(d_in, d_out)` of a linear site.
    pub fn site_dims(&self, site: &str) -> Option<(usize, usize)> {
        self.get(&format!("{site}.w")).map(|w| (w.cols, w.rows))
    }

    /// Single-file checkpoint: `A2A1`, u32 header length, header JSON, then
    /// per tensor u32 name length, name, u32 rank, u32 dims, f64 values (all
    /// little-endian). The header carries the config, the frozen tensor names
    /// and any `extra` fields.
    pub fn save(&self, path: impl AsRef<Path>, extra: Option<serde_json::Value>) -> Result<()> {
        let path = path.as_ref();
        let frozen: Vec<&String> = self.tensors.iter().filter(|(_, p)| p.frozen).map(|(k, _)| k).collect();
        let mut header = serde_json::json!({ "net": self.config, "frozen": frozen });
        if let Some(serde_json::Value::Object(extra)) = extra {
            for (k, v) in extra {
                header[k] = v;
            }
        }
        let header = serde_json::to_vec(&header)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        for (name, p) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&2u32.to_le_bytes());
            buf.extend_from_slice(&(p.value.rows as u32).to_le_bytes());
            buf.extend_from_slice(&(p.value.cols as u32).to_le_bytes());
            for v in &p.value.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Inverse of [`PolicyParams::save`]; also returns the full header.
    pub fn load(path: impl AsRef<Path>) -> Result<(PolicyParams, serde_json::Value)> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut r = Reader { bytes: &bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let hlen = r.u32()? as usize;
        let header: serde_json::Value = serde_json::from_slice(r.take(hlen)?)?;
        let config: NetConfig = serde_json::from_value(header["net"].clone())?;
        let frozen: Vec<String> = serde_json::from_value(header["frozen"].clone())?;
        let mut p = PolicyParams::empty(config);
        while r.at < bytes.len() {
            let nlen = r.u32()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec()).map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let (rows, cols) = match dims[..] {
                [n] => (1, n),
                [a, b] => (a, b),
                _ => return Err(Error::Checkpoint(format!("tensor `{name}` has rank {rank}"))),
            };
            let data = r
                .take(rows * cols * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let is_frozen = frozen.contains(&name);
            p.insert(&name, Tensor::from_vec(rows, cols, data), is_frozen);
        }
        Ok((p, header))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Per-tensor gradients, shape-congruent with the parameters; frozen
/// tensors hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &PolicyParams) -> Gradients {
        Gradients {
            tensors: params
                .iter()
                .map(|(k, p)| (k.clone(), Tensor::zeros(p.value.rows, p.value.cols)))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Accumulate raw gradients, skipping frozen or unknown tensors.
    pub fn accumulate(&mut self, params: &PolicyParams, raw: BTreeMap<String, Tensor>) {
        for (name, g) in raw {
            if params.is_frozen(&name) {
                continue;
            }
            if let Some(t) = self.tensors.get_mut(&name) {
                t.add_assign(&g);
            }
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (name, g) in &other.tensors {
            if let Some(t) = self.tensors.get_mut(name) {
                t.add_assign(g);
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors.values_mut().for_each(|t| t.scale(k));
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.values().map(Tensor::sum_sq).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.values().all(|t| t.data.iter().all(|&v| v == 0.0))
    }
}
