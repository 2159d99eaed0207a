use super::graph::{Graph, NodeId};
use super::params::{Backbone, Gradients, NetConfig, PolicyParams};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Everything [`backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    graph: Graph,
    out: NodeId,
    version: u64,
}

impl ForwardCache {
    /// Intermediate activations recorded under a name, e.g.
    /// `actor.blocks.0.out` (token rows) or `actor.hidden.1.out`.
    pub fn activation(&self, label: &str) -> Option<&Tensor> {
        self.graph.labelled(label)
    }
}

struct Net<'a> {
    g: Graph,
    p: &'a PolicyParams,
}

impl Net<'_> {
    fn param(&mut self, name: &str) -> NodeId {
        let t = self.p.tensor(name);
        self.g.param(name, t, !self.p.is_frozen(name))
    }

    fn has(&self, name: &str) -> bool {
        self.p.contains(name)
    }

    /// `x W^T + b`, plus `(x A^T) B^T` when the site carries LoRA factors.
    fn linear(&mut self, site: &str, x: NodeId) -> NodeId {
        let w = self.param(&format!("{site}.w"));
        let b = self.param(&format!("{site}.b"));
        let xw = self.g.matmul_t(x, w);
        let mut y = self.g.add_bias(xw, b);
        if self.has(&format!("{site}.lora_a")) {
            let a = self.param(&format!("{site}.lora_a"));
            let bb = self.param(&format!("{site}.lora_b"));
            let xa = self.g.matmul_t(x, a);
            let delta = self.g.matmul_t(xa, bb);
            y = self.g.add(y, delta);
        }
        y
    }

    /// `h + up(GELU(down h))` when the site carries an adapter.
    fn adapter(&mut self, site: &str, h: NodeId) -> NodeId {
        if !self.has(&format!("{site}.adapter.down_w")) {
            return h;
        }
        let dw = self.param(&format!("{site}.adapter.down_w"));
        let db = self.param(&format!("{site}.adapter.down_b"));
        let uw = self.param(&format!("{site}.adapter.up_w"));
        let ub = self.param(&format!("{site}.adapter.up_b"));
        let z = self.g.matmul_t(h, dw);
        let z = self.g.add_bias(z, db);
        let z = self.g.gelu(z);
        let u = self.g.matmul_t(z, uw);
        let u = self.g.add_bias(u, ub);
        self.g.add(h, u)
    }

    fn site(&mut self, site: &str, x: NodeId, activate: bool) -> NodeId {
        let mut y = self.linear(site, x);
        if activate {
            y = self.g.gelu(y);
        }
        self.adapter(site, y)
    }

    fn layer_norm(&mut self, prefix: &str, x: NodeId) -> NodeId {
        let g = self.param(&format!("{prefix}.g"));
        let b = self.param(&format!("{prefix}.b"));
        self.g.layer_norm(x, g, b)
    }

    fn mlp(&mut self, head: &str, prop: Tensor, reference: Tensor) -> NodeId {
        let c = &self.p.config;
        let layers = c.mlp_layers;
        let xp = self.g.input(prop);
        let xr = self.g.input(reference);
        let hp = self.site(&format!("{head}.prop_in"), xp, false);
        let hr = self.site(&format!("{head}.ref_in"), xr, false);
        let mut h = self.g.add(hp, hr);
        for l in 0..layers {
            let site = format!("{head}.hidden.{l}");
            let mut pre = self.linear(&site, h);
            if l == 0 && self.has(&format!("{head}.prefix.virtual")) {
                let v = self.param(&format!("{head}.prefix.virtual"));
                let ext = self.param(&format!("{site}.prefix_ext"));
                let shift = self.g.matmul_t(v, ext);
                pre = self.g.add_bias(pre, shift);
            }
            let act = self.g.gelu(pre);
            h = self.adapter(&site, act);
            self.g.label(format!("{site}.out"), h);
        }
        self.site(&format!("{head}.out"), h, false)
    }

    fn transformer(&mut self, head: &str, prop_rows: Tensor, ref_rows: Tensor, batch: usize) -> NodeId {
        let c = self.p.config.clone();
        let steps = c.steps();
        let seq = 2 * steps;
        let xp = self.g.input(prop_rows);
        let xr = self.g.input(ref_rows);
        let tp = self.site(&format!("{head}.prop_in"), xp, false);
        let tr = self.site(&format!("{head}.ref_in"), xr, false);
        let tokens = self.g.interleave(tp, tr, steps);
        let pos = self.param(&format!("{head}.pos"));
        let modality = self.param(&format!("{head}.modality"));
        let mut x = self.g.token_embed(tokens, pos, modality);
        for i in 0..c.tf_blocks {
            let b = format!("{head}.blocks.{i}");
            let n1 = self.layer_norm(&format!("{b}.ln1"), x);
            let q = self.linear(&format!("{b}.q"), n1);
            let k = self.linear(&format!("{b}.k"), n1);
            let v = self.linear(&format!("{b}.v"), n1);
            let prefix = if self.has(&format!("{b}.prefix_k")) {
                Some((
                    self.param(&format!("{b}.prefix_k")),
                    self.param(&format!("{b}.prefix_v")),
                    self.param(&format!("{b}.prefix_gate")),
                ))
            } else {
                None
            };
            let att = self.g.attention(q, k, v, c.tf_heads, seq, 2, prefix);
            let o = self.linear(&format!("{b}.o"), att);
            x = self.g.add(x, o);
            let n2 = self.layer_norm(&format!("{b}.ln2"), x);
            let f = self.site(&format!("{b}.ff1"), n2, true);
            let f = self.site(&format!("{b}.ff2"), f, false);
            x = self.g.add(x, f);
            self.g.label(format!("{b}.out"), x);
        }
        let x = self.layer_norm(&format!("{head}.ln_f"), x);
        // the current timestep's proprio token
        let last: Vec<usize> = (0..batch).map(|b| b * seq + seq - 2).collect();
        let last = self.g.gather_rows(x, last);
        self.site(&format!("{head}.out"), last, false)
    }
}

fn check_window(config: &NetConfig, obs: &Tensor) -> Result<()> {
    if obs.cols != config.window_width() || obs.rows == 0 {
        return Err(Error::ShapeMismatch(format!(
            "observation batch is {}x{}, expected Bx{} ((H+1)(d_p+d_r))",
            obs.rows,
            obs.cols,
            config.window_width()
        )));
    }
    if !obs.is_finite() {
        return Err(Error::NonFiniteActivation("observation".into()));
    }
    Ok(())
}

/// Split each flattened window into per-step proprio (with `extra` appended)
/// and reference parts. Returns `[B, steps * (d_p + extra)]`/`[B, steps * d_r]`
/// for the MLP, or one row per step for the transformer.
fn split(config: &NetConfig, obs: &Tensor, extra: Option<&Tensor>, per_step_rows: bool) -> (Tensor, Tensor) {
    let (dp, dr, steps) = (config.d_p, config.d_r, config.steps());
    let de = extra.map_or(0, |e| e.cols);
    let b = obs.rows;
    let mut prop = Vec::with_capacity(b * steps * (dp + de));
    let mut refs = Vec::with_capacity(b * steps * dr);
    for r in 0..b {
        let row = obs.row(r);
        for s in 0..steps {
            let base = s * (dp + dr);
            prop.extend_from_slice(&row[base..base + dp]);
            if let Some(e) = extra {
                prop.extend_from_slice(e.row(r));
            }
            refs.extend_from_slice(&row[base + dp..base + dp + dr]);
        }
    }
    if per_step_rows {
        (Tensor::from_vec(b * steps, dp + de, prop), Tensor::from_vec(b * steps, dr, refs))
    } else {
        (Tensor::from_vec(b, steps * (dp + de), prop), Tensor::from_vec(b, steps * dr, refs))
    }
}

fn run(params: &PolicyParams, head: &str, obs: &Tensor, extra: Option<&Tensor>) -> Result<(Tensor, ForwardCache)> {
    let config = &params.config;
    check_window(config, obs)?;
    let mut net = Net { g: Graph::new(), p: params };
    let out = match config.backbone {
        Backbone::Mlp => {
            let (p, r) = split(config, obs, extra, false);
            net.mlp(head, p, r)
        }
        Backbone::Transformer => {
            let (p, r) = split(config, obs, extra, true);
            net.transformer(head, p, r, obs.rows)
        }
    };
    if let Some(what) = net.g.non_finite() {
        return Err(Error::NonFiniteActivation(format!("{head}: {what}")));
    }
    let value = net.g.value(out).clone();
    Ok((
        value,
        ForwardCache {
            graph: net.g,
            out,
            version: params.version(),
        },
    ))
}

/// Action means `[B, T]` for a batch of flattened observation windows
/// `[B, (H+1)(d_p+d_r)]`.
pub fn actor_forward(params: &PolicyParams, obs: &Tensor) -> Result<(Tensor, ForwardCache)> {
    run(params, "actor", obs, None)
}

/// Values `[B, 1]`; `privileged` is `[B, d_priv]` and joins every timestep's
/// proprio slice.
pub fn critic_forward(params: &PolicyParams, obs: &Tensor, privileged: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let d_priv = params.config.d_priv;
    if privileged.rows != obs.rows || privileged.cols != d_priv {
        return Err(Error::ShapeMismatch(format!(
            "privileged batch is {}x{}, expected {}x{d_priv}",
            privileged.rows, privileged.cols, obs.rows
        )));
    }
    run(params, "critic", obs, Some(privileged))
}

/// Gradients of `sum(upstream * output)`; zeros on frozen tensors.
pub fn backward(params: &PolicyParams, cache: &ForwardCache, upstream: &Tensor) -> Result<Gradients> {
    if cache.version != params.version() {
        return Err(Error::StaleCache {
            cache: cache.version,
            params: params.version(),
        });
    }
    let out = cache.graph.value(cache.out);
    if upstream.shape() != out.shape() {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient is {:?}, output is {:?}",
            upstream.shape(),
            out.shape()
        )));
    }
    let mut grads = Gradients::zeros_like(params);
    grads.accumulate(params, cache.graph.backward(cache.out, upstream));
    Ok(grads)
}
