use serde::{Deserialize, Serialize};

use crate::netcore::{Backbone, NetConfig};
use crate::peft::{Method as PeftMethod, PeftHyper};
use crate::{Error, Result};

/// How the target policy is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Fresh policy trained on the target alone.
    Scratch,
    /// Source weights, all trainable, raw target observations.
    #[serde(rename = "FullFT_NoAlign")]
    FullFtNoAlign,
    /// Source weights, all trainable, aligned observations and actions.
    #[serde(rename = "FullFT_Align")]
    FullFtAlign,
    #[serde(rename = "Any2Any_LoRA")]
    Any2AnyLora,
    #[serde(rename = "Any2Any_Adapter")]
    Any2AnyAdapter,
    #[serde(rename = "Any2Any_Prefix")]
    Any2AnyPrefix,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Scratch,
        Method::FullFtNoAlign,
        Method::FullFtAlign,
        Method::Any2AnyLora,
        Method::Any2AnyAdapter,
        Method::Any2AnyPrefix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Scratch => "Scratch",
            Method::FullFtNoAlign => "FullFT_NoAlign",
            Method::FullFtAlign => "FullFT_Align",
            Method::Any2AnyLora => "Any2Any_LoRA",
            Method::Any2AnyAdapter => "Any2Any_Adapter",
            Method::Any2AnyPrefix => "Any2Any_Prefix",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(name))
    }

    pub fn needs_checkpoint(self) -> bool {
        self != Method::Scratch
    }

    /// Observations go through the alignment maps.
    pub fn aligned(self) -> bool {
        !matches!(self, Method::Scratch | Method::FullFtNoAlign)
    }

    pub fn peft(self) -> Option<PeftMethod> {
        match self {
            Method::Any2AnyLora => Some(PeftMethod::LoRA),
            Method::Any2AnyAdapter => Some(PeftMethod::Adapter),
            Method::Any2AnyPrefix => Some(PeftMethod::Prefix),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub w_jp: f64,
    pub w_bp: f64,
    pub w_smooth: f64,
    /// rad
    pub sigma_jp: f64,
    pub sigma_bp: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_jp: 1.0,
            w_bp: 0.5,
            w_smooth: 0.02,
            sigma_jp: 0.5,
            sigma_bp: 0.3,
        }
    }
}

/// Per-episode domain randomization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrRanges {
    pub enabled: bool,
    /// Per-link mass multiplier range.
    pub mass_scale: (f64, f64),
    /// Multiplier on every joint's kp.
    pub kp_scale: (f64, f64),
    /// Std of the per-step joint torque noise, N·m.
    pub torque_noise_std: f64,
}

impl Default for DrRanges {
    fn default() -> Self {
        DrRanges {
            enabled: true,
            mass_scale: (0.8, 1.2),
            kp_scale: (0.9, 1.1),
            torque_noise_std: 0.5,
        }
    }
}

impl DrRanges {
    pub fn disabled() -> Self {
        DrRanges {
            enabled: false,
            ..Default::default()
        }
    }
}

/// Network sizes; the input and output widths come from the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetShape {
    pub backbone: Backbone,
    pub history: usize,
    pub mlp_layers: usize,
    pub mlp_hidden: usize,
    pub tf_dim: usize,
    pub tf_blocks: usize,
    pub tf_heads: usize,
}

impl Default for NetShape {
    fn default() -> Self {
        let c = NetConfig::mlp(1, 1, 1, 1);
        NetShape {
            backbone: Backbone::Mlp,
            history: c.h,
            mlp_layers: c.mlp_layers,
            mlp_hidden: c.mlp_hidden,
            tf_dim: c.tf_dim,
            tf_blocks: c.tf_blocks,
            tf_heads: c.tf_heads,
        }
    }
}

impl NetShape {
    /// Two hidden layers of `hidden` units, one step of history.
    pub fn small_mlp(hidden: usize) -> Self {
        NetShape {
            history: 1,
            mlp_layers: 2,
            mlp_hidden: hidden,
            ..Default::default()
        }
    }

    pub fn config(&self, d_p: usize, d_r: usize, d_priv: usize, action_dim: usize) -> NetConfig {
        NetConfig {
            backbone: self.backbone,
            h: self.history,
            d_p,
            d_r,
            d_priv,
            mlp_layers: self.mlp_layers,
            mlp_hidden: self.mlp_hidden,
            tf_dim: self.tf_dim,
            tf_blocks: self.tf_blocks,
            tf_heads: self.tf_heads,
            action_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip_eps: f64,
    pub lr: f64,
    pub epochs_per_iter: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub n_envs: usize,
    pub steps_per_env: usize,
    pub total_env_steps: usize,
    pub seed: u64,
    pub method: Method,
    /// LoRA/adapter/prefix injection preset, `S1`..`S9`.
    pub scope: String,
    pub peft: PeftHyper,
    pub reward: RewardWeights,
    pub dr: DrRanges,
    pub net: NetShape,
    /// Rollout worker threads; `None` uses rayon's default (capped by
    /// `A2A_THREADS`). `Some(1)` is the bit-exact reference mode.
    pub threads: Option<usize>,
    /// Write 0 instead of measured wall time so curves are reproducible.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            lam: 0.95,
            clip_eps: 0.2,
            lr: 3e-4,
            epochs_per_iter: 5,
            minibatches: 4,
            entropy_coef: 0.005,
            value_coef: 1.0,
            n_envs: 64,
            steps_per_env: 64,
            total_env_steps: 64 * 64 * 50,
            seed: 0,
            method: Method::Scratch,
            scope: "S7".into(),
            peft: PeftHyper::default(),
            reward: RewardWeights::default(),
            dr: DrRanges::default(),
            net: NetShape::default(),
            threads: None,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    /// Settings the experiment drivers use: a short discount horizon, a faster
    /// learning rate and a small single-step MLP, which reach good tracking
    /// within a few hundred thousand env steps on one core.
    pub fn tracking() -> Self {
        TrainConfig {
            gamma: 0.8,
            lam: 0.9,
            lr: 2e-3,
            n_envs: 32,
            steps_per_env: 64,
            total_env_steps: 400_000,
            net: NetShape::small_mlp(64),
            ..Default::default()
        }
    }

    /// Rewards are multiplied by `1 - gamma` (at least 0.01) before GAE so
    /// value targets stay O(1) whatever the horizon.
    pub fn learning_reward_scale(&self) -> f64 {
        (1.0 - self.gamma).max(0.01)
    }

    pub fn batch_size(&self) -> usize {
        self.n_envs * self.steps_per_env
    }

    /// Whole iterations needed to reach `total_env_steps`.
    pub fn iterations(&self) -> usize {
        self.total_env_steps.div_ceil(self.batch_size().max(1))
    }

    /// Field-path errors for anything out of range.
    pub fn validate(&self) -> Result<()> {
        let fail = |path: &str, msg: &str| Err(Error::config(path, msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma", "must lie in (0, 1]");
        }
        if !(self.lam > 0.0 && self.lam <= 1.0) {
            return fail("lam", "must lie in (0, 1]");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps <= 0.5) {
            return fail("clip_eps", "must lie in (0, 0.5]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr", "must be positive");
        }
        for (path, v) in [
            ("epochs_per_iter", self.epochs_per_iter),
            ("minibatches", self.minibatches),
            ("n_envs", self.n_envs),
            ("steps_per_env", self.steps_per_env),
            ("total_env_steps", self.total_env_steps),
        ] {
            if v == 0 {
                return fail(path, "must be positive");
            }
        }
        if self.minibatches > self.batch_size() {
            return fail("minibatches", "more minibatches than transitions per iteration");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return fail("entropy_coef", "loss coefficients must be non-negative");
        }
        let r = &self.reward;
        if !(r.sigma_jp > 0.0 && r.sigma_bp > 0.0) {
            return fail("reward.sigma_jp", "reward widths must be positive");
        }
        let d = &self.dr;
        let range_ok = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
        if !range_ok(d.mass_scale) {
            return fail("dr.mass_scale", "must be a positive interval");
        }
        if !range_ok(d.kp_scale) {
            return fail("dr.kp_scale", "must be a positive interval");
        }
        if !(d.torque_noise_std >= 0.0) {
            return fail("dr.torque_noise_std", "must be non-negative");
        }
        if self.method.peft().is_some() {
            crate::peft::InjectionScope::preset(&self.scope).map_err(|_| Error::config("scope", "expected a preset S1..S9"))?;
        }
        if self.threads == Some(0) {
            return fail("threads", "must be at least 1");
        }
        Ok(())
    }
}
