//! Central finite-difference audit of reverse-mode gradients.

use super::model::{actor_forward, backward, critic_forward};
use super::params::PolicyParams;
use super::tensor::Tensor;
use crate::Result;

/// Relative errors are taken against `max(|analytic|, |numeric|, FLOOR)`.
pub const FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Actor,
    Critic,
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst: String,
    pub entries: usize,
    pub tensors: usize,
}

fn objective(params: &PolicyParams, head: Head, obs: &Tensor, privileged: &Tensor, upstream: &Tensor) -> Result<f64> {
    let out = match head {
        Head::Actor => actor_forward(params, obs)?.0,
        Head::Critic => critic_forward(params, obs, privileged)?.0,
    };
    Ok(out.data.iter().zip(&upstream.data).map(|(a, b)| a * b).sum())
}

/// Compare `backward` against central differences of `sum(upstream * out)`
/// for up to `per_tensor` evenly spread entries of every trainable tensor
/// used by `head` whose name passes `filter`.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    params: &PolicyParams,
    head: Head,
    obs: &Tensor,
    privileged: &Tensor,
    upstream: &Tensor,
    eps: f64,
    per_tensor: usize,
    filter: impl Fn(&str) -> bool,
) -> Result<GradCheck> {
    let (_, cache) = match head {
        Head::Actor => actor_forward(params, obs)?,
        Head::Critic => critic_forward(params, obs, privileged)?,
    };
    let grads = backward(params, &cache, upstream)?;
    let prefix = match head {
        Head::Actor => "actor.",
        Head::Critic => "critic.",
    };
    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: String::new(),
        entries: 0,
        tensors: 0,
    };
    let mut probe = params.clone();
    for name in params.names() {
        if params.is_frozen(&name) || !name.starts_with(prefix) || name.ends_with("log_std") || !filter(&name) {
            continue;
        }
        report.tensors += 1;
        let len = params.tensor(&name).len();
        let stride = (len / per_tensor.max(1)).max(1);
        for i in (0..len).step_by(stride).take(per_tensor) {
            let orig = params.tensor(&name).data[i];
            probe.value_mut(&name).expect("known tensor").data[i] = orig + eps;
            let plus = objective(&probe, head, obs, privileged, upstream)?;
            probe.value_mut(&name).expect("known tensor").data[i] = orig - eps;
            let minus = objective(&probe, head, obs, privileged, upstream)?;
            probe.value_mut(&name).expect("known tensor").data[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(&name).expect("gradient for every tensor").data[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            report.entries += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = format!("{name}[{i}] analytic {analytic:e} numeric {numeric:e}");
            }
        }
    }
    Ok(report)
}
