use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::rollout::RolloutBatch;
use crate::netcore::{actor_forward, backward, critic_forward, entropy, log_prob, Adam, Gradients, PolicyParams, Tensor};
use crate::{Error, Result};

/// Coefficients of the clipped PPO objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl From<&TrainConfig> for LossCoefs {
    fn from(c: &TrainConfig) -> Self {
        LossCoefs {
            clip_eps: c.clip_eps,
            value_coef: c.value_coef,
            entropy_coef: c.entropy_coef,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl_estimate: f64,
    pub total_loss: f64,
}

/// Loss and exact gradients on the transitions `idx` of `batch`.
pub fn minibatch_loss(
    params: &PolicyParams,
    batch: &RolloutBatch,
    idx: &[usize],
    advantages: &[f64],
    returns: &[f64],
    coefs: &LossCoefs,
) -> Result<(PpoStats, Gradients)> {
    let b = idx.len();
    let bf = b as f64;
    let obs = batch.obs.gather_rows(idx);
    let privileged = batch.privileged.gather_rows(idx);
    let (mean, actor_cache) = actor_forward(params, &obs)?;
    let (value, critic_cache) = critic_forward(params, &obs, &privileged)?;
    let log_std = &params.tensor("actor.log_std").data;
    let a_dim = log_std.len();

    let mut d_mean = Tensor::zeros(b, a_dim);
    let mut d_log_std = vec![-coefs.entropy_coef; a_dim];
    let mut d_value = Tensor::zeros(b, 1);
    let (mut policy_loss, mut value_loss, mut kl) = (0.0, 0.0, 0.0);
    for (r, &i) in idx.iter().enumerate() {
        let action = batch.actions.row(i);
        let mu = mean.row(r);
        let lp = log_prob(action, mu, log_std);
        let ratio = (lp - batch.log_probs[i]).exp();
        let adv = advantages[i];
        let clipped = ratio.clamp(1.0 - coefs.clip_eps, 1.0 + coefs.clip_eps);
        policy_loss -= (ratio * adv).min(clipped * adv);
        // d/d(log pi) of -min(r A, clip(r) A); zero once the clipped branch binds.
        let active = ratio * adv <= clipped * adv;
        let coef = if active { -adv * ratio / bf } else { 0.0 };
        if coef != 0.0 {
            for j in 0..a_dim {
                let sigma = log_std[j].exp();
                let z = (action[j] - mu[j]) / sigma;
                *d_mean.at_mut(r, j) = coef * z / sigma;
                d_log_std[j] += coef * (z * z - 1.0);
            }
        }
        kl += (ratio - 1.0) - (lp - batch.log_probs[i]);
        let err = value.at(r, 0) - returns[i];
        value_loss += err * err;
        *d_value.at_mut(r, 0) = coefs.value_coef * 2.0 * err / bf;
    }
    policy_loss /= bf;
    value_loss /= bf;
    let ent = entropy(log_std);
    let total = policy_loss + coefs.value_coef * value_loss - coefs.entropy_coef * ent;
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "policy {policy_loss}, value {value_loss}, entropy {ent} over {b} transitions"
        )));
    }
    let mut grads = backward(params, &actor_cache, &d_mean)?;
    grads.add(&backward(params, &critic_cache, &d_value)?);
    let mut extra = BTreeMap::new();
    extra.insert("actor.log_std".to_string(), Tensor::row_vector(d_log_std));
    grads.accumulate(params, extra);
    Ok((
        PpoStats {
            policy_loss,
            value_loss,
            entropy: ent,
            kl_estimate: kl / bf,
            total_loss: total,
        },
        grads,
    ))
}

/// Clipped-surrogate epochs over shuffled minibatches; returns the averages
/// over all minibatch updates.
pub fn ppo_update<R: Rng>(
    params: &mut PolicyParams,
    adam: &mut Adam,
    batch: &RolloutBatch,
    advantages: &[f64],
    returns: &[f64],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    let coefs = LossCoefs::from(config);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mb = batch.len().div_ceil(config.minibatches);
    let mut sum = PpoStats::default();
    let mut updates = 0;
    for _ in 0..config.epochs_per_iter {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            let (stats, grads) = minibatch_loss(params, batch, chunk, advantages, returns, &coefs)?;
            adam.step(params, &grads);
            sum.policy_loss += stats.policy_loss;
            sum.value_loss += stats.value_loss;
            sum.entropy += stats.entropy;
            sum.kl_estimate += stats.kl_estimate;
            sum.total_loss += stats.total_loss;
            updates += 1;
        }
    }
    let k = updates.max(1) as f64;
    Ok(PpoStats {
        policy_loss: sum.policy_loss / k,
        value_loss: sum.value_loss / k,
        entropy: sum.entropy / k,
        kl_estimate: sum.kl_estimate / k,
        total_loss: sum.total_loss / k,
    })
}
