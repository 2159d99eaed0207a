use rand::Rng;
use rayon::prelude::*;

use super::config::{DrRanges, RewardWeights};
use super::env::{Env, StepOutcome, TaskSetup, Termination};
use crate::netcore::{actor_forward, critic_forward, sample_action, PolicyParams, Tensor};
use crate::{Error, Result};

/// Worker threads for rollout collection: the request, capped by
/// `A2A_THREADS` when that is set.
pub fn worker_threads(requested: Option<usize>) -> usize {
    let cap = std::env::var("A2A_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&v| v > 0);
    let want = requested.unwrap_or_else(rayon::current_num_threads);
    cap.map_or(want, |c| want.min(c)).max(1)
}

/// A vector of environments over one shared task.
pub struct EnvSet {
    pub setup: TaskSetup,
    pub dr: DrRanges,
    pub reward: RewardWeights,
    pub envs: Vec<Env>,
    pool: Option<rayon::ThreadPool>,
}

impl EnvSet {
    pub fn new(setup: TaskSetup, dr: DrRanges, reward: RewardWeights, n_envs: usize, seed: u64, threads: usize) -> Result<EnvSet> {
        let envs = (0..n_envs).map(|i| Env::new(&setup, &dr, seed, i)).collect::<Result<Vec<_>>>()?;
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(EnvSet {
            setup,
            dr,
            reward,
            envs,
            pool,
        })
    }

    pub fn n_envs(&self) -> usize {
        self.envs.len()
    }

    /// Current observation windows and privileged vectors of every env.
    pub fn observe(&self) -> (Tensor, Tensor) {
        let (w, p) = (self.setup.window_width(), self.setup.d_priv);
        let mut obs = Tensor::zeros(self.envs.len(), w);
        let mut privileged = Tensor::zeros(self.envs.len(), p);
        for (i, env) in self.envs.iter().enumerate() {
            env.observe(obs.row_mut(i));
            env.privileged(&self.setup, privileged.row_mut(i));
        }
        (obs, privileged)
    }

    /// Step every env with its action row, resetting finished episodes.
    pub fn step(&mut self, actions: &Tensor) -> Result<Vec<StepOutcome>> {
        let EnvSet {
            setup,
            dr,
            reward,
            envs,
            pool,
        } = self;
        let run = |(i, env): (usize, &mut Env)| -> Result<StepOutcome> {
            let out = env.step(setup, dr, reward, actions.row(i))?;
            if out.termination.is_some() {
                env.reset(setup, dr)?;
            }
            Ok(out)
        };
        match pool {
            Some(pool) => pool.install(|| envs.par_iter_mut().enumerate().map(run).collect()),
            None => envs.iter_mut().enumerate().map(run).collect(),
        }
    }
}

/// Transitions stored step-major: row `step * n_envs + env`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub n_envs: usize,
    pub steps: usize,
    pub obs: Tensor,
    pub privileged: Tensor,
    pub actions: Tensor,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub r_joint: Vec<f64>,
    pub r_base: Vec<f64>,
    pub r_smooth: Vec<f64>,
    pub terminations: Vec<Option<Termination>>,
    /// Critic values of the observations after the last step, per env.
    pub bootstrap: Vec<f64>,
    pub aligned: bool,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.n_envs * self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean(values: &[f64]) -> f64 {
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    }
}

/// Run the stochastic policy for `steps` control steps in every env.
/// Actions are drawn from `rng` in env order on the calling thread, so the
/// batch does not depend on the number of workers.
pub fn collect_rollouts<R: Rng>(set: &mut EnvSet, params: &PolicyParams, steps: usize, rng: &mut R) -> Result<RolloutBatch> {
    let e = set.n_envs();
    let (w, p, a) = (set.setup.window_width(), set.setup.d_priv, set.setup.action_dim);
    let total = e * steps;
    let mut batch = RolloutBatch {
        n_envs: e,
        steps,
        obs: Tensor::zeros(total, w),
        privileged: Tensor::zeros(total, p),
        actions: Tensor::zeros(total, a),
        log_probs: Vec::with_capacity(total),
        values: Vec::with_capacity(total),
        rewards: Vec::with_capacity(total),
        dones: Vec::with_capacity(total),
        r_joint: Vec::with_capacity(total),
        r_base: Vec::with_capacity(total),
        r_smooth: Vec::with_capacity(total),
        terminations: Vec::with_capacity(total),
        bootstrap: Vec::new(),
        aligned: set.setup.is_aligned(),
    };
    let log_std = params.tensor("actor.log_std").data.clone();
    for s in 0..steps {
        let (obs, privileged) = set.observe();
        let (mean, _) = actor_forward(params, &obs)?;
        let (value, _) = critic_forward(params, &obs, &privileged)?;
        let mut actions = Tensor::zeros(e, a);
        for i in 0..e {
            let (act, lp) = sample_action(mean.row(i), &log_std, rng);
            actions.row_mut(i).copy_from_slice(&act);
            batch.log_probs.push(lp);
            batch.values.push(value.at(i, 0));
        }
        let outcomes = set.step(&actions)?;
        let base = s * e;
        batch.obs.data[base * w..(base + e) * w].copy_from_slice(&obs.data);
        batch.privileged.data[base * p..(base + e) * p].copy_from_slice(&privileged.data);
        batch.actions.data[base * a..(base + e) * a].copy_from_slice(&actions.data);
        for o in outcomes {
            batch.rewards.push(o.reward.r_total);
            batch.r_joint.push(o.reward.r_joint);
            batch.r_base.push(o.reward.r_base);
            batch.r_smooth.push(o.reward.r_smooth);
            batch.dones.push(o.termination.is_some());
            batch.terminations.push(o.termination);
        }
    }
    let (obs, privileged) = set.observe();
    let (value, _) = critic_forward(params, &obs, &privileged)?;
    batch.bootstrap = value.data;
    if !batch.log_probs.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteLoss("rollout log-probabilities".into()));
    }
    Ok(batch)
}
