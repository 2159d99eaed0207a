use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Method, TrainConfig};
use super::env::TaskSetup;
use super::gae::compute_gae;
use super::ppo::ppo_update;
use super::rollout::{collect_rollouts, worker_threads, EnvSet, RolloutBatch};
use crate::align::build_alignment;
use crate::embodiment::EmbodimentSpec;
use crate::motion::{retarget_library, MotionLibrary};
use crate::netcore::{Adam, PolicyParams};
use crate::peft::{inject, AdaptedPolicy, InjectionScope};
use crate::{Error, Result};

/// The robot to train on, plus the source robot when transferring.
#[derive(Debug, Clone)]
pub struct TrainTask {
    pub target: EmbodimentSpec,
    pub source: Option<EmbodimentSpec>,
    /// In the source joint space when `source` is set, otherwise in the
    /// target's.
    pub library: MotionLibrary,
}

impl TrainTask {
    pub fn native(robot: &EmbodimentSpec, library: &MotionLibrary) -> TrainTask {
        TrainTask {
            target: robot.clone(),
            source: None,
            library: library.clone(),
        }
    }

    pub fn transfer(source: &EmbodimentSpec, target: &EmbodimentSpec, library: &MotionLibrary) -> TrainTask {
        TrainTask {
            target: target.clone(),
            source: Some(source.clone()),
            library: library.clone(),
        }
    }

    /// Environment setup for `method`: aligned methods see the target
    /// through the alignment maps, the others observe it natively on
    /// retargeted references.
    pub fn setup(&self, method: Method, history: usize) -> Result<TaskSetup> {
        match &self.source {
            None if method.aligned() => Err(Error::config(
                "source",
                format!("{} needs a source embodiment to align against", method.name()),
            )),
            None => TaskSetup::native(&self.target, &self.library, history),
            Some(source) => {
                let maps = build_alignment(source, &self.target)?;
                if method.aligned() {
                    TaskSetup::aligned(source, &self.target, &maps, &self.library, history)
                } else {
                    TaskSetup::native(&self.target, &retarget_library(&self.library, &maps)?, history)
                }
            }
        }
    }
}

/// One row of the training curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub env_steps: usize,
    pub wall_time_s: f64,
    pub r_total: f64,
    pub r_joint: f64,
    pub r_base: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    /// Injection metadata for Any2Any runs (its `params` are the final ones).
    pub adapted: Option<AdaptedPolicy>,
    pub curves: Vec<CurveRow>,
}

impl TrainOutcome {
    /// Write the final checkpoint; adapted runs keep their PEFT header.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        match &self.adapted {
            Some(a) => a.save(path),
            None => self.params.save(path, None),
        }
    }
}

/// Initial policy for `method` on `setup`.
pub fn prepare_policy(
    config: &TrainConfig,
    setup: &TaskSetup,
    checkpoint: Option<&PolicyParams>,
) -> Result<(PolicyParams, Option<AdaptedPolicy>)> {
    let method = config.method;
    let net = config.net.config(setup.d_p, setup.d_r, setup.d_priv, setup.action_dim);
    let Some(source) = checkpoint else {
        if method.needs_checkpoint() {
            return Err(Error::config("source_checkpoint", format!("{} needs a source checkpoint", method.name())));
        }
        return Ok((PolicyParams::init(&net, config.seed)?, None));
    };
    if !method.needs_checkpoint() {
        return Err(Error::config("source_checkpoint", "Scratch trains from random weights; drop the checkpoint"));
    }
    let c = &source.config;
    if (c.d_p, c.d_r, c.d_priv, c.action_dim) != (setup.d_p, setup.d_r, setup.d_priv, setup.action_dim) {
        return Err(Error::config(
            "source_checkpoint",
            format!(
                "checkpoint expects (d_p, d_r, d_priv, T) = ({}, {}, {}, {}), task provides ({}, {}, {}, {})",
                c.d_p, c.d_r, c.d_priv, c.action_dim, setup.d_p, setup.d_r, setup.d_priv, setup.action_dim
            ),
        ));
    }
    if c.h != setup.history {
        return Err(Error::config("net.history", format!("checkpoint was trained with H = {}", c.h)));
    }
    match method.peft() {
        None => {
            let mut p = source.clone();
            p.unfreeze_all();
            Ok((p, None))
        }
        Some(peft) => {
            let scope = InjectionScope::preset(&config.scope)?;
            let adapted = inject(source, peft, &scope, &config.peft, config.seed)?;
            Ok((adapted.params.clone(), Some(adapted)))
        }
    }
}

/// Collect, estimate advantages and update until the step budget is spent.
/// `on_row` sees every curve row as it is produced.
pub fn run_training(
    config: &TrainConfig,
    setup: TaskSetup,
    mut params: PolicyParams,
    mut on_row: impl FnMut(&CurveRow),
) -> Result<(PolicyParams, Vec<CurveRow>)> {
    let threads = if config.deterministic { 1 } else { worker_threads(config.threads) };
    let mut envs = EnvSet::new(setup, config.dr.clone(), config.reward.clone(), config.n_envs, config.seed, threads)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.lr);
    let start = Instant::now();
    let mut curves = Vec::with_capacity(config.iterations());
    for it in 0..config.iterations() {
        let mut batch = collect_rollouts(&mut envs, &params, config.steps_per_env, &mut rng)?;
        let r_total = RolloutBatch::mean(&batch.rewards);
        let scale = config.learning_reward_scale();
        batch.rewards.iter_mut().for_each(|r| *r *= scale);
        let (adv, returns) = compute_gae(&batch, config.gamma, config.lam);
        let stats = ppo_update(&mut params, &mut adam, &batch, &adv, &returns, config, &mut rng)?;
        let row = CurveRow {
            iteration: it + 1,
            env_steps: (it + 1) * config.batch_size(),
            wall_time_s: if config.deterministic { 0.0 } else { start.elapsed().as_secs_f64() },
            r_total,
            r_joint: RolloutBatch::mean(&batch.r_joint),
            r_base: RolloutBatch::mean(&batch.r_base),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            kl: stats.kl_estimate,
        };
        on_row(&row);
        curves.push(row);
    }
    Ok((params, curves))
}

/// Full training run for `config.method` on `task`.
pub fn train(config: &TrainConfig, checkpoint: Option<&PolicyParams>, task: &TrainTask) -> Result<TrainOutcome> {
    train_with_progress(config, checkpoint, task, |_| {})
}

pub fn train_with_progress(
    config: &TrainConfig,
    checkpoint: Option<&PolicyParams>,
    task: &TrainTask,
    on_row: impl FnMut(&CurveRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    let setup = task.setup(config.method, config.net.history)?;
    let (params, adapted) = prepare_policy(config, &setup, checkpoint)?;
    let (params, curves) = run_training(config, setup, params, on_row)?;
    let adapted = adapted.map(|a| AdaptedPolicy {
        params: params.clone(),
        ..a
    });
    Ok(TrainOutcome {
        params,
        adapted,
        curves,
    })
}

pub fn write_curves_csv(rows: &[CurveRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curves_csv(path: impl AsRef<Path>) -> Result<Vec<CurveRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::csv(path, e)))
        .collect()
}
