//! PPO on tracking rewards over vectorized, domain-randomized environments,
//! with the transfer methods and ablation presets.
//!
//! A [`TaskSetup`] fixes which robot is controlled and how the policy sees
//! it: natively, or through the alignment maps as if it were the source
//! robot. [`train`] prepares the initial policy for a [`Method`] (fresh,
//! fully fine-tuned, or frozen with injected PEFT factors) and runs
//! collect / GAE / clipped-surrogate updates until the step budget is spent.

mod config;
mod env;
mod gae;
mod ppo;
mod presets;
mod reward;
mod rollout;
mod train;

pub use config::{DrRanges, Method, NetShape, RewardWeights, TrainConfig};
pub use env::{Env, StepOutcome, TaskSetup, Termination, ACTION_SCALE, MAX_MEAN_JOINT_ERROR, MAX_PITCH};
pub use gae::{compute_gae, gae_raw, normalize};
pub use ppo::{minibatch_loss, ppo_update, LossCoefs, PpoStats};
pub use presets::{
    plan_ablation, transfer_pair, transfer_source, transfer_target, Ablation, PlannedRun, DATA_BUDGETS,
    SAMPLING_BATCHES,
};
pub use reward::{tracking_reward, RewardTerms};
pub use rollout::{collect_rollouts, worker_threads, EnvSet, RolloutBatch};
pub use train::{
    prepare_policy, read_curves_csv, run_training, train, train_with_progress, write_curves_csv, CurveRow,
    TrainOutcome, TrainTask,
};

#[cfg(test)]
mod tests;
