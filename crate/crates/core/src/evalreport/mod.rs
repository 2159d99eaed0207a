//! Deployment-style evaluation: run a controller through whole clips with
//! domain randomization and exploration noise off, then summarize tracking
//! accuracy and action smoothness and write CSV/SVG reports.

mod report;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embodiment::{keypoints, BaseMode, EmbodimentSpec, Simulator};
use crate::motion::MotionFrame;
use crate::netcore::{actor_forward, sample_action, PolicyParams, Tensor};
use crate::rl::{DrRanges, Env, RewardWeights, TaskSetup, Termination, ACTION_SCALE};
use crate::{Error, Result, GRAVITY};

pub use report::{read_metrics_csv, write_curve_plot, write_report, METRIC_COLUMNS};

/// What a controller sees at each control step.
#[derive(Debug, Clone, Copy)]
pub struct EvalStep<'a> {
    /// Flattened observation window in network order.
    pub obs: &'a [f64],
    /// The frame the robot should reach next, in the policy's joint space.
    pub next_reference: &'a MotionFrame,
}

/// Anything that maps observations to actions in the policy's joint space.
pub trait Controller {
    fn act(&mut self, step: &EvalStep<'_>, deterministic: bool, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;
}

/// The trained actor: its mean action, or a Gaussian sample.
impl Controller for PolicyParams {
    fn act(&mut self, step: &EvalStep<'_>, deterministic: bool, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let obs = Tensor::from_vec(1, step.obs.len(), step.obs.to_vec());
        let (mean, _) = actor_forward(self, &obs)?;
        if deterministic {
            Ok(mean.data)
        } else {
            Ok(sample_action(&mean.data, &self.tensor("actor.log_std").data, rng).0)
        }
    }
}

/// Commands the next reference pose directly.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceOracle;

impl Controller for ReferenceOracle {
    fn act(&mut self, step: &EvalStep<'_>, _: bool, _: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(step.next_reference.q_ref.iter().map(|q| q / ACTION_SCALE).collect())
    }
}

/// Holds every joint at zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Controller for ZeroPolicy {
    fn act(&mut self, step: &EvalStep<'_>, _: bool, _: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(vec![0.0; step.next_reference.q_ref.len()])
    }
}

/// One evaluated clip. Every per-frame sequence has one entry per control
/// step taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub clip_id: String,
    pub success: bool,
    /// Base origin then every link tip, world frame, m.
    pub keypoints: Vec<Vec<[f64; 2]>>,
    pub ref_keypoints: Vec<Vec<[f64; 2]>>,
    /// (x, z, pitch)
    pub base_poses: Vec<[f64; 3]>,
    pub ref_base_poses: Vec<[f64; 3]>,
    /// PD targets applied, robot joint order, rad.
    pub actions: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl EpisodeResult {
    pub fn n_frames(&self) -> usize {
        self.keypoints.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub n_episodes: usize,
    pub success_rate: f64,
    /// m
    pub mpjpe: f64,
    /// m
    pub base_pos_err: f64,
    /// rad
    pub base_ori_err: f64,
    /// rad per frame
    pub mean_action_vel: f64,
    /// rad per frame²
    pub mean_action_acc: f64,
}

fn world_keypoints(sim: &Simulator, q_act: &[f64], base: [f64; 3]) -> Vec<[f64; 2]> {
    let mut q = Vec::with_capacity(sim.model.dof());
    if sim.model.floating {
        q.extend_from_slice(&base);
    }
    q.extend(sim.to_serial(q_act));
    keypoints(&sim.model, &q)
}

/// Run `controller` from the first frame of `clip` (an index into the
/// setup's library) until the episode ends.
pub fn rollout_eval(
    controller: &mut impl Controller,
    setup: &TaskSetup,
    clip: usize,
    deterministic: bool,
    seed: u64,
) -> Result<EpisodeResult> {
    let dr = DrRanges::disabled();
    let weights = RewardWeights::default();
    let mut env = Env::new(setup, &dr, seed, 0)?;
    env.reset_to(setup, &dr, clip, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floating = setup.robot.base_mode == BaseMode::FloatingPlanar;
    let mut obs = vec![0.0; setup.window_width()];
    let mut out = EpisodeResult {
        clip_id: setup.track_clip(clip).id.clone(),
        success: false,
        keypoints: Vec::new(),
        ref_keypoints: Vec::new(),
        base_poses: Vec::new(),
        ref_base_poses: Vec::new(),
        actions: Vec::new(),
        termination: Termination::ClipComplete,
    };
    loop {
        env.observe(&mut obs);
        let (c, cursor) = env.cursor();
        let next_reference = &setup.obs_library.clips[c].frames[cursor + 1];
        let action = controller.act(&EvalStep { obs: &obs, next_reference }, deterministic, &mut rng)?;
        let step = env.step(setup, &dr, &weights, &action)?;

        let state = env.state();
        let reference = env.reference(setup);
        let ref_base = if floating { reference.base_ref } else { state.base_pose };
        let sim = env.simulator();
        out.keypoints.push(world_keypoints(sim, &state.q, state.base_pose));
        out.ref_keypoints.push(world_keypoints(sim, &reference.q_ref, ref_base));
        out.base_poses.push(state.base_pose);
        out.ref_base_poses.push(ref_base);
        out.actions.push(state.last_action.clone());
        if let Some(t) = step.termination {
            out.termination = t;
            out.success = t == Termination::ClipComplete;
            return Ok(out);
        }
    }
}

/// Evaluate every clip of the setup's library, in parallel; clip `i` uses
/// seed `seed + i`, so results do not depend on the thread count.
pub fn evaluate_library<C>(controller: &C, setup: &TaskSetup, deterministic: bool, seed: u64) -> Result<Vec<EpisodeResult>>
where
    C: Controller + Clone + Send + Sync,
{
    (0..setup.track_library.clips.len())
        .into_par_iter()
        .map(|i| rollout_eval(&mut controller.clone(), setup, i, deterministic, seed + i as u64))
        .collect()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Pooled averages over every frame (and keypoint) of every episode.
pub fn compute_metrics(results: &[EpisodeResult]) -> Result<MetricsRow> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    let (mut kp_sum, mut kp_n) = (0.0, 0);
    let (mut pos_sum, mut ori_sum, mut frames) = (0.0, 0.0, 0);
    let (mut vel_sum, mut vel_n, mut acc_sum, mut acc_n) = (0.0, 0, 0.0, 0);
    for r in results {
        for (actual, reference) in r.keypoints.iter().zip(&r.ref_keypoints) {
            for (a, b) in actual.iter().zip(reference) {
                kp_sum += dist(*a, *b);
                kp_n += 1;
            }
        }
        for (a, b) in r.base_poses.iter().zip(&r.ref_base_poses) {
            pos_sum += dist([a[0], a[1]], [b[0], b[1]]);
            ori_sum += (a[2] - b[2]).abs();
            frames += 1;
        }
        for w in r.actions.windows(2) {
            vel_sum += norm(w[1].iter().zip(&w[0]).map(|(x, y)| x - y));
            vel_n += 1;
        }
        for w in r.actions.windows(3) {
            acc_sum += norm((0..w[0].len()).map(|k| w[2][k] - 2.0 * w[1][k] + w[0][k]));
            acc_n += 1;
        }
    }
    let successes = results.iter().filter(|r| r.success).count();
    Ok(MetricsRow {
        n_episodes: results.len(),
        success_rate: successes as f64 / results.len() as f64,
        mpjpe: mean(kp_sum, kp_n),
        base_pos_err: mean(pos_sum, frames),
        base_ori_err: mean(ori_sum, frames),
        mean_action_vel: mean(vel_sum, vel_n),
        mean_action_acc: mean(acc_sum, acc_n),
    })
}

/// Worst keypoint displacement a fixed-base robot can show when every PD
/// loop holds its target against gravity alone: joint `j` sags at most
/// `G_j / kp_j`, where `G_j` bounds the gravity torque of everything
/// distal to it, and the sags add up along each chain.
pub fn pd_steady_state_bound(spec: &EmbodimentSpec) -> f64 {
    let n = spec.n_joints;
    let parent: Vec<Option<usize>> = (0..n).map(|j| spec.parent(j)).collect();
    // path length from joint `a`'s axis to joint `b`'s axis, `a` an ancestor of `b`
    let reach = |a: usize, b: usize| {
        let mut len = 0.0;
        let mut k = b;
        while k != a {
            let p = parent[k].expect("a is an ancestor of b");
            len += spec.links[p].length;
            k = p;
        }
        len
    };
    let ancestors = |mut k: usize| {
        let mut out = vec![k];
        while let Some(p) = parent[k] {
            out.push(p);
            k = p;
        }
        out
    };
    let mut sag = vec![0.0; n];
    for k in 0..n {
        for j in ancestors(k) {
            sag[j] += GRAVITY * spec.links[k].mass * (reach(j, k) + spec.links[k].com_offset);
        }
    }
    for (j, s) in sag.iter_mut().enumerate() {
        *s /= spec.pd_gains[j].kp;
    }
    (0..n)
        .map(|tip| {
            ancestors(tip)
                .into_iter()
                .map(|j| sag[j] * (reach(j, tip) + spec.links[tip].length))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}
