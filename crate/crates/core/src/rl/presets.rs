use std::f64::consts::FRAC_PI_6;

use serde::{Deserialize, Serialize};

use super::config::{Method, NetShape, TrainConfig};
use crate::embodiment::{generate_embodiment, BaseMode, EmbodimentSpec, FamilyParams, HipCoupling};
use crate::netcore::Backbone;
use crate::peft::PRESETS;
use crate::{Error, Result};

/// Motion frame budgets of the data-scale sweep.
pub const DATA_BUDGETS: [usize; 3] = [4_000, 40_000, 400_000];
/// `(n_envs, steps_per_env)` of the sampling sweep: 1k, 4k and 16k
/// transitions per iteration.
pub const SAMPLING_BATCHES: [(usize, usize); 3] = [(16, 64), (64, 64), (256, 64)];

/// The 8-joint, two-legged fixed-base robot used as the transfer source.
pub fn transfer_source(seed: u64) -> Result<EmbodimentSpec> {
    let family = FamilyParams {
        n_joints_range: (8, 8),
        leg_pairs: 1,
        base_mode: BaseMode::Fixed,
        ..Default::default()
    };
    generate_embodiment(seed, &family)
}

/// The source with its legs interleaved in declaration order, 30% heavier
/// links and inclined hips (`alpha = pi/6`).
pub fn transfer_target(source: &EmbodimentSpec) -> Result<EmbodimentSpec> {
    let n = source.n_joints;
    let half = n / 2;
    let order: Vec<usize> = (0..half).flat_map(|k| [k, k + half]).collect();
    let mut target = source.reordered(&order)?.with_mass_scale(1.3);
    let idx = |name: &str| {
        target
            .joint_index(name)
            .ok_or_else(|| Error::InvalidSpec(format!("{} has no joint `{name}`", source.id)))
    };
    target.hip_coupling = Some(HipCoupling {
        left_pair: (idx("L_hip_pitch")?, idx("L_hip_roll")?),
        right_pair: (idx("R_hip_pitch")?, idx("R_hip_roll")?),
        alpha: FRAC_PI_6,
    });
    target.id = format!("{}-target", source.id);
    target.validate()?;
    Ok(target)
}

pub fn transfer_pair(seed: u64) -> Result<(EmbodimentSpec, EmbodimentSpec)> {
    let source = transfer_source(seed)?;
    let target = transfer_target(&source)?;
    Ok((source, target))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    Alignment,
    Peft,
    Scope,
    DataScale,
    Sampling,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Alignment,
        Ablation::Peft,
        Ablation::Scope,
        Ablation::DataScale,
        Ablation::Sampling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Alignment => "alignment",
            Ablation::Peft => "peft",
            Ablation::Scope => "scope",
            Ablation::DataScale => "data-scale",
            Ablation::Sampling => "sampling",
        }
    }

    pub fn parse(name: &str) -> Option<Ablation> {
        Ablation::ALL.into_iter().find(|a| a.name() == name)
    }
}

/// One run of an ablation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedRun {
    /// Used as the curve file stem.
    pub name: String,
    pub config: TrainConfig,
    /// Motion frames available to the run (data-scale sweep only).
    pub frame_budget: Option<usize>,
}

fn run(name: impl Into<String>, config: TrainConfig) -> PlannedRun {
    PlannedRun {
        name: name.into(),
        config,
        frame_budget: None,
    }
}

/// Expand an ablation preset into its run matrix around `base`.
pub fn plan_ablation(ablation: Ablation, base: &TrainConfig) -> Vec<PlannedRun> {
    let with = |method: Method| TrainConfig {
        method,
        ..base.clone()
    };
    match ablation {
        Ablation::Alignment => [Method::Scratch, Method::FullFtNoAlign, Method::FullFtAlign, Method::Any2AnyLora]
            .into_iter()
            .map(|m| run(m.name(), with(m)))
            .collect(),
        Ablation::Peft => {
            let mut out = Vec::new();
            for backbone in [Backbone::Mlp, Backbone::Transformer] {
                for m in [Method::Any2AnyLora, Method::Any2AnyAdapter, Method::Any2AnyPrefix] {
                    let mut c = with(m);
                    c.net = NetShape {
                        backbone,
                        ..base.net.clone()
                    };
                    let tag = match backbone {
                        Backbone::Mlp => "MLP",
                        Backbone::Transformer => "Transformer",
                    };
                    out.push(run(format!("{}_{tag}", m.name()), c));
                }
            }
            out
        }
        Ablation::Scope => PRESETS
            .iter()
            .map(|s| {
                run(
                    *s,
                    TrainConfig {
                        scope: s.to_string(),
                        ..with(Method::Any2AnyLora)
                    },
                )
            })
            .collect(),
        Ablation::DataScale => DATA_BUDGETS
            .iter()
            .flat_map(|&b| {
                [Method::Scratch, Method::Any2AnyLora].map(|m| PlannedRun {
                    name: format!("{}_{}k", m.name(), b / 1000),
                    config: with(m),
                    frame_budget: Some(b),
                })
            })
            .collect(),
        // Every run gets the same number of iterations, as many as the
        // largest batch fits into the base budget; smaller batches collect
        // proportionally less.
        Ablation::Sampling => {
            let largest = SAMPLING_BATCHES.iter().map(|(e, s)| e * s).max().unwrap_or(1);
            let iterations = (base.total_env_steps / largest).max(1);
            SAMPLING_BATCHES
                .iter()
                .flat_map(|&(n_envs, steps_per_env)| {
                    [Method::Scratch, Method::Any2AnyLora].map(|m| {
                        run(
                            format!("{}_{}k", m.name(), n_envs * steps_per_env / 1024),
                            TrainConfig {
                                n_envs,
                                steps_per_env,
                                total_env_steps: iterations * n_envs * steps_per_env,
                                ..with(m)
                            },
                        )
                    })
                })
                .collect()
        }
    }
}
