use serde::{Deserialize, Serialize};

use super::config::RewardWeights;
use crate::embodiment::{BaseMode, SimState};
use crate::motion::MotionFrame;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub r_total: f64,
    pub r_joint: f64,
    pub r_base: f64,
    pub r_smooth: f64,
}

/// Tracking reward against one reference frame in the robot's own joint
/// space. `state.last_action` is the action just applied.
pub fn tracking_reward(
    state: &SimState,
    reference: &MotionFrame,
    prev_action: &[f64],
    base_mode: BaseMode,
    w: &RewardWeights,
) -> RewardTerms {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let r_joint = (-sq(&state.q, &reference.q_ref) / (w.sigma_jp * w.sigma_jp)).exp();
    let r_base = match base_mode {
        BaseMode::Fixed => 1.0,
        BaseMode::FloatingPlanar => (-sq(&state.base_pose, &reference.base_ref) / (w.sigma_bp * w.sigma_bp)).exp(),
    };
    let r_smooth = -sq(&state.last_action, prev_action);
    RewardTerms {
        r_total: w.w_jp * r_joint + w.w_bp * r_base + w.w_smooth * r_smooth,
        r_joint,
        r_base,
        r_smooth,
    }
}
