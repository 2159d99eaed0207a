use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{DrRanges, RewardWeights};
use super::reward::{tracking_reward, RewardTerms};
use crate::align::{AlignmentMaps, BlockKind, ObservationAligner, ObservationLayout};
use crate::embodiment::{BaseMode, EmbodimentSpec, SimState, Simulator, DECIMATION, PHYSICS_DT};
use crate::motion::{retarget_library, sample_start, MotionClip, MotionFrame, MotionLibrary};
use crate::{Error, Result, GRAVITY};

/// Episodes end once the mean absolute joint error exceeds this, rad.
pub const MAX_MEAN_JOINT_ERROR: f64 = 1.0;
/// PD target offset (rad) per unit of policy output.
pub const ACTION_SCALE: f64 = 0.25;
/// Floating robots also end once |pitch| exceeds this, rad.
pub const MAX_PITCH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    ClipComplete,
    JointErrorExceeded,
    PitchExceeded,
    Diverged,
}

/// What the policy controls and what it sees. Immutable and shared by every
/// environment of a run.
#[derive(Debug, Clone)]
pub struct TaskSetup {
    pub robot: EmbodimentSpec,
    pub maps: Option<AlignmentMaps>,
    aligner: Option<ObservationAligner>,
    /// References fed to the policy (source joint space when aligned).
    pub obs_library: MotionLibrary,
    /// The same references in the robot's actuated coordinates.
    pub track_library: MotionLibrary,
    robot_layout: ObservationLayout,
    /// Block order of the network input.
    pub net_layout: ObservationLayout,
    pub history: usize,
    pub d_p: usize,
    pub d_r: usize,
    pub d_priv: usize,
    pub action_dim: usize,
    frames: usize,
    nominal: Simulator,
}

fn check_reference_last(layout: &ObservationLayout) -> Result<()> {
    let first_ref = layout.blocks.iter().position(|b| b.name.is_reference()).unwrap_or(layout.blocks.len());
    if layout.blocks[first_ref..].iter().any(|b| !b.name.is_reference()) {
        return Err(Error::LayoutMismatch("network layout must list reference blocks after proprioception".into()));
    }
    for kind in BlockKind::ALL {
        if layout.block(kind).is_none() {
            return Err(Error::LayoutMismatch(format!("layout has no {kind:?} block")));
        }
    }
    Ok(())
}

fn lookahead(layout: &ObservationLayout) -> Result<usize> {
    let w = layout.block(BlockKind::RefBaseWindow).map_or(0, |b| b.width);
    if w == 0 || !w.is_multiple_of(3) {
        return Err(Error::LayoutMismatch(format!("ref_base_window width {w} is not a positive multiple of 3")));
    }
    Ok(w / 3)
}

impl TaskSetup {
    /// The robot observed in its own coordinates; `library` is in its joint space.
    pub fn native(robot: &EmbodimentSpec, library: &MotionLibrary, history: usize) -> Result<TaskSetup> {
        let n = robot.n_joints;
        if library.n_joints() != n {
            return Err(Error::DimensionMismatch(format!(
                "library has {} joints, robot {} has {n}",
                library.n_joints(),
                robot.id
            )));
        }
        let layout = robot.observation_layout.clone();
        check_reference_last(&layout)?;
        let frames = lookahead(&layout)?;
        if layout.block(BlockKind::RefJointWindow).map(|b| b.width) != Some(frames * n) {
            return Err(Error::LayoutMismatch("ref_joint_window width must be frames x joints".into()));
        }
        Ok(TaskSetup {
            robot: robot.clone(),
            maps: None,
            aligner: None,
            obs_library: library.clone(),
            track_library: library.clone(),
            d_p: layout.proprio_width(),
            d_r: layout.reference_width(),
            d_priv: 5 + n,
            action_dim: n,
            robot_layout: layout.clone(),
            net_layout: layout,
            history,
            frames,
            nominal: Simulator::new(robot),
        })
    }

    /// The robot seen through the alignment maps, as if it were `source`;
    /// `library` is in the source joint space.
    pub fn aligned(
        source: &EmbodimentSpec,
        robot: &EmbodimentSpec,
        maps: &AlignmentMaps,
        library: &MotionLibrary,
        history: usize,
    ) -> Result<TaskSetup> {
        let t = maps.t();
        if source.n_joints != t || maps.target_dof != robot.n_joints || library.n_joints() != t {
            return Err(Error::DimensionMismatch(format!(
                "maps are {t}x{} over a {}-joint target; source has {}, library {}",
                maps.n_r(),
                maps.target_dof,
                source.n_joints,
                library.n_joints()
            )));
        }
        let net_layout = source.observation_layout.clone();
        check_reference_last(&net_layout)?;
        let frames = lookahead(&net_layout)?;
        let robot_layout = robot.observation_layout.with_reference_from(&net_layout);
        let aligner = ObservationAligner::new(&net_layout, &robot_layout, maps)?;
        Ok(TaskSetup {
            robot: robot.clone(),
            maps: Some(maps.clone()),
            aligner: Some(aligner),
            obs_library: library.clone(),
            track_library: retarget_library(library, maps)?,
            d_p: net_layout.proprio_width(),
            d_r: net_layout.reference_width(),
            d_priv: 5 + t,
            action_dim: t,
            robot_layout,
            net_layout,
            history,
            frames,
            nominal: Simulator::new(robot),
        })
    }

    pub fn is_aligned(&self) -> bool {
        self.maps.is_some()
    }

    /// Width of one timestep's features.
    pub fn step_width(&self) -> usize {
        self.d_p + self.d_r
    }

    /// Width of the flattened `(H+1)`-step window.
    pub fn window_width(&self) -> usize {
        (self.history + 1) * self.step_width()
    }

    /// Same task on other references (e.g. a held-out clip), given in the
    /// same joint space as this setup's `obs_library`.
    pub fn with_library(&self, library: &MotionLibrary) -> Result<TaskSetup> {
        let mut out = self.clone();
        out.track_library = match &self.maps {
            Some(m) => retarget_library(library, m)?,
            None => library.clone(),
        };
        out.obs_library = library.clone();
        Ok(out)
    }

    /// Policy action in the robot's joint order (unscaled).
    pub fn robot_action(&self, action: &[f64]) -> Result<Vec<f64>> {
        match &self.maps {
            Some(m) => Ok(m.expand_action(&crate::align::unalign_action(m, action)?)),
            None => Ok(action.to_vec()),
        }
    }

    pub fn track_clip(&self, clip: usize) -> &MotionClip {
        &self.track_library.clips[clip]
    }
}

/// One randomized robot following one clip.
#[derive(Debug, Clone)]
pub struct Env {
    rng: ChaCha8Rng,
    sim: Simulator,
    state: SimState,
    clip: usize,
    cursor: usize,
    history: VecDeque<Vec<f64>>,
    masses: Vec<f64>,
    kp_scale: f64,
    robot_obs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: RewardTerms,
    pub termination: Option<Termination>,
}

impl Env {
    /// Environment `index` of a run seeded with `seed`; each index owns an
    /// independent random stream.
    pub fn new(setup: &TaskSetup, dr: &DrRanges, seed: u64, index: usize) -> Result<Env> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        let mut env = Env {
            rng,
            sim: setup.nominal.clone(),
            state: SimState::rest(&setup.robot),
            clip: 0,
            cursor: 0,
            history: VecDeque::with_capacity(setup.history + 1),
            masses: Vec::new(),
            kp_scale: 1.0,
            robot_obs: Vec::new(),
        };
        env.reset(setup, dr)?;
        Ok(env)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    /// `(clip, frame)` currently being tracked.
    pub fn cursor(&self) -> (usize, usize) {
        (self.clip, self.cursor)
    }

    pub fn reference<'a>(&self, setup: &'a TaskSetup) -> &'a MotionFrame {
        &setup.track_library.clips[self.clip].frames[self.cursor]
    }

    /// New episode at a uniformly sampled clip and start frame.
    pub fn reset(&mut self, setup: &TaskSetup, dr: &DrRanges) -> Result<()> {
        let (clip, cursor) = sample_start(&setup.track_library, &mut self.rng)?;
        self.reset_to(setup, dr, clip, cursor)
    }

    /// New episode starting on the reference pose of `clip` at `cursor`.
    pub fn reset_to(&mut self, setup: &TaskSetup, dr: &DrRanges, clip: usize, cursor: usize) -> Result<()> {
        let robot = &setup.robot;
        let frames = &setup.track_library.clips[clip].frames;
        if cursor + 1 >= frames.len() {
            return Err(Error::InvalidParams(format!("start frame {cursor} leaves nothing to track")));
        }
        self.clip = clip;
        self.cursor = cursor;
        if dr.enabled {
            let mut spec = robot.clone();
            for l in &mut spec.links {
                let f = self.rng.random_range(dr.mass_scale.0..=dr.mass_scale.1);
                l.mass *= f;
                l.inertia *= f;
            }
            self.kp_scale = self.rng.random_range(dr.kp_scale.0..=dr.kp_scale.1);
            for g in &mut spec.pd_gains {
                g.kp *= self.kp_scale;
            }
            self.masses = spec.links.iter().map(|l| l.mass).collect();
            self.sim = Simulator::new(&spec);
        } else {
            self.kp_scale = 1.0;
            self.masses = robot.links.iter().map(|l| l.mass).collect();
            self.sim = setup.nominal.clone();
        }

        let (f0, f1) = (&frames[cursor], &frames[cursor + 1]);
        let rate = setup.track_library.clips[clip].frame_rate;
        let mut state = SimState::rest(robot);
        state.q = f0.q_ref.clone();
        state.qdot = f0.q_ref.iter().zip(&f1.q_ref).map(|(a, b)| (b - a) * rate).collect();
        state.last_action = f0.q_ref.clone();
        if robot.base_mode == BaseMode::FloatingPlanar {
            state.base_pose[0] = f0.base_ref[0];
            state.base_pose[2] = f0.base_ref[2];
            let kin = self.sim.model.positions(&self.sim.generalized_q(&state));
            let lowest = robot.contact_points.iter().map(|&c| kin.links[c].tip[0][1]).fold(f64::INFINITY, f64::min);
            if lowest.is_finite() {
                state.base_pose[1] -= lowest;
            }
        }
        self.state = state;
        self.history.clear();
        let features = self.features(setup)?;
        for _ in 0..=setup.history {
            self.history.push_back(features.clone());
        }
        Ok(())
    }

    /// Current single-step features in network order.
    fn features(&mut self, setup: &TaskSetup) -> Result<Vec<f64>> {
        let s = &self.state;
        let clip = &setup.obs_library.clips[self.clip];
        let window = clip.window(self.cursor + 1, setup.frames);
        let ref_joints: Vec<f64> = window.iter().flat_map(|f| f.q_ref.iter().copied()).collect();
        let ref_base: Vec<f64> = window
            .iter()
            .flat_map(|f| (0..3).map(|k| f.base_ref[k] - s.base_pose[k]))
            .collect();
        let pitch = s.base_pose[2];
        let ang_vel = [s.base_vel[2]];
        let gravity = [-pitch.sin(), -pitch.cos()];
        let parts: [(BlockKind, &[f64]); 7] = [
            (BlockKind::BaseAngVel, &ang_vel),
            (BlockKind::ProjectedGravity, &gravity),
            (BlockKind::JointPos, &s.q),
            (BlockKind::JointVel, &s.qdot),
            (BlockKind::LastAction, &s.last_action),
            (BlockKind::RefJointWindow, &ref_joints),
            (BlockKind::RefBaseWindow, &ref_base),
        ];
        let mut obs = std::mem::take(&mut self.robot_obs);
        setup.robot_layout.assemble(&parts, &mut obs)?;
        let out = match &setup.aligner {
            Some(a) => a.apply(&obs)?,
            None => obs.clone(),
        };
        self.robot_obs = obs;
        Ok(out)
    }

    /// Flattened history window, oldest step first.
    pub fn observe(&self, out: &mut [f64]) {
        let w = self.history[0].len();
        for (k, f) in self.history.iter().enumerate() {
            out[k * w..(k + 1) * w].copy_from_slice(f);
        }
    }

    /// Critic-only inputs: base velocity, normalised ground force, link
    /// masses (in the network's joint slots) and the kp multiplier.
    pub fn privileged(&self, setup: &TaskSetup, out: &mut [f64]) {
        let s = &self.state;
        out[..3].copy_from_slice(&s.base_vel);
        let weight: f64 = self.masses.iter().sum::<f64>()
            + setup.robot.base_inertial.as_ref().map_or(0.0, |b| b.mass);
        out[3] = self.sim.contact_normal_force(s) / (weight * GRAVITY);
        let slots = &mut out[4..4 + setup.action_dim];
        match &setup.maps {
            Some(m) => {
                slots.iter_mut().for_each(|v| *v = 0.0);
                for (k, &ti) in m.target_index.iter().enumerate() {
                    for (i, slot) in slots.iter_mut().enumerate() {
                        *slot += m.s[(i, k)] * self.masses[ti];
                    }
                }
            }
            None => slots.copy_from_slice(&self.masses),
        }
        out[4 + setup.action_dim] = self.kp_scale;
    }

    /// Apply one 50 Hz policy action; the PD targets are `ACTION_SCALE`
    /// times the robot-space action. Does not reset on termination.
    pub fn step(&mut self, setup: &TaskSetup, dr: &DrRanges, weights: &RewardWeights, action: &[f64]) -> Result<StepOutcome> {
        let targets: Vec<f64> = setup
            .robot_action(action)?
            .into_iter()
            .map(|a| (ACTION_SCALE * a).clamp(-std::f64::consts::PI, std::f64::consts::PI))
            .collect();
        let prev_action = std::mem::replace(&mut self.state.last_action, targets.clone());
        if dr.enabled && dr.torque_noise_std > 0.0 {
            let noise = Normal::new(0.0, dr.torque_noise_std).expect("finite std");
            let o = setup.robot.base_dof();
            for v in &mut self.state.tau_ext[o..] {
                *v = noise.sample(&mut self.rng);
            }
        }
        let mut diverged = false;
        for _ in 0..DECIMATION {
            match self.sim.step(&self.state, &targets, PHYSICS_DT) {
                Ok(next) => self.state = next,
                Err(Error::NonFiniteState(_)) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let clip = &setup.track_library.clips[self.clip];
        self.cursor += 1;
        let reference = &clip.frames[self.cursor];
        let reward = tracking_reward(&self.state, reference, &prev_action, setup.robot.base_mode, weights);
        let n = self.state.q.len() as f64;
        let mean_err = self.state.q.iter().zip(&reference.q_ref).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
        let termination = if diverged {
            Some(Termination::Diverged)
        } else if !(mean_err <= MAX_MEAN_JOINT_ERROR) {
            Some(Termination::JointErrorExceeded)
        } else if setup.robot.base_mode == BaseMode::FloatingPlanar && self.state.base_pose[2].abs() > MAX_PITCH {
            Some(Termination::PitchExceeded)
        } else if self.cursor + 1 >= clip.n_frames() {
            Some(Termination::ClipComplete)
        } else {
            None
        };
        if termination.is_none() {
            let features = self.features(setup)?;
            self.history.pop_front();
            self.history.push_back(features);
        }
        Ok(StepOutcome { reward, termination })
    }
}
