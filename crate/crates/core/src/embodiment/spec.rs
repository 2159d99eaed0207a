use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use crate::align::ObservationLayout;
use crate::linalg::{condition_number, row_major_opt};
use crate::{Error, Result};

/// One planar revolute joint. `parent == -1` attaches the joint to the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub parent: i32,
    /// +1 or -1.
    pub axis_sign: f64,
}

/// Rigid link driven by the joint of the same index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    /// m
    pub length: f64,
    /// kg
    pub mass: f64,
    /// m, along the link from the joint
    pub com_offset: f64,
    /// kg·m² about the COM
    pub inertia: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseMode {
    Fixed,
    FloatingPlanar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseInertial {
    pub mass: f64,
    pub inertia: f64,
}

/// Declares that the actuated coordinates of each hip pair are an inclined
/// mix of the serial joint angles, `q_act = H q_serial` with
/// `H_L = [[cos a, 0], [-sin a, 1]]` and `H_R = [[cos a, 0], [sin a, 1]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HipCoupling {
    pub left_pair: (usize, usize),
    pub right_pair: (usize, usize),
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains { kp: 40.0, kd: 1.0 }
    }
}

pub const DEFAULT_TORQUE_LIMIT: f64 = 60.0;

/// Full physical and layout identity of one robot.
///
/// Joint quantities are indexed in this robot's own declaration order. The
/// `chain_coupling` matrix is expressed in that same order: the serial
/// kinematic angles are `q_serial = J q_closed` for the closed-chain
/// coordinates, and it equals the identity outside the coupled rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbodimentSpec {
    pub id: String,
    pub topology: Vec<JointSpec>,
    pub n_joints: usize,
    pub links: Vec<LinkSpec>,
    pub base_mode: BaseMode,
    #[serde(default)]
    pub base_inertial: Option<BaseInertial>,
    pub joint_semantic_names: Vec<String>,
    #[serde(default)]
    pub hip_coupling: Option<HipCoupling>,
    #[serde(default, with = "row_major_opt")]
    pub chain_coupling: Option<DMatrix<f64>>,
    pub observation_layout: ObservationLayout,
    pub pd_gains: Vec<PdGains>,
    pub torque_limits: Vec<f64>,
    /// Joints whose link tip is a ground contact point (floating base only).
    #[serde(default)]
    pub contact_points: Vec<usize>,
}

impl EmbodimentSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_joints;
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if n == 0 {
            return bad("robot has no joints".into());
        }
        for (what, len) in [
            ("topology", self.topology.len()),
            ("links", self.links.len()),
            ("joint_semantic_names", self.joint_semantic_names.len()),
            ("pd_gains", self.pd_gains.len()),
            ("torque_limits", self.torque_limits.len()),
        ] {
            if len != n {
                return bad(format!("{what} has {len} entries, expected {n}"));
            }
        }
        for (i, j) in self.topology.iter().enumerate() {
            if j.parent < -1 || j.parent >= i as i32 {
                return bad(format!("joint {i} has parent {} (must be -1 or < {i})", j.parent));
            }
            if j.axis_sign != 1.0 && j.axis_sign != -1.0 {
                return bad(format!("joint {i} axis sign {} is not ±1", j.axis_sign));
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            let positive = [l.length, l.mass, l.inertia].iter().all(|v| v.is_finite() && *v > 0.0);
            if !positive {
                return bad(format!("link {i} needs positive length, mass and inertia"));
            }
            if !(0.0..=l.length).contains(&l.com_offset) {
                return bad(format!("link {i} com_offset {} outside [0, {}]", l.com_offset, l.length));
            }
        }
        match (self.base_mode, &self.base_inertial) {
            (BaseMode::FloatingPlanar, None) => return bad("floating base needs base_inertial".into()),
            (BaseMode::FloatingPlanar, Some(b)) if !(b.mass > 0.0 && b.inertia > 0.0) => {
                return bad("base mass and inertia must be positive".into())
            }
            _ => {}
        }
        let mut names = std::collections::HashSet::new();
        for name in &self.joint_semantic_names {
            if !names.insert(name.as_str()) {
                return bad(format!("duplicate joint name `{name}`"));
            }
        }
        if let Some(h) = &self.hip_coupling {
            let idx = [h.left_pair.0, h.left_pair.1, h.right_pair.0, h.right_pair.1];
            if idx.iter().any(|&i| i >= n) {
                return bad("hip coupling references a missing joint".into());
            }
            let distinct: std::collections::HashSet<_> = idx.iter().collect();
            if distinct.len() != 4 {
                return bad("hip coupling pairs must be disjoint".into());
            }
            if !(h.alpha.abs() < FRAC_PI_2) {
                return bad(format!("hip alpha {} must satisfy |alpha| < pi/2", h.alpha));
            }
        }
        if let Some(j) = &self.chain_coupling {
            if j.nrows() != n || j.ncols() != n {
                return bad(format!("chain_coupling is {}x{}, expected {n}x{n}", j.nrows(), j.ncols()));
            }
            let cond = condition_number(j);
            if !(cond < 1e6) {
                return bad(format!("chain_coupling condition number {cond:e} >= 1e6"));
            }
        }
        for &c in &self.contact_points {
            if c >= n {
                return bad(format!("contact point on missing joint {c}"));
            }
        }
        for (i, g) in self.pd_gains.iter().enumerate() {
            if !(g.kp >= 0.0 && g.kd >= 0.0) {
                return bad(format!("joint {i} gains must be non-negative"));
            }
        }
        if self.torque_limits.iter().any(|t| !(*t > 0.0)) {
            return bad("torque limits must be positive".into());
        }
        self.observation_layout.validate(n)?;
        Ok(())
    }

    /// Generalized coordinate count: actuated joints plus (x, z, pitch) when floating.
    pub fn dof(&self) -> usize {
        self.n_joints + self.base_dof()
    }

    pub fn base_dof(&self) -> usize {
        match self.base_mode {
            BaseMode::Fixed => 0,
            BaseMode::FloatingPlanar => 3,
        }
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        usize::try_from(self.topology[joint].parent).ok()
    }

    /// Joints with no children.
    pub fn leaves(&self) -> Vec<usize> {
        let mut has_child = vec![false; self.n_joints];
        for j in 0..self.n_joints {
            if let Some(p) = self.parent(j) {
                has_child[p] = true;
            }
        }
        (0..self.n_joints).filter(|&j| !has_child[j]).collect()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_semantic_names.iter().position(|n| n == name)
    }

    /// Map from serial kinematic angles to actuated coordinates,
    /// `q_act = H J^-1 q_serial`.
    pub fn actuator_map(&self) -> DMatrix<f64> {
        let n = self.n_joints;
        let mut h = DMatrix::identity(n, n);
        if let Some(hc) = &self.hip_coupling {
            let (c, s) = (hc.alpha.cos(), hc.alpha.sin());
            for ((a, b), sign) in [(hc.left_pair, -1.0), (hc.right_pair, 1.0)] {
                h[(a, a)] = c;
                h[(b, a)] = sign * s;
            }
        }
        match &self.chain_coupling {
            Some(j) => {
                let j_inv = j.clone().try_inverse().expect("validated invertible");
                h * j_inv
            }
            None => h,
        }
    }

    /// Same robot with joints re-declared in `order` (`order[new] = old`).
    pub fn reordered(&self, order: &[usize]) -> Result<EmbodimentSpec> {
        let n = self.n_joints;
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&o| o >= n || std::mem::replace(&mut seen[o], true)) {
            return Err(Error::InvalidSpec("reorder must be a permutation".into()));
        }
        let mut new_of_old = vec![0usize; n];
        for (new, &old) in order.iter().enumerate() {
            new_of_old[old] = new;
        }
        let pick = |i: usize| order[i];
        let topology = (0..n)
            .map(|i| {
                let j = &self.topology[pick(i)];
                JointSpec {
                    parent: if j.parent < 0 { -1 } else { new_of_old[j.parent as usize] as i32 },
                    axis_sign: j.axis_sign,
                }
            })
            .collect();
        let mut out = EmbodimentSpec {
            topology,
            links: (0..n).map(|i| self.links[pick(i)].clone()).collect(),
            joint_semantic_names: (0..n).map(|i| self.joint_semantic_names[pick(i)].clone()).collect(),
            pd_gains: (0..n).map(|i| self.pd_gains[pick(i)]).collect(),
            torque_limits: (0..n).map(|i| self.torque_limits[pick(i)]).collect(),
            hip_coupling: self.hip_coupling.as_ref().map(|h| HipCoupling {
                left_pair: (new_of_old[h.left_pair.0], new_of_old[h.left_pair.1]),
                right_pair: (new_of_old[h.right_pair.0], new_of_old[h.right_pair.1]),
                alpha: h.alpha,
            }),
            chain_coupling: self
                .chain_coupling
                .as_ref()
                .map(|j| DMatrix::from_fn(n, n, |r, c| j[(pick(r), pick(c))])),
            contact_points: self.contact_points.iter().map(|&c| new_of_old[c]).collect(),
            ..self.clone()
        };
        out.contact_points.sort_unstable();
        out.validate()?;
        Ok(out)
    }

    /// Copy with every link (and base) mass and inertia scaled by `factor`.
    pub fn with_mass_scale(&self, factor: f64) -> EmbodimentSpec {
        let mut out = self.clone();
        for l in &mut out.links {
            l.mass *= factor;
            l.inertia *= factor;
        }
        if let Some(b) = &mut out.base_inertial {
            b.mass *= factor;
            b.inertia *= factor;
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EmbodimentSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: EmbodimentSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
