use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::layout::ObservationLayout;
use crate::embodiment::EmbodimentSpec;
use crate::linalg::{identity_residual, row_major};
use crate::{Error, Result};

/// Tolerance on `|PhiPlus * Phi - I|_inf` before an alignment is rejected.
pub const INVERTIBILITY_TOL: f64 = 1e-8;

/// Injection of the mapped target joints into the source joint space.
///
/// `pi[j]` is the source index of the `j`-th mapped target joint and
/// `target_index[j]` its index in the target's own declaration order.
/// Redundant target joints appear in neither.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointMap {
    pub pi: Vec<usize>,
    pub target_index: Vec<usize>,
    pub t: usize,
    pub target_dof: usize,
}

impl JointMap {
    pub fn identity(n: usize) -> JointMap {
        JointMap {
            pi: (0..n).collect(),
            target_index: (0..n).collect(),
            t: n,
            target_dof: n,
        }
    }

    /// Mapped joint count `N_r`.
    pub fn n_r(&self) -> usize {
        self.pi.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mut hit = vec![false; self.t];
        for &p in &self.pi {
            if p >= self.t || std::mem::replace(&mut hit[p], true) {
                return Err(Error::DimensionMismatch(format!("pi is not an injection into 0..{}", self.t)));
            }
        }
        if self.target_index.len() != self.pi.len() || self.target_index.iter().any(|&i| i >= self.target_dof) {
            return Err(Error::DimensionMismatch("target_index does not match pi".into()));
        }
        Ok(())
    }
}

/// Redundant target joints have an empty name or one starting with `aux`.
pub fn is_redundant_name(name: &str) -> bool {
    name.is_empty() || name.starts_with("aux")
}

/// Match target joints to source joints by semantic name.
pub fn build_joint_map(source: &EmbodimentSpec, target: &EmbodimentSpec) -> Result<JointMap> {
    let mut pi = Vec::new();
    let mut target_index = Vec::new();
    for (j, name) in target.joint_semantic_names.iter().enumerate() {
        if is_redundant_name(name) {
            continue;
        }
        match source.joint_index(name) {
            Some(i) => {
                pi.push(i);
                target_index.push(j);
            }
            None => return Err(Error::UnmatchableJoint(name.clone())),
        }
    }
    let map = JointMap {
        pi,
        target_index,
        t: source.n_joints,
        target_dof: target.n_joints,
    };
    map.validate()?;
    Ok(map)
}

/// `S_ij = 1[pi(j) = i]`.
pub fn build_scatter(map: &JointMap) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(map.t, map.n_r());
    for (j, &i) in map.pi.iter().enumerate() {
        s[(i, j)] = 1.0;
    }
    s
}

/// Identity with the left/right hip 2x2 blocks (indices in source space)
/// replaced by `H_L = [[cos a, 0], [-sin a, 1]]`, `H_R = [[cos a, 0], [sin a, 1]]`.
pub fn build_hip_decoupling(
    left_pair: (usize, usize),
    right_pair: (usize, usize),
    alpha: f64,
    t: usize,
) -> Result<DMatrix<f64>> {
    let c = alpha.cos();
    if !(c.abs() >= 1e-6) {
        return Err(Error::SingularCoupling(c.abs()));
    }
    let idx = [left_pair.0, left_pair.1, right_pair.0, right_pair.1];
    if idx.iter().any(|&i| i >= t) {
        return Err(Error::DimensionMismatch(format!("hip index out of range for T = {t}")));
    }
    if idx.iter().collect::<std::collections::HashSet<_>>().len() != 4 {
        return Err(Error::InvalidSpec("hip pairs must be disjoint".into()));
    }
    let s = alpha.sin();
    let mut d = DMatrix::identity(t, t);
    for ((a, b), sign) in [(left_pair, -1.0), (right_pair, 1.0)] {
        d[(a, a)] = c;
        d[(b, a)] = sign * s;
    }
    Ok(d)
}

/// Lift the target's own chain coupling into source space,
/// `J = I + S (J_local - I) S^T`, restricted to the mapped joints.
pub fn build_chain_coupling(target: &EmbodimentSpec, map: &JointMap) -> Result<DMatrix<f64>> {
    let mut j = DMatrix::identity(map.t, map.t);
    let Some(local) = &target.chain_coupling else {
        return Ok(j);
    };
    let mapped: Vec<Option<usize>> = {
        let mut m = vec![None; map.target_dof];
        for (k, &ti) in map.target_index.iter().enumerate() {
            m[ti] = Some(k);
        }
        m
    };
    for r in 0..map.target_dof {
        for c in 0..map.target_dof {
            let delta = local[(r, c)] - if r == c { 1.0 } else { 0.0 };
            if delta == 0.0 {
                continue;
            }
            match (mapped[r], mapped[c]) {
                (Some(kr), Some(kc)) => j[(map.pi[kr], map.pi[kc])] += delta,
                _ => {
                    return Err(Error::BrokenInvertibility(delta.abs()));
                }
            }
        }
    }
    Ok(j)
}

/// Composed joint-space maps between one target and the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMaps {
    #[serde(rename = "S", with = "row_major")]
    pub s: DMatrix<f64>,
    #[serde(rename = "D", with = "row_major")]
    pub d: DMatrix<f64>,
    #[serde(rename = "J", with = "row_major")]
    pub j: DMatrix<f64>,
    #[serde(rename = "Phi", with = "row_major")]
    pub phi: DMatrix<f64>,
    #[serde(rename = "PhiPlus", with = "row_major")]
    pub phi_plus: DMatrix<f64>,
    pub alpha: f64,
    /// Target declaration index of each mapped joint (column of `S`).
    pub target_index: Vec<usize>,
    /// Actuated joint count of the target, mapped or not.
    pub target_dof: usize,
}

/// `Phi = J D^-1 S`, `PhiPlus = S^T D J^-1`.
pub fn compose_alignment(s: &DMatrix<f64>, d: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<AlignmentMaps> {
    let t = s.nrows();
    let n_r = s.ncols();
    if d.shape() != (t, t) || j.shape() != (t, t) {
        return Err(Error::DimensionMismatch(format!(
            "S is {t}x{n_r} but D is {:?} and J is {:?}",
            d.shape(),
            j.shape()
        )));
    }
    let d_inv = d.clone().try_inverse().ok_or(Error::SingularCoupling(0.0))?;
    let j_inv = j.clone().try_inverse().ok_or(Error::BrokenInvertibility(f64::INFINITY))?;
    let phi = j * d_inv * s;
    let phi_plus = s.transpose() * d * j_inv;
    let residual = identity_residual(&(&phi_plus * &phi));
    if !(residual <= INVERTIBILITY_TOL) {
        return Err(Error::BrokenInvertibility(residual));
    }
    Ok(AlignmentMaps {
        s: s.clone(),
        d: d.clone(),
        j: j.clone(),
        phi,
        phi_plus,
        alpha: 0.0,
        target_index: (0..n_r).collect(),
        target_dof: n_r,
    })
}

/// Full alignment of `target` onto `source`'s joint space.
pub fn build_alignment(source: &EmbodimentSpec, target: &EmbodimentSpec) -> Result<AlignmentMaps> {
    let map = build_joint_map(source, target)?;
    let s = build_scatter(&map);
    let lift = |tj: usize| -> Result<usize> {
        map.target_index
            .iter()
            .position(|&x| x == tj)
            .map(|k| map.pi[k])
            .ok_or_else(|| Error::InvalidSpec(format!("hip joint {tj} is not mapped to the source")))
    };
    let (d, alpha) = match &target.hip_coupling {
        Some(h) => {
            let l = (lift(h.left_pair.0)?, lift(h.left_pair.1)?);
            let r = (lift(h.right_pair.0)?, lift(h.right_pair.1)?);
            (build_hip_decoupling(l, r, h.alpha, map.t)?, h.alpha)
        }
        None => (DMatrix::identity(map.t, map.t), 0.0),
    };
    let j = build_chain_coupling(target, &map)?;
    let mut maps = compose_alignment(&s, &d, &j)?;
    maps.alpha = alpha;
    maps.target_index = map.target_index;
    maps.target_dof = map.target_dof;
    Ok(maps)
}

impl AlignmentMaps {
    pub fn identity(n: usize) -> AlignmentMaps {
        let i = DMatrix::identity(n, n);
        AlignmentMaps {
            s: i.clone(),
            d: i.clone(),
            j: i.clone(),
            phi: i.clone(),
            phi_plus: i,
            alpha: 0.0,
            target_index: (0..n).collect(),
            target_dof: n,
        }
    }

    /// Source joint count `T`.
    pub fn t(&self) -> usize {
        self.phi.nrows()
    }

    /// Mapped target joint count `N_r`.
    pub fn n_r(&self) -> usize {
        self.phi.ncols()
    }

    /// `|PhiPlus * Phi - I|_inf`.
    pub fn invertibility_residual(&self) -> f64 {
        identity_residual(&(&self.phi_plus * &self.phi))
    }

    /// Target joint vector (all `target_dof` joints) into source space.
    pub fn to_source(&self, q_target: &[f64]) -> Result<Vec<f64>> {
        if q_target.len() != self.target_dof {
            return Err(Error::DimensionMismatch(format!(
                "target vector has {} entries, expected {}",
                q_target.len(),
                self.target_dof
            )));
        }
        let mut out = vec![0.0; self.t()];
        self.phi_gather(q_target, &mut out);
        Ok(out)
    }

    /// Mapped-joint action into a full target command; redundant joints get 0.
    pub fn expand_action(&self, a_mapped: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.target_dof];
        for (k, &ti) in self.target_index.iter().enumerate() {
            out[ti] = a_mapped[k];
        }
        out
    }

    fn phi_gather(&self, q_target: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self
                .target_index
                .iter()
                .enumerate()
                .map(|(k, &ti)| self.phi[(i, k)] * q_target[ti])
                .sum();
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<AlignmentMaps> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// Precomputed block plan for repeated observation alignment.
#[derive(Debug, Clone)]
pub struct ObservationAligner {
    maps: AlignmentMaps,
    steps: Vec<Step>,
    in_width: usize,
    out_width: usize,
}

#[derive(Debug, Clone)]
enum Step {
    Copy { from: usize, to: usize, len: usize },
    Joint { from: usize, to: usize, slices: usize },
}

impl ObservationAligner {
    pub fn new(src: &ObservationLayout, tgt: &ObservationLayout, maps: &AlignmentMaps) -> Result<ObservationAligner> {
        let (t, n) = (maps.t(), maps.target_dof);
        let mut steps = Vec::new();
        let mut to = 0;
        for b in &src.blocks {
            let (from, width) = tgt
                .span(b.name)
                .ok_or_else(|| Error::LayoutMismatch(format!("target layout has no {:?} block", b.name)))?;
            if b.name.is_joint_valued() {
                if b.width % t != 0 || width % n != 0 || b.width / t != width / n {
                    return Err(Error::LayoutMismatch(format!(
                        "joint block {:?}: source width {} (T={t}) vs target width {width} (N={n})",
                        b.name, b.width
                    )));
                }
                steps.push(Step::Joint {
                    from,
                    to,
                    slices: width / n,
                });
            } else {
                if width != b.width {
                    return Err(Error::LayoutMismatch(format!(
                        "block {:?}: source width {} vs target width {width}",
                        b.name, b.width
                    )));
                }
                steps.push(Step::Copy { from, to, len: width });
            }
            to += b.width;
        }
        Ok(ObservationAligner {
            maps: maps.clone(),
            steps,
            in_width: tgt.total_width(),
            out_width: to,
        })
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn apply_into(&self, obs_tgt: &[f64], out: &mut [f64]) -> Result<()> {
        if obs_tgt.len() != self.in_width || out.len() != self.out_width {
            return Err(Error::DimensionMismatch(format!(
                "observation has {} values (layout {}), output buffer {} (layout {})",
                obs_tgt.len(),
                self.in_width,
                out.len(),
                self.out_width
            )));
        }
        let (t, n) = (self.maps.t(), self.maps.target_dof);
        for step in &self.steps {
            match *step {
                Step::Copy { from, to, len } => out[to..to + len].copy_from_slice(&obs_tgt[from..from + len]),
                Step::Joint { from, to, slices } => {
                    for k in 0..slices {
                        let src = &obs_tgt[from + k * n..from + (k + 1) * n];
                        self.maps.phi_gather(src, &mut out[to + k * t..to + (k + 1) * t]);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, obs_tgt: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.out_width];
        self.apply_into(obs_tgt, &mut out)?;
        Ok(out)
    }
}

/// Reorder target observation blocks into the source layout and carry the
/// joint-valued blocks through `Phi`.
pub fn align_observation(
    src_layout: &ObservationLayout,
    tgt_layout: &ObservationLayout,
    maps: &AlignmentMaps,
    obs_tgt: &[f64],
) -> Result<Vec<f64>> {
    ObservationAligner::new(src_layout, tgt_layout, maps)?.apply(obs_tgt)
}

/// `a_r = PhiPlus * a_src`, one entry per mapped target joint.
pub fn unalign_action(maps: &AlignmentMaps, action_src: &[f64]) -> Result<Vec<f64>> {
    if action_src.len() != maps.t() {
        return Err(Error::DimensionMismatch(format!(
            "source action has {} entries, expected {}",
            action_src.len(),
            maps.t()
        )));
    }
    Ok((&maps.phi_plus * DVector::from_column_slice(action_src)).as_slice().to_vec())
}

