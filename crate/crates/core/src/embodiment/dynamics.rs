//! Planar rigid-body dynamics for a tree of revolute joints.
//!
//! Generalized coordinates are `[x, z, pitch]` of the base (floating mode
//! only) followed by the serial joint angles. A joint angle of zero hangs the
//! link straight down; link direction in the world is `(sin θ, -cos θ)` where
//! `θ` is the absolute link angle. The mass matrix is assembled from body
//! Jacobians; the bias and inverse-dynamics forces come from a recursive
//! Newton-Euler sweep, so the two routes check each other.

use nalgebra::{DMatrix, DVector};

use super::spec::{BaseMode, EmbodimentSpec, LinkSpec};
use crate::{Error, Result, GRAVITY};

pub(crate) type V2 = [f64; 2];

#[inline]
fn add(a: V2, b: V2) -> V2 {
    [a[0] + b[0], a[1] + b[1]]
}
#[inline]
fn sub(a: V2, b: V2) -> V2 {
    [a[0] - b[0], a[1] - b[1]]
}
#[inline]
fn scale(a: V2, s: f64) -> V2 {
    [a[0] * s, a[1] * s]
}
/// Derivative of a rotating vector: rotates `r` by +90° in the link-angle sense.
#[inline]
pub(crate) fn perp(r: V2) -> V2 {
    [-r[1], r[0]]
}
/// Scalar moment of force `f` applied at lever `r`.
#[inline]
fn cross(r: V2, f: V2) -> f64 {
    r[0] * f[1] - r[1] * f[0]
}
#[inline]
fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Pre-digested form of an [`EmbodimentSpec`] for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    pub n: usize,
    pub floating: bool,
    pub parent: Vec<Option<usize>>,
    pub sign: Vec<f64>,
    pub links: Vec<LinkSpec>,
    pub base_mass: f64,
    pub base_inertia: f64,
    /// Joints on the path root → j, inclusive, in root-first order.
    pub path: Vec<Vec<usize>>,
    pub children: Vec<Vec<usize>>,
}

impl Model {
    pub fn new(spec: &EmbodimentSpec) -> Model {
        let n = spec.n_joints;
        let parent: Vec<Option<usize>> = (0..n).map(|j| spec.parent(j)).collect();
        let mut path: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut children = vec![Vec::new(); n];
        for j in 0..n {
            let mut p: Vec<usize> = match parent[j] {
                Some(pj) => {
                    children[pj].push(j);
                    path[pj].to_vec()
                }
                None => Vec::new(),
            };
            p.push(j);
            path.push(p);
        }
        let (base_mass, base_inertia) = spec
            .base_inertial
            .as_ref()
            .map_or((0.0, 0.0), |b| (b.mass, b.inertia));
        Model {
            n,
            floating: spec.base_mode == BaseMode::FloatingPlanar,
            parent,
            sign: spec.topology.iter().map(|j| j.axis_sign).collect(),
            links: spec.links.clone(),
            base_mass,
            base_inertia,
            path,
            children,
        }
    }

    pub fn base_dof(&self) -> usize {
        if self.floating {
            3
        } else {
            0
        }
    }

    pub fn dof(&self) -> usize {
        self.n + self.base_dof()
    }

    fn check_dims(&self, vs: &[(&str, &[f64])]) -> Result<()> {
        for (what, v) in vs {
            if v.len() != self.dof() {
                return Err(Error::DimensionMismatch(format!(
                    "{what} has length {}, model has {} dof",
                    v.len(),
                    self.dof()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteState(format!("{what} contains non-finite values")));
            }
        }
        Ok(())
    }
}

/// Per-link world-frame kinematic quantities.
#[derive(Debug, Clone, Default)]
pub struct LinkKinematics {
    pub theta: f64,
    pub omega: f64,
    pub alpha: f64,
    pub origin: [V2; 3],
    pub com: [V2; 3],
    pub tip: [V2; 3],
}

/// Position/velocity/acceleration of the base point and the links.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub base: [V2; 3],
    pub base_theta: [f64; 3],
    pub links: Vec<LinkKinematics>,
}

impl Model {
    /// World kinematics for generalized `(q, qd, qdd)`.
    pub fn kinematics(&self, q: &[f64], qd: &[f64], qdd: &[f64]) -> Kinematics {
        let o = self.base_dof();
        let (base, base_theta) = if self.floating {
            (
                [[q[0], q[1]], [qd[0], qd[1]], [qdd[0], qdd[1]]],
                [q[2], qd[2], qdd[2]],
            )
        } else {
            ([[0.0; 2]; 3], [0.0; 3])
        };
        let mut links: Vec<LinkKinematics> = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let s = self.sign[j];
            let (th0, om0, al0, origin) = match self.parent[j] {
                Some(p) => {
                    let pl = &links[p];
                    (pl.theta, pl.omega, pl.alpha, pl.tip)
                }
                None => (base_theta[0], base_theta[1], base_theta[2], base),
            };
            let theta = th0 + s * q[o + j];
            let omega = om0 + s * qd[o + j];
            let alpha = al0 + s * qdd[o + j];
            let u = [theta.sin(), -theta.cos()];
            let nrm = perp(u);
            let point = |r: f64| -> [V2; 3] {
                [
                    add(origin[0], scale(u, r)),
                    add(origin[1], scale(nrm, r * omega)),
                    add(origin[2], add(scale(nrm, r * alpha), scale(u, -r * omega * omega))),
                ]
            };
            let link = &self.links[j];
            links.push(LinkKinematics {
                theta,
                omega,
                alpha,
                origin,
                com: point(link.com_offset),
                tip: point(link.length),
            });
        }
        Kinematics {
            base,
            base_theta,
            links,
        }
    }

    /// Positions only.
    pub fn positions(&self, q: &[f64]) -> Kinematics {
        let zeros = vec![0.0; q.len()];
        self.kinematics(q, &zeros, &zeros)
    }

    /// Linear Jacobian (2 × dof) of a point rigidly attached to link `j`.
    pub fn point_jacobian(&self, kin: &Kinematics, j: usize, point: V2) -> Vec<V2> {
        let o = self.base_dof();
        let mut jac = vec![[0.0; 2]; self.dof()];
        if self.floating {
            jac[0] = [1.0, 0.0];
            jac[1] = [0.0, 1.0];
            jac[2] = perp(sub(point, kin.base[0]));
        }
        for &k in &self.path[j] {
            jac[o + k] = scale(perp(sub(point, kin.links[k].origin[0])), self.sign[k]);
        }
        jac
    }

    /// Joint-space inertia matrix `Σ m JpᵀJp + I JθᵀJθ`.
    pub fn mass_matrix(&self, q: &[f64]) -> DMatrix<f64> {
        let kin = self.positions(q);
        let dof = self.dof();
        let o = self.base_dof();
        let mut m = DMatrix::zeros(dof, dof);
        if self.floating {
            m[(0, 0)] += self.base_mass;
            m[(1, 1)] += self.base_mass;
            m[(2, 2)] += self.base_inertia;
        }
        let mut ang = vec![0.0; dof];
        for j in 0..self.n {
            let link = &self.links[j];
            let jp = self.point_jacobian(&kin, j, kin.links[j].com[0]);
            ang.iter_mut().for_each(|a| *a = 0.0);
            if self.floating {
                ang[2] = 1.0;
            }
            for &k in &self.path[j] {
                ang[o + k] = self.sign[k];
            }
            for a in 0..dof {
                if jp[a] == [0.0, 0.0] && ang[a] == 0.0 {
                    continue;
                }
                for b in a..dof {
                    let v = link.mass * dot(jp[a], jp[b]) + link.inertia * ang[a] * ang[b];
                    m[(a, b)] += v;
                }
            }
        }
        for a in 0..dof {
            for b in 0..a {
                m[(a, b)] = m[(b, a)];
            }
        }
        m
    }

    /// Recursive Newton-Euler: generalized force needed for `(q, qd, qdd)`,
    /// with or without gravity.
    pub fn rnea(&self, q: &[f64], qd: &[f64], qdd: &[f64], gravity: bool) -> DVector<f64> {
        let kin = self.kinematics(q, qd, qdd);
        let g = if gravity { GRAVITY } else { 0.0 };
        let o = self.base_dof();
        // force on link j from its parent at the joint, and moment about the joint
        let mut force = vec![[0.0; 2]; self.n];
        let mut moment = vec![0.0; self.n];
        let mut tau = DVector::zeros(self.dof());
        for j in (0..self.n).rev() {
            let lk = &kin.links[j];
            let link = &self.links[j];
            let f_net = scale(add(lk.com[2], [0.0, g]), link.mass);
            let mut f = f_net;
            let mut n = link.inertia * lk.alpha + cross(sub(lk.com[0], lk.origin[0]), f_net);
            for &c in &self.children[j] {
                f = add(f, force[c]);
                n += moment[c] + cross(sub(kin.links[c].origin[0], lk.origin[0]), force[c]);
            }
            force[j] = f;
            moment[j] = n;
            tau[o + j] = self.sign[j] * n;
        }
        if self.floating {
            let base = kin.base;
            let mut f = scale(add(base[2], [0.0, g]), self.base_mass);
            let mut n = self.base_inertia * kin.base_theta[2];
            for j in (0..self.n).filter(|&j| self.parent[j].is_none()) {
                f = add(f, force[j]);
                n += moment[j] + cross(sub(kin.links[j].origin[0], base[0]), force[j]);
            }
            tau[0] = f[0];
            tau[1] = f[1];
            tau[2] = n;
        }
        tau
    }

    /// Gravitational potential energy.
    pub fn potential_energy(&self, q: &[f64]) -> f64 {
        let kin = self.positions(q);
        let mut v = self.base_mass * GRAVITY * kin.base[0][1];
        for (lk, link) in kin.links.iter().zip(&self.links) {
            v += link.mass * GRAVITY * lk.com[0][1];
        }
        v
    }
}

/// `M(q)`, `c = C(q, q̇) q̇` and `G(q)` of the manipulator equation.
#[derive(Debug, Clone)]
pub struct DynamicsTerms {
    pub mass: DMatrix<f64>,
    pub coriolis: DVector<f64>,
    pub gravity: DVector<f64>,
}

/// Dynamics terms in the robot's serial kinematic coordinates.
pub fn dynamics_terms(spec: &EmbodimentSpec, q: &[f64], qdot: &[f64]) -> Result<DynamicsTerms> {
    let model = Model::new(spec);
    model.check_dims(&[("q", q), ("qdot", qdot)])?;
    let zeros = vec![0.0; q.len()];
    Ok(DynamicsTerms {
        mass: model.mass_matrix(q),
        coriolis: model.rnea(q, qdot, &zeros, false),
        gravity: model.rnea(q, &zeros, &zeros, true),
    })
}

/// `τ = M q̈ + c + G`, computed in a single Newton-Euler sweep.
pub fn inverse_dynamics(spec: &EmbodimentSpec, q: &[f64], qdot: &[f64], qddot: &[f64]) -> Result<DVector<f64>> {
    let model = Model::new(spec);
    model.check_dims(&[("q", q), ("qdot", qdot), ("qddot", qddot)])?;
    Ok(model.rnea(q, qdot, qddot, true))
}

/// Rigid-body residual `Δτ = τ_T − τ_S` for two robots sharing one joint
/// convention.
pub fn dynamics_residual(
    source: &EmbodimentSpec,
    target: &EmbodimentSpec,
    q: &[f64],
    qdot: &[f64],
    qddot: &[f64],
) -> Result<DVector<f64>> {
    if source.dof() != target.dof() {
        return Err(Error::DimensionMismatch(format!(
            "source has {} dof, target has {}",
            source.dof(),
            target.dof()
        )));
    }
    Ok(inverse_dynamics(target, q, qdot, qddot)? - inverse_dynamics(source, q, qdot, qddot)?)
}

/// Same residual assembled term-wise as `ΔM q̈ + Δc + ΔG`.
pub fn dynamics_residual_termwise(
    source: &EmbodimentSpec,
    target: &EmbodimentSpec,
    q: &[f64],
    qdot: &[f64],
    qddot: &[f64],
) -> Result<DVector<f64>> {
    if source.dof() != target.dof() {
        return Err(Error::DimensionMismatch(format!(
            "source has {} dof, target has {}",
            source.dof(),
            target.dof()
        )));
    }
    let s = dynamics_terms(source, q, qdot)?;
    let t = dynamics_terms(target, q, qdot)?;
    let qdd = DVector::from_column_slice(qddot);
    Ok((t.mass - s.mass) * qdd + (t.coriolis - s.coriolis) + (t.gravity - s.gravity))
}

/// Keypoints: the base origin followed by every link tip, in world coordinates.
pub fn keypoints(model: &Model, q_serial_gen: &[f64]) -> Vec<V2> {
    let kin = model.positions(q_serial_gen);
    std::iter::once(kin.base[0])
        .chain(kin.links.iter().map(|l| l.tip[0]))
        .collect()
}
