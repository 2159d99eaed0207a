use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dynamics::Model;
use super::spec::{BaseMode, EmbodimentSpec};
use crate::{Error, Result};

/// Ground penalty stiffness, N/m.
pub const CONTACT_STIFFNESS: f64 = 5000.0;
/// Ground penalty damping, N·s/m.
pub const CONTACT_DAMPING: f64 = 50.0;
/// Coulomb cap on the tangential contact force.
pub const CONTACT_FRICTION: f64 = 0.8;

/// Physics step, s.
pub const PHYSICS_DT: f64 = 0.002;
/// Physics steps per 50 Hz control step.
pub const DECIMATION: usize = 10;

/// Simulator state. Joint quantities are in the robot's actuated coordinates;
/// the base is tracked separately (and stays at rest in fixed-base mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    /// (x, z, pitch)
    pub base_pose: [f64; 3],
    pub base_vel: [f64; 3],
    pub last_action: Vec<f64>,
    pub contact_flags: Vec<bool>,
    /// External generalized force, in serial coordinates (base first when floating).
    pub tau_ext: Vec<f64>,
    pub time: f64,
}

impl SimState {
    /// Joints at zero, at rest. Floating robots start with their lowest
    /// contact point on the ground.
    pub fn rest(spec: &EmbodimentSpec) -> SimState {
        let n = spec.n_joints;
        let mut base_pose = [0.0; 3];
        if spec.base_mode == BaseMode::FloatingPlanar {
            let model = Model::new(spec);
            let kin = model.positions(&vec![0.0; model.dof()]);
            let lowest = spec
                .contact_points
                .iter()
                .map(|&c| kin.links[c].tip[0][1])
                .fold(0.0_f64, f64::min);
            base_pose[1] = -lowest;
        }
        SimState {
            q: vec![0.0; n],
            qdot: vec![0.0; n],
            base_pose,
            base_vel: [0.0; 3],
            last_action: vec![0.0; n],
            contact_flags: vec![false; spec.contact_points.len()],
            tau_ext: vec![0.0; spec.dof()],
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qdot).chain(&self.base_pose).chain(&self.base_vel).all(|v| v.is_finite())
    }
}

/// A robot ready to be stepped: the dynamics model plus the actuator maps.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub model: Model,
    /// `q_act = A q_serial`
    actuator: Option<(DMatrix<f64>, DMatrix<f64>)>,
    kp: Vec<f64>,
    kd: Vec<f64>,
    torque_limits: Vec<f64>,
    contacts: Vec<usize>,
}

impl Simulator {
    pub fn new(spec: &EmbodimentSpec) -> Simulator {
        let a = spec.actuator_map();
        let actuator = if a == DMatrix::identity(spec.n_joints, spec.n_joints) {
            None
        } else {
            let inv = a.clone().try_inverse().expect("actuator map is invertible");
            Some((a, inv))
        };
        Simulator {
            model: Model::new(spec),
            actuator,
            kp: spec.pd_gains.iter().map(|g| g.kp).collect(),
            kd: spec.pd_gains.iter().map(|g| g.kd).collect(),
            torque_limits: spec.torque_limits.clone(),
            contacts: if spec.base_mode == BaseMode::FloatingPlanar {
                spec.contact_points.clone()
            } else {
                Vec::new()
            },
        }
    }

    pub fn n_joints(&self) -> usize {
        self.model.n
    }

    /// Serial joint angles from actuated ones.
    pub fn to_serial(&self, q_act: &[f64]) -> Vec<f64> {
        match &self.actuator {
            None => q_act.to_vec(),
            Some((_, inv)) => (inv * DVector::from_column_slice(q_act)).as_slice().to_vec(),
        }
    }

    pub fn to_actuated(&self, q_serial: &[f64]) -> Vec<f64> {
        match &self.actuator {
            None => q_serial.to_vec(),
            Some((a, _)) => (a * DVector::from_column_slice(q_serial)).as_slice().to_vec(),
        }
    }

    /// Map an actuator-space torque into serial generalized forces (`Aᵀ τ`).
    pub fn actuator_torque_to_serial(&self, tau_act: &[f64]) -> Vec<f64> {
        match &self.actuator {
            None => tau_act.to_vec(),
            Some((a, _)) => (a.transpose() * DVector::from_column_slice(tau_act)).as_slice().to_vec(),
        }
    }

    /// Generalized serial coordinates `[base?, joints]` of a state.
    pub fn generalized_q(&self, state: &SimState) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.model.dof());
        if self.model.floating {
            q.extend_from_slice(&state.base_pose);
        }
        q.extend(self.to_serial(&state.q));
        q
    }

    pub fn generalized_qdot(&self, state: &SimState) -> Vec<f64> {
        let mut qd = Vec::with_capacity(self.model.dof());
        if self.model.floating {
            qd.extend_from_slice(&state.base_vel);
        }
        qd.extend(self.to_serial(&state.qdot));
        qd
    }

    /// Summed ground normal force over all contact points, N.
    pub fn contact_normal_force(&self, state: &SimState) -> f64 {
        if self.contacts.is_empty() {
            return 0.0;
        }
        let q = self.generalized_q(state);
        let qd = self.generalized_qdot(state);
        let kin = self.model.kinematics(&q, &qd, &vec![0.0; q.len()]);
        self.contacts
            .iter()
            .map(|&c| {
                let [p, v, _] = kin.links[c].tip;
                if p[1] >= 0.0 {
                    0.0
                } else {
                    (CONTACT_STIFFNESS * -p[1] - CONTACT_DAMPING * v[1]).max(0.0)
                }
            })
            .sum()
    }

    /// One semi-implicit Euler step under PD position control.
    pub fn step(&self, state: &SimState, joint_targets: &[f64], dt: f64) -> Result<SimState> {
        let n = self.model.n;
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(Error::InvalidParams(format!("dt {dt} outside (0, 0.01]")));
        }
        if joint_targets.len() != n || state.q.len() != n || state.qdot.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {n} joint targets/positions/velocities"
            )));
        }
        if state.tau_ext.len() != self.model.dof() {
            return Err(Error::DimensionMismatch("tau_ext length differs from dof".into()));
        }
        if joint_targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFiniteState("joint targets are not finite".into()));
        }
        let o = self.model.base_dof();
        let q = self.generalized_q(state);
        let qd = self.generalized_qdot(state);

        let tau_act: Vec<f64> = (0..n)
            .map(|j| {
                let t = self.kp[j] * (joint_targets[j] - state.q[j]) - self.kd[j] * state.qdot[j];
                t.clamp(-self.torque_limits[j], self.torque_limits[j])
            })
            .collect();
        let mut tau = DVector::from_column_slice(&state.tau_ext);
        for (j, t) in self.actuator_torque_to_serial(&tau_act).into_iter().enumerate() {
            tau[o + j] += t;
        }

        let mut contact_flags = vec![false; self.contacts.len()];
        if !self.contacts.is_empty() {
            let zeros = vec![0.0; q.len()];
            let kin = self.model.kinematics(&q, &qd, &zeros);
            for (ci, &c) in self.contacts.iter().enumerate() {
                let [p, v, _] = kin.links[c].tip;
                if p[1] >= 0.0 {
                    continue;
                }
                let normal = (CONTACT_STIFFNESS * -p[1] - CONTACT_DAMPING * v[1]).max(0.0);
                let cap = CONTACT_FRICTION * normal;
                let tangential = (-CONTACT_DAMPING * v[0]).clamp(-cap, cap);
                contact_flags[ci] = normal > 0.0;
                let jac = self.model.point_jacobian(&kin, c, p);
                for (k, col) in jac.iter().enumerate() {
                    tau[k] += col[0] * tangential + col[1] * normal;
                }
            }
        }

        let zeros = vec![0.0; q.len()];
        let bias = self.model.rnea(&q, &qd, &zeros, true);
        let mass = self.model.mass_matrix(&q);
        let chol = mass
            .cholesky()
            .ok_or_else(|| Error::NonFiniteState("mass matrix lost positive definiteness".into()))?;
        let qdd = chol.solve(&(tau - bias));

        let qd_new: Vec<f64> = (0..q.len()).map(|i| qd[i] + dt * qdd[i]).collect();
        let q_new: Vec<f64> = (0..q.len()).map(|i| q[i] + dt * qd_new[i]).collect();

        let mut next = SimState {
            q: self.to_actuated(&q_new[o..]),
            qdot: self.to_actuated(&qd_new[o..]),
            base_pose: state.base_pose,
            base_vel: state.base_vel,
            last_action: state.last_action.clone(),
            contact_flags,
            tau_ext: state.tau_ext.clone(),
            time: state.time + dt,
        };
        if self.model.floating {
            next.base_pose = [q_new[0], q_new[1], q_new[2]];
            next.base_vel = [qd_new[0], qd_new[1], qd_new[2]];
        }
        if !next.is_finite() {
            return Err(Error::NonFiniteState(format!("state diverged at t = {:.3}s", next.time)));
        }
        Ok(next)
    }
}

/// Stateless convenience wrapper around [`Simulator::step`].
pub fn step(spec: &EmbodimentSpec, state: &SimState, joint_targets: &[f64], dt: f64) -> Result<SimState> {
    Simulator::new(spec).step(state, joint_targets, dt)
}
