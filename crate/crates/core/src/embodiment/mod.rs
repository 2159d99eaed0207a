//! Synthetic planar robots: their description, rigid-body dynamics and a
//! PD-controlled simulator.

mod dynamics;
mod generate;
mod sim;
mod spec;

pub use dynamics::{
    dynamics_residual, dynamics_residual_termwise, dynamics_terms, inverse_dynamics, keypoints,
    DynamicsTerms, Kinematics, LinkKinematics, Model,
};
pub use generate::{generate_embodiment, FamilyParams};
pub use sim::{
    step, SimState, Simulator, CONTACT_DAMPING, CONTACT_FRICTION, CONTACT_STIFFNESS, DECIMATION,
    PHYSICS_DT,
};
pub use spec::{
    BaseInertial, BaseMode, EmbodimentSpec, HipCoupling, JointSpec, LinkSpec, PdGains,
    DEFAULT_TORQUE_LIMIT,
};
