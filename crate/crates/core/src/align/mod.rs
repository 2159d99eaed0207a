//! Two-level kinematic alignment between a target robot and the source
//! joint space.
//!
//! Level 1 reorders observation blocks into the source layout. Level 2 maps
//! joint vectors with `Phi = J D^-1 S` and maps source actions back with
//! `PhiPlus = S^T D J^-1`, where `S` scatters mapped target joints into
//! source slots, `D` undoes inclined-hip mixing and `J` restores serial
//! angles from closed-chain coordinates.

mod layout;
mod maps;

pub use layout::{BlockKind, LayoutBlock, ObservationLayout};
pub use maps::{
    align_observation, build_alignment, build_chain_coupling, build_hip_decoupling, build_joint_map,
    build_scatter, compose_alignment, is_redundant_name, unalign_action, AlignmentMaps, JointMap,
    ObservationAligner, INVERTIBILITY_TOL,
};
