//! Actor and critic networks (MLP or causal transformer) over windows of
//! proprioceptive and reference observations, with a small tape-based
//! reverse-mode differentiation engine.

mod dist;
mod gradcheck;
mod graph;
mod model;
mod optim;
mod params;
mod tensor;

pub use dist::{entropy, log_prob, sample_action};
pub use gradcheck::{gradient_check, GradCheck, Head};
pub use graph::{gelu, Graph, NodeId};
pub use model::{actor_forward, backward, critic_forward, ForwardCache};
pub use optim::Adam;
pub use params::{backbone_sites, Backbone, Gradients, NetConfig, Param, PolicyParams, LOG_STD_INIT};
pub use tensor::{matmul_nn, matmul_nt, Tensor};

#[cfg(test)]
mod tests;
