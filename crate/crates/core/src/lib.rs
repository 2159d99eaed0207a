//! Cross-embodiment transfer of whole-body tracking policies, at desk scale.
//!
//! A pretrained actor-critic is moved onto a robot with a different joint
//! layout in two steps. [`align`] builds the linear maps that carry target
//! observations into the source joint space and source actions back out
//! again. [`peft`] then freezes the pretrained weights and injects small
//! trainable factors (LoRA, adapters or prefixes) that absorb the remaining
//! dynamics gap while PPO ([`rl`]) optimises them on the target.
//!
//! The robots are synthetic planar articulated chains simulated by
//! [`embodiment`]; reference motions come from [`motion`]; networks and
//! their reverse-mode gradients live in [`netcore`]; deployment-style
//! metrics and reports live in [`evalreport`]. The `a2a` binary wraps the
//! whole pipeline behind [`cli`].

pub mod align;
pub mod cli;
pub mod embodiment;
mod error;
pub mod evalreport;
pub mod linalg;
pub mod motion;
pub mod netcore;
pub mod peft;
pub mod rl;

pub use error::{Error, Result};

/// Standard gravity, m/s², acting along -z.
pub const GRAVITY: f64 = 9.81;
