use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    BaseAngVel,
    ProjectedGravity,
    JointPos,
    JointVel,
    LastAction,
    RefJointWindow,
    RefBaseWindow,
}

impl BlockKind {
    pub const ALL: [BlockKind; 7] = [
        BlockKind::BaseAngVel,
        BlockKind::ProjectedGravity,
        BlockKind::JointPos,
        BlockKind::JointVel,
        BlockKind::LastAction,
        BlockKind::RefJointWindow,
        BlockKind::RefBaseWindow,
    ];

    /// Blocks carrying one value per actuated joint (per slice).
    pub fn is_joint_valued(self) -> bool {
        matches!(self, BlockKind::JointPos | BlockKind::JointVel | BlockKind::LastAction)
    }

    pub fn is_reference(self) -> bool {
        matches!(self, BlockKind::RefJointWindow | BlockKind::RefBaseWindow)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutBlock {
    pub name: BlockKind,
    pub width: usize,
    pub joint_valued: bool,
}

/// Ordered observation blocks of one embodiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservationLayout {
    pub blocks: Vec<LayoutBlock>,
}

impl ObservationLayout {
    /// Proprioception first, then `frames` lookahead reference frames of
    /// joint angles and base (x, z, pitch).
    pub fn standard(n_joints: usize, frames: usize) -> ObservationLayout {
        use BlockKind::*;
        let block = |name: BlockKind, width| LayoutBlock {
            name,
            width,
            joint_valued: name.is_joint_valued(),
        };
        ObservationLayout {
            blocks: vec![
                block(BaseAngVel, 1),
                block(ProjectedGravity, 2),
                block(JointPos, n_joints),
                block(JointVel, n_joints),
                block(LastAction, n_joints),
                block(RefJointWindow, frames * n_joints),
                block(RefBaseWindow, frames * 3),
            ],
        }
    }

    pub fn validate(&self, n_joints: usize) -> Result<()> {
        let mut seen = HashSet::new();
        for b in &self.blocks {
            if !seen.insert(b.name) {
                return Err(Error::LayoutMismatch(format!("block {:?} appears twice", b.name)));
            }
            if b.width == 0 {
                return Err(Error::LayoutMismatch(format!("block {:?} has zero width", b.name)));
            }
            if b.joint_valued != b.name.is_joint_valued() {
                return Err(Error::LayoutMismatch(format!("block {:?} has the wrong joint_valued flag", b.name)));
            }
            if b.joint_valued && b.width % n_joints != 0 {
                return Err(Error::LayoutMismatch(format!(
                    "joint block {:?} width {} not divisible by {n_joints} joints",
                    b.name, b.width
                )));
            }
        }
        Ok(())
    }

    pub fn total_width(&self) -> usize {
        self.blocks.iter().map(|b| b.width).sum()
    }

    /// Width of the proprioceptive (non-reference) blocks.
    pub fn proprio_width(&self) -> usize {
        self.blocks.iter().filter(|b| !b.name.is_reference()).map(|b| b.width).sum()
    }

    pub fn reference_width(&self) -> usize {
        self.total_width() - self.proprio_width()
    }

    pub fn block(&self, name: BlockKind) -> Option<&LayoutBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// `(offset, width)` of a block.
    pub fn span(&self, name: BlockKind) -> Option<(usize, usize)> {
        let mut off = 0;
        for b in &self.blocks {
            if b.name == name {
                return Some((off, b.width));
            }
            off += b.width;
        }
        None
    }

    /// Copy with the reference block widths taken from `other`, for targets
    /// fed reference windows already expressed in the source joint space.
    pub fn with_reference_from(&self, other: &ObservationLayout) -> ObservationLayout {
        let mut out = self.clone();
        for b in &mut out.blocks {
            if b.name.is_reference() {
                if let Some(o) = other.block(b.name) {
                    b.width = o.width;
                }
            }
        }
        out
    }

    /// Lay out named block contents in this layout's order.
    pub fn assemble(&self, parts: &[(BlockKind, &[f64])], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for b in &self.blocks {
            let (_, data) = parts
                .iter()
                .find(|(k, _)| *k == b.name)
                .ok_or_else(|| Error::LayoutMismatch(format!("no data for block {:?}", b.name)))?;
            if data.len() != b.width {
                return Err(Error::DimensionMismatch(format!(
                    "block {:?} has {} values, layout says {}",
                    b.name,
                    data.len(),
                    b.width
                )));
            }
            out.extend_from_slice(data);
        }
        Ok(())
    }
}
