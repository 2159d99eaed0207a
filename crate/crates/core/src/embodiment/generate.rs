use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{
    BaseInertial, BaseMode, EmbodimentSpec, HipCoupling, JointSpec, LinkSpec, PdGains,
    DEFAULT_TORQUE_LIMIT,
};
use crate::align::ObservationLayout;
use crate::motion::LOOKAHEAD_FRAMES;
use crate::{Error, Result};

/// Knobs of the synthetic robot family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    /// Inclusive joint-count range.
    pub n_joints_range: (usize, usize),
    /// Number of left/right leg pairs hanging from the base.
    pub leg_pairs: usize,
    pub with_hip_coupling: bool,
    pub with_chain_coupling: bool,
    /// Inclusive range of the per-robot mass multiplier.
    pub mass_scale_range: (f64, f64),
    pub base_mode: BaseMode,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams {
            n_joints_range: (8, 8),
            leg_pairs: 1,
            with_hip_coupling: false,
            with_chain_coupling: false,
            mass_scale_range: (1.0, 1.0),
            base_mode: BaseMode::Fixed,
        }
    }
}

impl FamilyParams {
    /// A plain serial chain with a fixed base.
    pub fn serial_chain(n: usize) -> Self {
        FamilyParams {
            n_joints_range: (n, n),
            leg_pairs: 0,
            ..Default::default()
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidFamilyParams(m.to_string()));
        let (lo, hi) = self.n_joints_range;
        if lo > hi {
            return bad("n_joints_range is empty");
        }
        if lo < 2 || hi > 16 {
            return bad("joint counts must lie in [2, 16]");
        }
        if self.leg_pairs > 0 && lo < 4 * self.leg_pairs {
            return bad("each leg pair needs at least 4 joints");
        }
        if self.with_hip_coupling && self.leg_pairs == 0 {
            return bad("hip coupling requires at least one leg pair");
        }
        let (mlo, mhi) = self.mass_scale_range;
        if !(mlo > 0.0 && mlo <= mhi && mhi.is_finite()) {
            return bad("mass_scale_range must be a non-empty positive interval");
        }
        Ok(())
    }
}

/// kg·m² added to every generated link.
pub const ROTOR_INERTIA: f64 = 0.01;

const LEG_PARTS: [&str; 4] = ["hip_pitch", "hip_roll", "knee", "ankle"];

fn leg_prefix(side: char, pair: usize) -> String {
    if pair == 0 {
        format!("{side}_")
    } else {
        format!("{side}{}_", pair + 1)
    }
}

/// Deterministic synthetic robot drawn from the family.
pub fn generate_embodiment(seed: u64, family: &FamilyParams) -> Result<EmbodimentSpec> {
    family.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = family.n_joints_range;
    let n = rng.random_range(lo..=hi);
    let mass_scale = if family.mass_scale_range.0 == family.mass_scale_range.1 {
        family.mass_scale_range.0
    } else {
        rng.random_range(family.mass_scale_range.0..=family.mass_scale_range.1)
    };

    // (parent, name, nominal length)
    let mut joints: Vec<(i32, String, f64)> = Vec::with_capacity(n);
    let mut hip_pairs = Vec::new();
    if family.leg_pairs == 0 {
        for i in 0..n {
            let len = rng.random_range(0.2..0.35);
            joints.push((i as i32 - 1, format!("arm_{}", i + 1), len));
        }
    } else {
        let legs = 2 * family.leg_pairs;
        // Joints per leg: at least the two hip joints, then knee and ankle while
        // joints remain; whatever is left becomes a torso/arm chain on the base.
        let per_leg = (n / legs).min(LEG_PARTS.len());
        for pair in 0..family.leg_pairs {
            for side in ['L', 'R'] {
                let prefix = leg_prefix(side, pair);
                let first = joints.len();
                for (k, part) in LEG_PARTS.iter().take(per_leg).enumerate() {
                    let len = match *part {
                        "hip_pitch" => 0.05,
                        "hip_roll" => rng.random_range(0.28..0.38),
                        "knee" => rng.random_range(0.26..0.36),
                        _ => rng.random_range(0.08..0.12),
                    };
                    let parent = if k == 0 { -1 } else { (first + k - 1) as i32 };
                    joints.push((parent, format!("{prefix}{part}"), len));
                }
                hip_pairs.push((first, first + 1));
            }
        }
        let mut prev = -1;
        let mut extra = 0;
        while joints.len() < n {
            let name = if extra == 0 { "torso".to_string() } else { format!("arm_{extra}") };
            let len = rng.random_range(0.15..0.3);
            let idx = joints.len() as i32;
            joints.push((prev, name, len));
            prev = idx;
            extra += 1;
        }
    }

    let links = joints
        .iter()
        .map(|(_, _, len)| {
            let density = rng.random_range(2.5..3.5); // kg per metre
            let mass = (density * len).max(0.15) * mass_scale;
            let com_offset = len * rng.random_range(0.4..0.6);
            // Lumped rotor inertia keeps short links stable under the default
            // PD gains at the 2 ms physics step (dt * kd / I well below 1).
            let inertia = mass * len * len / 12.0 + ROTOR_INERTIA * mass_scale;
            LinkSpec {
                length: *len,
                mass,
                com_offset,
                inertia,
            }
        })
        .collect::<Vec<_>>();
    let topology = joints
        .iter()
        .map(|(p, _, _)| JointSpec {
            parent: *p,
            axis_sign: 1.0,
        })
        .collect();

    let hip_coupling = if family.with_hip_coupling {
        Some(HipCoupling {
            left_pair: hip_pairs[0],
            right_pair: hip_pairs[1],
            alpha: rng.random_range(0.1..1.2),
        })
    } else {
        None
    };

    let names: Vec<String> = joints.iter().map(|(_, name, _)| name.clone()).collect();
    let parents: Vec<i32> = joints.iter().map(|(p, _, _)| *p).collect();
    let chain_coupling = family.with_chain_coupling.then(|| {
        // Parallel-linkage style coupling: each closed-chain joint row mixes in
        // its parent's angle. Ankles when present, otherwise the last joint.
        let mut rows: Vec<usize> = (0..n).filter(|&i| names[i].ends_with("ankle")).collect();
        if rows.is_empty() {
            rows.push(n - 1);
        }
        let mut j = DMatrix::identity(n, n);
        for r in rows {
            j[(r, r)] = rng.random_range(0.8..1.2);
            if parents[r] >= 0 {
                j[(r, parents[r] as usize)] = rng.random_range(-0.3..0.3);
            }
        }
        j
    });

    let base_inertial = match family.base_mode {
        BaseMode::Fixed => None,
        BaseMode::FloatingPlanar => Some(BaseInertial {
            mass: 4.0 * mass_scale,
            inertia: 0.08 * mass_scale,
        }),
    };

    let mut spec = EmbodimentSpec {
        id: format!("synthetic-{seed}-n{n}"),
        topology,
        n_joints: n,
        links,
        base_mode: family.base_mode,
        base_inertial,
        joint_semantic_names: names,
        hip_coupling,
        chain_coupling,
        observation_layout: ObservationLayout::standard(n, LOOKAHEAD_FRAMES),
        pd_gains: vec![PdGains::default(); n],
        torque_limits: vec![DEFAULT_TORQUE_LIMIT; n],
        contact_points: Vec::new(),
    };
    if family.base_mode == BaseMode::FloatingPlanar {
        spec.contact_points = spec.leaves();
    }
    spec.validate()?;
    Ok(spec)
}
