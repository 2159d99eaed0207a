//! Reference motion clips at 50 Hz in the source joint space.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::path::Path;

use crate::align::AlignmentMaps;
use crate::embodiment::{BaseMode, EmbodimentSpec, SimState};
use crate::{Error, Result};

pub const FRAME_RATE: f64 = 50.0;
/// Reference frames shown to the policy at every step.
pub const LOOKAHEAD_FRAMES: usize = 4;
/// rad/s
pub const MAX_JOINT_VELOCITY: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionFrame {
    pub q_ref: Vec<f64>,
    /// (x, z, pitch)
    pub base_ref: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionClip {
    pub id: String,
    pub frame_rate: f64,
    pub frames: Vec<MotionFrame>,
}

impl MotionClip {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_joints(&self) -> usize {
        self.frames.first().map_or(0, |f| f.q_ref.len())
    }

    /// Seconds.
    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.frame_rate
    }

    /// `count` frames starting at `cursor`, holding the last frame past the end.
    pub fn window(&self, cursor: usize, count: usize) -> Vec<&MotionFrame> {
        let last = self.frames.len() - 1;
        (0..count).map(|k| &self.frames[(cursor + k).min(last)]).collect()
    }

    /// Largest joint change between consecutive frames.
    pub fn max_frame_delta(&self) -> f64 {
        self.frames
            .windows(2)
            .flat_map(|w| w[0].q_ref.iter().zip(&w[1].q_ref).map(|(a, b)| (b - a).abs()))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(format!("clip {}: {m}", self.id)));
        if self.frames.len() < 2 {
            return bad("needs at least 2 frames".into());
        }
        let n = self.n_joints();
        for (k, f) in self.frames.iter().enumerate() {
            if f.q_ref.len() != n {
                return bad(format!("frame {k} has {} joints, expected {n}", f.q_ref.len()));
            }
            let finite = f.q_ref.iter().chain(&f.base_ref).all(|v| v.is_finite());
            if !finite || f.q_ref.iter().any(|v| v.abs() > PI) {
                return bad(format!("frame {k} is non-finite or outside [-pi, pi]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionLibrary {
    pub clips: Vec<MotionClip>,
    pub total_frames: usize,
}

impl MotionLibrary {
    pub fn new(clips: Vec<MotionClip>) -> Result<MotionLibrary> {
        if clips.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        for c in &clips {
            c.validate()?;
        }
        let total_frames = clips.iter().map(MotionClip::n_frames).sum();
        Ok(MotionLibrary { clips, total_frames })
    }

    pub fn n_joints(&self) -> usize {
        self.clips[0].n_joints()
    }
}

/// Shape of generated motions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    /// Sinusoids summed per joint.
    pub harmonics: usize,
    /// Peak single-harmonic amplitude, rad.
    pub amplitude: f64,
    /// Hz, inclusive range of harmonic frequencies.
    pub freq_range: (f64, f64),
    /// Maximum |offset| of each joint's mean pose, rad.
    pub offset: f64,
}

impl Default for StyleParams {
    fn default() -> Self {
        StyleParams {
            harmonics: 3,
            amplitude: 0.35,
            freq_range: (0.2, 1.2),
            offset: 0.2,
        }
    }
}

impl StyleParams {
    /// Slow, small motions a PD controller can follow almost exactly.
    pub fn quasi_static() -> Self {
        StyleParams {
            harmonics: 1,
            amplitude: 0.15,
            freq_range: (0.1, 0.2),
            offset: 0.1,
        }
    }

    fn check(&self) -> Result<()> {
        let (lo, hi) = self.freq_range;
        let ok = self.harmonics > 0
            && self.amplitude >= 0.0
            && self.offset >= 0.0
            && self.amplitude * self.harmonics as f64 + self.offset < PI
            && lo > 0.0
            && lo <= hi
            && hi.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("bad style parameters {self:?}")))
        }
    }
}

/// Sum-of-sinusoid joint trajectories, rescaled about their offset so no
/// joint moves faster than [`MAX_JOINT_VELOCITY`].
pub fn generate_library(
    seed: u64,
    source: &EmbodimentSpec,
    n_clips: usize,
    clip_len_s: f64,
    style: &StyleParams,
) -> Result<MotionLibrary> {
    style.check()?;
    let n_frames = (clip_len_s * FRAME_RATE).round() as usize;
    if n_clips == 0 || !(clip_len_s > 0.0) || n_frames < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least one clip of at least 2 frames (clips={n_clips}, len={clip_len_s}s)"
        )));
    }
    let n = source.n_joints;
    let standing = SimState::rest(source).base_pose;
    let legs: Vec<(Option<usize>, Option<usize>)> = ["L_", "R_"]
        .iter()
        .map(|p| (source.joint_index(&format!("{p}hip_pitch")), source.joint_index(&format!("{p}knee"))))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / FRAME_RATE;
    let cap = MAX_JOINT_VELOCITY * dt;
    let mut clips = Vec::with_capacity(n_clips);
    for c in 0..n_clips {
        let offsets: Vec<f64> = (0..n).map(|_| rng.random_range(-style.offset..=style.offset)).collect();
        let waves: Vec<Vec<(f64, f64, f64)>> = (0..n)
            .map(|_| {
                (0..style.harmonics)
                    .map(|_| {
                        (
                            rng.random_range(0.0..=style.amplitude),
                            rng.random_range(style.freq_range.0..=style.freq_range.1),
                            rng.random_range(0.0..TAU),
                        )
                    })
                    .collect()
            })
            .collect();
        let osc: Vec<Vec<f64>> = (0..n_frames)
            .map(|k| {
                let t = k as f64 * dt;
                waves
                    .iter()
                    .map(|w| w.iter().map(|(a, f, ph)| a * (TAU * f * t + ph).sin()).sum())
                    .collect()
            })
            .collect();
        let peak_delta = osc
            .windows(2)
            .flat_map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (b - a).abs()))
            .fold(0.0, f64::max);
        let scale = if peak_delta > cap { 0.999 * cap / peak_delta } else { 1.0 };
        let frames = osc
            .iter()
            .map(|o| {
                let q_ref: Vec<f64> = o.iter().zip(&offsets).map(|(v, off)| off + scale * v).collect();
                let base_ref = match source.base_mode {
                    BaseMode::Fixed => [0.0; 3],
                    BaseMode::FloatingPlanar => base_from_legs(&q_ref, &legs, standing),
                };
                MotionFrame { q_ref, base_ref }
            })
            .collect();
        clips.push(MotionClip {
            id: format!("clip{c:04}"),
            frame_rate: FRAME_RATE,
            frames,
        });
    }
    MotionLibrary::new(clips)
}

/// Base pose implied by the mean leg phase: hips swing the base forward and
/// pitch it, bent knees lower it.
fn base_from_legs(q: &[f64], legs: &[(Option<usize>, Option<usize>)], standing: [f64; 3]) -> [f64; 3] {
    let mean = |pick: fn(&(Option<usize>, Option<usize>)) -> Option<usize>| {
        let v: Vec<f64> = legs.iter().filter_map(pick).map(|i| q[i]).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let hip = mean(|l| l.0);
    let knee = mean(|l| l.1);
    [
        standing[0] + 0.1 * hip,
        standing[1] - 0.05 * (1.0 - knee.cos()),
        standing[2] + 0.2 * hip,
    ]
}

/// Clip in the target's actuated coordinates, `q_target = PhiPlus q_ref`,
/// expanded to every target joint (redundant joints held at 0).
pub fn retarget_to_target(clip: &MotionClip, maps: &AlignmentMaps) -> Result<MotionClip> {
    let frames = clip
        .frames
        .iter()
        .map(|f| {
            let mapped = crate::align::unalign_action(maps, &f.q_ref)?;
            Ok(MotionFrame {
                q_ref: maps.expand_action(&mapped),
                base_ref: f.base_ref,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MotionClip {
        id: clip.id.clone(),
        frame_rate: clip.frame_rate,
        frames,
    })
}

pub fn retarget_library(library: &MotionLibrary, maps: &AlignmentMaps) -> Result<MotionLibrary> {
    let clips = library
        .clips
        .iter()
        .map(|c| retarget_to_target(c, maps))
        .collect::<Result<Vec<_>>>()?;
    MotionLibrary::new(clips)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow<'a> {
    pub clip: usize,
    pub cursor: usize,
    pub frames: Vec<&'a MotionFrame>,
}

/// Uniform clip, uniform start with at least one frame after it.
pub fn sample_start<R: Rng>(library: &MotionLibrary, rng: &mut R) -> Result<(usize, usize)> {
    if library.clips.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    let clip = rng.random_range(0..library.clips.len());
    let cursor = rng.random_range(0..library.clips[clip].n_frames() - 1);
    Ok((clip, cursor))
}

pub fn sample_reference<'a, R: Rng>(
    library: &'a MotionLibrary,
    rng: &mut R,
    horizon_frames: usize,
) -> Result<ReferenceWindow<'a>> {
    let (clip, cursor) = sample_start(library, rng)?;
    Ok(ReferenceWindow {
        clip,
        cursor,
        frames: library.clips[clip].window(cursor, horizon_frames),
    })
}

/// Whole clips in seeded random order until `frame_budget` is spent; the
/// last clip is truncated to fit.
pub fn subsample_library(library: &MotionLibrary, frame_budget: usize, seed: u64) -> Result<MotionLibrary> {
    if frame_budget < 2 {
        return Err(Error::BudgetTooSmall(frame_budget));
    }
    if frame_budget >= library.total_frames {
        return Ok(library.clone());
    }
    let mut order: Vec<usize> = (0..library.clips.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut left = frame_budget;
    let mut clips = Vec::new();
    for i in order {
        if left < 2 {
            break;
        }
        let mut clip = library.clips[i].clone();
        clip.frames.truncate(left);
        left -= clip.n_frames();
        clips.push(clip);
    }
    MotionLibrary::new(clips)
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    frame_rate: f64,
    n_joints: usize,
    clips: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    n_frames: usize,
    file: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `manifest.json` and one little-endian frame-major `.bin` per clip.
pub fn save_library(library: &MotionLibrary, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for clip in &library.clips {
        let file = format!("{}.bin", clip.id);
        let mut bytes = Vec::with_capacity(clip.n_frames() * (clip.n_joints() + 3) * 8);
        for f in &clip.frames {
            for v in f.q_ref.iter().chain(&f.base_ref) {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let path = dir.join(&file);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            id: clip.id.clone(),
            n_frames: clip.n_frames(),
            file,
        });
    }
    let manifest = Manifest {
        frame_rate: FRAME_RATE,
        n_joints: library.n_joints(),
        clips: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn load_library(dir: impl AsRef<Path>) -> Result<MotionLibrary> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let stride = manifest.n_joints + 3;
    let mut clips = Vec::new();
    for entry in manifest.clips {
        let path = dir.join(&entry.file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() != entry.n_frames * stride * 8 {
            return Err(Error::InvalidParams(format!(
                "{} holds {} bytes, expected {}",
                entry.file,
                bytes.len(),
                entry.n_frames * stride * 8
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let frames = values
            .chunks_exact(stride)
            .map(|f| MotionFrame {
                q_ref: f[..manifest.n_joints].to_vec(),
                base_ref: [f[stride - 3], f[stride - 2], f[stride - 1]],
            })
            .collect();
        clips.push(MotionClip {
            id: entry.id,
            frame_rate: manifest.frame_rate,
            frames,
        });
    }
    MotionLibrary::new(clips)
}
