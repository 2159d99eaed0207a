//! Generate a motion library, retarget it to the transfer target, cut it to
//! a frame budget and save it.
//!
//! ```text
//! cargo run --release --example motions -- /tmp/lib
//! ```

use crossbody::align::build_alignment;
use crossbody::motion::{generate_library, load_library, retarget_library, save_library, subsample_library, StyleParams};
use crossbody::rl::transfer_pair;

fn main() -> crossbody::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("crossbody-lib").display().to_string());
    let (source, target) = transfer_pair(0)?;
    let lib = generate_library(0, &source, 40, 4.0, &StyleParams::default())?;
    println!("{} clips, {} frames, max per-frame step {:.3} rad", lib.clips.len(), lib.total_frames,
        lib.clips.iter().map(|c| c.max_frame_delta()).fold(0.0, f64::max));

    let maps = build_alignment(&source, &target)?;
    let on_target = retarget_library(&lib, &maps)?;
    println!("retargeted: {} joints per frame", on_target.n_joints());

    let small = subsample_library(&lib, 2_000, 0)?;
    println!("2k budget: {} clips, {} frames", small.clips.len(), small.total_frames);

    save_library(&small, &dir)?;
    let back = load_library(&dir)?;
    assert_eq!(back, small);
    println!("saved to {dir}");
    Ok(())
}
