//! Generate the 8-joint source robot and its transfer target, then print how
//! they differ.
//!
//! ```text
//! cargo run --release --example embodiments -- 3
//! ```

use crossbody::rl::transfer_pair;

fn main() -> crossbody::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (source, target) = transfer_pair(seed)?;

    for spec in [&source, &target] {
        let mass: f64 = spec.links.iter().map(|l| l.mass).sum();
        println!("{} ({:?}, {} joints, {mass:.2} kg)", spec.id, spec.base_mode, spec.n_joints);
        for (j, name) in spec.joint_semantic_names.iter().enumerate() {
            let l = &spec.links[j];
            println!(
                "  {j}: {name:12} parent {:2}  len {:.3} m  mass {:.3} kg",
                spec.topology[j].parent, l.length, l.mass
            );
        }
        if let Some(h) = &spec.hip_coupling {
            println!("  hips inclined by {:.3} rad: left {:?}, right {:?}", h.alpha, h.left_pair, h.right_pair);
        }
    }
    Ok(())
}
