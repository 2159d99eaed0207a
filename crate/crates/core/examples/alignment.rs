//! Build the alignment maps for the transfer pair and push one target pose
//! through them.

use crossbody::align::{build_alignment, unalign_action};
use crossbody::rl::transfer_pair;

fn main() -> crossbody::Result<()> {
    let (source, target) = transfer_pair(0)?;
    let maps = build_alignment(&source, &target)?;
    println!("Phi ({}x{}):", maps.phi.nrows(), maps.phi.ncols());
    for r in 0..maps.phi.nrows() {
        let row: Vec<String> = (0..maps.phi.ncols()).map(|c| format!("{:6.3}", maps.phi[(r, c)])).collect();
        println!("  {} | {}", row.join(" "), source.joint_semantic_names[r]);
    }
    println!("|PhiPlus Phi - I|_inf = {:.1e}", maps.invertibility_residual());

    let q_target: Vec<f64> = (0..target.n_joints).map(|j| 0.1 * (j as f64 + 1.0)).collect();
    let q_source = maps.to_source(&q_target)?;
    let back = unalign_action(&maps, &q_source)?;
    println!("target pose  {q_target:.2?}");
    println!("source space {q_source:.3?}");
    println!("and back     {back:.3?}");
    Ok(())
}
