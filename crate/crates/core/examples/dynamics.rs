//! Rigid-body terms of the source and target robots and the torque residual
//! the policy has to absorb after alignment. Finishes with a short PD hold.

use crossbody::embodiment::{dynamics_residual, dynamics_terms, SimState, Simulator, DECIMATION, PHYSICS_DT};
use crossbody::rl::transfer_pair;

fn main() -> crossbody::Result<()> {
    let (source, _) = transfer_pair(0)?;
    // same joint order as the source, only heavier
    let heavy = source.with_mass_scale(1.3);
    let n = source.dof();
    let q: Vec<f64> = (0..n).map(|j| 0.3 * ((j as f64) * 0.7).sin()).collect();
    let qd = vec![0.5; n];
    let qdd = vec![1.0; n];

    let t = dynamics_terms(&source, &q, &qd)?;
    println!("M diagonal {:.4?}", t.mass.diagonal().as_slice());
    println!("gravity    {:.3?}", t.gravity.as_slice());
    let dtau = dynamics_residual(&source, &heavy, &q, &qd, &qdd)?;
    println!("delta tau (30% heavier) {:.3?}", dtau.as_slice());

    let sim = Simulator::new(&source);
    let mut state = SimState::rest(&source);
    let target = vec![0.2; source.n_joints];
    for _ in 0..50 * DECIMATION {
        state = sim.step(&state, &target, PHYSICS_DT)?;
    }
    let err: f64 = state.q.iter().map(|q| (q - 0.2).abs()).fold(0.0, f64::max);
    println!("PD hold at 0.2 rad after {:.1} s: max error {err:.4} rad", state.time);
    Ok(())
}
