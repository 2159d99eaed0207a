//! Deployment-style evaluation: a scripted oracle and an untrained policy on
//! whole clips, summarised into metrics.csv and bar charts.

use crossbody::embodiment::{generate_embodiment, FamilyParams};
use crossbody::evalreport::{compute_metrics, evaluate_library, pd_steady_state_bound, write_report, ReferenceOracle};
use crossbody::motion::{generate_library, StyleParams};
use crossbody::netcore::PolicyParams;
use crossbody::rl::{NetShape, TaskSetup};

fn main() -> crossbody::Result<()> {
    let robot = generate_embodiment(2, &FamilyParams::serial_chain(3))?;
    let lib = generate_library(5, &robot, 8, 4.0, &StyleParams::quasi_static())?;
    let setup = TaskSetup::native(&robot, &lib, 1)?;

    let oracle = compute_metrics(&evaluate_library(&ReferenceOracle, &setup, true, 0)?)?;
    let config = NetShape::small_mlp(64).config(setup.d_p, setup.d_r, setup.d_priv, setup.action_dim);
    let untrained = compute_metrics(&evaluate_library(&PolicyParams::init(&config, 0)?, &setup, true, 0)?)?;

    println!("PD steady-state bound {:.4} m", pd_steady_state_bound(&robot));
    for (name, m) in [("oracle", &oracle), ("untrained", &untrained)] {
        println!(
            "{name:10} success {:.2}  mpjpe {:.4} m  action vel {:.4}",
            m.success_rate, m.mpjpe, m.mean_action_vel
        );
    }
    let dir = std::env::temp_dir().join("crossbody-eval");
    let files = write_report(&[("oracle".into(), oracle), ("untrained".into(), untrained)], &dir)?;
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}
