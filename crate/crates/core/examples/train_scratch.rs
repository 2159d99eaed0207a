//! PPO from scratch on a 3-link fixed-base arm. Prints the learning curve
//! and writes it as CSV.
//!
//! ```text
//! cargo run --release --example train_scratch -- 200000
//! ```

use crossbody::embodiment::{generate_embodiment, FamilyParams};
use crossbody::motion::{generate_library, StyleParams};
use crossbody::rl::{train_with_progress, write_curves_csv, TrainConfig, TrainTask};

fn main() -> crossbody::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let robot = generate_embodiment(0, &FamilyParams::serial_chain(3))?;
    let lib = generate_library(1, &robot, 20, 4.0, &StyleParams::default())?;
    let config = TrainConfig {
        total_env_steps: steps,
        ..TrainConfig::tracking()
    };
    let out = train_with_progress(&config, None, &TrainTask::native(&robot, &lib), |row| {
        if row.iteration % 10 == 1 {
            println!("iter {:4}  steps {:7}  r_joint {:.3}  kl {:.4}", row.iteration, row.env_steps, row.r_joint, row.kl);
        }
    })?;
    let path = std::env::temp_dir().join("crossbody-scratch.csv");
    write_curves_csv(&out.curves, &path)?;
    println!("final r_joint {:.3}; curve in {}", out.curves.last().expect("one iteration").r_joint, path.display());
    Ok(())
}
