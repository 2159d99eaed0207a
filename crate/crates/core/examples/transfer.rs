//! Pretrain on the source robot, then move to the target four ways: from
//! scratch, full fine-tuning with and without alignment, and aligned LoRA.
//!
//! ```text
//! cargo run --release --example transfer -- 400000 200000
//! ```

use crossbody::motion::{generate_library, StyleParams};
use crossbody::rl::{train, transfer_pair, Method, TrainConfig, TrainTask};

fn main() -> crossbody::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let pretrain_steps = args.next().flatten().unwrap_or(200_000);
    let budget = args.next().flatten().unwrap_or(100_000);
    let (source, target) = transfer_pair(0)?;
    let lib = generate_library(1, &source, 40, 4.0, &StyleParams::default())?;
    let base = TrainConfig::tracking();

    let pre = train(
        &TrainConfig {
            total_env_steps: pretrain_steps,
            ..base.clone()
        },
        None,
        &TrainTask::native(&source, &lib),
    )?;
    println!("source policy: r_joint {:.3}", pre.curves.last().expect("trained").r_joint);

    let task = TrainTask::transfer(&source, &target, &lib);
    for method in [Method::Scratch, Method::FullFtNoAlign, Method::FullFtAlign, Method::Any2AnyLora] {
        let config = TrainConfig {
            method,
            total_env_steps: budget,
            ..base.clone()
        };
        let out = train(&config, method.needs_checkpoint().then_some(&pre.params), &task)?;
        let (first, last) = (out.curves[0].r_joint, out.curves.last().expect("trained").r_joint);
        println!("{:16} r_joint {first:.3} -> {last:.3}", method.name());
    }
    Ok(())
}
