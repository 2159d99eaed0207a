//! Inject LoRA, adapters and prefixes into a frozen transformer policy and
//! compare their trainable footprint per scope preset. LoRA factors are then
//! folded back into dense weights.

use crossbody::netcore::{actor_forward, NetConfig, PolicyParams, Tensor};
use crossbody::peft::{inject, merge_lora, trainable_stats, InjectionScope, Method, PeftHyper, PRESETS};

fn main() -> crossbody::Result<()> {
    let config = NetConfig::transformer(27, 44, 13, 8);
    let mut base = PolicyParams::init(&config, 0)?;
    base.freeze_all();
    println!("frozen policy: {} parameters", base.total_count());

    println!("{:6} {:>10} {:>10} {:>10}", "scope", "LoRA", "Adapter", "Prefix");
    for preset in PRESETS {
        let scope = InjectionScope::preset(preset)?;
        let pct = |m| -> crossbody::Result<String> {
            let a = inject(&base, m, &scope, &PeftHyper::default(), 0)?;
            Ok(format!("{:.2}%", 100.0 * trainable_stats(&a.params).ratio))
        };
        println!("{preset:6} {:>10} {:>10} {:>10}", pct(Method::LoRA)?, pct(Method::Adapter)?, pct(Method::Prefix)?);
    }

    let mut adapted = inject(&base, Method::LoRA, &InjectionScope::preset("S7")?, &PeftHyper::default(), 0)?;
    for name in adapted.params.names() {
        if name.ends_with("lora_b") {
            adapted.params.value_mut(&name).expect("listed").data.iter_mut().for_each(|v| *v = 0.01);
        }
    }
    let merged = merge_lora(&adapted)?;
    let obs = Tensor::from_fn(1, config.window_width(), |_, c| (c as f64 * 0.1).sin());
    let (a, _) = actor_forward(&adapted.params, &obs)?;
    let (b, _) = actor_forward(&merged, &obs)?;
    let gap = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("merged vs adapted actor output: max gap {gap:.1e}");
    Ok(())
}
