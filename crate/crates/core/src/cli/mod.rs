//! The `a2a` command line: generation, alignment checks, training,
//! ablation sweeps, evaluation and reports, all reading and writing files.
//!
//! [`run`] parses arguments and returns the process exit status: 0 on
//! success, 2 when the command line or the experiment config is invalid,
//! 1 when the work itself fails.

mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

pub use config::{ExperimentConfig, Stage};

use crate::align::build_alignment;
use crate::embodiment::{generate_embodiment, BaseMode, EmbodimentSpec, FamilyParams};
use crate::evalreport::{compute_metrics, evaluate_library, write_curve_plot, write_report, MetricsRow};
use crate::motion::{generate_library, load_library, save_library, subsample_library, MotionLibrary, StyleParams};
use crate::netcore::{Backbone, PolicyParams};
use crate::peft::{merge_lora, AdaptedPolicy};
use crate::rl::{
    plan_ablation, read_curves_csv, train, transfer_target, write_curves_csv, Ablation, CurveRow, Method, NetShape,
    PlannedRun, TrainConfig, TrainTask,
};
use crate::{Error, Result};

/// Largest invertibility residual `align-check` accepts.
pub const ALIGN_TOLERANCE: f64 = 1e-8;
/// Env steps of every run in `--quick` mode; one iteration of the largest
/// sampling batch.
pub const QUICK_STEPS: usize = 16_384;
/// Clips evaluated per run in `--quick` mode.
pub const QUICK_EVAL_CLIPS: usize = 4;
/// Wall-clock ceiling `--quick` presets are planned against, s.
pub const QUICK_SECONDS: f64 = 300.0;

#[derive(Debug, Parser)]
#[command(name = "a2a", version, about = "Cross-embodiment transfer of tracking policies")]
struct Cli {
    /// Single-threaded, bit-reproducible collection.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory (overrides the config's `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EmbodimentPreset {
    /// Fixed-base serial chain.
    Chain,
    /// Two-legged robot (floating with --floating).
    Legged,
    /// The 8-joint source and its permuted, heavier, hip-inclined target.
    TransferPair,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Style {
    Default,
    QuasiStatic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AblationArg {
    Alignment,
    Peft,
    Scope,
    DataScale,
    Sampling,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Ablation {
        match a {
            AblationArg::Alignment => Ablation::Alignment,
            AblationArg::Peft => Ablation::Peft,
            AblationArg::Scope => Ablation::Scope,
            AblationArg::DataScale => Ablation::DataScale,
            AblationArg::Sampling => Ablation::Sampling,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate embodiment JSON files.
    GenEmbodiment {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "legged")]
        preset: EmbodimentPreset,
        #[arg(long, default_value_t = 8)]
        joints: usize,
        #[arg(long)]
        floating: bool,
    },
    /// Generate a motion library for an embodiment.
    GenMotions {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        clips: usize,
        /// Clip length, s.
        #[arg(long, default_value_t = 4.0)]
        len: f64,
        /// Embodiment JSON the clips are authored for.
        #[arg(long)]
        embodiment: PathBuf,
        #[arg(long, value_enum, default_value = "default")]
        style: Style,
    },
    /// Build the alignment maps between two embodiments and report the
    /// invertibility residual.
    AlignCheck {
        #[arg(long)]
        source: PathBuf,
        /// Defaults to the source itself.
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Train the source policy from scratch.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train on the target with the configured method.
    Transfer {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an ablation matrix and write one curve CSV per run.
    Ablate {
        #[arg(value_enum)]
        preset: AblationArg,
        #[arg(long)]
        config: PathBuf,
        /// Small budgets for smoke runs.
        #[arg(long)]
        quick: bool,
    },
    /// Evaluate a checkpoint on whole clips.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Row label in metrics.csv; defaults to the method name.
        #[arg(long)]
        name: Option<String>,
        /// Evaluate only the first N clips.
        #[arg(long)]
        clips: Option<usize>,
    },
    /// Combine metrics.csv files and curve CSVs into one report.
    Report {
        /// Directories to collect from.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Fold LoRA factors into dense weights.
    Merge {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

/// Parse `args` (program name first), execute, and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        _ => 1,
    }
}

fn out_dir(cli_out: &Option<PathBuf>, config: Option<&ExperimentConfig>) -> Result<PathBuf> {
    let dir = cli_out
        .clone()
        .or_else(|| config.and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn load_config(path: &Path, stage: Stage, deterministic: bool) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::load(path)?;
    if deterministic {
        c.train.deterministic = true;
    }
    c.validate(stage)?;
    Ok(c)
}

fn required<'a>(field: &str, p: &'a Option<PathBuf>) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::config(field, "missing"))
}

fn execute(cli: Cli) -> Result<String> {
    let det = cli.deterministic;
    match cli.command {
        Command::GenEmbodiment {
            seed,
            preset,
            joints,
            floating,
        } => {
            let out = out_dir(&cli.out, None)?;
            let mode = if floating { BaseMode::FloatingPlanar } else { BaseMode::Fixed };
            let specs: Vec<(&str, EmbodimentSpec)> = match preset {
                EmbodimentPreset::Chain => vec![(
                    "embodiment",
                    generate_embodiment(seed, &FamilyParams { base_mode: mode, ..FamilyParams::serial_chain(joints) })?,
                )],
                EmbodimentPreset::Legged => {
                    let family = FamilyParams {
                        n_joints_range: (joints, joints),
                        base_mode: mode,
                        ..FamilyParams::default()
                    };
                    vec![("embodiment", generate_embodiment(seed, &family)?)]
                }
                EmbodimentPreset::TransferPair => {
                    let family = FamilyParams {
                        n_joints_range: (joints, joints),
                        base_mode: mode,
                        ..FamilyParams::default()
                    };
                    let source = generate_embodiment(seed, &family)?;
                    let target = transfer_target(&source)?;
                    vec![("source", source), ("target", target)]
                }
            };
            let mut names = Vec::new();
            for (stem, spec) in &specs {
                let path = out.join(format!("{stem}.json"));
                spec.save(&path)?;
                names.push(format!("{} ({} joints)", path.display(), spec.n_joints));
            }
            Ok(format!("wrote {}", names.join(", ")))
        }
        Command::GenMotions {
            seed,
            clips,
            len,
            embodiment,
            style,
        } => {
            let spec = EmbodimentSpec::load(&embodiment).map_err(|e| Error::config("--embodiment", e.to_string()))?;
            let style = match style {
                Style::Default => StyleParams::default(),
                Style::QuasiStatic => StyleParams::quasi_static(),
            };
            let lib = generate_library(seed, &spec, clips, len, &style)?;
            let out = out_dir(&cli.out, None)?;
            save_library(&lib, &out)?;
            Ok(format!("wrote {} clips, {} frames to {}", lib.clips.len(), lib.total_frames, out.display()))
        }
        Command::AlignCheck { source, target } => {
            let s = EmbodimentSpec::load(&source).map_err(|e| Error::config("--source", e.to_string()))?;
            let t = match &target {
                Some(p) => EmbodimentSpec::load(p).map_err(|e| Error::config("--target", e.to_string()))?,
                None => s.clone(),
            };
            let maps = build_alignment(&s, &t)?;
            let residual = maps.invertibility_residual();
            if cli.out.is_some() {
                let out = out_dir(&cli.out, None)?;
                maps.save(out.join("maps.json"))?;
            }
            let line = format!("residual {residual:.1e}");
            if residual > ALIGN_TOLERANCE {
                return Err(Error::BrokenInvertibility(residual));
            }
            Ok(line)
        }
        Command::Pretrain { config } => {
            let cfg = load_config(&config, Stage::Pretrain, det)?;
            let out = out_dir(&cli.out, Some(&cfg))?;
            let source = EmbodimentSpec::load(required("source", &cfg.source)?)?;
            let lib = load_library(required("library", &cfg.library)?)?;
            let train_cfg = TrainConfig {
                method: Method::Scratch,
                ..cfg.train.clone()
            };
            let outcome = train(&train_cfg, None, &TrainTask::native(&source, &lib))?;
            outcome.save_checkpoint(out.join("policy.ckpt"))?;
            write_curves(&out, "curves", &outcome.curves)?;
            write_curve_plot(&[("pretrain".to_string(), outcome.curves.clone())], out.join("curves.svg"))?;
            Ok(summary("pretrain", &outcome.curves, &out))
        }
        Command::Transfer { config } => {
            let cfg = load_config(&config, Stage::Transfer, det)?;
            let out = out_dir(&cli.out, Some(&cfg))?;
            let (task, checkpoint) = transfer_inputs(&cfg)?;
            let outcome = train(&cfg.train, checkpoint.as_ref(), &task)?;
            outcome.save_checkpoint(out.join("policy.ckpt"))?;
            write_curves(&out, "curves", &outcome.curves)?;
            let name = cfg.train.method.name();
            write_curve_plot(&[(name.to_string(), outcome.curves.clone())], out.join("curves.svg"))?;
            Ok(summary(name, &outcome.curves, &out))
        }
        Command::Ablate { preset, config, quick } => {
            let cfg = load_config(&config, Stage::Ablate, det)?;
            let out = out_dir(&cli.out, Some(&cfg))?;
            ablate(&cfg, preset.into(), quick, &out)
        }
        Command::Eval {
            config,
            checkpoint,
            name,
            clips,
        } => {
            let cfg = load_config(&config, Stage::Eval, det)?;
            let out = out_dir(&cli.out, Some(&cfg))?;
            let (params, _) = AdaptedPolicy::load(&checkpoint)?;
            let lib_path = cfg.eval_library.clone().or_else(|| cfg.library.clone());
            let lib = load_library(required("library", &lib_path)?)?;
            let lib = first_clips(lib, clips)?;
            let method = cfg.train.method;
            let metrics = evaluate(&cfg, method, &params, &lib, cfg.train.seed)?;
            let label = name.unwrap_or_else(|| method.name().to_string());
            write_report(&[(label.clone(), metrics)], &out)?;
            Ok(format!(
                "eval {label}: {} episodes, success {:.3}, mpjpe {:.4} m -> {}",
                metrics.n_episodes,
                metrics.success_rate,
                metrics.mpjpe,
                out.join("metrics.csv").display()
            ))
        }
        Command::Report { inputs } => {
            let out = out_dir(&cli.out, None)?;
            report(&inputs, &out)
        }
        Command::Merge { checkpoint } => {
            let (_, adapted) = AdaptedPolicy::load(&checkpoint)?;
            let adapted =
                adapted.ok_or_else(|| Error::WrongMethod(format!("{} carries no PEFT factors", checkpoint.display())))?;
            let merged = merge_lora(&adapted)?;
            let out = out_dir(&cli.out, None)?;
            let path = out.join("merged.ckpt");
            merged.save(&path, None)?;
            Ok(format!("merged {} tensors into {}", merged.names().len(), path.display()))
        }
    }
}

fn summary(what: &str, curves: &[CurveRow], out: &Path) -> String {
    let last = curves.last().expect("at least one iteration");
    format!(
        "{what}: {} iterations, {} env steps, final r_joint {:.4} -> {}",
        last.iteration,
        last.env_steps,
        last.r_joint,
        out.display()
    )
}

fn write_curves(out: &Path, stem: &str, curves: &[CurveRow]) -> Result<()> {
    write_curves_csv(curves, out.join(format!("{stem}.csv")))
}

fn first_clips(mut lib: MotionLibrary, n: Option<usize>) -> Result<MotionLibrary> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::config("--clips", "must be positive"));
        }
        lib.clips.truncate(n);
        lib = MotionLibrary::new(lib.clips)?;
    }
    Ok(lib)
}

fn transfer_inputs(cfg: &ExperimentConfig) -> Result<(TrainTask, Option<PolicyParams>)> {
    let target = EmbodimentSpec::load(required("target", &cfg.target)?)?;
    let lib = load_library(required("library", &cfg.library)?)?;
    let task = match &cfg.source {
        Some(p) => TrainTask::transfer(&EmbodimentSpec::load(p)?, &target, &lib),
        None => TrainTask::native(&target, &lib),
    };
    let checkpoint = match &cfg.source_checkpoint {
        Some(p) if cfg.train.method.needs_checkpoint() => Some(AdaptedPolicy::load(p)?.0),
        _ => None,
    };
    Ok((task, checkpoint))
}

/// Mean-action metrics of `params` on every clip of `lib`, seen the way
/// `method` sees the target.
fn evaluate(cfg: &ExperimentConfig, method: Method, params: &PolicyParams, lib: &MotionLibrary, seed: u64) -> Result<MetricsRow> {
    let target = EmbodimentSpec::load(required("target", &cfg.target)?)?;
    let task = match &cfg.source {
        Some(p) => TrainTask::transfer(&EmbodimentSpec::load(p)?, &target, lib),
        None => TrainTask::native(&target, lib),
    };
    let setup = task.setup(method, params.config.h)?;
    let c = &params.config;
    if (c.d_p, c.d_r, c.d_priv, c.action_dim) != (setup.d_p, setup.d_r, setup.d_priv, setup.action_dim) {
        return Err(Error::config(
            "--checkpoint",
            format!("policy does not fit the {} observation/action layout", method.name()),
        ));
    }
    let results = evaluate_library(params, &setup, true, seed)?;
    compute_metrics(&results)
}

/// The preset's base config in `--quick` mode.
pub fn quick_config(base: &TrainConfig) -> TrainConfig {
    TrainConfig {
        n_envs: 16,
        steps_per_env: 64,
        total_env_steps: QUICK_STEPS,
        ..base.clone()
    }
}

/// Conservative single-core cost of one env step (collection plus update), s.
pub fn seconds_per_step(net: &NetShape) -> f64 {
    match net.backbone {
        Backbone::Mlp => 1.0 / 4_000.0,
        Backbone::Transformer => 1.0 / 300.0,
    }
}

/// Source pretraining runs an ablation needs: one per distinct network.
pub fn pretrain_configs(plan: &[PlannedRun]) -> Vec<TrainConfig> {
    let mut out: Vec<TrainConfig> = Vec::new();
    for r in plan {
        if r.config.method.needs_checkpoint() && !out.iter().any(|c| c.net == r.config.net) {
            out.push(TrainConfig {
                method: Method::Scratch,
                ..r.config.clone()
            });
        }
    }
    out
}

/// Planned wall-clock of an ablation: pretraining, every run, and the
/// evaluation episodes (`eval_steps` control steps per run).
pub fn estimated_seconds(plan: &[PlannedRun], eval_steps: usize) -> f64 {
    let pre: f64 = pretrain_configs(plan)
        .iter()
        .map(|c| c.iterations() as f64 * c.batch_size() as f64 * seconds_per_step(&c.net))
        .sum();
    let runs: f64 = plan
        .iter()
        .map(|r| (r.config.iterations() * r.config.batch_size() + eval_steps) as f64 * seconds_per_step(&r.config.net))
        .sum();
    pre + runs
}

fn net_tag(net: &NetShape) -> &'static str {
    match net.backbone {
        Backbone::Mlp => "mlp",
        Backbone::Transformer => "transformer",
    }
}

fn ablate(cfg: &ExperimentConfig, ablation: Ablation, quick: bool, out: &Path) -> Result<String> {
    let base = if quick { quick_config(&cfg.train) } else { cfg.train.clone() };
    let plan = plan_ablation(ablation, &base);
    let source = EmbodimentSpec::load(required("source", &cfg.source)?)?;
    let target = EmbodimentSpec::load(required("target", &cfg.target)?)?;
    let lib = load_library(required("library", &cfg.library)?)?;
    let eval_lib = match &cfg.eval_library {
        Some(p) => load_library(p)?,
        None => lib.clone(),
    };
    let eval_lib = first_clips(eval_lib, quick.then_some(QUICK_EVAL_CLIPS))?;

    let mut checkpoints: Vec<(NetShape, PolicyParams)> = Vec::new();
    match &cfg.source_checkpoint {
        Some(p) => {
            let params = AdaptedPolicy::load(p)?.0;
            for c in pretrain_configs(&plan) {
                checkpoints.push((c.net, params.clone()));
            }
        }
        None => {
            for c in pretrain_configs(&plan) {
                let outcome = train(&c, None, &TrainTask::native(&source, &lib))?;
                let stem = format!("source_{}", net_tag(&c.net));
                outcome.save_checkpoint(out.join(format!("{stem}.ckpt")))?;
                write_curves(out, &stem, &outcome.curves)?;
                checkpoints.push((c.net, outcome.params));
            }
        }
    }

    let mut curves = Vec::new();
    let mut rows = Vec::new();
    for run in &plan {
        let run_lib = match run.frame_budget {
            Some(b) => subsample_library(&lib, b, run.config.seed)?,
            None => lib.clone(),
        };
        let task = TrainTask::transfer(&source, &target, &run_lib);
        let checkpoint = if run.config.method.needs_checkpoint() {
            checkpoints.iter().find(|(n, _)| *n == run.config.net).map(|(_, p)| p)
        } else {
            None
        };
        let outcome = train(&run.config, checkpoint, &task)?;
        write_curves(out, &run.name, &outcome.curves)?;
        let metrics = evaluate(cfg, run.config.method, &outcome.params, &eval_lib, run.config.seed)?;
        rows.push((run.name.clone(), metrics));
        curves.push((run.name.clone(), outcome.curves));
    }
    write_report(&rows, out)?;
    write_curve_plot(&curves, out.join("curves.svg"))?;
    let best = rows
        .iter()
        .zip(&curves)
        .map(|((name, _), (_, c))| (name, c.last().map_or(0.0, |r| r.r_joint)))
        .fold((String::new(), f64::NEG_INFINITY), |acc, (n, r)| if r > acc.1 { (n.clone(), r) } else { acc });
    Ok(format!(
        "ablate {}: {} runs -> {} (best final r_joint {:.4}, {})",
        ablation.name(),
        plan.len(),
        out.display(),
        best.1,
        best.0
    ))
}

fn report(inputs: &[PathBuf], out: &Path) -> Result<String> {
    let mut rows = Vec::new();
    let mut curves: BTreeMap<String, Vec<CurveRow>> = BTreeMap::new();
    for dir in inputs {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths {
            if p.extension().and_then(|e| e.to_str()) != Some("csv") {
                continue;
            }
            if p.file_name().and_then(|n| n.to_str()) == Some("metrics.csv") {
                rows.extend(crate::evalreport::read_metrics_csv(&p)?);
            } else if let Ok(c) = read_curves_csv(&p) {
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
                let key = if inputs.len() > 1 {
                    format!("{}/{stem}", dir.file_name().and_then(|s| s.to_str()).unwrap_or(""))
                } else {
                    stem
                };
                curves.insert(key, c);
            }
        }
    }
    if rows.is_empty() && curves.is_empty() {
        return Err(Error::EmptyResults);
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    if !rows.is_empty() {
        write_report(&rows, out)?;
    }
    if !curves.is_empty() {
        let runs: Vec<(String, Vec<CurveRow>)> = curves.into_iter().collect();
        write_curve_plot(&runs, out.join("curves.svg"))?;
    }
    Ok(format!("report: {} metric rows -> {}", rows.len(), out.display()))
}
