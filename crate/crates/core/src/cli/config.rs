use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::peft::PeftHyper;
use crate::rl::{Method, TrainConfig};
use crate::{Error, Result};

/// One experiment, read from the JSON file given to `--config`.
///
/// `train` is overlaid on [`TrainConfig::tracking`], so only the fields that
/// differ need to be written. Top-level `method`, `scope`, `peft` and `seed`
/// override the same fields of `train`. Relative paths are resolved against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    /// Embodiment JSON of the robot the pretrained policy was trained on.
    pub source: Option<PathBuf>,
    /// Embodiment JSON of the robot to transfer to.
    pub target: Option<PathBuf>,
    /// Motion library directory, in the source joint space when `source`
    /// is set.
    pub library: Option<PathBuf>,
    /// Held-out clips for `eval` and `ablate` metrics; defaults to `library`.
    pub eval_library: Option<PathBuf>,
    pub source_checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    #[serde(default)]
    train: Option<Value>,
    source: Option<PathBuf>,
    target: Option<PathBuf>,
    library: Option<PathBuf>,
    eval_library: Option<PathBuf>,
    source_checkpoint: Option<PathBuf>,
    method: Option<Method>,
    scope: Option<String>,
    peft: Option<PeftHyper>,
    out: Option<PathBuf>,
    seed: Option<u64>,
}

/// What a subcommand needs from the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Transfer,
    Ablate,
    Eval,
}

fn overlay(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                overlay(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<ExperimentConfig> {
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))?;
        let mut train = serde_json::to_value(TrainConfig::tracking())?;
        if let Some(patch) = raw.train {
            if !patch.is_object() {
                return Err(Error::config("train", "expected an object"));
            }
            overlay(&mut train, patch);
        }
        let mut train: TrainConfig = serde_json::from_value(train).map_err(|e| Error::config("train", e.to_string()))?;
        if let Some(m) = raw.method {
            train.method = m;
        }
        if let Some(s) = raw.scope {
            train.scope = s;
        }
        if let Some(p) = raw.peft {
            train.peft = p;
        }
        if let Some(s) = raw.seed {
            train.seed = s;
        }
        let resolve = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base_dir.join(p) });
        Ok(ExperimentConfig {
            train,
            source: resolve(raw.source),
            target: resolve(raw.target),
            library: resolve(raw.library),
            eval_library: resolve(raw.eval_library),
            source_checkpoint: resolve(raw.source_checkpoint),
            out: resolve(raw.out),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::from_json(&text, dir)
    }

    /// Check everything `stage` will touch before any compute starts.
    pub fn validate(&self, stage: Stage) -> Result<()> {
        self.train.validate().map_err(|e| match e {
            Error::Config { path, message } => Error::config(format!("train.{path}"), message),
            other => other,
        })?;
        let method = match stage {
            Stage::Pretrain => Method::Scratch,
            _ => self.train.method,
        };
        let mut need: Vec<(&str, &Option<PathBuf>)> = vec![("library", &self.library)];
        match stage {
            // always from scratch, whatever `method` says
            Stage::Pretrain => need.push(("source", &self.source)),
            Stage::Transfer => {
                need.push(("target", &self.target));
                if method.needs_checkpoint() {
                    need.push(("source", &self.source));
                    need.push(("source_checkpoint", &self.source_checkpoint));
                }
            }
            Stage::Ablate => {
                need.push(("source", &self.source));
                need.push(("target", &self.target));
            }
            Stage::Eval => {
                need.push(("target", &self.target));
                if method.aligned() {
                    need.push(("source", &self.source));
                }
            }
        }
        for (field, path) in need {
            match path {
                None => {
                    return Err(Error::config(
                        field,
                        format!("required by this command (method {})", method.name()),
                    ))
                }
                Some(p) if !p.exists() => return Err(Error::config(field, format!("{} does not exist", p.display()))),
                Some(_) => {}
            }
        }
        for (field, path) in [
            ("eval_library", &self.eval_library),
            ("source_checkpoint", &self.source_checkpoint),
            ("source", &self.source),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::config(field, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}
