//! Experiment configuration: one JSON document, preset defaults, and
//! `section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use uqpen::dataset::{FoldMode, GeneratorConfig, Hand};
use uqpen::model::{Architecture, ConvBlock, TcnConfig};
use uqpen::training::{EnsembleConfig, SwagConfig, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum HandSelector {
    Right,
    Left,
    #[default]
    Both,
}

impl HandSelector {
    pub fn admits(self, hand: Hand) -> bool {
        match self {
            HandSelector::Both => true,
            HandSelector::Right => hand == Hand::Right,
            HandSelector::Left => hand == Hand::Left,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset CSV; when absent the generator runs in memory.
    pub csv: Option<PathBuf>,
    pub generator: GeneratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: FoldMode,
    pub folds: usize,
    pub seed: u64,
    /// Fold whose test part is held out.
    pub fold: usize,
    /// Load the split from this manifest instead of computing it.
    pub manifest: Option<PathBuf>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            mode: FoldMode::WriterDependent,
            folds: 5,
            seed: 0,
            fold: 0,
            manifest: None,
        }
    }
}

/// Architecture whose class count defaults to the dataset's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub input_steps: usize,
    pub input_channels: usize,
    pub conv_blocks: Vec<ConvBlock>,
    pub tcn: TcnConfig,
    pub class_count: Option<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::from_arch(Architecture::desk(10))
    }
}

impl ArchConfig {
    fn from_arch(a: Architecture) -> Self {
        Self {
            input_steps: a.input_steps,
            input_channels: a.input_channels,
            conv_blocks: a.conv_blocks,
            tcn: a.tcn,
            class_count: None,
        }
    }

    pub fn resolve(&self, dataset_classes: usize) -> CliResult<Architecture> {
        let k = self.class_count.unwrap_or(dataset_classes);
        if k != dataset_classes {
            return Err(CliError::usage(format!(
                "arch.class_count is {k} but the dataset has {dataset_classes} classes"
            )));
        }
        let arch = Architecture {
            input_steps: self.input_steps,
            input_channels: self.input_channels,
            conv_blocks: self.conv_blocks.clone(),
            tcn: self.tcn.clone(),
            class_count: k,
        };
        arch.validate().map_err(|e| CliError::usage(format!("arch: {e}")))?;
        Ok(arch)
    }
}

/// Which part of the fold `evaluate` reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    #[default]
    Test,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Weight samples per input for SWAG; also the ensemble's nominal size.
    pub draws: usize,
    pub train_hand: HandSelector,
    pub eval_hand: HandSelector,
    pub subset: Subset,
    pub bins: usize,
    pub seed: u64,
    /// Overrides the SWAG sampling scale stored in the posterior file.
    pub scale: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            draws: 20,
            train_hand: HandSelector::Both,
            eval_hand: HandSelector::Both,
            subset: Subset::Test,
            bins: 10,
            seed: 0,
            scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub output_dir: PathBuf,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("report"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub swag: SwagConfig,
    pub ensemble: EnsembleConfig,
    pub eval: EvalConfig,
    pub report: ReportConfig,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut c = Self::default();
        match preset {
            Preset::Desk => {
                c.train.epochs_max = 30;
                c.train.early_stop_patience = 10;
                c.swag.swa_epochs = 10;
                c.ensemble.member_count = 3;
            }
            Preset::Paper => {
                c.arch = ArchConfig::from_arch(Architecture::paper(10));
            }
        }
        c
    }

    /// Preset defaults, then the JSON file, then `--set` overrides in order.
    pub fn load(preset: Preset, file: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut value = serde_json::to_value(Self::preset(preset)).expect("config serializes");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
            let doc: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
            merge(&mut value, doc);
        }
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| CliError::usage(format!("config: {e}")))
    }
}

/// Recursive object merge; non-object values replace.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// `a.b.c=value`, where value is parsed as JSON and falls back to a string.
pub fn apply_override(root: &mut Value, spec: &str) -> CliResult<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("override `{spec}` is not of the form section.key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.len() < 2 || keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::usage(format!("override path `{path}` needs a section and a key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::usage(format!("override path `{path}` crosses a non-object")))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    node.as_object_mut()
        .ok_or_else(|| CliError::usage(format!("override path `{path}` crosses a non-object")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
