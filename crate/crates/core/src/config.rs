//! Experiment configuration: one TOML file naming datasets, GAN configs,
//! tasks and classifier grids, with `desk` and `paper` presets supplying
//! scale-dependent defaults.
//!
//! A minimal file:
//!
//! ```toml
//! [run]
//! seed = 42
//! preset = "desk"
//!
//! [dataset.toy]
//! root = "corpus"
//! modality = "xray"
//! label_rules = ["class=dir:0"]
//!
//! [gan.stripes]
//! arch = "dcgan"
//!
//! [task.texture]
//! target_key = "class"
//! classes = ["stripes", "blobs"]
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bench::BenchmarkTask;
use crate::classify::cnn::{CnnArch, CnnConfig};
use crate::classify::{ClassifierKind, ClassifierSpec, ParamValue};
use crate::corpus::{LabelRule, Modality};
use crate::error::{Error, Result};
use crate::gan::{AdamParams, GanArch, GanConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Workstation scale: 32-px images, 800/200 task sizes, small nets.
    Desk,
    /// Published scale: 256-px images, 8000-train tasks, VGG16-shaped CNN.
    Paper,
}

impl Default for Preset {
    fn default() -> Self {
        Preset::Desk
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct RunSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub preset: Preset,
    pub out_dir: Option<PathBuf>,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Deserialize)]
pub struct DatasetSection {
    /// Existing manifest to load...
    pub manifest: Option<PathBuf>,
    /// ...or a directory to ingest.
    pub root: Option<PathBuf>,
    pub modality: Option<Modality>,
    /// `key=dir:N`, `key=re:PATTERN` or `key=fixed:VALUE`.
    #[serde(default)]
    pub label_rules: Vec<String>,
}

impl DatasetSection {
    pub fn parsed_rules(&self) -> Result<Vec<LabelRule>> {
        self.label_rules.iter().map(|s| parse_label_rule(s)).collect()
    }
}

pub fn parse_label_rule(text: &str) -> Result<LabelRule> {
    let (key, rest) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("label rule '{text}' is not key=source")))?;
    let (kind, arg) = rest
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("label source '{rest}' is not kind:arg")))?;
    match kind {
        "dir" => {
            let depth: usize = arg
                .parse()
                .map_err(|_| Error::Config(format!("bad dir depth '{arg}' in rule '{text}'")))?;
            Ok(LabelRule::dir(key, depth))
        }
        "re" => LabelRule::pattern(key, arg),
        "fixed" => Ok(LabelRule::fixed(key, arg)),
        other => Err(Error::Config(format!("unknown label source kind '{other}'"))),
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct GanSection {
    pub arch: GanArch,
    pub latent_dim: Option<usize>,
    pub image_size: Option<usize>,
    pub image_channels: Option<usize>,
    #[serde(default)]
    pub conditional: bool,
    #[serde(default)]
    pub label_cardinality: usize,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub pggan_base: Option<usize>,
    pub fade_fraction: Option<f64>,
    pub channel_base: Option<usize>,
    pub channel_max: Option<usize>,
    pub pixel_norm: Option<bool>,
    pub minibatch_stddev: Option<bool>,
}

impl GanSection {
    fn resolve(&self, name: &str, preset: Preset) -> GanConfig {
        let mut base = match preset {
            Preset::Desk => GanConfig::desk(name, self.arch),
            Preset::Paper => {
                GanConfig::paper_xray(name, self.arch, self.conditional, self.label_cardinality.max(2))
            }
        };
        base.conditional = self.conditional;
        base.label_cardinality = if self.conditional { self.label_cardinality } else { 0 };
        if let Some(v) = self.latent_dim {
            base.latent_dim = v;
        }
        if let Some(v) = self.image_size {
            base.image_size = v;
        }
        if let Some(v) = self.image_channels {
            base.image_channels = v;
        }
        if let Some(v) = self.batch_size {
            base.batch_size = v;
        }
        if let Some(v) = self.epochs {
            base.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            base.adam = AdamParams { lr: v, ..base.adam };
        }
        if let Some(v) = self.pggan_base {
            base.pggan_base = v;
        }
        if let Some(v) = self.fade_fraction {
            base.fade_fraction = v;
        }
        if let Some(v) = self.channel_base {
            base.channel_base = v;
        }
        if let Some(v) = self.channel_max {
            base.channel_max = v;
        }
        if let Some(v) = self.pixel_norm {
            base.pixel_norm = v;
        }
        if let Some(v) = self.minibatch_stddev {
            base.minibatch_stddev = v;
        }
        base
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct TaskSection {
    pub modality: Option<Modality>,
    pub target_key: String,
    /// Exactly two class values, id order.
    pub classes: Vec<String>,
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    #[serde(default)]
    pub balance_keys: Vec<String>,
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct CnnSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub val_fraction: Option<f64>,
    pub lr: Option<f64>,
}

/// The whole experiment file.
#[derive(Debug, Clone, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub dataset: BTreeMap<String, DatasetSection>,
    #[serde(default)]
    pub gan: BTreeMap<String, GanSection>,
    #[serde(default)]
    pub task: BTreeMap<String, TaskSection>,
    /// Which classifiers run, default all four.
    pub classifiers: Option<Vec<ClassifierKind>>,
    /// Per-classifier hyperparameter grids overriding the defaults.
    #[serde(default)]
    pub grids: BTreeMap<String, BTreeMap<String, Vec<toml::Value>>>,
    #[serde(default)]
    pub cnn: CnnSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad experiment config: {e}")))
    }

    pub fn gan_config(&self, name: &str) -> Result<GanConfig> {
        let section = self
            .gan
            .get(name)
            .ok_or_else(|| Error::Config(format!("no [gan.{name}] section")))?;
        let cfg = section.resolve(name, self.run.preset);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn benchmark_task(&self, name: &str) -> Result<BenchmarkTask> {
        let section = self
            .task
            .get(name)
            .ok_or_else(|| Error::Config(format!("no [task.{name}] section")))?;
        if section.classes.len() != 2 {
            return Err(Error::Config(format!("task {name} needs exactly two classes")));
        }
        let (train_default, test_default) = match self.run.preset {
            Preset::Desk => (800, 200),
            Preset::Paper => (8000, 1000),
        };
        let task = BenchmarkTask {
            name: name.to_string(),
            modality: section.modality.unwrap_or(Modality::Xray),
            target_key: section.target_key.clone(),
            class_pair: (section.classes[0].clone(), section.classes[1].clone()),
            train_size: section.train_size.unwrap_or(train_default),
            test_size: section.test_size.unwrap_or(test_default),
            balance_keys: section.balance_keys.clone(),
        };
        task.validate()?;
        Ok(task)
    }

    /// Classifier specs in benchmark order, grids from `[grids.*]` when
    /// present, library defaults otherwise.
    pub fn classifier_specs(&self) -> Result<Vec<ClassifierSpec>> {
        let kinds = self.classifiers.clone().unwrap_or_else(|| {
            vec![ClassifierKind::Cnn, ClassifierKind::Knn, ClassifierKind::Svm, ClassifierKind::RandomForest]
        });
        kinds
            .into_iter()
            .map(|kind| {
                let default = match kind {
                    ClassifierKind::Knn => ClassifierSpec::default_knn(),
                    ClassifierKind::Svm => ClassifierSpec::default_svm(),
                    ClassifierKind::RandomForest => ClassifierSpec::default_random_forest(),
                    ClassifierKind::Cnn => ClassifierSpec::default_cnn(),
                };
                match self.grids.get(&kind.to_string()) {
                    None => Ok(default),
                    Some(grid) => {
                        let mut entries = Vec::new();
                        for (param, values) in grid {
                            let vs = values
                                .iter()
                                .map(toml_to_param)
                                .collect::<Result<Vec<_>>>()?;
                            entries.push((param.clone(), vs));
                        }
                        let spec = ClassifierSpec { kind, grid: entries };
                        spec.validate()?;
                        Ok(spec)
                    }
                }
            })
            .collect()
    }

    /// CNN training configuration scaled by preset for the given input.
    pub fn cnn_config(&self, image_size: usize) -> CnnConfig {
        let arch = match self.run.preset {
            Preset::Desk => CnnArch::desk(image_size),
            Preset::Paper => CnnArch::vgg16(),
        };
        let mut cfg = CnnConfig {
            arch,
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            val_fraction: 0.1,
        };
        if self.run.preset == Preset::Desk {
            cfg.epochs = 6; // smoke-scale default; override via [cnn]
        }
        if let Some(v) = self.cnn.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.cnn.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.cnn.val_fraction {
            cfg.val_fraction = v;
        }
        if let Some(v) = self.cnn.lr {
            cfg.lr = v;
        }
        cfg
    }
}

fn toml_to_param(v: &toml::Value) -> Result<ParamValue> {
    match v {
        toml::Value::Integer(i) => Ok(ParamValue::Int(*i)),
        toml::Value::Float(f) => Ok(ParamValue::Float(*f)),
        toml::Value::String(s) => Ok(ParamValue::Str(s.clone())),
        other => Err(Error::Config(format!("unsupported grid value {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[run]
seed = 7
preset = "desk"

[dataset.toy]
root = "corpus"
modality = "xray"
label_rules = ["class=dir:0"]

[gan.stripes]
arch = "dcgan"
epochs = 2

[gan.grower]
arch = "pggan"
image_size = 16

[task.texture]
target_key = "class"
classes = ["stripes", "blobs"]
train_size = 100
test_size = 40

[grids.knn]
k = [1, 3]

[cnn]
epochs = 3
"#;

    #[test]
    fn sample_config_parses_and_resolves() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.run.seed, 7);

        let gan = cfg.gan_config("stripes").unwrap();
        assert_eq!(gan.arch, GanArch::Dcgan);
        assert_eq!(gan.epochs, 2);
        assert_eq!(gan.image_size, 32); // desk default

        let pg = cfg.gan_config("grower").unwrap();
        assert_eq!(pg.image_size, 16);

        let task = cfg.benchmark_task("texture").unwrap();
        assert_eq!(task.class_pair.0, "stripes");
        assert_eq!(task.train_size, 100);

        let specs = cfg.classifier_specs().unwrap();
        assert_eq!(specs.len(), 4);
        let knn = specs.iter().find(|s| s.kind == ClassifierKind::Knn).unwrap();
        assert_eq!(knn.candidates().len(), 2);

        assert_eq!(cfg.cnn_config(32).epochs, 3);
        assert_eq!(cfg.cnn_config(32).arch, CnnArch::desk(32));

        let rules = cfg.dataset["toy"].parsed_rules().unwrap();
        assert_eq!(rules.len(), 1);
    }

    #[test]
    fn paper_preset_defaults() {
        let cfg = ExperimentConfig::parse(
            "[run]\npreset = \"paper\"\n[task.gender]\ntarget_key = \"gender\"\nclasses = [\"female\", \"male\"]\n",
        )
        .unwrap();
        let task = cfg.benchmark_task("gender").unwrap();
        assert_eq!((task.train_size, task.test_size), (8000, 1000));
        assert_eq!(cfg.cnn_config(256).arch, CnnArch::vgg16());
        assert_eq!(cfg.cnn_config(256).epochs, 20);
    }

    #[test]
    fn unknown_sections_and_bad_rules_error() {
        assert!(ExperimentConfig::parse("run = 5").is_err());
        assert!(parse_label_rule("class").is_err());
        assert!(parse_label_rule("class=dir:x").is_err());
        assert!(parse_label_rule("class=wat:0").is_err());
        assert!(parse_label_rule("class=dir:1").is_ok());
        assert!(parse_label_rule("age=re:a(\\d+)").is_ok());
    }

    #[test]
    fn missing_sections_are_reported_by_name() {
        let cfg = ExperimentConfig::parse("[run]\nseed = 1\n").unwrap();
        let err = cfg.gan_config("nope").unwrap_err().to_string();
        assert!(err.contains("gan.nope"), "{err}");
    }
}
