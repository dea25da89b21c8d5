use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attacks::{AttackConfig, LossVariant};
use crate::data::Task;
use crate::error::{Error, Result};
use crate::network::{Architecture, Head, Hidden, LossKind, NetworkSpec};
use crate::training::{FatConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    Blobs,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::FashionMnist => "fashion-mnist",
            DatasetKind::Blobs => "blobs",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "fashion-mnist" => Ok(DatasetKind::FashionMnist),
            "blobs" => Ok(DatasetKind::Blobs),
            other => Err(Error::Config(format!("unknown dataset '{other}'"))),
        }
    }
}

/// Which surrogate losses PGD runs with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VariantSelection {
    /// Every adaptive loss for MDOME heads, the training loss otherwise.
    Auto,
    List(Vec<LossVariant>),
}

impl VariantSelection {
    pub fn resolve(&self, head: Head) -> Vec<LossVariant> {
        match self {
            VariantSelection::Auto if head == Head::Mdome => LossVariant::ALL.to_vec(),
            VariantSelection::Auto => vec![LossVariant::TrainingLoss],
            VariantSelection::List(v) => v.clone(),
        }
    }
}

impl fmt::Display for VariantSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariantSelection::Auto => f.write_str("auto"),
            VariantSelection::List(v) => {
                let names: Vec<&str> = v.iter().map(|v| v.name()).collect();
                f.write_str(&names.join(","))
            }
        }
    }
}

impl FromStr for VariantSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(VariantSelection::Auto);
        }
        let list = s.split(',').map(|v| v.trim().parse()).collect::<Result<Vec<LossVariant>>>()?;
        if list.is_empty() {
            return Err(Error::Config("attack_variants is empty".into()));
        }
        Ok(VariantSelection::List(list))
    }
}

/// A complete training, attack and analysis run.
///
/// Read from a flat `key = value` file; `#` starts a comment. Every key is
/// optional and falls back to [`ExperimentConfig::default`].
///
/// | key | meaning |
/// |---|---|
/// | `name` | run label used by `compare` |
/// | `dataset` | `mnist`, `fashion-mnist` or `blobs` |
/// | `task` | `binary_parity`, `mod3` or `full10` (digit datasets) |
/// | `data_dir` | directory holding the IDX files |
/// | `train_limit`, `test_limit` | use only the first N examples |
/// | `blobs_classes`, `blobs_per_class`, `blobs_spread`, `blobs_test_per_class` | synthetic data |
/// | `architecture` | `lenet-2d`, `smallcnn` or `mlp` |
/// | `head` | `sigmoid`, `softmax`, `dome` or `mdome` |
/// | `hidden` | `relu` or `pdome` |
/// | `loss` | `bce`, `ce` or `mse`; defaults by head |
/// | `head_bias` | bias on the final dense layer |
/// | `epochs`, `batch_size`, `lr`, `momentum`, `nesterov`, `weight_decay` | optimizer |
/// | `fat_epsilon`, `fat_alpha` | fast adversarial training; off when unset |
/// | `attack_epsilon`, `attack_step` | attack budget |
/// | `pgd_iterations`, `pgd_restarts` | PGD schedule |
/// | `attack_variants` | `auto` or a comma list of surrogate losses |
/// | `attack_limit` | number of test examples attacked |
/// | `analysis_limit` | number of test embeddings analysed |
/// | `jsd_bins`, `sample_cap` | distance histogram settings |
/// | `seed` | seeds initialization, shuffling, FAT, attacks and subsampling |
/// | `out` | artifact directory |
///
/// Real-valued keys accept fractions such as `8/255`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetKind,
    pub task: Task,
    pub data_dir: Option<PathBuf>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub blobs_classes: usize,
    pub blobs_per_class: usize,
    pub blobs_test_per_class: usize,
    pub blobs_spread: f64,
    pub architecture: Architecture,
    pub head: Head,
    pub hidden: Hidden,
    pub loss: Option<LossKind>,
    pub head_bias: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    pub fat_epsilon: Option<f64>,
    pub fat_alpha: Option<f64>,
    pub attack_epsilon: f64,
    pub attack_step: f64,
    pub pgd_iterations: usize,
    pub pgd_restarts: usize,
    pub attack_variants: VariantSelection,
    pub attack_limit: usize,
    pub analysis_limit: usize,
    pub jsd_bins: usize,
    pub sample_cap: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        ExperimentConfig {
            name: "run".into(),
            dataset: DatasetKind::Mnist,
            task: Task::Full10,
            data_dir: None,
            train_limit: None,
            test_limit: None,
            blobs_classes: 3,
            blobs_per_class: 200,
            blobs_test_per_class: 100,
            blobs_spread: 0.05,
            architecture: Architecture::Lenet2d,
            head: Head::Softmax,
            hidden: Hidden::Relu,
            loss: None,
            head_bias: false,
            epochs: train.epochs,
            batch_size: train.batch_size,
            lr: train.lr_max,
            momentum: train.momentum,
            nesterov: train.nesterov,
            weight_decay: train.weight_decay,
            fat_epsilon: None,
            fat_alpha: None,
            attack_epsilon: 8.0 / 255.0,
            attack_step: 2.0 / 255.0,
            pgd_iterations: 20,
            pgd_restarts: 2,
            attack_variants: VariantSelection::Auto,
            attack_limit: 500,
            analysis_limit: 2000,
            jsd_bins: crate::analysis::DEFAULT_BINS,
            sample_cap: crate::analysis::DEFAULT_SAMPLE_CAP,
            seed: 0,
            out: PathBuf::from("runs/run"),
        }
    }
}

fn parse_real(key: &str, value: &str) -> Result<f64> {
    let parsed = match value.split_once('/') {
        Some((n, d)) => n.trim().parse::<f64>().ok().zip(d.trim().parse::<f64>().ok()).map(|(n, d)| n / d),
        None => value.parse().ok(),
    };
    match parsed {
        Some(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Config(format!("{key}: expected a number, got '{value}'"))),
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

impl ExperimentConfig {
    /// Parses config text. Unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", n + 1)));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "name" => self.name = value.to_string(),
            "dataset" => self.dataset = value.parse()?,
            "task" => self.task = value.parse()?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "train_limit" => self.train_limit = Some(parse_value(key, value)?),
            "test_limit" => self.test_limit = Some(parse_value(key, value)?),
            "blobs_classes" => self.blobs_classes = parse_value(key, value)?,
            "blobs_per_class" => self.blobs_per_class = parse_value(key, value)?,
            "blobs_test_per_class" => self.blobs_test_per_class = parse_value(key, value)?,
            "blobs_spread" => self.blobs_spread = parse_real(key, value)?,
            "architecture" => self.architecture = value.parse()?,
            "head" => self.head = value.parse()?,
            "hidden" => self.hidden = value.parse()?,
            "loss" => self.loss = Some(value.parse()?),
            "head_bias" => self.head_bias = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "lr" => self.lr = parse_real(key, value)?,
            "momentum" => self.momentum = parse_real(key, value)?,
            "nesterov" => self.nesterov = parse_value(key, value)?,
            "weight_decay" => self.weight_decay = parse_real(key, value)?,
            "fat_epsilon" => self.fat_epsilon = Some(parse_real(key, value)?),
            "fat_alpha" => self.fat_alpha = Some(parse_real(key, value)?),
            "attack_epsilon" => self.attack_epsilon = parse_real(key, value)?,
            "attack_step" => self.attack_step = parse_real(key, value)?,
            "pgd_iterations" => self.pgd_iterations = parse_value(key, value)?,
            "pgd_restarts" => self.pgd_restarts = parse_value(key, value)?,
            "attack_variants" => self.attack_variants = value.parse()?,
            "attack_limit" => self.attack_limit = parse_value(key, value)?,
            "analysis_limit" => self.analysis_limit = parse_value(key, value)?,
            "jsd_bins" => self.jsd_bins = parse_value(key, value)?,
            "sample_cap" => self.sample_cap = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Every key with its current value, in documentation order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        vec![
            ("name", self.name.clone()),
            ("dataset", self.dataset.to_string()),
            ("task", self.task.to_string()),
            ("train_limit", opt(self.train_limit.map(|v| v.to_string()))),
            ("test_limit", opt(self.test_limit.map(|v| v.to_string()))),
            ("blobs_classes", self.blobs_classes.to_string()),
            ("blobs_per_class", self.blobs_per_class.to_string()),
            ("blobs_test_per_class", self.blobs_test_per_class.to_string()),
            ("blobs_spread", self.blobs_spread.to_string()),
            ("architecture", self.architecture.to_string()),
            ("head", self.head.to_string()),
            ("hidden", self.hidden.to_string()),
            ("loss", self.network_spec().loss().to_string()),
            ("head_bias", self.head_bias.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("nesterov", self.nesterov.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("fat_epsilon", opt(self.fat_epsilon.map(|v| v.to_string()))),
            ("fat_alpha", opt(self.fat_alpha.map(|v| v.to_string()))),
            ("attack_epsilon", self.attack_epsilon.to_string()),
            ("attack_step", self.attack_step.to_string()),
            ("pgd_iterations", self.pgd_iterations.to_string()),
            ("pgd_restarts", self.pgd_restarts.to_string()),
            ("attack_variants", self.attack_variants.to_string()),
            ("attack_limit", self.attack_limit.to_string()),
            ("analysis_limit", self.analysis_limit.to_string()),
            ("jsd_bins", self.jsd_bins.to_string()),
            ("sample_cap", self.sample_cap.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn classes(&self) -> usize {
        match self.dataset {
            DatasetKind::Blobs => self.blobs_classes,
            _ => self.task.classes(),
        }
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let mut spec = NetworkSpec::new(self.architecture, self.head, self.classes());
        spec.hidden = self.hidden;
        spec.head_bias = self.head_bias;
        spec.loss = self.loss;
        spec.seed = self.seed;
        if self.dataset == DatasetKind::Blobs {
            spec.input_shape = vec![2];
        }
        spec
    }

    pub fn fat(&self) -> Result<Option<FatConfig>> {
        match (self.fat_epsilon, self.fat_alpha) {
            (None, None) => Ok(None),
            (Some(e), Some(a)) => FatConfig::new(e, a).map(Some),
            _ => Err(Error::Config("fat_epsilon and fat_alpha must be set together".into())),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr_max: self.lr,
            momentum: self.momentum,
            nesterov: self.nesterov,
            weight_decay: self.weight_decay,
            fat: self.fat()?,
            seed: self.seed,
        })
    }

    pub fn fgsm_config(&self) -> AttackConfig {
        AttackConfig {
            seed: self.seed,
            ..AttackConfig::fgsm(self.attack_epsilon)
        }
    }

    pub fn pgd_config(&self) -> AttackConfig {
        AttackConfig {
            seed: self.seed,
            ..AttackConfig::pgd(self.attack_epsilon, self.attack_step, self.pgd_iterations, self.pgd_restarts)
        }
    }

    /// Checks every combination that would otherwise fail mid-run.
    pub fn validate(&self) -> Result<()> {
        if self.dataset == DatasetKind::Blobs {
            if self.architecture != Architecture::Mlp {
                return Err(Error::Config("blobs data needs the mlp architecture".into()));
            }
            if self.blobs_classes < 2 || self.blobs_per_class == 0 || self.blobs_test_per_class == 0 {
                return Err(Error::Config("blobs need at least 2 classes and 1 point per class".into()));
            }
        } else if self.architecture == Architecture::Mlp {
            return Err(Error::Config(format!("{} images need a convolutional architecture", self.dataset)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "need lr > 0, 0 ≤ momentum < 1 and weight_decay ≥ 0, got {}, {}, {}",
                self.lr, self.momentum, self.weight_decay
            )));
        }
        if self.attack_limit == 0 || self.analysis_limit < 2 || self.jsd_bins == 0 || self.sample_cap == 0 {
            return Err(Error::Config(
                "attack_limit, jsd_bins and sample_cap must be positive and analysis_limit at least 2".into(),
            ));
        }
        for limit in [self.train_limit, self.test_limit].into_iter().flatten() {
            if limit == 0 {
                return Err(Error::Config("dataset limits must be positive".into()));
            }
        }
        self.network_spec().validate()?;
        self.fat()?;
        self.fgsm_config().validate()?;
        self.pgd_config().validate()?;
        if self.head != Head::Mdome
            && self.attack_variants.resolve(self.head).iter().any(|v| *v != LossVariant::TrainingLoss)
        {
            return Err(Error::Config(format!("adaptive attack losses need an mdome head, not {}", self.head)));
        }
        Ok(())
    }
}
