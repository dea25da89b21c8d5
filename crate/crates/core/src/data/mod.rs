//! Datasets: IDX ingestion, label tasks and synthetic blobs.

mod idx;

pub use idx::{parse_idx, read_idx, Idx, IdxFile, IMAGES_MAGIC, LABELS_MAGIC};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "DOME_DATA_DIR";

/// Inputs `[N, ...]` with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::Argument(format!(
                "{} inputs but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Argument(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Dataset {
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-example input shape.
    pub fn input_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        (
            self.inputs.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// The first `n` examples (all of them if `n` exceeds the size).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let (inputs, labels) = self.batch(&idx);
        Dataset {
            inputs,
            labels,
            classes: self.classes,
        }
    }

    pub fn relabel(mut self, task: Task) -> Result<Dataset> {
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= 10) {
            return Err(Error::Argument(format!("label {bad} is not a digit")));
        }
        self.labels.iter_mut().for_each(|l| *l = task.map(*l));
        self.classes = task.classes();
        Ok(self)
    }
}

/// Label mapping applied to digit datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Odd vs even digits.
    BinaryParity,
    /// Digit modulo 3.
    Mod3,
    Full10,
}

impl Task {
    pub fn map(self, digit: usize) -> usize {
        match self {
            Task::BinaryParity => digit % 2,
            Task::Mod3 => digit % 3,
            Task::Full10 => digit,
        }
    }

    pub fn classes(self) -> usize {
        match self {
            Task::BinaryParity => 2,
            Task::Mod3 => 3,
            Task::Full10 => 10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::BinaryParity => "binary_parity",
            Task::Mod3 => "mod3",
            Task::Full10 => "full10",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary_parity" => Ok(Task::BinaryParity),
            "mod3" => Ok(Task::Mod3),
            "full10" => Ok(Task::Full10),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Loads an MNIST-format split from `dir`, accepting plain or gzipped files
/// named `{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`.
pub fn load_idx_dataset(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let images = read_idx(find_file(dir.as_ref(), &format!("{prefix}-images-idx3-ubyte"))?)?;
    let labels = read_idx(find_file(dir.as_ref(), &format!("{prefix}-labels-idx1-ubyte"))?)?;
    match (images, labels) {
        (Idx::Images(inputs), Idx::Labels(labels)) => Dataset::new(
            inputs,
            labels.into_iter().map(usize::from).collect(),
            10,
        ),
        _ => Err(Error::Format(format!("{prefix} image/label files have swapped contents"))),
    }
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let path = dir.join(name);
        if path.is_file() {
            return Ok(path);
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{stem}[.gz] not found in {}", dir.display()),
    )))
}

/// Gaussian clusters in 2-D with centres evenly spaced on a circle of radius
/// 0.35 around `(0.5, 0.5)`, ordered class by class.
pub fn make_blobs(n_classes: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if n_classes < 2 || per_class == 0 {
        return Err(Error::Argument("blobs need at least 2 classes and 1 point per class".into()));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::Argument(format!("spread must be non-negative, got {spread}")));
    }
    let noise = Normal::new(0.0, spread).map_err(|e| Error::Argument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n_classes * per_class * 2);
    let mut labels = Vec::with_capacity(n_classes * per_class);
    for c in 0..n_classes {
        let [cx, cy] = blob_center(c, n_classes);
        for _ in 0..per_class {
            data.push(cx + noise.sample(&mut rng));
            data.push(cy + noise.sample(&mut rng));
            labels.push(c);
        }
    }
    Dataset::new(Tensor::new(vec![labels.len(), 2], data)?, labels, n_classes)
}

pub fn blob_center(class: usize, n_classes: usize) -> [f64; 2] {
    let angle = std::f64::consts::TAU * class as f64 / n_classes as f64;
    [0.5 + 0.35 * angle.cos(), 0.5 + 0.35 * angle.sin()]
}
