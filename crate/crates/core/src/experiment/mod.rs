//! Declarative experiments: train, attack and analyse one model and write
//! every artifact into a run directory.
//!
//! A run directory holds:
//!
//! | file | contents |
//! |---|---|
//! | `model.dome` | trained network checkpoint |
//! | `history.csv` | per-epoch learning rate, loss, accuracy and DOME parameters |
//! | `embeddings.csv` | `id,class,pred,e1..ed,kde_likelihood` for analysed test points |
//! | `attacks.csv` | `attack,id,variant,success,final_pred,linf` per attacked example |
//! | `stats.json` | config echo plus train, attack and analysis summaries |
//! | `embedding.svg` | embedding scatter, opacity from KDE likelihood |
//! | `distances.svg` | intra/inter-class distance histograms |
//!
//! `stats.json` holds no timestamps or paths, so equal configs give
//! byte-identical files.

mod config;
pub mod svg;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

pub use config::{DatasetKind, ExperimentConfig, VariantSelection};

use crate::analysis::{compactness_report, distance_distributions, histogram, kde_likelihood, DistanceOptions};
use crate::attacks::{attack_report, AttackReport, LossVariant};
use crate::data::{load_idx_dataset, make_blobs, Dataset, Split, DATA_DIR_ENV};
use crate::error::{Error, Result};
use crate::network::{build, load, save, Network};
use crate::tensor::Tensor;
use crate::training::{accuracy, dome_parameters, train, History, EVAL_BATCH};

pub const MODEL_FILE: &str = "model.dome";
pub const HISTORY_FILE: &str = "history.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const ATTACKS_FILE: &str = "attacks.csv";
pub const STATS_FILE: &str = "stats.json";
pub const SCATTER_FILE: &str = "embedding.svg";
pub const HISTOGRAM_FILE: &str = "distances.svg";

pub const ARTIFACTS: [&str; 7] = [
    MODEL_FILE,
    HISTORY_FILE,
    EMBEDDINGS_FILE,
    ATTACKS_FILE,
    STATS_FILE,
    SCATTER_FILE,
    HISTOGRAM_FILE,
];

/// Seed offset separating synthetic test points from training points.
const BLOBS_TEST_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Directory holding the IDX files: the config's `data_dir`, else the
/// environment variable.
pub fn data_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    if let Some(dir) = &cfg.data_dir {
        return Ok(dir.clone());
    }
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .ok_or_else(|| Error::Config(format!("{} data needs data_dir, --data or {DATA_DIR_ENV}", cfg.dataset)))
}

/// Train and test sets after limits and relabelling.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let (train, test) = match cfg.dataset {
        DatasetKind::Blobs => {
            let blobs = |per_class, seed| -> Result<Dataset> {
                let mut d = make_blobs(cfg.blobs_classes, per_class, cfg.blobs_spread, seed)?;
                d.inputs = d.inputs.map(|v| v.clamp(0.0, 1.0));
                Ok(d)
            };
            (
                blobs(cfg.blobs_per_class, cfg.seed)?,
                blobs(cfg.blobs_test_per_class, cfg.seed ^ BLOBS_TEST_SEED)?,
            )
        }
        DatasetKind::Mnist | DatasetKind::FashionMnist => {
            let dir = data_dir(cfg)?;
            let train = load_idx_dataset(&dir, Split::Train)?;
            let test = load_idx_dataset(&dir, Split::Test)?;
            (train.relabel(cfg.task)?, test.relabel(cfg.task)?)
        }
    };
    let limit = |d: Dataset, n: Option<usize>| match n {
        Some(n) => d.head(n),
        None => d,
    };
    Ok((limit(train, cfg.train_limit), limit(test, cfg.test_limit)))
}

/// Seeded subset of at most `n` examples, kept in dataset order.
fn subset(data: &Dataset, n: usize, seed: u64, stream: u64) -> Dataset {
    if n >= data.len() {
        return data.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut picks = index::sample(&mut rng, data.len(), n).into_vec();
    picks.sort_unstable();
    let (inputs, labels) = data.batch(&picks);
    Dataset {
        inputs,
        labels,
        classes: data.classes,
    }
}

fn read_stats(dir: &Path) -> Result<Map<String, Value>> {
    let path = dir.join(STATS_FILE);
    if !path.is_file() {
        return Ok(Map::new());
    }
    match serde_json::from_str(&fs::read_to_string(path)?)? {
        Value::Object(map) => Ok(map),
        _ => Err(Error::Format(format!("{STATS_FILE} is not a JSON object"))),
    }
}

/// Replaces one section of `stats.json`, echoing the config alongside.
fn update_stats(cfg: &ExperimentConfig, section: &str, value: Value) -> Result<()> {
    let mut stats = read_stats(&cfg.out)?;
    let config: Map<String, Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::String(v)))
        .collect();
    stats.insert("config".into(), Value::Object(config));
    stats.insert(section.into(), value);
    let mut text = serde_json::to_string_pretty(&Value::Object(stats))?;
    text.push('\n');
    fs::write(cfg.out.join(STATS_FILE), text)?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Trains a fresh network and writes the checkpoint, history and the
/// `train` section of the stats.
pub fn train_stage(cfg: &ExperimentConfig, train_set: &Dataset, test_set: &Dataset) -> Result<(Network, History)> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    let mut net = build(&cfg.network_spec())?;
    log::info!(
        "{}: training {} / {} / {} on {} examples",
        cfg.name,
        cfg.architecture,
        cfg.hidden,
        cfg.head,
        train_set.len()
    );
    let history = train(&mut net, train_set, test_set, &cfg.train_config()?)?;
    save(&net, cfg.out.join(MODEL_FILE))?;
    let mut w = create(&cfg.out, HISTORY_FILE)?;
    history.write_csv(&mut w)?;
    w.flush()?;

    let last = history.epochs.last().expect("at least one epoch");
    let (mu, sigma, pi) = dome_parameters(&net);
    update_stats(
        cfg,
        "train",
        json!({
            "epochs": history.len(),
            "train_examples": train_set.len(),
            "test_examples": test_set.len(),
            "final_train_loss": last.train_loss,
            "train_acc": last.train_acc,
            "test_acc": last.test_acc,
            "param_count": net.param_count(),
            "mu": mu,
            "sigma": sigma,
            "pi": pi,
        }),
    )?;
    Ok((net, history))
}

/// Results of the attack stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSummary {
    pub examples: usize,
    pub benign_acc: f64,
    pub fgsm: AttackReport,
    pub pgd: AttackReport,
}

impl AttackSummary {
    pub fn fgsm_acc(&self) -> f64 {
        self.fgsm.union_accuracy()
    }

    /// Accuracy under the union of every PGD loss variant.
    pub fn pgd_acc(&self) -> f64 {
        self.pgd.union_accuracy()
    }
}

fn write_attacks(out: impl Write, reports: &[(&str, &AttackReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["attack", "id", "variant", "success", "final_pred", "linf"])?;
    for (attack, report) in reports {
        for r in &report.variants {
            for i in 0..r.success.len() {
                w.write_record([
                    attack.to_string(),
                    i.to_string(),
                    r.variant.to_string(),
                    u8::from(r.success[i]).to_string(),
                    r.predictions[i].to_string(),
                    r.linf[i].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// FGSM and PGD on a seeded test subset; writes `attacks.csv` and the
/// `attacks` section of the stats.
pub fn attack_stage(cfg: &ExperimentConfig, net: &Network, test_set: &Dataset) -> Result<AttackSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    let data = subset(test_set, cfg.attack_limit, cfg.seed, 1);
    log::info!("{}: attacking {} examples", cfg.name, data.len());
    let benign_acc = accuracy(net, &data)?;
    let fgsm = attack_report(net, &data, &cfg.fgsm_config(), &[LossVariant::TrainingLoss])?;
    let pgd = attack_report(net, &data, &cfg.pgd_config(), &cfg.attack_variants.resolve(cfg.head))?;
    let mut w = create(&cfg.out, ATTACKS_FILE)?;
    write_attacks(&mut w, &[("fgsm", &fgsm), ("pgd", &pgd)])?;
    w.flush()?;

    let variants: Map<String, Value> = pgd
        .variants
        .iter()
        .map(|r| (r.variant.to_string(), json!(r.adversarial_accuracy())))
        .collect();
    let summary = AttackSummary {
        examples: data.len(),
        benign_acc,
        fgsm,
        pgd,
    };
    update_stats(
        cfg,
        "attacks",
        json!({
            "examples": summary.examples,
            "epsilon": cfg.attack_epsilon,
            "step": cfg.attack_step,
            "iterations": cfg.pgd_iterations,
            "restarts": cfg.pgd_restarts,
            "benign_acc": summary.benign_acc,
            "fgsm_acc": summary.fgsm_acc(),
            "pgd_acc": summary.pgd_acc(),
            "pgd_variants": variants,
        }),
    )?;
    Ok(summary)
}

/// Embeddings of `data`, computed in evaluation-sized chunks.
pub fn embed_all(net: &Network, data: &Dataset) -> Result<(Tensor, Vec<usize>)> {
    let mut rows = Vec::with_capacity(data.len() * net.embedding_dim());
    let mut preds = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let (x, _) = data.batch(chunk);
        let pass = net.forward(&x)?;
        preds.extend(crate::network::predict_from_output(pass.output()));
        rows.extend_from_slice(pass.embedding().data());
    }
    Ok((Tensor::new(vec![data.len(), net.embedding_dim()], rows)?, preds))
}

/// Compactness diagnostics on a seeded test subset; writes the embedding
/// dump, both plots and the `analysis` section of the stats.
pub fn analyze_stage(cfg: &ExperimentConfig, net: &Network, test_set: &Dataset) -> Result<crate::analysis::CompactnessReport> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    let data = subset(test_set, cfg.analysis_limit, cfg.seed, 2);
    log::info!("{}: analysing {} embeddings", cfg.name, data.len());
    let (emb, preds) = embed_all(net, &data)?;
    let likelihood = kde_likelihood(&emb, &data.labels)?;

    let mut w = csv::Writer::from_writer(create(&cfg.out, EMBEDDINGS_FILE)?);
    let d = emb.row_len();
    let mut header = vec!["id".to_string(), "class".into(), "pred".into()];
    header.extend((1..=d).map(|k| format!("e{k}")));
    header.push("kde_likelihood".into());
    w.write_record(&header)?;
    for b in 0..data.len() {
        let mut rec = vec![b.to_string(), data.labels[b].to_string(), preds[b].to_string()];
        rec.extend(emb.row(b).iter().map(|v| v.to_string()));
        rec.push(likelihood[b].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;

    let opts = DistanceOptions {
        sample_cap: cfg.sample_cap,
        bins: cfg.jsd_bins,
        seed: cfg.seed,
    };
    let report = compactness_report(&emb, &data.labels, &opts)?;
    let dist = distance_distributions(&emb, &data.labels, &opts)?;
    let title = format!("{} / {} / {}", cfg.name, cfg.head, cfg.task);
    fs::write(cfg.out.join(SCATTER_FILE), svg::scatter(&emb, &data.labels, &likelihood, &title))?;
    let (intra, inter) = match (dist.bin_edges.first(), dist.bin_edges.last()) {
        (Some(&lo), Some(&hi)) => (
            histogram(&dist.intra, lo, hi, cfg.jsd_bins),
            histogram(&dist.inter, lo, hi, cfg.jsd_bins),
        ),
        _ => (Vec::new(), Vec::new()),
    };
    let hist_title = format!("{title}: JSD {:.4} bits", report.jsd_bits);
    fs::write(cfg.out.join(HISTOGRAM_FILE), svg::histogram(&dist.bin_edges, &intra, &inter, &hist_title))?;

    let mut section = serde_json::to_value(&report)?;
    if let Value::Object(map) = &mut section {
        map.insert("points".into(), json!(data.len()));
        map.insert("embedding_dim".into(), json!(d));
    }
    update_stats(cfg, "analysis", section)?;
    Ok(report)
}

/// Summary of a complete run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub history: History,
    pub attacks: AttackSummary,
    pub analysis: crate::analysis::CompactnessReport,
}

/// Trains, attacks and analyses; rejects invalid configs before any compute.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let (train_set, test_set) = load_data(cfg)?;
    let (net, history) = train_stage(cfg, &train_set, &test_set)?;
    let attacks = attack_stage(cfg, &net, &test_set)?;
    let analysis = analyze_stage(cfg, &net, &test_set)?;
    Ok(RunSummary {
        history,
        attacks,
        analysis,
    })
}

/// Loads the checkpoint of a trained run.
pub fn load_model(cfg: &ExperimentConfig) -> Result<Network> {
    let path = cfg.out.join(MODEL_FILE);
    if !path.is_file() {
        return Err(Error::MissingArtifacts(vec![path.display().to_string()]));
    }
    load(path)
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub run: String,
    pub dataset: String,
    pub task: String,
    pub head: String,
    pub hidden: String,
    pub benign_acc: f64,
    pub fgsm_acc: f64,
    pub pgd_acc: f64,
    pub jsd_bits: f64,
    pub bbox_diagonal: f64,
}

/// Two runs side by side plus a `delta` row holding `b − a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: ComparisonRow,
    pub b: ComparisonRow,
    pub delta: ComparisonRow,
}

impl Comparison {
    pub const COLUMNS: [&'static str; 10] = [
        "run",
        "dataset",
        "task",
        "head",
        "hidden",
        "benign_acc",
        "fgsm_acc",
        "pgd_acc",
        "jsd_bits",
        "bbox_diagonal",
    ];

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::COLUMNS)?;
        for r in [&self.a, &self.b, &self.delta] {
            w.write_record([
                r.run.clone(),
                r.dataset.clone(),
                r.task.clone(),
                r.head.clone(),
                r.hidden.clone(),
                r.benign_acc.to_string(),
                r.fgsm_acc.to_string(),
                r.pgd_acc.to_string(),
                r.jsd_bits.to_string(),
                r.bbox_diagonal.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn field<'a>(stats: &'a Map<String, Value>, section: &str, key: &str) -> Result<&'a Value> {
    stats
        .get(section)
        .and_then(|s| s.get(key))
        .ok_or_else(|| Error::Format(format!("{STATS_FILE} lacks {section}.{key}")))
}

fn number(stats: &Map<String, Value>, section: &str, key: &str) -> Result<f64> {
    field(stats, section, key)?
        .as_f64()
        .ok_or_else(|| Error::Format(format!("{STATS_FILE}: {section}.{key} is not a number")))
}

fn text(stats: &Map<String, Value>, key: &str) -> Result<String> {
    field(stats, "config", key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::Format(format!("{STATS_FILE}: config.{key} is not a string")))
}

fn comparison_row(dir: &Path) -> Result<ComparisonRow> {
    let stats = read_stats(dir)?;
    Ok(ComparisonRow {
        run: text(&stats, "name")?,
        dataset: text(&stats, "dataset")?,
        task: text(&stats, "task")?,
        head: text(&stats, "head")?,
        hidden: text(&stats, "hidden")?,
        benign_acc: number(&stats, "train", "test_acc")?,
        fgsm_acc: number(&stats, "attacks", "fgsm_acc")?,
        pgd_acc: number(&stats, "attacks", "pgd_acc")?,
        jsd_bits: number(&stats, "analysis", "jsd_bits")?,
        bbox_diagonal: number(&stats, "analysis", "bbox_diagonal")?,
    })
}

/// Side-by-side table of two complete runs. Lists every absent artifact
/// of both runs when either is incomplete.
pub fn compare(run_a: impl AsRef<Path>, run_b: impl AsRef<Path>) -> Result<Comparison> {
    let dirs = [run_a.as_ref(), run_b.as_ref()];
    let missing: Vec<String> = dirs
        .iter()
        .flat_map(|dir| ARTIFACTS.iter().map(move |f| dir.join(f)))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let a = comparison_row(dirs[0])?;
    let b = comparison_row(dirs[1])?;
    let delta = ComparisonRow {
        run: "delta".into(),
        dataset: String::new(),
        task: String::new(),
        head: String::new(),
        hidden: String::new(),
        benign_acc: b.benign_acc - a.benign_acc,
        fgsm_acc: b.fgsm_acc - a.fgsm_acc,
        pgd_acc: b.pgd_acc - a.pgd_acc,
        jsd_bits: b.jsd_bits - a.jsd_bits,
        bbox_diagonal: b.bbox_diagonal - a.bbox_diagonal,
    };
    Ok(Comparison { a, b, delta })
}
