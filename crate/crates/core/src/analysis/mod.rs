//! Embedding-space diagnostics.
//!
//! Pairwise Euclidean distances are split into intra-class and inter-class
//! sets; the Jensen-Shannon divergence between their histograms measures
//! how well classes separate. Per-point Gaussian KDE likelihoods, normalized
//! per class, drive scatter-plot transparency.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_SAMPLE_CAP: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistanceOptions {
    /// Maximum number of pairs; larger sets are subsampled uniformly.
    pub sample_cap: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            sample_cap: DEFAULT_SAMPLE_CAP,
            bins: DEFAULT_BINS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceStats {
    pub intra: Vec<f64>,
    pub inter: Vec<f64>,
    /// `bins + 1` edges spanning both sets.
    pub bin_edges: Vec<f64>,
    /// 0 when either set is empty.
    pub jsd_bits: f64,
    /// Whether pairs were subsampled.
    pub sampled: bool,
}

fn check_points(embeddings: &Tensor, labels: &[usize]) -> Result<()> {
    if embeddings.rank() != 2 || embeddings.rows() != labels.len() {
        return Err(Error::dimension("embeddings", embeddings.shape(), &[labels.len()]));
    }
    Ok(())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Intra/inter-class pairwise distance sets and their JSD.
pub fn distance_distributions(embeddings: &Tensor, labels: &[usize], opts: &DistanceOptions) -> Result<DistanceStats> {
    check_points(embeddings, labels)?;
    let first = labels.first().copied();
    if labels.iter().all(|&l| Some(l) == first) {
        return Err(Error::Argument("distance distributions need at least two classes".into()));
    }
    let (intra, inter, sampled) = split_distances(embeddings, labels, opts);
    let bin_edges = histogram_edges(&intra, &inter, opts.bins);
    let jsd_bits = if intra.is_empty() || inter.is_empty() {
        0.0
    } else {
        jsd(&intra, &inter, opts.bins)?
    };
    Ok(DistanceStats {
        intra,
        inter,
        bin_edges,
        jsd_bits,
        sampled,
    })
}

fn split_distances(embeddings: &Tensor, labels: &[usize], opts: &DistanceOptions) -> (Vec<f64>, Vec<f64>, bool) {
    let n = labels.len();
    let total = n * n.saturating_sub(1) / 2;
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    let mut push = |i: usize, j: usize| {
        let d = euclidean(embeddings.row(i), embeddings.row(j));
        if labels[i] == labels[j] {
            intra.push(d);
        } else {
            inter.push(d);
        }
    };
    let sampled = total > opts.sample_cap;
    if sampled {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut picks = index::sample(&mut rng, total, opts.sample_cap).into_vec();
        picks.sort_unstable();
        let (mut i, mut row_start) = (0usize, 0usize);
        for k in picks {
            while k >= row_start + (n - 1 - i) {
                row_start += n - 1 - i;
                i += 1;
            }
            push(i, i + 1 + (k - row_start));
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                push(i, j);
            }
        }
    }
    (intra, inter, sampled)
}

fn support(p: &[f64], q: &[f64]) -> (f64, f64) {
    p.iter()
        .chain(q)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn histogram_edges(p: &[f64], q: &[f64], bins: usize) -> Vec<f64> {
    if p.is_empty() && q.is_empty() {
        return Vec::new();
    }
    let (lo, hi) = support(p, q);
    (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect()
}

/// Normalized histogram over `bins` equal-width bins on `[lo, hi]`.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let width = hi - lo;
    for &v in samples {
        let k = if width > 0.0 {
            (((v - lo) / width * bins as f64) as usize).min(bins - 1)
        } else {
            0
        };
        h[k] += 1.0;
    }
    let n = samples.len() as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}

/// Jensen-Shannon divergence in bits between the histograms of two sample
/// sets over their joint range. A zero-width range gives 0.
pub fn jsd(p_samples: &[f64], q_samples: &[f64], bins: usize) -> Result<f64> {
    if p_samples.is_empty() || q_samples.is_empty() || bins == 0 {
        return Err(Error::Argument("jsd needs two non-empty sample sets and at least one bin".into()));
    }
    let (lo, hi) = support(p_samples, q_samples);
    if !(hi > lo) {
        return Ok(0.0);
    }
    let p = histogram(p_samples, lo, hi, bins);
    let q = histogram(q_samples, lo, hi, bins);
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .filter(|(&ai, _)| ai > 0.0)
            .map(|(&ai, &mi)| ai * (ai / mi).log2())
            .sum()
    };
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((0.5 * kl(&p, &m) + 0.5 * kl(&q, &m)).clamp(0.0, 1.0))
}

/// Scott's-rule bandwidth per dimension, `s·m^(-1/(d+4))`, or `None` for
/// dimensions without spread.
fn bandwidths(points: &[&[f64]]) -> Vec<Option<f64>> {
    let m = points.len() as f64;
    let d = points[0].len();
    let factor = m.powf(-1.0 / (d as f64 + 4.0));
    (0..d)
        .map(|k| {
            let mean = points.iter().map(|p| p[k]).sum::<f64>() / m;
            let var = points.iter().map(|p| (p[k] - mean).powi(2)).sum::<f64>() / (m - 1.0);
            let s = var.sqrt();
            (s > 0.0).then_some(s * factor)
        })
        .collect()
}

fn class_members(labels: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .map(|c| (c, (0..labels.len()).filter(|&i| labels[i] == c).collect()))
        .collect()
}

/// Log of the Gaussian product-kernel density of each class member under
/// its own class, up to a per-class constant.
fn class_log_densities(embeddings: &Tensor, members: &[usize]) -> Vec<f64> {
    let points: Vec<&[f64]> = members.iter().map(|&i| embeddings.row(i)).collect();
    if points.len() < 2 {
        return vec![0.0; points.len()];
    }
    let h = bandwidths(&points);
    points
        .iter()
        .map(|x| {
            let exps: Vec<f64> = points
                .iter()
                .map(|y| {
                    h.iter()
                        .enumerate()
                        .filter_map(|(k, hk)| hk.map(|hk| -0.5 * ((x[k] - y[k]) / hk).powi(2)))
                        .sum()
                })
                .collect();
            let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + exps.iter().map(|e| (e - max).exp()).sum::<f64>().ln()
        })
        .collect()
}

/// Gaussian KDE density of every point under its own class, with Scott's
/// rule bandwidths; dimensions without spread are left out of the kernel.
pub fn kde_density(embeddings: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
    check_points(embeddings, labels)?;
    let mut out = vec![0.0; labels.len()];
    for (_, members) in class_members(labels) {
        let points: Vec<&[f64]> = members.iter().map(|&i| embeddings.row(i)).collect();
        if points.len() < 2 {
            out[members[0]] = 1.0;
            continue;
        }
        let h = bandwidths(&points);
        let norm: f64 = h
            .iter()
            .flatten()
            .map(|hk| hk * (2.0 * std::f64::consts::PI).sqrt())
            .product::<f64>()
            * points.len() as f64;
        for (slot, logd) in class_log_densities(embeddings, &members).into_iter().enumerate() {
            out[members[slot]] = logd.exp() / norm;
        }
    }
    Ok(out)
}

/// KDE likelihood of every point under its own class divided by the class
/// maximum, in `(0, 1]`. Singleton classes get 1.
pub fn kde_likelihood(embeddings: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
    check_points(embeddings, labels)?;
    let mut out = vec![1.0; labels.len()];
    for (_, members) in class_members(labels) {
        let logd = class_log_densities(embeddings, &members);
        let max = logd.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (slot, l) in logd.into_iter().enumerate() {
            out[members[slot]] = (l - max).exp().max(f64::MIN_POSITIVE);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRadius {
    pub class: usize,
    pub count: usize,
    /// Mean distance of class members to the class centroid.
    pub mean_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactnessReport {
    pub bbox_diagonal: f64,
    pub class_radii: Vec<ClassRadius>,
    pub mean_intra: f64,
    pub mean_inter: f64,
    /// No same-class pairs; `mean_intra` reported as 0.
    pub intra_undefined: bool,
    /// No cross-class pairs; `mean_inter` reported as 0.
    pub inter_undefined: bool,
    pub jsd_bits: f64,
    pub pairs_sampled: bool,
}

pub fn compactness_report(embeddings: &Tensor, labels: &[usize], opts: &DistanceOptions) -> Result<CompactnessReport> {
    check_points(embeddings, labels)?;
    let d = embeddings.row_len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for b in 0..embeddings.rows() {
        for (k, &v) in embeddings.row(b).iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    let bbox_diagonal = if labels.is_empty() { 0.0 } else { euclidean(&lo, &hi) };

    let class_radii = class_members(labels)
        .into_iter()
        .map(|(class, members)| {
            let m = members.len() as f64;
            let centroid: Vec<f64> = (0..d)
                .map(|k| members.iter().map(|&i| embeddings.row(i)[k]).sum::<f64>() / m)
                .collect();
            let mean_radius = members.iter().map(|&i| euclidean(embeddings.row(i), &centroid)).sum::<f64>() / m;
            ClassRadius {
                class,
                count: members.len(),
                mean_radius,
            }
        })
        .collect();

    let (intra, inter, pairs_sampled) = split_distances(embeddings, labels, opts);
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let jsd_bits = if intra.is_empty() || inter.is_empty() {
        0.0
    } else {
        jsd(&intra, &inter, opts.bins)?
    };
    Ok(CompactnessReport {
        bbox_diagonal,
        class_radii,
        mean_intra: mean(&intra),
        mean_inter: mean(&inter),
        intra_undefined: intra.is_empty(),
        inter_undefined: inter.is_empty(),
        jsd_bits,
        pairs_sampled,
    })
}
