//! Empirical quantities of a trained encoder: class centers, the
//! nearest-center classifier and its error, view spreads, intra-class
//! deviation moments and population values of the losses.
//!
//! Expectations over `A(x)` use the enumerated views weighted by
//! [`AugmentationSet::view_weights`], so every quantity is deterministic.
//! Spreads use the enumeration grid in place of the supremum over all views
//! and therefore never exceed the true spread.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{sample_view, view_vectors, AugmentationSet};
use crate::data::Dataset;
use crate::encoder::{EncoderModel, NormMode, Standardizer};
use crate::error::{Error, Result};
use crate::linalg::{dist, dist_sq, dot};
use crate::losses::{cross_corr_loss, log_add_exp, CrossCorrMatrix, LossBreakdown, LossKind};

/// How expectations over the views of a sample are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ViewAveraging {
    Enumerate,
    Sampled { views_per_sample: usize, seed: u64 },
}

/// Embeddings of the views of every sample with their weights.
#[derive(Debug, Clone)]
pub struct EmbeddedViews {
    /// `views[i][v]` embeds view `v` of sample `i`.
    pub views: Vec<Vec<Vec<f64>>>,
    pub weights: Vec<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

fn view_inputs(ds: &Dataset, a: &AugmentationSet, how: ViewAveraging) -> Result<(Vec<Vec<Vec<f64>>>, Vec<f64>)> {
    a.validate_for_dim(ds.input_dim)?;
    match how {
        ViewAveraging::Enumerate => {
            let inputs = ds.samples.par_iter().map(|s| view_vectors(&s.features, a)).collect();
            Ok((inputs, a.view_weights()))
        }
        ViewAveraging::Sampled { views_per_sample, seed } => {
            if views_per_sample == 0 {
                return Err(Error::InvalidConfig("views_per_sample must be at least 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs = ds
                .samples
                .iter()
                .map(|s| {
                    (0..views_per_sample)
                        .map(|_| sample_view(&s.features, a, &mut rng).0)
                        .collect()
                })
                .collect();
            Ok((inputs, vec![1.0 / views_per_sample as f64; views_per_sample]))
        }
    }
}

/// Embeds every view. Standardized models use their frozen statistics.
pub fn embed_views(
    model: &EncoderModel,
    ds: &Dataset,
    a: &AugmentationSet,
    how: ViewAveraging,
) -> Result<EmbeddedViews> {
    if model.norm_mode == NormMode::BatchStandardized && model.frozen.is_none() {
        return Err(Error::InvalidConfig(
            "standardized encoder needs frozen statistics for evaluation".into(),
        ));
    }
    let (inputs, weights) = view_inputs(ds, a, how)?;
    let views = inputs
        .par_iter()
        .map(|vs| model.embed(vs))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddedViews {
        views,
        weights,
        labels: ds.samples.iter().map(|s| s.class_id).collect(),
        num_classes: ds.num_classes,
    })
}

/// Freezes standardization statistics so that every output dimension has
/// weighted mean 0 and mean square 1 over all views of the dataset.
pub fn freeze_population_standardizer(model: &mut EncoderModel, ds: &Dataset, a: &AugmentationSet) -> Result<()> {
    let (inputs, weights) = view_inputs(ds, a, ViewAveraging::Enumerate)?;
    let raw = inputs
        .par_iter()
        .map(|vs| vs.iter().map(|v| model.pre_projection(v)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let d = model.output_dim();
    let n = raw.len() as f64;
    let mut mean = vec![0.0; d];
    for vs in &raw {
        for (g, w) in vs.iter().zip(&weights) {
            for k in 0..d {
                mean[k] += w * g[k] / n;
            }
        }
    }
    let mut var = vec![0.0; d];
    for vs in &raw {
        for (g, w) in vs.iter().zip(&weights) {
            for k in 0..d {
                var[k] += w * (g[k] - mean[k]).powi(2) / n;
            }
        }
    }
    let scale = var
        .iter()
        .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 })
        .collect();
    model.frozen = Some(Standardizer { mean, scale });
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub centers: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    pub min_center_norm_sq: f64,
    /// `1 - min_k |mu_k|^2 / r^2`.
    pub delta_mu: f64,
    pub r: f64,
}

impl ClassStats {
    pub fn new(centers: Vec<Vec<f64>>, priors: Vec<f64>, r: f64) -> Self {
        let min_center_norm_sq = centers.iter().map(|c| dot(c, c)).fold(f64::INFINITY, f64::min);
        Self {
            delta_mu: 1.0 - min_center_norm_sq / (r * r),
            centers,
            priors,
            min_center_norm_sq,
            r,
        }
    }

    /// `mu_k . mu_l` for every unordered pair `k < l`.
    pub fn pairwise_products(&self) -> Vec<(usize, usize, f64)> {
        let k = self.centers.len();
        let mut out = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in i + 1..k {
                out.push((i, j, dot(&self.centers[i], &self.centers[j])));
            }
        }
        out
    }

    pub fn center_norms(&self) -> Vec<f64> {
        self.centers.iter().map(|c| dot(c, c).sqrt()).collect()
    }
}

pub fn centers_from_views(ev: &EmbeddedViews) -> Result<Vec<Vec<f64>>> {
    let d = ev.views[0][0].len();
    let mut sums = vec![vec![0.0; d]; ev.num_classes];
    let mut counts = vec![0usize; ev.num_classes];
    for (vs, &label) in ev.views.iter().zip(&ev.labels) {
        counts[label] += 1;
        for (z, w) in vs.iter().zip(&ev.weights) {
            for k in 0..d {
                sums[label][k] += w * z[k];
            }
        }
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(k));
    }
    Ok(sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect())
}

fn model_radius(model: &EncoderModel) -> Result<f64> {
    model
        .radius()
        .ok_or_else(|| Error::InvalidConfig("evaluation needs a normalized encoder".into()))
}

/// `mu_k` as the class mean of the weighted view average of `f`.
pub fn class_centers(
    model: &EncoderModel,
    ds: &Dataset,
    a: &AugmentationSet,
    how: ViewAveraging,
) -> Result<ClassStats> {
    let ev = embed_views(model, ds, a, how)?;
    Ok(ClassStats::new(
        centers_from_views(&ev)?,
        ds.priors.clone(),
        model_radius(model)?,
    ))
}

/// Nearest center; ties go to the smallest class id.
pub fn nn_classify(stats: &ClassStats, z: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in stats.centers.iter().enumerate() {
        let d = dist_sq(z, c);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

/// The same rule as a linear classifier with rows `mu_k` and offsets `-|mu_k|^2 / 2`.
pub fn linear_classify(stats: &ClassStats, z: &[f64]) -> usize {
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (k, c) in stats.centers.iter().enumerate() {
        let s = dot(c, z) - 0.5 * dot(c, c);
        if s > best_s {
            best = k;
            best_s = s;
        }
    }
    best
}

/// Predicted class of every raw sample.
pub fn predict(model: &EncoderModel, ds: &Dataset, stats: &ClassStats) -> Result<Vec<usize>> {
    let xs: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.features.clone()).collect();
    let z = model.embed(&xs)?;
    Ok(z.iter().map(|zi| nn_classify(stats, zi)).collect())
}

pub fn error_from_predictions(ds: &Dataset, predictions: &[usize]) -> f64 {
    let wrong = ds
        .samples
        .iter()
        .zip(predictions)
        .filter(|(s, &p)| s.class_id != p)
        .count();
    wrong as f64 / ds.len() as f64
}

/// Misclassification rate of the nearest-center rule on raw samples.
pub fn error_rate(model: &EncoderModel, ds: &Dataset, stats: &ClassStats) -> Result<f64> {
    Ok(error_from_predictions(ds, &predict(model, ds, stats)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStats {
    pub epsilon: f64,
    pub r_eps: f64,
    pub l_pos: f64,
    /// Ordered view pairs per sample, diagonal included.
    pub pairs_per_sample: usize,
}

/// Per-sample view spread and alignment, computed once for any `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadProfile {
    /// Largest distance between two views of each sample.
    pub spreads: Vec<f64>,
    /// Weighted mean squared distance between two views of each sample.
    pub alignment: Vec<f64>,
    pub pairs_per_sample: usize,
}

impl SpreadProfile {
    pub fn from_views(ev: &EmbeddedViews) -> Self {
        let rows: Vec<(f64, f64)> = ev
            .views
            .par_iter()
            .map(|vs| {
                let mut spread: f64 = 0.0;
                let mut align = 0.0;
                for i in 0..vs.len() {
                    for j in i + 1..vs.len() {
                        let d2 = dist_sq(&vs[i], &vs[j]);
                        spread = spread.max(d2);
                        align += 2.0 * ev.weights[i] * ev.weights[j] * d2;
                    }
                }
                (spread.sqrt(), align)
            })
            .collect();
        let v = ev.weights.len();
        Self {
            spreads: rows.iter().map(|r| r.0).collect(),
            alignment: rows.iter().map(|r| r.1).collect(),
            pairs_per_sample: v * v,
        }
    }

    /// Membership in the set of samples whose views stay within `epsilon`.
    pub fn in_s(&self, epsilon: f64) -> Vec<bool> {
        self.spreads.iter().map(|&s| s <= epsilon).collect()
    }

    pub fn r_eps(&self, epsilon: f64) -> f64 {
        self.spreads.iter().filter(|&&s| s > epsilon).count() as f64 / self.spreads.len() as f64
    }

    pub fn l_pos(&self) -> f64 {
        self.alignment.iter().sum::<f64>() / self.alignment.len() as f64
    }

    pub fn stats(&self, epsilon: f64) -> Result<AlignmentStats> {
        if !(epsilon > 0.0) {
            return Err(Error::NonPositiveEpsilon(epsilon));
        }
        Ok(AlignmentStats {
            epsilon,
            r_eps: self.r_eps(epsilon),
            l_pos: self.l_pos(),
            pairs_per_sample: self.pairs_per_sample,
        })
    }
}

/// Fraction of samples whose enumerated views spread more than `epsilon`,
/// and the mean squared distance between two views of a sample.
pub fn empirical_r_eps(
    model: &EncoderModel,
    ds: &Dataset,
    a: &AugmentationSet,
    epsilon: f64,
) -> Result<AlignmentStats> {
    if !(epsilon > 0.0) {
        return Err(Error::NonPositiveEpsilon(epsilon));
    }
    SpreadProfile::from_views(&embed_views(model, ds, a, ViewAveraging::Enumerate)?).stats(epsilon)
}

/// Per class, `E_{x in C_k} E_{x1 in A(x)} |f(x1) - mu_k|` and its square moment.
pub fn deviation_moments(ev: &EmbeddedViews, centers: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let k = centers.len();
    let mut first = vec![0.0; k];
    let mut second = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (vs, &label) in ev.views.iter().zip(&ev.labels) {
        counts[label] += 1;
        for (z, w) in vs.iter().zip(&ev.weights) {
            let d = dist(z, &centers[label]);
            first[label] += w * d;
            second[label] += w * d * d;
        }
    }
    for c in 0..k {
        first[c] /= counts[c].max(1) as f64;
        second[c] /= counts[c].max(1) as f64;
    }
    (first, second)
}

/// Population InfoNCE with the negative drawn from an independent sample.
pub fn population_info_nce(ev: &EmbeddedViews) -> LossBreakdown {
    let n = ev.views.len() as f64;
    let w = &ev.weights;
    let negs: Vec<(&Vec<f64>, f64)> = ev
        .views
        .iter()
        .flat_map(|vs| vs.iter().zip(w).map(|(z, &wv)| (z, wv / n)))
        .collect();
    let rows: Vec<(f64, f64)> = ev
        .views
        .par_iter()
        .map(|vs| {
            let mut l1 = 0.0;
            let mut l2 = 0.0;
            for (z1, &w1) in vs.iter().zip(w) {
                let neg_dots: Vec<(f64, f64)> = negs.iter().map(|(zn, wn)| (dot(z1, zn), *wn)).collect();
                for (z2, &w2) in vs.iter().zip(w) {
                    let pos = dot(z1, z2);
                    let lse: f64 = neg_dots.iter().map(|(b, wn)| wn * log_add_exp(pos, *b)).sum();
                    l1 += w1 * w2 * (0.5 * dist_sq(z1, z2) - 1.0);
                    l2 += w1 * w2 * lse;
                }
            }
            (l1, l2)
        })
        .collect();
    let l1 = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let l2 = rows.iter().map(|r| r.1).sum::<f64>() / n;
    LossBreakdown {
        total: l1 + l2,
        l1,
        l2,
        kind: LossKind::InfoNce,
        lambda: None,
    }
}

/// Population cross-correlation `E_x E_{x1, x2 in A(x)} f(x1) f(x2)^T`.
pub fn population_cross_correlation(ev: &EmbeddedViews) -> CrossCorrMatrix {
    let d = ev.views[0][0].len();
    let n = ev.views.len() as f64;
    let mut f = vec![0.0; d * d];
    for vs in &ev.views {
        let mean: Vec<f64> = (0..d)
            .map(|k| vs.iter().zip(&ev.weights).map(|(z, w)| w * z[k]).sum())
            .collect();
        for i in 0..d {
            for j in 0..d {
                f[i * d + j] += mean[i] * mean[j] / n;
            }
        }
    }
    CrossCorrMatrix {
        f,
        d,
        batch_size: ev.views.len(),
    }
}

pub fn population_cross_corr_loss(ev: &EmbeddedViews, lambda: f64) -> Result<(CrossCorrMatrix, LossBreakdown)> {
    let f = population_cross_correlation(ev);
    let loss = cross_corr_loss(&f, lambda)?;
    Ok((f, loss))
}

/// Fraction of samples in both a main part and the aligned set that the
/// nearest-center rule classifies correctly. `None` when the intersection is empty.
pub fn main_part_accuracy(
    ds: &Dataset,
    predictions: &[usize],
    main_parts: &[Vec<usize>],
    in_s: &[bool],
) -> Option<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for part in main_parts {
        for &i in part {
            if in_s[i] {
                total += 1;
                if predictions[i] == ds.samples[i].class_id {
                    correct += 1;
                }
            }
        }
    }
    (total > 0).then(|| correct as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub err: f64,
    pub alignment: AlignmentStats,
    pub stats: ClassStats,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("err,{}\n", self.err));
        out.push_str(&format!("epsilon,{}\n", self.alignment.epsilon));
        out.push_str(&format!("r_eps,{}\n", self.alignment.r_eps));
        out.push_str(&format!("l_pos,{}\n", self.alignment.l_pos));
        out.push_str(&format!("delta_mu,{}\n", self.stats.delta_mu));
        for (k, n) in self.stats.center_norms().iter().enumerate() {
            out.push_str(&format!("center_norm.{k},{n}\n"));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Centers, error and alignment at one `epsilon`.
pub fn evaluate(model: &EncoderModel, ds: &Dataset, a: &AugmentationSet, epsilon: f64) -> Result<EvalReport> {
    let ev = embed_views(model, ds, a, ViewAveraging::Enumerate)?;
    let stats = ClassStats::new(centers_from_views(&ev)?, ds.priors.clone(), model_radius(model)?);
    let err = error_rate(model, ds, &stats)?;
    let alignment = SpreadProfile::from_views(&ev).stats(epsilon)?;
    Ok(EvalReport { err, alignment, stats })
}
