//! Contrastive objectives and their split into an alignment term `l1` and a
//! regularizer `l2`.
//!
//! * InfoNCE with one negative per anchor and no temperature:
//!   `total = l1 + l2` on unit vectors.
//! * Cross-correlation: `total = sum (1 - F_ii)^2 + lambda sum_{i != j} F_ij^2
//!   = (1 - lambda) l1 + lambda l2` with `l2 = |F - I|_F^2`.
//! * Simple contrastive: `total = l1 + lambda l2` with `l2 = mean z1 . z-`.
//!
//! Batch gradients with respect to the embeddings live next to each loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, dot, norm};

const UNIT_TOL: f64 = 1e-6;
const STANDARDIZED_TOL: f64 = 1e-6;

/// Default off-diagonal weight for cross-correlation training.
pub const DEFAULT_CROSS_CORR_LAMBDA: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    InfoNce,
    CrossCorr,
    Simple,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::InfoNce => "info_nce",
            LossKind::CrossCorr => "cross_corr",
            LossKind::Simple => "simple",
        }
    }
}

/// A loss with its weight, as configured for training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    InfoNce,
    CrossCorr {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    Simple {
        lambda: f64,
    },
}

fn default_lambda() -> f64 {
    DEFAULT_CROSS_CORR_LAMBDA
}

impl LossSpec {
    pub fn kind(&self) -> LossKind {
        match self {
            LossSpec::InfoNce => LossKind::InfoNce,
            LossSpec::CrossCorr { .. } => LossKind::CrossCorr,
            LossSpec::Simple { .. } => LossKind::Simple,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match *self {
            LossSpec::InfoNce => None,
            LossSpec::CrossCorr { lambda } | LossSpec::Simple { lambda } => Some(lambda),
        }
    }

    /// Whether the loss consumes an independent negative per anchor.
    pub fn needs_negatives(&self) -> bool {
        !matches!(self, LossSpec::CrossCorr { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub l1: f64,
    pub l2: f64,
    pub kind: LossKind,
    pub lambda: Option<f64>,
}

fn check_aligned(batches: &[&[Vec<f64>]]) -> Result<usize> {
    let b = batches[0].len();
    if b == 0 {
        return Err(Error::BatchTooSmall(0));
    }
    for batch in batches {
        if batch.len() != b {
            return Err(Error::DimensionMismatch {
                expected: b,
                got: batch.len(),
            });
        }
    }
    Ok(b)
}

fn check_unit(batches: &[&[Vec<f64>]]) -> Result<()> {
    for batch in batches {
        for z in batch.iter() {
            let n = norm(z);
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(Error::NonUnitNorm(n));
            }
        }
    }
    Ok(())
}

/// `log(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn info_nce(z1: &[Vec<f64>], z2: &[Vec<f64>], zn: &[Vec<f64>]) -> Result<LossBreakdown> {
    let b = check_aligned(&[z1, z2, zn])? as f64;
    check_unit(&[z1, z2, zn])?;
    let (mut total, mut l1, mut l2) = (0.0, 0.0, 0.0);
    for ((a, p), n) in z1.iter().zip(z2).zip(zn) {
        let pos = dot(a, p);
        let neg = dot(a, n);
        let lse = log_add_exp(pos, neg);
        total += lse - pos;
        l1 += 0.5 * dist_sq(a, p) - 1.0;
        l2 += lse;
    }
    Ok(LossBreakdown {
        total: total / b,
        l1: l1 / b,
        l2: l2 / b,
        kind: LossKind::InfoNce,
        lambda: None,
    })
}

/// Gradients of the InfoNCE total with respect to anchors, positives and negatives.
pub fn info_nce_grad(z1: &[Vec<f64>], z2: &[Vec<f64>], zn: &[Vec<f64>]) -> EmbeddingGrads {
    let b = z1.len() as f64;
    let mut g = EmbeddingGrads::zeros(z1.len(), z1[0].len(), true);
    for i in 0..z1.len() {
        let pos = dot(&z1[i], &z2[i]);
        let neg = dot(&z1[i], &zn[i]);
        // Weight of the negative in the two-term softmax.
        let w = 1.0 / (1.0 + (pos - neg).exp());
        for k in 0..z1[i].len() {
            g.anchors[i][k] = w * (zn[i][k] - z2[i][k]) / b;
            g.positives[i][k] = -w * z1[i][k] / b;
            g.negatives[i][k] = w * z1[i][k] / b;
        }
    }
    g
}

/// Symmetrized cross-correlation of two view batches, row-major `d x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrMatrix {
    pub f: Vec<f64>,
    pub d: usize,
    pub batch_size: usize,
}

impl CrossCorrMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.f[i * self.d + j]
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, batch_size: usize) -> Self {
        let d = rows.len();
        Self {
            f: rows.into_iter().flatten().collect(),
            d,
            batch_size,
        }
    }
}

/// Per-dimension mean and mean square over the union of both view batches.
fn union_moments(v1: &[Vec<f64>], v2: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = v1[0].len();
    let n = (v1.len() + v2.len()) as f64;
    let mut mean = vec![0.0; d];
    let mut sq = vec![0.0; d];
    for z in v1.iter().chain(v2) {
        for k in 0..d {
            mean[k] += z[k];
            sq[k] += z[k] * z[k];
        }
    }
    (mean.iter().map(|m| m / n).collect(), sq.iter().map(|s| s / n).collect())
}

pub fn cross_correlation(v1: &[Vec<f64>], v2: &[Vec<f64>]) -> Result<CrossCorrMatrix> {
    check_aligned(&[v1, v2])?;
    let d = v1[0].len();
    if v1.iter().chain(v2).any(|z| z.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: 0 });
    }
    let (mean, sq) = union_moments(v1, v2);
    for k in 0..d {
        if mean[k].abs() > STANDARDIZED_TOL || (sq[k] - 1.0).abs() > STANDARDIZED_TOL {
            return Err(Error::Unstandardized(format!(
                "dimension {k} has mean {} and mean square {}",
                mean[k], sq[k]
            )));
        }
    }
    Ok(cross_correlation_unchecked(v1, v2))
}

/// The symmetrized estimator without the standardization check.
pub fn cross_correlation_unchecked(v1: &[Vec<f64>], v2: &[Vec<f64>]) -> CrossCorrMatrix {
    let b = v1.len();
    let d = v1[0].len();
    let mut f = vec![0.0; d * d];
    for (a, c) in v1.iter().zip(v2) {
        for i in 0..d {
            for j in 0..d {
                f[i * d + j] += 0.5 * (a[i] * c[j] + c[i] * a[j]);
            }
        }
    }
    for x in &mut f {
        *x /= b as f64;
    }
    CrossCorrMatrix { f, d, batch_size: b }
}

pub fn cross_corr_loss(f: &CrossCorrMatrix, lambda: f64) -> Result<LossBreakdown> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveLambda(lambda));
    }
    let (l1, off) = cross_corr_terms(f);
    Ok(LossBreakdown {
        total: l1 + lambda * off,
        l1,
        l2: l1 + off,
        kind: LossKind::CrossCorr,
        lambda: Some(lambda),
    })
}

/// Diagonal term `sum (1 - F_ii)^2` and off-diagonal mass `sum_{i != j} F_ij^2`.
fn cross_corr_terms(f: &CrossCorrMatrix) -> (f64, f64) {
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..f.d {
        for j in 0..f.d {
            let v = f.get(i, j);
            if i == j {
                diag += (1.0 - v) * (1.0 - v);
            } else {
                off += v * v;
            }
        }
    }
    (diag, off)
}

/// Gradients of the cross-correlation total with respect to both view batches.
pub fn cross_corr_grad(v1: &[Vec<f64>], v2: &[Vec<f64>], lambda: f64) -> EmbeddingGrads {
    let f = cross_correlation_unchecked(v1, v2);
    let d = f.d;
    let b = v1.len() as f64;
    // dL/dF, symmetric.
    let mut g = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            g[i * d + j] = if i == j {
                -2.0 * (1.0 - f.get(i, i))
            } else {
                2.0 * lambda * f.get(i, j)
            };
        }
    }
    let mut out = EmbeddingGrads::zeros(v1.len(), d, false);
    for s in 0..v1.len() {
        for i in 0..d {
            let row = &g[i * d..(i + 1) * d];
            out.anchors[s][i] = dot(row, &v2[s]) / b;
            out.positives[s][i] = dot(row, &v1[s]) / b;
        }
    }
    out
}

pub fn simple_contrastive(z1: &[Vec<f64>], z2: &[Vec<f64>], zn: &[Vec<f64>], lambda: f64) -> Result<LossBreakdown> {
    let b = check_aligned(&[z1, z2, zn])? as f64;
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for ((a, p), n) in z1.iter().zip(z2).zip(zn) {
        l1 -= dot(a, p);
        l2 += dot(a, n);
    }
    let (l1, l2) = (l1 / b, l2 / b);
    Ok(LossBreakdown {
        total: l1 + lambda * l2,
        l1,
        l2,
        kind: LossKind::Simple,
        lambda: Some(lambda),
    })
}

pub fn simple_contrastive_grad(z1: &[Vec<f64>], z2: &[Vec<f64>], zn: &[Vec<f64>], lambda: f64) -> EmbeddingGrads {
    let b = z1.len() as f64;
    let mut g = EmbeddingGrads::zeros(z1.len(), z1[0].len(), true);
    for i in 0..z1.len() {
        for k in 0..z1[i].len() {
            g.anchors[i][k] = (-z2[i][k] + lambda * zn[i][k]) / b;
            g.positives[i][k] = -z1[i][k] / b;
            g.negatives[i][k] = lambda * z1[i][k] / b;
        }
    }
    g
}

/// `|E f|^2` over a population of embeddings; the regularizer the simple loss
/// reduces to when anchors and negatives are independent.
pub fn population_mean_norm_sq(zs: &[Vec<f64>]) -> f64 {
    let d = zs[0].len();
    let mut mean = vec![0.0; d];
    for z in zs {
        for k in 0..d {
            mean[k] += z[k] / zs.len() as f64;
        }
    }
    dot(&mean, &mean)
}

/// Standardize each dimension over the union of two view batches to mean 0
/// and mean square 1. Constant dimensions are only centered.
pub fn standardize_union(v1: &[Vec<f64>], v2: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (mean, sq) = union_moments(v1, v2);
    let scale: Vec<f64> = mean
        .iter()
        .zip(&sq)
        .map(|(m, s)| {
            let var = s - m * m;
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let apply = |vs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        vs.iter()
            .map(|z| z.iter().enumerate().map(|(k, x)| (x - mean[k]) * scale[k]).collect())
            .collect()
    };
    (apply(v1), apply(v2))
}

/// Gradients with respect to the embeddings of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrads {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    /// Empty for losses without negatives.
    pub negatives: Vec<Vec<f64>>,
}

impl EmbeddingGrads {
    fn zeros(b: usize, d: usize, with_negatives: bool) -> Self {
        Self {
            anchors: vec![vec![0.0; d]; b],
            positives: vec![vec![0.0; d]; b],
            negatives: if with_negatives {
                vec![vec![0.0; d]; b]
            } else {
                Vec::new()
            },
        }
    }
}
