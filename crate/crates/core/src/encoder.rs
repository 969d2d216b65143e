//! Small fully connected encoder with a fixed output normalization, manual
//! backpropagation for every loss, gradient-descent training and a Lipschitz
//! certificate.

use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{sample_view, sample_view_pair, AugmentationSet};
use crate::data::{ByteCursor, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{matvec, matvec_t, norm, spectral_norm_upper};
use crate::losses::{
    cross_corr_grad, cross_corr_loss, cross_correlation, info_nce, info_nce_grad, simple_contrastive,
    simple_contrastive_grad, EmbeddingGrads, LossBreakdown, LossSpec,
};

pub const MAX_LAYERS: usize = 3;
/// Pre-projection norms below this make the projection's Lipschitz factor unusable.
pub const MIN_PROJECTION_NORM: f64 = 1e-6;
const CHECKPOINT_MAGIC: &[u8; 4] = b"ENC1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
        }
    }

    /// Derivative expressed through the activation output.
    fn slope_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Identity),
            _ => Err(Error::Schema(format!("unknown activation code {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NormMode {
    /// No output normalization.
    Raw,
    /// Radial projection onto the sphere of radius `r`.
    Sphere { r: f64 },
    /// Per-dimension standardization over the normalization batch.
    BatchStandardized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Row-major `out_dim x in_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Layer {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = matvec(&self.weight, self.out_dim, self.in_dim, x);
        for (ai, bi) in a.iter_mut().zip(&self.bias) {
            *ai = self.activation.apply(*ai + bi);
        }
        a
    }

    fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Per-dimension affine map `z_k = (g_k - mean_k) * scale_k` fixed from a
/// reference population.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Two-pass estimate; constant dimensions keep scale 1.
    pub fn fit(raw: &[Vec<f64>]) -> Self {
        let d = raw[0].len();
        let n = raw.len() as f64;
        let mut mean = vec![0.0; d];
        for g in raw {
            for k in 0..d {
                mean[k] += g[k] / n;
            }
        }
        let mut var = vec![0.0; d];
        for g in raw {
            for k in 0..d {
                var[k] += (g[k] - mean[k]).powi(2) / n;
            }
        }
        let scale = var
            .iter()
            .map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        g.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) * s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub layers: Vec<Layer>,
    pub norm_mode: NormMode,
    /// Initialization seed, kept for the checkpoint header.
    pub seed: u64,
    /// Statistics used outside training in standardized mode.
    pub frozen: Option<Standardizer>,
}

impl EncoderModel {
    /// Random model with layer widths `dims = [input, hidden.., output]` and
    /// one activation per layer. Weights are `N(0, 1 / fan_in)`, biases zero.
    pub fn random(dims: &[usize], activations: &[Activation], norm_mode: NormMode, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.len() - 1 > MAX_LAYERS {
            return Err(Error::InvalidConfig(format!("encoder needs 1 to {MAX_LAYERS} layers")));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::InvalidConfig("one activation per layer is required".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let normal = Normal::new(0.0, (1.0 / w[0] as f64).sqrt()).unwrap();
                Layer {
                    weight: (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect(),
                    bias: vec![0.0; w[1]],
                    in_dim: w[0],
                    out_dim: w[1],
                    activation,
                }
            })
            .collect();
        let model = Self {
            layers,
            norm_mode,
            seed,
            frozen: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn from_layers(layers: Vec<Layer>, norm_mode: NormMode) -> Result<Self> {
        let model = Self {
            layers,
            norm_mode,
            seed: 0,
            frozen: None,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.len() > MAX_LAYERS {
            return Err(Error::InvalidConfig(format!("encoder needs 1 to {MAX_LAYERS} layers")));
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].out_dim,
                    got: pair[1].in_dim,
                });
            }
        }
        for l in &self.layers {
            if l.weight.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::InvalidConfig(
                    "layer shapes do not match their dimensions".into(),
                ));
            }
        }
        if let NormMode::Sphere { r } = self.norm_mode {
            if !(r > 0.0) {
                return Err(Error::InvalidConfig(format!("sphere radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// Norm of every embedding in sphere mode, `sqrt(d)` in standardized mode.
    pub fn radius(&self) -> Option<f64> {
        match self.norm_mode {
            NormMode::Sphere { r } => Some(r),
            NormMode::BatchStandardized => Some((self.output_dim() as f64).sqrt()),
            NormMode::Raw => None,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// Parameters as one vector: per layer the weight rows, then the bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            p.extend_from_slice(&l.weight);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: p.len(),
            });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let w = l.weight.len();
            l.weight.copy_from_slice(&p[at..at + w]);
            at += w;
            let b = l.bias.len();
            l.bias.copy_from_slice(&p[at..at + b]);
            at += b;
        }
        Ok(())
    }

    /// Output of the last layer before normalization.
    pub fn pre_projection(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut h = x.to_vec();
        for l in &self.layers {
            h = l.forward(&h);
        }
        Ok(h)
    }

    /// Embeds a batch. Standardized mode uses the statistics of this batch.
    pub fn forward(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let raw = xs.iter().map(|x| self.pre_projection(x)).collect::<Result<Vec<_>>>()?;
        self.normalize(raw, None)
    }

    /// Embeds a batch with the frozen statistics when present.
    pub fn embed(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let raw = xs.iter().map(|x| self.pre_projection(x)).collect::<Result<Vec<_>>>()?;
        self.normalize(raw, self.frozen.as_ref())
    }

    fn normalize(&self, raw: Vec<Vec<f64>>, frozen: Option<&Standardizer>) -> Result<Vec<Vec<f64>>> {
        match self.norm_mode {
            NormMode::Raw => Ok(raw),
            NormMode::Sphere { r } => raw.iter().map(|g| project(g, r)).collect(),
            NormMode::BatchStandardized => {
                if raw.is_empty() {
                    return Ok(raw);
                }
                let owned;
                let s = match frozen {
                    Some(s) => s,
                    None => {
                        owned = Standardizer::fit(&raw);
                        &owned
                    }
                };
                Ok(raw.iter().map(|g| s.apply(g)).collect())
            }
        }
    }

    /// Fixes the standardization statistics on a reference set of inputs.
    pub fn freeze_standardizer(&mut self, xs: &[Vec<f64>]) -> Result<()> {
        let raw = xs.iter().map(|x| self.pre_projection(x)).collect::<Result<Vec<_>>>()?;
        if raw.is_empty() {
            return Err(Error::NoSamples);
        }
        self.frozen = Some(Standardizer::fit(&raw));
        Ok(())
    }

    /// Upper bound on the Lipschitz constant of the embedding map.
    ///
    /// The pre-projection part is the product of per-layer spectral norms
    /// (activation slopes are at most 1). Sphere mode multiplies by
    /// `2r / min_norm`, where `min_norm` is the smallest pre-projection norm
    /// over `probe`; the result is certified for pairs of probe points only.
    /// Standardized mode multiplies by the largest frozen scale.
    pub fn lipschitz_upper_bound(&self, probe: &[Vec<f64>]) -> Result<LipschitzCertificate> {
        let pre: f64 = self
            .layers
            .iter()
            .map(|l| spectral_norm_upper(&l.weight, l.out_dim, l.in_dim))
            .product();
        let (factor, min_norm, probe_only) = match self.norm_mode {
            NormMode::Raw => (1.0, None, false),
            NormMode::Sphere { r } => {
                if probe.is_empty() {
                    return Err(Error::NoSamples);
                }
                let mut min_norm = f64::INFINITY;
                for x in probe {
                    min_norm = min_norm.min(norm(&self.pre_projection(x)?));
                }
                if min_norm < MIN_PROJECTION_NORM {
                    return Err(Error::UnboundedProjection(min_norm));
                }
                (2.0 * r / min_norm, Some(min_norm), true)
            }
            NormMode::BatchStandardized => {
                let s = self.frozen.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("standardized encoder needs frozen statistics for a Lipschitz bound".into())
                })?;
                (s.scale.iter().cloned().fold(0.0, f64::max), None, false)
            }
        };
        Ok(LipschitzCertificate {
            l: pre * factor,
            pre_projection: pre,
            min_pre_projection_norm: min_norm,
            probe_only,
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
            out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
            out.push(l.activation.code());
        }
        let (code, r) = match self.norm_mode {
            NormMode::Raw => (0u8, 0.0),
            NormMode::Sphere { r } => (1, r),
            NormMode::BatchStandardized => (2, 0.0),
        };
        out.push(code);
        out.extend_from_slice(&r.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        match &self.frozen {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                for v in s.mean.iter().chain(&s.scale) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let params = self.params();
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut c = ByteCursor::new(&bytes);
        if c.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Schema("not an encoder checkpoint".into()));
        }
        let n_layers = c.u32()? as usize;
        if n_layers == 0 || n_layers > MAX_LAYERS {
            return Err(Error::Schema(format!("checkpoint has {n_layers} layers")));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let in_dim = c.u32()? as usize;
            let out_dim = c.u32()? as usize;
            let activation = Activation::from_code(c.u8()?)?;
            layers.push(Layer {
                weight: vec![0.0; in_dim * out_dim],
                bias: vec![0.0; out_dim],
                in_dim,
                out_dim,
                activation,
            });
        }
        let code = c.u8()?;
        let r = c.f64()?;
        let norm_mode = match code {
            0 => NormMode::Raw,
            1 => NormMode::Sphere { r },
            2 => NormMode::BatchStandardized,
            _ => return Err(Error::Schema(format!("unknown norm mode code {code}"))),
        };
        let seed = c.u64()?;
        let d = layers.last().unwrap().out_dim;
        let frozen = match c.u8()? {
            0 => None,
            1 => {
                let mean = (0..d).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
                let scale = (0..d).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
                Some(Standardizer { mean, scale })
            }
            f => return Err(Error::Schema(format!("unknown standardizer flag {f}"))),
        };
        let n = c.u64()? as usize;
        let params = (0..n).map(|_| c.f64()).collect::<Result<Vec<_>>>()?;
        if !c.is_done() {
            return Err(Error::Schema("trailing bytes after parameters".into()));
        }
        let mut model = Self {
            layers,
            norm_mode,
            seed,
            frozen,
        };
        model.validate().map_err(|e| Error::Schema(e.to_string()))?;
        model.set_params(&params).map_err(|e| Error::Schema(e.to_string()))?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzCertificate {
    pub l: f64,
    /// Product of layer spectral norms.
    pub pre_projection: f64,
    pub min_pre_projection_norm: Option<f64>,
    /// Whether `l` holds only for pairs drawn from the probe set.
    pub probe_only: bool,
}

fn project(g: &[f64], r: f64) -> Result<Vec<f64>> {
    let n = norm(g);
    if n == 0.0 {
        return Err(Error::ZeroProjection);
    }
    Ok(g.iter().map(|x| r * x / n).collect())
}

/// Per-layer outputs for one input; `acts[0]` is the input itself.
struct Trace {
    acts: Vec<Vec<f64>>,
}

impl EncoderModel {
    fn trace(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for l in &self.layers {
            let next = l.forward(acts.last().unwrap());
            acts.push(next);
        }
        Trace { acts }
    }

    /// Parameter gradient for one input given the gradient at the last layer output.
    fn backprop(&self, t: &Trace, grad_out: &[f64]) -> Vec<f64> {
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_out.to_vec();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let out = &t.acts[li + 1];
            let input = &t.acts[li];
            let da: Vec<f64> = upstream
                .iter()
                .zip(out)
                .map(|(g, h)| g * l.activation.slope_from_output(*h))
                .collect();
            let mut g = Vec::with_capacity(l.num_params());
            for &dai in &da {
                g.extend(input.iter().map(|xj| dai * xj));
            }
            g.extend_from_slice(&da);
            grads.push(g);
            if li > 0 {
                upstream = matvec_t(&l.weight, l.out_dim, l.in_dim, &da);
            }
        }
        grads.reverse();
        grads.concat()
    }
}

/// Views for one gradient step. `negatives` is empty for cross-correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

impl TrainBatch {
    /// Draws `size` anchors uniformly with replacement, a view pair for each,
    /// and for losses with negatives a view of an independent sample.
    pub fn sample<R: Rng + ?Sized>(
        ds: &Dataset,
        a: &AugmentationSet,
        size: usize,
        with_negatives: bool,
        rng: &mut R,
    ) -> Self {
        let mut batch = Self {
            anchors: Vec::with_capacity(size),
            positives: Vec::with_capacity(size),
            negatives: Vec::new(),
        };
        for _ in 0..size {
            let x = &ds.samples[rng.random_range(0..ds.len())];
            let (v1, v2) = sample_view_pair(x, a, rng);
            batch.anchors.push(v1);
            batch.positives.push(v2);
            if with_negatives {
                let other = &ds.samples[rng.random_range(0..ds.len())];
                batch.negatives.push(sample_view(&other.features, a, rng).0);
            }
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Checks that the normalization mode fits the loss.
pub fn check_loss_compatible(model: &EncoderModel, loss: &LossSpec) -> Result<()> {
    let ok = match (loss, model.norm_mode) {
        (LossSpec::InfoNce, NormMode::Sphere { r }) => (r - 1.0).abs() < 1e-12,
        (LossSpec::Simple { .. }, NormMode::Sphere { .. }) => true,
        (LossSpec::CrossCorr { .. }, NormMode::BatchStandardized) => true,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{} needs {}, model uses {:?}",
            loss.kind().as_str(),
            match loss {
                LossSpec::InfoNce => "sphere mode with r = 1",
                LossSpec::Simple { .. } => "sphere mode",
                LossSpec::CrossCorr { .. } => "batch_standardized mode",
            },
            model.norm_mode
        )))
    }
}

/// Loss on a batch and its gradient with respect to the flattened parameters.
pub fn loss_and_gradient(
    model: &EncoderModel,
    batch: &TrainBatch,
    loss: &LossSpec,
) -> Result<(LossBreakdown, Vec<f64>)> {
    check_loss_compatible(model, loss)?;
    let b = batch.len();
    if b == 0 || batch.positives.len() != b {
        return Err(Error::BatchTooSmall(b));
    }
    if loss.needs_negatives() && batch.negatives.len() != b {
        return Err(Error::BatchTooSmall(batch.negatives.len()));
    }
    for x in batch.anchors.iter().chain(&batch.positives).chain(&batch.negatives) {
        if x.len() != model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                got: x.len(),
            });
        }
    }
    let inputs: Vec<&Vec<f64>> = match loss {
        LossSpec::CrossCorr { .. } => batch.anchors.iter().chain(&batch.positives).collect(),
        _ => batch
            .anchors
            .iter()
            .chain(&batch.positives)
            .chain(&batch.negatives)
            .collect(),
    };
    let traces: Vec<Trace> = inputs.par_iter().map(|x| model.trace(x)).collect();
    let raw: Vec<Vec<f64>> = traces.iter().map(|t| t.acts.last().unwrap().clone()).collect();
    if raw.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NanLoss(0));
    }

    let (breakdown, raw_grads) = match *loss {
        LossSpec::InfoNce | LossSpec::Simple { .. } => {
            let r = match model.norm_mode {
                NormMode::Sphere { r } => r,
                _ => unreachable!(),
            };
            let z = raw.iter().map(|g| project(g, r)).collect::<Result<Vec<_>>>()?;
            let (z1, rest) = z.split_at(b);
            let (z2, zn) = rest.split_at(b);
            let (bd, g) = match *loss {
                LossSpec::InfoNce => (info_nce(z1, z2, zn)?, info_nce_grad(z1, z2, zn)),
                LossSpec::Simple { lambda } => (
                    simple_contrastive(z1, z2, zn, lambda)?,
                    simple_contrastive_grad(z1, z2, zn, lambda),
                ),
                LossSpec::CrossCorr { .. } => unreachable!(),
            };
            let gz = flatten_grads(g);
            let graw = raw.iter().zip(&gz).map(|(g, dz)| sphere_backward(g, dz, r)).collect();
            (bd, graw)
        }
        LossSpec::CrossCorr { lambda } => {
            if b < 2 {
                return Err(Error::BatchTooSmall(b));
            }
            let s = Standardizer::fit(&raw);
            if s.scale.iter().any(|v| !v.is_finite() || *v == 0.0) {
                return Err(Error::NanLoss(0));
            }
            let z: Vec<Vec<f64>> = raw.iter().map(|g| s.apply(g)).collect();
            let (z1, z2) = z.split_at(b);
            let f = cross_correlation(z1, z2)?;
            let bd = cross_corr_loss(&f, lambda)?;
            let gz = flatten_grads(cross_corr_grad(z1, z2, lambda));
            (bd, standardize_backward(&z, &gz, &s.scale))
        }
    };
    if !breakdown.total.is_finite() {
        return Err(Error::NanLoss(0));
    }

    let per_sample: Vec<Vec<f64>> = traces
        .par_iter()
        .zip(raw_grads.par_iter())
        .map(|(t, g)| model.backprop(t, g))
        .collect();
    let mut grad = vec![0.0; model.num_params()];
    for g in &per_sample {
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    Ok((breakdown, grad))
}

fn flatten_grads(g: EmbeddingGrads) -> Vec<Vec<f64>> {
    let mut out = g.anchors;
    out.extend(g.positives);
    out.extend(g.negatives);
    out
}

/// Backward through `z = r g / |g|`.
fn sphere_backward(g: &[f64], dz: &[f64], r: f64) -> Vec<f64> {
    let n = norm(g);
    let proj: f64 = g.iter().zip(dz).map(|(a, b)| a * b).sum::<f64>() / (n * n);
    g.iter().zip(dz).map(|(gi, dzi)| r / n * (dzi - gi * proj)).collect()
}

/// Backward through per-dimension standardization over the whole set `z`.
fn standardize_backward(z: &[Vec<f64>], dz: &[Vec<f64>], scale: &[f64]) -> Vec<Vec<f64>> {
    let n = z.len() as f64;
    let d = scale.len();
    let mut mean_dz = vec![0.0; d];
    let mut mean_dz_z = vec![0.0; d];
    for (zi, gi) in z.iter().zip(dz) {
        for k in 0..d {
            mean_dz[k] += gi[k] / n;
            mean_dz_z[k] += gi[k] * zi[k] / n;
        }
    }
    z.iter()
        .zip(dz)
        .map(|(zi, gi)| {
            (0..d)
                .map(|k| scale[k] * (gi[k] - mean_dz[k] - zi[k] * mean_dz_z[k]))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::BatchTooSmall(self.batch_size));
        }
        if let Some(lambda) = self.loss.lambda() {
            if matches!(self.loss, LossSpec::CrossCorr { .. }) && !(lambda > 0.0) {
                return Err(Error::NonPositiveLambda(lambda));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub l1: f64,
    pub l2: f64,
}

pub fn write_trace(trace: &[TraceRow], path: &Path) -> Result<()> {
    let mut out = String::from("step,loss,l1,l2\n");
    for r in trace {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.loss, r.l1, r.l2));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Mean of the first and last `window` losses of a trace.
pub fn smoothed_endpoints(trace: &[TraceRow], window: usize) -> Option<(f64, f64)> {
    if trace.is_empty() {
        return None;
    }
    let w = window.min(trace.len()).max(1);
    let mean = |rows: &[TraceRow]| rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64;
    Some((mean(&trace[..w]), mean(&trace[trace.len() - w..])))
}

/// Plain gradient descent on freshly sampled batches. Returns the trained
/// model and one trace row per step, evaluated before that step's update.
pub fn train(
    model: &EncoderModel,
    ds: &Dataset,
    a: &AugmentationSet,
    cfg: &TrainConfig,
) -> Result<(EncoderModel, Vec<TraceRow>)> {
    cfg.validate()?;
    check_loss_compatible(model, &cfg.loss)?;
    a.validate_for_dim(ds.input_dim)?;
    if ds.input_dim != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: ds.input_dim,
        });
    }
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = model.params();
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = TrainBatch::sample(ds, a, cfg.batch_size, cfg.loss.needs_negatives(), &mut rng);
        let (bd, grad) = loss_and_gradient(&model, &batch, &cfg.loss).map_err(|e| match e {
            Error::NanLoss(_) => Error::NanLoss(step),
            other => other,
        })?;
        if !bd.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NanLoss(step));
        }
        trace.push(TraceRow {
            step,
            loss: bd.total,
            l1: bd.l1,
            l2: bd.l2,
        });
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= cfg.learning_rate * g;
        }
        model.set_params(&params)?;
    }
    Ok((model, trace))
}
