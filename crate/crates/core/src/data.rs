//! Samples, labelled datasets, the synthetic generator and dataset files.
//!
//! Generated classes are kept apart by a spacing rule on the class anchors:
//! every noise offset is clamped to a ball of radius `2 * spread`, so anchors
//! more than `4 * spread` apart yield disjoint classes. Transforms that act
//! only on coordinates shared by every class (ring planes, reflected modes)
//! cannot carry a sample of one class onto another.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dist;

const BINARY_MAGIC: &[u8; 5] = b"CONC1";

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    /// Priors the data was drawn with.
    pub declared_priors: Vec<f64>,
    /// Observed class frequencies. Bound formulas consume these.
    pub priors: Vec<f64>,
    pub input_dim: usize,
    pub seed: u64,
}

impl Dataset {
    /// Builds a dataset and checks its invariants. Without declared priors the
    /// empirical frequencies are used for both.
    pub fn new(samples: Vec<Sample>, num_classes: usize, declared_priors: Option<Vec<f64>>, seed: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::NoSamples);
        }
        if num_classes == 0 {
            return Err(Error::Schema("at least one class is required".into()));
        }
        let input_dim = samples[0].features.len();
        let mut counts = vec![0usize; num_classes];
        for (row, s) in samples.iter().enumerate() {
            if s.features.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    expected: input_dim,
                    got: s.features.len(),
                });
            }
            if s.class_id >= num_classes {
                return Err(Error::Schema(format!(
                    "row {row}: label {} is not below K = {num_classes}",
                    s.class_id
                )));
            }
            counts[s.class_id] += 1;
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass(k));
        }
        let n = samples.len() as f64;
        let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let declared_priors = match declared_priors {
            Some(p) => {
                if p.len() != num_classes || p.iter().any(|&v| v <= 0.0) {
                    return Err(Error::Schema("declared priors must be K positive values".into()));
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Schema(format!("declared priors sum to {total}")));
                }
                p
            }
            None => priors.clone(),
        };
        Ok(Self {
            samples,
            num_classes,
            declared_priors,
            priors,
            input_dim,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Indices of the samples in class `k`, ascending.
    pub fn class_indices(&self, k: usize) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class_id == k)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in &self.samples {
            counts[s.class_id] += 1;
        }
        counts
    }

    pub fn max_norm(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| crate::linalg::norm(&s.features))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Manifold {
    GaussianBlobs,
    /// Each class is a set of arcs on a ring of `radius` centered on the class
    /// center inside the coordinate plane `plane`. Segment `j` is centered at
    /// angle `pi / segments + 2 pi j / segments`.
    RingSegments {
        radius: f64,
        segments: usize,
        arc_half_width: f64,
        plane: [usize; 2],
    },
}

/// A reflected copy of every class: a `weight` share of each class is drawn
/// around its center and then has the listed coordinates negated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectedMode {
    pub flip: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub centers: Vec<Vec<f64>>,
    pub spread: f64,
    pub manifold: Manifold,
    #[serde(default)]
    pub modes: Vec<ReflectedMode>,
    #[serde(default = "default_true")]
    pub require_disjoint: bool,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl GeneratorConfig {
    pub fn blobs(centers: Vec<Vec<f64>>, samples_per_class: usize, spread: f64, seed: u64) -> Self {
        Self {
            num_classes: centers.len(),
            samples_per_class,
            centers,
            spread,
            manifold: Manifold::GaussianBlobs,
            modes: Vec::new(),
            require_disjoint: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.centers.len() != self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "expected {} centers, got {}",
                self.num_classes,
                self.centers.len()
            )));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidConfig("samples_per_class must be positive".into()));
        }
        if !(self.spread >= 0.0) || !self.spread.is_finite() {
            return Err(Error::InvalidConfig("spread must be finite and non-negative".into()));
        }
        let dim = self.centers[0].len();
        if dim == 0 || self.centers.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidConfig("centers must share one positive dimension".into()));
        }
        for mode in &self.modes {
            if mode.flip.iter().any(|&c| c >= dim) || !(mode.weight > 0.0) {
                return Err(Error::InvalidConfig(
                    "mode flips must index coordinates and carry positive weight".into(),
                ));
            }
        }
        if self.modes.iter().map(|m| m.weight).sum::<f64>() >= 1.0 {
            return Err(Error::InvalidConfig(
                "mode weights must leave a positive base share".into(),
            ));
        }
        if let Manifold::RingSegments {
            radius,
            segments,
            arc_half_width,
            plane,
        } = self.manifold
        {
            if segments == 0 || plane[0] == plane[1] || plane.iter().any(|&c| c >= dim) {
                return Err(Error::InvalidConfig(
                    "ring needs segments >= 1 and two distinct plane axes".into(),
                ));
            }
            if !(radius >= 0.0) || !(arc_half_width >= 0.0) {
                return Err(Error::InvalidConfig(
                    "ring radius and arc width must be non-negative".into(),
                ));
            }
        }
        if self.require_disjoint {
            self.check_spacing()?;
        }
        Ok(())
    }

    /// Anchors of class `k`: its center and each reflected copy. Ring planes
    /// are zeroed since every class shares the same ring there.
    fn anchors(&self, k: usize) -> Vec<Vec<f64>> {
        let mut base = self.centers[k].clone();
        if let Manifold::RingSegments { plane, .. } = self.manifold {
            base[plane[0]] = 0.0;
            base[plane[1]] = 0.0;
        }
        let mut out = vec![base.clone()];
        for mode in &self.modes {
            out.push(reflect(&base, &mode.flip));
        }
        out
    }

    fn check_spacing(&self) -> Result<()> {
        let required = 4.0 * self.spread;
        for a in 0..self.num_classes {
            for b in a + 1..self.num_classes {
                for ca in self.anchors(a) {
                    for cb in self.anchors(b) {
                        let d = dist(&ca, &cb);
                        if d <= required {
                            return Err(Error::SpacingViolation {
                                a,
                                b,
                                distance: d,
                                required,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn reflect(x: &[f64], flip: &[usize]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &c in flip {
        y[c] = -y[c];
    }
    y
}

/// Isotropic noise with RMS radius `spread`, clamped to radius `2 * spread`.
fn bounded_noise(rng: &mut ChaCha8Rng, dim: usize, spread: f64) -> Vec<f64> {
    let scale = spread / (dim as f64).sqrt();
    let mut v: Vec<f64> = (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    let n = crate::linalg::norm(&v);
    let cap = 2.0 * spread;
    if n > cap {
        for x in &mut v {
            *x *= cap / n;
        }
    }
    v
}

/// Splits `total` samples between the base population and the reflected modes
/// by largest remainder, so shares are exact up to rounding.
fn mode_counts(total: usize, weights: &[f64]) -> Vec<usize> {
    let mut shares = vec![1.0 - weights.iter().sum::<f64>()];
    shares.extend_from_slice(weights);
    let raw: Vec<f64> = shares.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = total - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.centers[0].len();
    let weights: Vec<f64> = cfg.modes.iter().map(|m| m.weight).collect();
    let counts = mode_counts(cfg.samples_per_class, &weights);
    let mut samples = Vec::with_capacity(cfg.num_classes * cfg.samples_per_class);
    for (k, center) in cfg.centers.iter().enumerate() {
        for (mode_idx, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                let mut x = center.clone();
                if let Manifold::RingSegments {
                    radius,
                    segments,
                    arc_half_width,
                    plane,
                } = cfg.manifold
                {
                    let seg = rng.random_range(0..segments) as f64;
                    let jitter = if arc_half_width > 0.0 {
                        rng.random_range(-arc_half_width..=arc_half_width)
                    } else {
                        0.0
                    };
                    let phi = std::f64::consts::PI * (1.0 + 2.0 * seg) / segments as f64 + jitter;
                    x[plane[0]] += radius * phi.cos();
                    x[plane[1]] += radius * phi.sin();
                }
                for (xi, ni) in x.iter_mut().zip(bounded_noise(&mut rng, dim, cfg.spread)) {
                    *xi += ni;
                }
                if mode_idx > 0 {
                    x = reflect(&x, &cfg.modes[mode_idx - 1].flip);
                }
                samples.push(Sample {
                    features: x,
                    class_id: k,
                });
            }
        }
    }
    let declared = vec![1.0 / cfg.num_classes as f64; cfg.num_classes];
    let mut ds = Dataset::new(samples, cfg.num_classes, None, cfg.seed)?;
    ds.declared_priors = declared;
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Csv,
    Binary,
}

impl DatasetFormat {
    /// Binary for `.bin`, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => DatasetFormat::Binary,
            _ => DatasetFormat::Csv,
        }
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    match format {
        DatasetFormat::Csv => load_csv(path),
        DatasetFormat::Binary => load_binary(path),
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path, format: DatasetFormat) -> Result<()> {
    match format {
        DatasetFormat::Csv => save_csv(ds, path),
        DatasetFormat::Binary => save_binary(ds, path),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.record() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            row,
            msg: format!("{other:?}"),
        },
    }
}

fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(File::open(path)?));
    let mut samples = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        if rec.len() < 2 {
            return Err(Error::Parse {
                row,
                msg: "need at least one feature and a label".into(),
            });
        }
        let mut features = Vec::with_capacity(rec.len() - 1);
        for field in rec.iter().take(rec.len() - 1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("bad feature {field:?}"),
            })?;
            features.push(v);
        }
        let label = rec[rec.len() - 1].trim();
        let class_id: usize = label.parse().map_err(|_| Error::Parse {
            row,
            msg: format!("bad label {label:?}"),
        })?;
        samples.push(Sample { features, class_id });
    }
    let k = samples.iter().map(|s| s.class_id + 1).max().ok_or(Error::NoSamples)?;
    Dataset::new(samples, k, None, 0)
}

fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<String> = (0..ds.input_dim).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_error)?;
    for s in &ds.samples {
        let mut rec: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        rec.push(s.class_id.to_string());
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn save_binary(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(ds.input_dim as u32).to_le_bytes())?;
    w.write_all(&(ds.num_classes as u32).to_le_bytes())?;
    w.write_all(&(ds.samples.len() as u64).to_le_bytes())?;
    for s in &ds.samples {
        for v in &s.features {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(s.class_id as u32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn load_binary(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut cur = ByteCursor::new(&bytes);
    if cur.take(5)? != BINARY_MAGIC {
        return Err(Error::Schema("missing CONC1 magic".into()));
    }
    let dim = cur.u32()? as usize;
    let k = cur.u32()? as usize;
    let n = cur.u64()? as usize;
    let mut samples = Vec::with_capacity(n);
    for row in 0..n {
        let mut features = Vec::with_capacity(dim);
        for _ in 0..dim {
            features.push(cur.f64().map_err(|_| Error::Parse {
                row,
                msg: "truncated record".into(),
            })?);
        }
        let label = cur.u32().map_err(|_| Error::Parse {
            row,
            msg: "truncated record".into(),
        })? as usize;
        if label >= k {
            return Err(Error::Schema(format!("row {row}: label {label} is not below K = {k}")));
        }
        samples.push(Sample {
            features,
            class_id: label,
        });
    }
    Dataset::new(samples, k, None, 0)
}

/// Little-endian reader over a byte slice.
pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Schema("unexpected end of file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
