//! Transform catalog, view enumeration and the augmented distance.
//!
//! An augmentation set holds `m` discrete transforms (identity first) and an
//! ordered list of continuous transforms, each driven by one parameter in
//! `[0, 1]`. The continuous members compose in list order, so the family is
//! indexed by `theta` in `[0, 1]^n`. Every continuous rule is the identity at
//! `theta = 0`, which makes grids of nested sets nested as well.
//!
//! The augmented distance is the minimum Euclidean distance over all pairs of
//! enumerated views. Continuous families are enumerated on a uniform grid of
//! `G` points per axis, so the computed distance never undercuts the exact
//! minimum over the continuum.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ByteCursor, Dataset, Sample};
use crate::error::{Error, Result};
use crate::linalg::{dist, dist_sq, norm};

const MATRIX_MAGIC: &[u8; 4] = b"CDM1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TransformRule {
    Identity,
    /// `y[i] = x[perm[i]]`.
    CoordinatePermutation {
        perm: Vec<usize>,
    },
    /// Negates the listed coordinates.
    SignFlipMask {
        coords: Vec<usize>,
    },
    /// `x + theta * direction`.
    AdditiveShift {
        direction: Vec<f64>,
    },
    /// Rotates the plane spanned by `axes` by `theta * max_angle` radians.
    Rotation2dSubspace {
        axes: [usize; 2],
        max_angle: f64,
    },
    /// Multiplies by `1 + theta * (max_factor - 1)`.
    Scale {
        max_factor: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Discrete,
    Continuous,
}

impl TransformRule {
    pub fn kind(&self) -> TransformKind {
        match self {
            TransformRule::Identity
            | TransformRule::CoordinatePermutation { .. }
            | TransformRule::SignFlipMask { .. } => TransformKind::Discrete,
            _ => TransformKind::Continuous,
        }
    }

    fn validate(&self, dim: Option<usize>) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        match self {
            TransformRule::Identity => Ok(()),
            TransformRule::CoordinatePermutation { perm } => {
                let mut seen = vec![false; perm.len()];
                for &p in perm {
                    if p >= perm.len() || seen[p] {
                        return bad(format!("{perm:?} is not a permutation"));
                    }
                    seen[p] = true;
                }
                match dim {
                    Some(d) if d != perm.len() => {
                        bad(format!("permutation of length {} for dimension {d}", perm.len()))
                    }
                    _ => Ok(()),
                }
            }
            TransformRule::SignFlipMask { coords } => match dim {
                Some(d) if coords.iter().any(|&c| c >= d) => bad(format!("sign flip {coords:?} out of range")),
                _ => Ok(()),
            },
            TransformRule::AdditiveShift { direction } => {
                if direction.iter().any(|v| !v.is_finite()) {
                    return bad("shift direction must be finite".into());
                }
                match dim {
                    Some(d) if d != direction.len() => {
                        bad(format!("shift of length {} for dimension {d}", direction.len()))
                    }
                    _ => Ok(()),
                }
            }
            TransformRule::Rotation2dSubspace { axes, max_angle } => {
                if axes[0] == axes[1] || !max_angle.is_finite() {
                    return bad("rotation needs two distinct axes and a finite angle".into());
                }
                match dim {
                    Some(d) if axes.iter().any(|&a| a >= d) => bad(format!("rotation axes {axes:?} out of range")),
                    _ => Ok(()),
                }
            }
            TransformRule::Scale { max_factor } => {
                if !(*max_factor > 0.0) || !max_factor.is_finite() {
                    return bad("scale factor must be positive".into());
                }
                Ok(())
            }
        }
    }

    /// Applies a discrete rule, or a continuous rule at `theta`.
    pub fn apply(&self, x: &[f64], theta: f64) -> Vec<f64> {
        match self {
            TransformRule::Identity => x.to_vec(),
            TransformRule::CoordinatePermutation { perm } => perm.iter().map(|&p| x[p]).collect(),
            TransformRule::SignFlipMask { coords } => {
                let mut y = x.to_vec();
                for &c in coords {
                    y[c] = -y[c];
                }
                y
            }
            TransformRule::AdditiveShift { direction } => x.iter().zip(direction).map(|(a, b)| a + theta * b).collect(),
            TransformRule::Rotation2dSubspace { axes, max_angle } => {
                let (s, c) = (theta * max_angle).sin_cos();
                let mut y = x.to_vec();
                let (a, b) = (x[axes[0]], x[axes[1]]);
                y[axes[0]] = c * a - s * b;
                y[axes[1]] = s * a + c * b;
                y
            }
            TransformRule::Scale { max_factor } => {
                let f = 1.0 + theta * (max_factor - 1.0);
                x.iter().map(|a| f * a).collect()
            }
        }
    }

    /// Lipschitz constant in `theta` for inputs with norm at most `radius`.
    fn theta_lipschitz(&self, radius: f64) -> f64 {
        match self {
            TransformRule::AdditiveShift { direction } => norm(direction),
            TransformRule::Rotation2dSubspace { max_angle, .. } => max_angle.abs() * radius,
            TransformRule::Scale { max_factor } => (max_factor - 1.0).abs() * radius,
            _ => 0.0,
        }
    }

    /// Lipschitz constant in `x` at any fixed `theta`.
    fn input_lipschitz(&self) -> f64 {
        match self {
            TransformRule::Scale { max_factor } => max_factor.max(1.0),
            _ => 1.0,
        }
    }

    /// Bound on the output norm given an input norm bound.
    fn output_radius(&self, radius: f64) -> f64 {
        match self {
            TransformRule::AdditiveShift { direction } => radius + norm(direction),
            TransformRule::Scale { max_factor } => radius * max_factor.max(1.0),
            _ => radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub name: String,
    #[serde(flatten)]
    pub rule: TransformRule,
}

impl Transform {
    pub fn new(name: impl Into<String>, rule: TransformRule) -> Self {
        Self {
            name: name.into(),
            rule,
        }
    }

    pub fn identity() -> Self {
        Self::new("identity", TransformRule::Identity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSet {
    /// Discrete members; index 0 is always the identity.
    pub discrete: Vec<Transform>,
    pub continuous: Vec<Transform>,
    pub grid_resolution: usize,
    /// Norm bound on inputs over which the continuous Lipschitz constants hold.
    pub domain_radius: f64,
}

impl AugmentationSet {
    /// Builds a set, inserting the identity at the front when absent.
    pub fn new(
        discrete: Vec<Transform>,
        continuous: Vec<Transform>,
        grid_resolution: usize,
        domain_radius: f64,
    ) -> Result<Self> {
        let mut members = vec![Transform::identity()];
        members.extend(discrete.into_iter().filter(|t| t.rule != TransformRule::Identity));
        for t in &members {
            if t.rule.kind() != TransformKind::Discrete {
                return Err(Error::InvalidConfig(format!("{} is not a discrete rule", t.name)));
            }
            t.rule.validate(None)?;
        }
        for t in &continuous {
            if t.rule.kind() != TransformKind::Continuous {
                return Err(Error::InvalidConfig(format!("{} is not a continuous rule", t.name)));
            }
            t.rule.validate(None)?;
        }
        if !continuous.is_empty() && grid_resolution < 2 {
            return Err(Error::InvalidConfig("grid resolution must be at least 2".into()));
        }
        if !(domain_radius >= 0.0) || !domain_radius.is_finite() {
            return Err(Error::InvalidConfig(
                "domain radius must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            discrete: members,
            continuous,
            grid_resolution,
            domain_radius,
        })
    }

    pub fn identity_only() -> Self {
        Self::new(Vec::new(), Vec::new(), 2, 0.0).expect("identity set is valid")
    }

    /// Identity plus a shift of length `amplitude` along the diagonal.
    pub fn standard(dim: usize, amplitude: f64, domain_radius: f64) -> Self {
        let step = amplitude / (dim as f64).sqrt();
        let shift = Transform::new(
            "diagonal_shift",
            TransformRule::AdditiveShift {
                direction: vec![step; dim],
            },
        );
        Self::new(Vec::new(), vec![shift], 3, domain_radius).expect("standard set is valid")
    }

    /// Checks every rule against the input dimension.
    pub fn validate_for_dim(&self, dim: usize) -> Result<()> {
        for t in self.discrete.iter().chain(&self.continuous) {
            t.rule.validate(Some(dim))?;
        }
        Ok(())
    }

    /// Number of discrete transforms `m` (identity included).
    pub fn m(&self) -> usize {
        self.discrete.len()
    }

    /// Continuous parameter dimension `n`.
    pub fn n(&self) -> usize {
        self.continuous.len()
    }

    pub fn grid_size(&self) -> usize {
        if self.n() == 0 {
            0
        } else {
            self.grid_resolution.pow(self.n() as u32)
        }
    }

    pub fn num_views(&self) -> usize {
        self.m() + self.grid_size()
    }

    /// Lipschitz constant `M` of `theta -> A_theta(x)` over the domain ball.
    ///
    /// Changing one coordinate of `theta` at a time telescopes the difference,
    /// so with per-member constants `c_i` (each scaled by the input Lipschitz
    /// constants of later members) the composite satisfies
    /// `|A_t x - A_s x| <= sqrt(sum c_i^2) |t - s|`. For `n = 1` this is the
    /// member's own constant.
    pub fn lipschitz_m(&self) -> f64 {
        let mut radius = self.domain_radius;
        let mut own = Vec::with_capacity(self.n());
        for t in &self.continuous {
            own.push(t.rule.theta_lipschitz(radius));
            radius = t.rule.output_radius(radius);
        }
        let mut total = 0.0;
        for (i, c) in own.iter().enumerate() {
            let later: f64 = self.continuous[i + 1..]
                .iter()
                .map(|t| t.rule.input_lipschitz())
                .product();
            total += (c * later).powi(2);
        }
        total.sqrt()
    }

    /// Applies the continuous family at `theta`.
    pub fn apply_continuous(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for (t, &th) in self.continuous.iter().zip(theta) {
            y = t.rule.apply(&y, th);
        }
        y
    }

    /// Grid parameters in lexicographic order, first axis most significant.
    pub fn grid_thetas(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let g = self.grid_resolution;
        let mut out = Vec::with_capacity(self.grid_size());
        for idx in 0..self.grid_size() {
            let mut rem = idx;
            let mut theta = vec![0.0; n];
            for axis in (0..n).rev() {
                theta[axis] = (rem % g) as f64 / (g - 1) as f64;
                rem /= g;
            }
            out.push(theta);
        }
        out
    }

    /// Probability mass of each enumerated view under the sampling model: half
    /// on the discrete members, half spread over the grid. Without continuous
    /// members the discrete members share all the mass.
    pub fn view_weights(&self) -> Vec<f64> {
        let m = self.m() as f64;
        if self.n() == 0 {
            return vec![1.0 / m; self.m()];
        }
        let g = self.grid_size() as f64;
        let mut w = vec![0.5 / m; self.m()];
        w.extend(std::iter::repeat(0.5 / g).take(self.grid_size()));
        w
    }

    /// Whether every view of `self` is also a view of `other` for any input.
    pub fn is_refined_by(&self, other: &AugmentationSet) -> bool {
        let discrete_ok = self
            .discrete
            .iter()
            .all(|t| other.discrete.iter().any(|o| o.rule == t.rule));
        if self.n() == 0 {
            return discrete_ok;
        }
        let prefix_ok = other.n() >= self.n()
            && self
                .continuous
                .iter()
                .zip(&other.continuous)
                .all(|(a, b)| a.rule == b.rule);
        let grid_ok = other.grid_resolution >= 2 && (other.grid_resolution - 1) % (self.grid_resolution - 1) == 0;
        discrete_ok && prefix_ok && grid_ok
    }

    /// Short stable hash of the set's canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("augmentation sets serialize");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSet {
    pub origin: Sample,
    /// Discrete views by member index, then grid views in lexicographic order.
    pub views: Vec<Vec<f64>>,
}

pub fn enumerate_views(x: &Sample, a: &AugmentationSet) -> ViewSet {
    ViewSet {
        origin: x.clone(),
        views: view_vectors(&x.features, a),
    }
}

pub fn view_vectors(x: &[f64], a: &AugmentationSet) -> Vec<Vec<f64>> {
    let mut views: Vec<Vec<f64>> = a.discrete.iter().map(|t| t.rule.apply(x, 0.0)).collect();
    for theta in a.grid_thetas() {
        views.push(a.apply_continuous(x, &theta));
    }
    views
}

/// Minimum distance over all view pairs, with one final square root.
pub fn min_view_distance(v1: &[Vec<f64>], v2: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for a in v1 {
        for b in v2 {
            let d = dist_sq(a, b);
            if d < best {
                best = d;
            }
        }
    }
    best.sqrt()
}

pub fn augmented_distance(x1: &Sample, x2: &Sample, a: &AugmentationSet) -> Result<f64> {
    if x1.features.len() != x2.features.len() {
        return Err(Error::DimensionMismatch {
            expected: x1.features.len(),
            got: x2.features.len(),
        });
    }
    Ok(min_view_distance(
        &view_vectors(&x1.features, a),
        &view_vectors(&x2.features, a),
    ))
}

/// Symmetric matrix of augmented distances over a subset of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    /// Dataset indices of the rows, ascending.
    pub indices: Vec<usize>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_full(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n = indices.len();
        if values.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: values.len(),
            });
        }
        Ok(Self { indices, values })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn max_entry(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Writes `CDM1`, `u64 N`, then the upper triangle with diagonal, row-major.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MATRIX_MAGIC)?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for i in 0..self.len() {
            for j in i..self.len() {
                w.write_all(&self.get(i, j).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `CDM1` file. Row indices are `0..N`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        let mut cur = ByteCursor::new(&bytes);
        if cur.take(4)? != MATRIX_MAGIC {
            return Err(Error::Schema("missing CDM1 magic".into()));
        }
        let n = cur.u64()? as usize;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = cur.f64()?;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        if !cur.is_done() {
            return Err(Error::Schema("trailing bytes after distance matrix".into()));
        }
        Ok(Self {
            indices: (0..n).collect(),
            values,
        })
    }
}

/// Views of every sample, in dataset order.
pub fn all_views(ds: &Dataset, a: &AugmentationSet) -> Vec<Vec<Vec<f64>>> {
    ds.samples.par_iter().map(|s| view_vectors(&s.features, a)).collect()
}

pub fn distance_matrix(ds: &Dataset, a: &AugmentationSet, class_filter: Option<usize>) -> DistanceMatrix {
    let indices: Vec<usize> = match class_filter {
        Some(k) => ds.class_indices(k),
        None => (0..ds.len()).collect(),
    };
    let views: Vec<Vec<Vec<f64>>> = indices
        .par_iter()
        .map(|&i| view_vectors(&ds.samples[i].features, a))
        .collect();
    distance_matrix_from_views(indices, &views)
}

/// Builds the matrix from precomputed views; `views[i]` belongs to `indices[i]`.
pub fn distance_matrix_from_views(indices: Vec<usize>, views: &[Vec<Vec<f64>>]) -> DistanceMatrix {
    let n = indices.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i + 1..n).map(|j| min_view_distance(&views[i], &views[j])).collect())
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DistanceMatrix { indices, values }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Discrete,
    Continuous,
}

/// Draws one view from `branch`. The continuous branch falls back to the
/// discrete one when the set has no continuous members.
pub fn sample_view_from<R: Rng + ?Sized>(
    x: &[f64],
    a: &AugmentationSet,
    branch: Branch,
    rng: &mut R,
) -> (Vec<f64>, Branch) {
    if branch == Branch::Continuous && a.n() > 0 {
        let theta: Vec<f64> = (0..a.n()).map(|_| rng.random::<f64>()).collect();
        return (a.apply_continuous(x, &theta), Branch::Continuous);
    }
    let idx = rng.random_range(0..a.m());
    (a.discrete[idx].rule.apply(x, 0.0), Branch::Discrete)
}

/// Draws one view: with probability 1/2 a uniform discrete member, otherwise a
/// uniform `theta` in `[0, 1]^n`.
pub fn sample_view<R: Rng + ?Sized>(x: &[f64], a: &AugmentationSet, rng: &mut R) -> (Vec<f64>, Branch) {
    let branch = if rng.random::<bool>() {
        Branch::Discrete
    } else {
        Branch::Continuous
    };
    sample_view_from(x, a, branch, rng)
}

pub fn sample_view_pair<R: Rng + ?Sized>(x: &Sample, a: &AugmentationSet, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let (v1, _) = sample_view(&x.features, a, rng);
    let (v2, _) = sample_view(&x.features, a, rng);
    (v1, v2)
}

/// Largest observed `|A_t x - A_s x| / |t - s|` over random inputs in the
/// domain ball and random parameter pairs.
pub fn max_lipschitz_ratio<R: Rng + ?Sized>(a: &AugmentationSet, dim: usize, trials: usize, rng: &mut R) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x = random_in_ball(dim, a.domain_radius, rng);
        let t: Vec<f64> = (0..a.n()).map(|_| rng.random::<f64>()).collect();
        let s: Vec<f64> = (0..a.n()).map(|_| rng.random::<f64>()).collect();
        let dtheta = dist(&t, &s);
        if dtheta < 1e-12 {
            continue;
        }
        let ratio = dist(&a.apply_continuous(&x, &t), &a.apply_continuous(&x, &s)) / dtheta;
        worst = worst.max(ratio);
    }
    worst
}

fn random_in_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let n = norm(&v);
    let target = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    if n > 0.0 {
        for x in &mut v {
            *x *= target / n;
        }
    }
    v
}

/// Empirical check of class disjointness under `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisjointnessCheck {
    /// Smallest raw distance between samples of different classes.
    pub min_inter_class_distance: f64,
    /// Largest distance between a sample and one of its own views.
    pub max_view_displacement: f64,
    /// Smallest augmented distance between samples of different classes.
    pub min_cross_class_augmented_distance: f64,
}

impl DisjointnessCheck {
    /// Raw separation exceeds the displacement any view can cause.
    pub fn spread_surrogate_holds(&self) -> bool {
        self.min_inter_class_distance > self.max_view_displacement
    }

    /// No enumerated view of one class meets a view of another.
    pub fn views_disjoint(&self) -> bool {
        self.min_cross_class_augmented_distance > 0.0
    }
}

pub fn check_disjointness(ds: &Dataset, a: &AugmentationSet) -> DisjointnessCheck {
    let views = all_views(ds, a);
    let n = ds.len();
    let per_row: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &ds.samples[i];
            let disp = views[i].iter().map(|v| dist(v, &xi.features)).fold(0.0, f64::max);
            let mut raw = f64::INFINITY;
            let mut aug = f64::INFINITY;
            for j in i + 1..n {
                let xj = &ds.samples[j];
                if xj.class_id == xi.class_id {
                    continue;
                }
                raw = raw.min(dist(&xi.features, &xj.features));
                aug = aug.min(min_view_distance(&views[i], &views[j]));
            }
            (disp, raw, aug)
        })
        .collect();
    let mut out = DisjointnessCheck {
        min_inter_class_distance: f64::INFINITY,
        max_view_displacement: 0.0,
        min_cross_class_augmented_distance: f64::INFINITY,
    };
    for (disp, raw, aug) in per_row {
        out.max_view_displacement = out.max_view_displacement.max(disp);
        out.min_inter_class_distance = out.min_inter_class_distance.min(raw);
        out.min_cross_class_augmented_distance = out.min_cross_class_augmented_distance.min(aug);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(f: &[f64]) -> Sample {
        Sample {
            features: f.to_vec(),
            class_id: 0,
        }
    }

    fn flip0() -> Transform {
        Transform::new("flip0", TransformRule::SignFlipMask { coords: vec![0] })
    }

    fn swap() -> Transform {
        Transform::new("swap", TransformRule::CoordinatePermutation { perm: vec![1, 0] })
    }

    #[test]
    fn identity_set_has_one_view() {
        let v = enumerate_views(&sample(&[1.0, 2.0]), &AugmentationSet::identity_only());
        assert_eq!(v.views, vec![vec![1.0, 2.0]]);
    }

    #[test]
    fn sign_flip_views() {
        let a = AugmentationSet::new(vec![flip0()], vec![], 2, 0.0).unwrap();
        let v = enumerate_views(&sample(&[1.0, 2.0]), &a);
        assert_eq!(v.views, vec![vec![1.0, 2.0], vec![-1.0, 2.0]]);
    }

    #[test]
    fn shift_grid_views() {
        let shift = Transform::new("s", TransformRule::AdditiveShift { direction: vec![1.0] });
        let a = AugmentationSet::new(vec![], vec![shift], 3, 1.0).unwrap();
        let v = enumerate_views(&sample(&[0.0]), &a);
        assert_eq!(v.views, vec![vec![0.0], vec![0.0], vec![0.5], vec![1.0]]);
        assert_eq!(v.views.len(), a.num_views());
    }

    #[test]
    fn grid_order_is_lexicographic() {
        let s1 = Transform::new(
            "a",
            TransformRule::AdditiveShift {
                direction: vec![1.0, 0.0],
            },
        );
        let s2 = Transform::new(
            "b",
            TransformRule::AdditiveShift {
                direction: vec![0.0, 1.0],
            },
        );
        let a = AugmentationSet::new(vec![], vec![s1, s2], 2, 1.0).unwrap();
        assert_eq!(
            a.grid_thetas(),
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
    }

    #[test]
    fn distance_basics() {
        let x = sample(&[0.3, -1.2]);
        let y = sample(&[2.0, 0.5]);
        let id = AugmentationSet::identity_only();
        assert_eq!(augmented_distance(&x, &x, &id).unwrap(), 0.0);
        assert!((augmented_distance(&x, &y, &id).unwrap() - dist(&x.features, &y.features)).abs() < 1e-15);
        let a = AugmentationSet::new(vec![swap()], vec![], 2, 0.0).unwrap();
        assert_eq!(
            augmented_distance(&sample(&[1.0, 2.0]), &sample(&[2.0, 1.0]), &a).unwrap(),
            0.0
        );
        assert!(augmented_distance(&x, &sample(&[1.0]), &id).is_err());
    }

    #[test]
    fn identity_matrix_is_euclidean() {
        let ds = Dataset::new(
            vec![sample(&[0.0, 0.0]), sample(&[3.0, 4.0]), sample(&[-1.0, 1.0])],
            1,
            None,
            0,
        )
        .unwrap();
        let dm = distance_matrix(&ds, &AugmentationSet::identity_only(), None);
        for i in 0..3 {
            for j in 0..3 {
                let e = dist(&ds.samples[i].features, &ds.samples[j].features);
                assert!((dm.get(i, j) - e).abs() < 1e-15);
            }
        }
        assert_eq!(dm.get(0, 1), 5.0);
    }

    #[test]
    fn tiny_matrices_are_zero() {
        let one = Dataset::new(vec![sample(&[1.0])], 1, None, 0).unwrap();
        let dm = distance_matrix(&one, &AugmentationSet::identity_only(), None);
        assert_eq!((dm.len(), dm.get(0, 0)), (1, 0.0));
        let two = Dataset::new(vec![sample(&[1.0]), sample(&[1.0])], 1, None, 0).unwrap();
        let dm = distance_matrix(&two, &AugmentationSet::identity_only(), None);
        assert_eq!(dm.max_entry(), 0.0);
    }

    #[test]
    fn matrix_file_round_trips() {
        let ds = Dataset::new(
            (0..5).map(|i| sample(&[i as f64, (i * i) as f64 * 0.1])).collect(),
            1,
            None,
            0,
        )
        .unwrap();
        let a = AugmentationSet::new(vec![swap()], vec![], 2, 0.0).unwrap();
        let dm = distance_matrix(&ds, &a, None);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cdm");
        dm.save(&path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 4 + 8 + 15 * 8);
        assert_eq!(DistanceMatrix::load(&path).unwrap(), dm);
    }

    #[test]
    fn identity_only_pairs_repeat_the_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = sample(&[1.0, -2.0]);
        for _ in 0..100 {
            let (a, b) = sample_view_pair(&x, &AugmentationSet::identity_only(), &mut rng);
            assert_eq!(
                (a.as_slice(), b.as_slice()),
                (x.features.as_slice(), x.features.as_slice())
            );
        }
    }

    #[test]
    fn forced_continuous_branch_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = AugmentationSet::new(vec![flip0()], vec![], 2, 0.0).unwrap();
        let (_, b) = sample_view_from(&[1.0, 1.0], &a, Branch::Continuous, &mut rng);
        assert_eq!(b, Branch::Discrete);
    }

    #[test]
    fn branch_frequencies_are_even() {
        let shift = Transform::new("s", TransformRule::AdditiveShift { direction: vec![1.0] });
        let a = AugmentationSet::new(vec![flip0()], vec![shift], 3, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let discrete = (0..draws)
            .filter(|_| sample_view(&[0.5], &a, &mut rng).1 == Branch::Discrete)
            .count() as f64;
        let sd = (0.25 / draws as f64).sqrt();
        assert!((discrete / draws as f64 - 0.5).abs() < 3.0 * sd);
    }

    #[test]
    fn sampling_is_reproducible() {
        let shift = Transform::new(
            "s",
            TransformRule::AdditiveShift {
                direction: vec![1.0, 0.5],
            },
        );
        let a = AugmentationSet::new(vec![swap()], vec![shift], 3, 2.0).unwrap();
        let x = sample(&[0.2, 0.9]);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| sample_view_pair(&x, &a, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn declared_lipschitz_constants_hold() {
        let rules = [
            TransformRule::AdditiveShift {
                direction: vec![0.3, -1.0, 2.0],
            },
            TransformRule::Rotation2dSubspace {
                axes: [0, 2],
                max_angle: 2.5,
            },
            TransformRule::Scale { max_factor: 1.7 },
            TransformRule::Scale { max_factor: 0.4 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for rule in &rules {
            let a = AugmentationSet::new(vec![], vec![Transform::new("t", rule.clone())], 3, 2.0).unwrap();
            let ratio = max_lipschitz_ratio(&a, 3, 10_000, &mut rng);
            // Shifts attain M exactly, so allow rounding.
            assert!(
                ratio <= a.lipschitz_m() * (1.0 + 1e-9),
                "{rule:?}: {ratio} > {}",
                a.lipschitz_m()
            );
            assert!(ratio > 0.5 * a.lipschitz_m(), "{rule:?}: constant is loose");
        }
        let all: Vec<Transform> = rules.iter().map(|r| Transform::new("t", r.clone())).collect();
        let a = AugmentationSet::new(vec![], all, 3, 2.0).unwrap();
        assert!(max_lipschitz_ratio(&a, 3, 10_000, &mut rng) <= a.lipschitz_m() * (1.0 + 1e-9));
    }

    #[test]
    fn refinement_detection() {
        let shift = Transform::new(
            "s",
            TransformRule::AdditiveShift {
                direction: vec![1.0, 0.0],
            },
        );
        let base = AugmentationSet::new(vec![flip0()], vec![], 2, 1.0).unwrap();
        let more = AugmentationSet::new(vec![flip0(), swap()], vec![shift.clone()], 3, 1.0).unwrap();
        let finer = AugmentationSet::new(vec![flip0(), swap()], vec![shift], 5, 1.0).unwrap();
        assert!(base.is_refined_by(&more));
        assert!(more.is_refined_by(&finer));
        assert!(!finer.is_refined_by(&more));
        assert!(!more.is_refined_by(&base));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = AugmentationSet::new(vec![flip0()], vec![], 2, 0.0).unwrap();
        let b = AugmentationSet::new(vec![swap()], vec![], 2, 0.0).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }
}
