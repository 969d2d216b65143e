//! Concentration of augmented classes.
//!
//! Per class, samples within augmented distance `delta` are joined in a
//! threshold graph. A clique of that graph is a main part of the class, and
//! `sigma` is the smallest clique share over classes. Cliques come from an
//! exact branch and bound (at most 32 nodes) or from the complement of a greedy
//! maximal matching on the complement graph.
//!
//! The greedy matching can shrink when edges are added, so the approximate
//! clique alone is not monotone in `delta` or in the augmentation set. A clique
//! at a smaller threshold, or under a coarser set, stays a clique after the
//! change, so [`sigma_delta_curve`] and [`estimate_sigma_nested`] carry the
//! previous main parts forward and keep the larger of the two.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{all_views, distance_matrix_from_views, AugmentationSet, DistanceMatrix};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Largest graph the exact solver accepts.
pub const EXACT_BUDGET: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CliqueMode {
    Exact,
    #[serde(alias = "approx")]
    DualApprox,
}

impl CliqueMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CliqueMode::Exact => "exact",
            CliqueMode::DualApprox => "dual_approx",
        }
    }

    /// Exact when every class fits the budget.
    pub fn default_for(ds: &Dataset) -> Self {
        if ds.class_sizes().into_iter().all(|c| c <= EXACT_BUDGET) {
            CliqueMode::Exact
        } else {
            CliqueMode::DualApprox
        }
    }
}

impl std::str::FromStr for CliqueMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(CliqueMode::Exact),
            "approx" | "dual_approx" => Ok(CliqueMode::DualApprox),
            other => Err(Error::InvalidConfig(format!("unknown clique mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGraph {
    pub class_id: usize,
    /// Dataset index of each node.
    pub node_ids: Vec<usize>,
    pub adjacency: Vec<Vec<bool>>,
    pub delta: f64,
}

impl ThresholdGraph {
    /// Graph with explicit adjacency; the diagonal is ignored.
    pub fn from_adjacency(adjacency: Vec<Vec<bool>>) -> Self {
        let n = adjacency.len();
        let mut adjacency = adjacency;
        for (i, row) in adjacency.iter_mut().enumerate() {
            row[i] = false;
        }
        Self {
            class_id: 0,
            node_ids: (0..n).collect(),
            adjacency,
            delta: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    pub fn is_clique(&self, nodes: &[usize]) -> bool {
        nodes
            .iter()
            .enumerate()
            .all(|(a, &i)| nodes[a + 1..].iter().all(|&j| i != j && self.adjacency[i][j]))
    }
}

pub fn build_threshold_graph(dist: &DistanceMatrix, delta: f64, class_id: usize) -> Result<ThresholdGraph> {
    if !(delta >= 0.0) {
        return Err(Error::NegativeDelta(delta));
    }
    let n = dist.len();
    let adjacency = (0..n)
        .map(|i| (0..n).map(|j| i != j && dist.get(i, j) <= delta).collect())
        .collect();
    Ok(ThresholdGraph {
        class_id,
        node_ids: dist.indices.clone(),
        adjacency,
        delta,
    })
}

/// Maximum clique by branch and bound over bitmasks, as sorted node positions.
///
/// Candidates are expanded in increasing index order and only strictly larger
/// cliques replace the incumbent, so among maximum cliques the
/// lexicographically smallest sorted list wins. Greedy coloring of the
/// candidate set bounds the attainable size.
pub fn exact_max_clique(g: &ThresholdGraph) -> Result<Vec<usize>> {
    let n = g.len();
    if n > EXACT_BUDGET {
        return Err(Error::CliqueBudget {
            nodes: n,
            budget: EXACT_BUDGET,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let adj: Vec<u64> = g
        .adjacency
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &e)| e)
                .fold(0u64, |m, (j, _)| m | (1 << j))
        })
        .collect();
    let mut best = Vec::new();
    let mut current = Vec::with_capacity(n);
    expand(&adj, (1u64 << n) - 1, &mut current, &mut best);
    Ok(best)
}

fn expand(adj: &[u64], candidates: u64, current: &mut Vec<usize>, best: &mut Vec<usize>) {
    if candidates == 0 {
        if current.len() > best.len() {
            *best = current.clone();
        }
        return;
    }
    let mut rest = candidates;
    while rest != 0 {
        if current.len() + color_bound(adj, rest) <= best.len() {
            return;
        }
        let v = rest.trailing_zeros() as usize;
        rest &= !(1u64 << v);
        current.push(v);
        expand(adj, rest & adj[v], current, best);
        current.pop();
    }
}

/// Number of color classes in a greedy coloring of `set`; bounds any clique in it.
fn color_bound(adj: &[u64], set: u64) -> usize {
    let mut uncolored = set;
    let mut colors = 0;
    while uncolored != 0 {
        colors += 1;
        let mut open = uncolored;
        while open != 0 {
            let v = open.trailing_zeros() as usize;
            open &= !(1u64 << v) & !adj[v];
            uncolored &= !(1u64 << v);
        }
    }
    colors
}

/// Clique left over after removing a greedy maximal matching of the complement.
///
/// Complement edges are scanned in `(i, j)` index order. Unmatched nodes share
/// no complement edge, so they form a clique of `g`. An empty result becomes
/// the singleton of the first node.
pub fn approx_max_clique(g: &ThresholdGraph) -> Vec<usize> {
    let n = g.len();
    let mut matched = vec![false; n];
    for i in 0..n {
        if matched[i] {
            continue;
        }
        for j in i + 1..n {
            if !matched[j] && !g.adjacency[i][j] {
                matched[i] = true;
                matched[j] = true;
                break;
            }
        }
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !matched[i]).collect();
    if rest.is_empty() && n > 0 {
        vec![0]
    } else {
        rest
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEstimate {
    pub delta: f64,
    pub sigma: f64,
    /// Dataset indices of each class's main part, ascending.
    pub main_parts: Vec<Vec<usize>>,
    pub per_class_sigma: Vec<f64>,
    pub class_sizes: Vec<usize>,
    pub mode: CliqueMode,
}

impl ConcentrationEstimate {
    /// Header lines carry delta, the augmentation fingerprint, mode and sigma;
    /// then one CSV row per class.
    pub fn to_record(&self, fingerprint: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# delta={}", self.delta);
        let _ = writeln!(out, "# augmentation={fingerprint}");
        let _ = writeln!(out, "# mode={}", self.mode.as_str());
        let _ = writeln!(out, "# sigma={}", self.sigma);
        out.push_str("class_id,class_size,main_part_size,sigma_k,mode\n");
        for (k, part) in self.main_parts.iter().enumerate() {
            let _ = writeln!(
                out,
                "{k},{},{},{},{}",
                self.class_sizes[k],
                part.len(),
                self.per_class_sigma[k],
                self.mode.as_str()
            );
        }
        out
    }

    pub fn save_record(&self, path: &Path, fingerprint: &str) -> Result<()> {
        std::fs::write(path, self.to_record(fingerprint))?;
        Ok(())
    }
}

/// Per-class augmented distance matrices, computed once and thresholded many
/// times.
#[derive(Debug, Clone)]
pub struct ClassDistances {
    pub matrices: Vec<DistanceMatrix>,
}

impl ClassDistances {
    pub fn new(ds: &Dataset, a: &AugmentationSet) -> Self {
        let views = all_views(ds, a);
        let matrices = (0..ds.num_classes)
            .map(|k| {
                let idx = ds.class_indices(k);
                let class_views: Vec<_> = idx.iter().map(|&i| views[i].clone()).collect();
                distance_matrix_from_views(idx, &class_views)
            })
            .collect();
        Self { matrices }
    }

    pub fn estimate(&self, delta: f64, mode: CliqueMode) -> Result<ConcentrationEstimate> {
        self.estimate_seeded(delta, mode, None)
    }

    /// Like [`Self::estimate`], but a main part from `seed` that is still a
    /// clique at `delta` replaces a smaller one.
    pub fn estimate_seeded(
        &self,
        delta: f64,
        mode: CliqueMode,
        seed: Option<&ConcentrationEstimate>,
    ) -> Result<ConcentrationEstimate> {
        if !(delta >= 0.0) {
            return Err(Error::NegativeDelta(delta));
        }
        let parts: Vec<Vec<usize>> = self
            .matrices
            .par_iter()
            .enumerate()
            .map(|(k, dm)| {
                let g = build_threshold_graph(dm, delta, k)?;
                let local = match mode {
                    CliqueMode::Exact => exact_max_clique(&g)?,
                    CliqueMode::DualApprox => approx_max_clique(&g),
                };
                let mut part: Vec<usize> = local.iter().map(|&i| dm.indices[i]).collect();
                if let Some(prev) = seed.and_then(|s| s.main_parts.get(k)) {
                    if prev.len() > part.len() && self.is_main_part(k, prev, delta) {
                        part = prev.clone();
                    }
                }
                Ok(part)
            })
            .collect::<Result<_>>()?;
        let class_sizes: Vec<usize> = self.matrices.iter().map(|m| m.len()).collect();
        let per_class_sigma: Vec<f64> = parts
            .iter()
            .zip(&class_sizes)
            .map(|(p, &c)| p.len() as f64 / c as f64)
            .collect();
        let sigma = per_class_sigma.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(ConcentrationEstimate {
            delta,
            sigma,
            main_parts: parts,
            per_class_sigma,
            class_sizes,
            mode,
        })
    }

    /// Whether `part` (dataset indices) lies in class `k` with pairwise
    /// augmented distance at most `delta`.
    pub fn is_main_part(&self, k: usize, part: &[usize], delta: f64) -> bool {
        let dm = &self.matrices[k];
        let pos: Option<Vec<usize>> = part.iter().map(|i| dm.indices.binary_search(i).ok()).collect();
        let Some(pos) = pos else { return false };
        pos.iter()
            .enumerate()
            .all(|(a, &i)| pos[a + 1..].iter().all(|&j| i != j && dm.get(i, j) <= delta))
    }

    /// Checks every estimate invariant: cliques, shares and the minimum.
    pub fn verify(&self, est: &ConcentrationEstimate) -> bool {
        let parts_ok = est.main_parts.iter().enumerate().all(|(k, p)| {
            !p.is_empty()
                && self.is_main_part(k, p, est.delta)
                && (est.per_class_sigma[k] - p.len() as f64 / self.matrices[k].len() as f64).abs() < 1e-15
        });
        let min = est.per_class_sigma.iter().copied().fold(f64::INFINITY, f64::min);
        parts_ok && est.sigma == min
    }
}

pub fn estimate_sigma(
    ds: &Dataset,
    a: &AugmentationSet,
    delta: f64,
    mode: CliqueMode,
) -> Result<ConcentrationEstimate> {
    ClassDistances::new(ds, a).estimate(delta, mode)
}

/// Estimates along ascending thresholds from one set of distance matrices,
/// carrying main parts forward.
pub fn sigma_delta_curve(
    ds: &Dataset,
    a: &AugmentationSet,
    deltas: &[f64],
    mode: CliqueMode,
) -> Result<Vec<ConcentrationEstimate>> {
    if deltas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("thresholds must be ascending".into()));
    }
    let cd = ClassDistances::new(ds, a);
    let mut out: Vec<ConcentrationEstimate> = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let est = cd.estimate_seeded(delta, mode, out.last())?;
        out.push(est);
    }
    Ok(out)
}

/// Estimates at one threshold along a chain of refined augmentation sets,
/// carrying main parts forward.
pub fn estimate_sigma_nested(
    ds: &Dataset,
    sets: &[AugmentationSet],
    delta: f64,
    mode: CliqueMode,
) -> Result<Vec<ConcentrationEstimate>> {
    if sets.windows(2).any(|w| !w[0].is_refined_by(&w[1])) {
        return Err(Error::InvalidConfig("augmentation sets must be nested".into()));
    }
    let mut out: Vec<ConcentrationEstimate> = Vec::with_capacity(sets.len());
    for a in sets {
        let est = ClassDistances::new(ds, a).estimate_seeded(delta, mode, out.last())?;
        out.push(est);
    }
    Ok(out)
}
