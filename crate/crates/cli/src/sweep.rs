//! Sweeps over augmentation settings. Every level trains a fresh encoder
//! with the same seeds and writes its own experiment directory.

use std::fmt::Write as _;

use auglab_core::augment::{Transform, TransformRule};
use rayon::prelude::*;

use crate::config::{scale_rule, ExperimentConfig, SweepKind, SweepSpec};
use crate::experiment::{run_experiment, ExperimentOutcome};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct SweepLevel {
    pub label: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub level: String,
    pub delta: f64,
    pub epsilon: f64,
    pub sigma: f64,
    pub err: f64,
    pub err_bound: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub rows: Vec<SummaryRow>,
    /// Per threshold, rank correlation between `1 - sigma` and `err` across levels.
    pub spearman: Vec<(f64, f64)>,
    /// Per pair of thresholds, rank correlation between their `1 - sigma` columns.
    pub stability: Vec<(f64, f64, f64)>,
    /// `(level, error)` for levels that failed.
    pub failures: Vec<(String, String)>,
}

fn names(v: &toml::Value) -> Result<Vec<String>, CliError> {
    v.as_array()
        .and_then(|a| {
            a.iter()
                .map(|x| x.as_str().map(String::from))
                .collect::<Option<Vec<_>>>()
        })
        .ok_or_else(|| CliError::Config("richness levels must be lists of member names".into()))
}

fn member<'a>(catalog: &'a [Transform], name: &str) -> Result<&'a Transform, CliError> {
    catalog
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| CliError::Config(format!("unknown discrete member {name:?}")))
}

fn label_of(members: &[String]) -> String {
    if members.is_empty() {
        "identity".into()
    } else {
        members.join("+")
    }
}

/// Expands a sweep into one experiment configuration per level.
pub fn expand_levels(base: &ExperimentConfig, sweep: &SweepSpec) -> Result<Vec<SweepLevel>, CliError> {
    let catalog: Vec<Transform> = base
        .augmentation
        .discrete
        .iter()
        .filter(|t| t.rule != TransformRule::Identity)
        .cloned()
        .collect();
    let level = |i: usize, label: String, f: &dyn Fn(&mut ExperimentConfig)| {
        let mut config = base.clone();
        config.sweep = None;
        config.output_dir = base.output_dir.join(format!("level_{i}"));
        f(&mut config);
        SweepLevel { label, config }
    };
    let mut out = Vec::new();
    match sweep.kind {
        SweepKind::Richness => {
            let sets = sweep.levels.iter().map(names).collect::<Result<Vec<_>, _>>()?;
            if sets.is_empty() {
                return Err(CliError::Config("richness sweep needs at least one level".into()));
            }
            for w in sets.windows(2) {
                let nested = w[0].iter().all(|n| w[1].contains(n)) && w[1].len() > w[0].len();
                if !nested {
                    return Err(CliError::Config(format!(
                        "richness levels must be strictly nested: {:?} then {:?}",
                        w[0], w[1]
                    )));
                }
            }
            for (i, set) in sets.iter().enumerate() {
                let members = set
                    .iter()
                    .map(|n| member(&catalog, n).cloned())
                    .collect::<Result<Vec<_>, _>>()?;
                out.push(level(i, label_of(set), &|c| c.augmentation.discrete = members.clone()));
            }
        }
        SweepKind::Strength => {
            let scales = sweep
                .levels
                .iter()
                .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| CliError::Config("strength levels must be numbers".into()))?;
            if scales.is_empty() || scales.windows(2).any(|w| w[0] >= w[1]) || scales.iter().any(|&s| !(s > 0.0)) {
                return Err(CliError::Config(
                    "strength levels must be positive and strictly increasing".into(),
                ));
            }
            if base.augmentation.continuous.is_empty() {
                return Err(CliError::Config("strength sweep needs continuous members".into()));
            }
            for (i, &s) in scales.iter().enumerate() {
                out.push(level(i, format!("x{s}"), &|c| {
                    for t in &mut c.augmentation.continuous {
                        t.rule = scale_rule(&t.rule, s);
                    }
                }));
            }
        }
        SweepKind::Pairs => {
            if catalog.len() < 2 {
                return Err(CliError::Config(
                    "pairs sweep needs at least two discrete members".into(),
                ));
            }
            let mut i = 0;
            for a in 0..catalog.len() {
                for b in a + 1..catalog.len() {
                    let pair = vec![catalog[a].clone(), catalog[b].clone()];
                    let label = label_of(&[catalog[a].name.clone(), catalog[b].name.clone()]);
                    out.push(level(i, label, &|c| c.augmentation.discrete = pair.clone()));
                    i += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Rank correlation with average ranks for ties. `NaN` when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn summarize(
    levels: &[SweepLevel],
    results: &[Result<ExperimentOutcome, CliError>],
    kind: SweepKind,
) -> SweepOutcome {
    let mut out = SweepOutcome::default();
    let mut per_delta: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    for (lvl, res) in levels.iter().zip(results) {
        let o = match res {
            Ok(o) => o,
            Err(e) => {
                out.failures.push((lvl.label.clone(), e.to_string()));
                continue;
            }
        };
        for r in &o.reports {
            let sigma = o
                .estimates
                .iter()
                .find(|e| e.delta == r.delta)
                .map(|e| e.sigma)
                .unwrap_or(f64::NAN);
            out.rows.push(SummaryRow {
                level: lvl.label.clone(),
                delta: r.delta,
                epsilon: r.epsilon,
                sigma,
                err: o.measurements.err,
                err_bound: r.report.err_bound.value,
                valid: r.report.err_bound.valid,
            });
        }
        for (i, e) in o.estimates.iter().enumerate() {
            if per_delta.len() <= i {
                per_delta.push((e.delta, Vec::new(), Vec::new()));
            }
            per_delta[i].1.push(1.0 - e.sigma);
            per_delta[i].2.push(o.measurements.err);
        }
    }
    if kind == SweepKind::Pairs {
        out.spearman = per_delta.iter().map(|(d, s, e)| (*d, spearman(s, e))).collect();
        for i in 0..per_delta.len() {
            for j in i + 1..per_delta.len() {
                out.stability.push((
                    per_delta[i].0,
                    per_delta[j].0,
                    spearman(&per_delta[i].1, &per_delta[j].1),
                ));
            }
        }
    }
    out
}

/// Runs every level, writes `summary.csv` (and `spearman.csv` for pairs) to
/// the base output directory. Failed levels are listed in `failures.csv`.
pub fn run_sweep(base: &ExperimentConfig, sweep: &SweepSpec) -> Result<SweepOutcome, CliError> {
    let levels = expand_levels(base, sweep)?;
    std::fs::create_dir_all(&base.output_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", base.output_dir.display())))?;
    let results: Vec<Result<ExperimentOutcome, CliError>> =
        levels.par_iter().map(|l| run_experiment(&l.config)).collect();
    let out = summarize(&levels, &results, sweep.kind);
    let io = |e: std::io::Error| CliError::stage("sweep", e.into());
    std::fs::write(base.output_dir.join("summary.csv"), summary_csv(&out)).map_err(io)?;
    if !out.failures.is_empty() {
        let mut s = String::from("level,error\n");
        for (l, e) in &out.failures {
            let _ = writeln!(s, "{l},\"{}\"", e.replace('"', "'"));
        }
        std::fs::write(base.output_dir.join("failures.csv"), s).map_err(io)?;
    }
    if sweep.kind == SweepKind::Pairs {
        let mut s = String::from("kind,delta_a,delta_b,spearman\n");
        for (d, r) in &out.spearman {
            let _ = writeln!(s, "one_minus_sigma_vs_err,{d},,{r}");
        }
        for (a, b, r) in &out.stability {
            let _ = writeln!(s, "one_minus_sigma_across_delta,{a},{b},{r}");
        }
        std::fs::write(base.output_dir.join("spearman.csv"), s).map_err(io)?;
    }
    Ok(out)
}

pub fn summary_csv(out: &SweepOutcome) -> String {
    let mut s = String::from("level,delta,epsilon,sigma,one_minus_sigma,err,err_bound,valid\n");
    for r in &out.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.level,
            r.delta,
            r.epsilon,
            r.sigma,
            1.0 - r.sigma,
            r.err,
            r.err_bound,
            r.valid
        );
    }
    s
}
