//! Acceptance suite. Runs as a plain program so every criterion prints one
//! PASS or FAIL line; the process fails if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use auglab_cli::config::ExperimentConfig;
use auglab_cli::experiment::run_experiment;
use auglab_cli::sweep::{run_sweep, spearman};
use auglab_core::augment::{AugmentationSet, Transform, TransformRule};
use auglab_core::bounds::{divergence_condition, divergence_threshold, eta, rho, rho_max, concentration_err_bound};
use auglab_core::concentration::{
    approx_max_clique, estimate_sigma_nested, exact_max_clique, sigma_delta_curve, CliqueMode, ThresholdGraph,
};
use auglab_core::data::{generate_dataset, GeneratorConfig, ReflectedMode};
use auglab_core::encoder::{loss_and_gradient, Activation, EncoderModel, NormMode, TrainBatch};
use auglab_core::eval::{
    centers_from_views, embed_views, error_from_predictions, nn_classify, ClassStats, SpreadProfile, ViewAveraging,
};
use auglab_core::linalg::dist_sq;
use auglab_core::losses::{cross_corr_loss, cross_correlation, info_nce, standardize_union, LossSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn gaussian_rows(rng: &mut ChaCha8Rng, b: usize, d: usize) -> Vec<Vec<f64>> {
    (0..b)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

fn unit_rows(rng: &mut ChaCha8Rng, b: usize, d: usize) -> Vec<Vec<f64>> {
    gaussian_rows(rng, b, d)
        .into_iter()
        .map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

fn c1_decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let b = rng.random_range(2..12);
        let d = rng.random_range(2..8);
        let (z1, z2, zn) = (
            unit_rows(&mut rng, b, d),
            unit_rows(&mut rng, b, d),
            unit_rows(&mut rng, b, d),
        );
        let l = info_nce(&z1, &z2, &zn).map_err(|e| e.to_string())?;
        worst = worst.max((l.total - (l.l1 + l.l2)).abs());
    }
    let mut worst_cc: f64 = 0.0;
    for _ in 0..1000 {
        let b = rng.random_range(2..12);
        let d = rng.random_range(2..8);
        let lambda = rng.random_range(0.001..0.9);
        let (v1, v2) = standardize_union(&gaussian_rows(&mut rng, b, d), &gaussian_rows(&mut rng, b, d));
        let f = cross_correlation(&v1, &v2).map_err(|e| e.to_string())?;
        let l = cross_corr_loss(&f, lambda).map_err(|e| e.to_string())?;
        worst_cc = worst_cc.max((l.total - ((1.0 - lambda) * l.l1 + lambda * l.l2)).abs());
    }
    if worst < 1e-9 && worst_cc < 1e-9 {
        Ok(format!("max gap info_nce {worst:.1e}, cross_corr {worst_cc:.1e}"))
    } else {
        Err(format!("max gap info_nce {worst:.1e}, cross_corr {worst_cc:.1e}"))
    }
}

fn c2_alignment_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut min_slack = f64::INFINITY;
    for _ in 0..1000 {
        let b = rng.random_range(2..16);
        let d = rng.random_range(1..8);
        let (v1, v2) = standardize_union(&gaussian_rows(&mut rng, b, d), &gaussian_rows(&mut rng, b, d));
        let f = cross_correlation(&v1, &v2).map_err(|e| e.to_string())?;
        let l1: f64 = (0..d).map(|i| (1.0 - f.get(i, i)).powi(2)).sum();
        let l_pos = v1.iter().zip(&v2).map(|(a, c)| dist_sq(a, c)).sum::<f64>() / b as f64;
        let bound = 2.0 * (d as f64 * l1).sqrt();
        if l_pos > bound + 1e-9 {
            return Err(format!("L_pos {l_pos} > {bound} (d = {d}, B = {b})"));
        }
        min_slack = min_slack.min(bound - l_pos);
    }
    Ok(format!("1000 batches, min slack {min_slack:.3e}"))
}

/// Largest clique by exhaustive subset enumeration over bitmasks.
fn brute_force_clique_size(adj: &[u32]) -> usize {
    let n = adj.len();
    let mut is_clique = vec![false; 1 << n];
    is_clique[0] = true;
    let mut best = 0;
    for mask in 1u32..(1u32 << n) {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        if is_clique[rest as usize] && adj[low] & rest == rest {
            is_clique[mask as usize] = true;
            best = best.max(mask.count_ones() as usize);
        }
    }
    best
}

fn c3_clique_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for t in 0..200 {
        let n = rng.random_range(1..=20);
        let p = [0.2, 0.5, 0.8][t % 3];
        let mut adjacency = vec![vec![false; n]; n];
        let mut bits = vec![0u32; n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    adjacency[i][j] = true;
                    adjacency[j][i] = true;
                    bits[i] |= 1 << j;
                    bits[j] |= 1 << i;
                }
            }
        }
        let g = ThresholdGraph::from_adjacency(adjacency);
        let exact = exact_max_clique(&g).map_err(|e| e.to_string())?;
        let approx = approx_max_clique(&g);
        let oracle = brute_force_clique_size(&bits);
        if exact.len() != oracle || !g.is_clique(&exact) {
            return Err(format!("graph {t}: exact {exact:?} vs oracle size {oracle}"));
        }
        if approx.len() > exact.len() || !g.is_clique(&approx) {
            return Err(format!(
                "graph {t}: approx {approx:?} not a clique no larger than {}",
                exact.len()
            ));
        }
    }
    Ok("200 graphs".into())
}

fn flip(name: &str, coords: &[usize]) -> Transform {
    Transform::new(
        name,
        TransformRule::SignFlipMask {
            coords: coords.to_vec(),
        },
    )
}

fn c4_sigma_monotone() -> Outcome {
    let deltas: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
    let mut checks = 0;
    for f in 0..20u64 {
        let dim = 3 + (f as usize % 3);
        let k = 2 + (f as usize % 3);
        let centers: Vec<Vec<f64>> = (0..k)
            .map(|c| {
                (0..dim)
                    .map(|i| {
                        if i == c % dim {
                            5.0
                        } else {
                            1.5 + 0.5 * (c / dim) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let mut cfg = GeneratorConfig::blobs(
            centers,
            12 + (f as usize % 4) * 5,
            0.2 + 0.05 * (f % 4) as f64,
            1000 + f,
        );
        cfg.modes = vec![
            ReflectedMode {
                flip: vec![0],
                weight: 0.2,
            },
            ReflectedMode {
                flip: vec![1],
                weight: 0.15,
            },
        ];
        let ds = generate_dataset(&cfg).map_err(|e| format!("fixture {f}: {e}"))?;
        let radius = ds.max_norm();
        let shift = Transform::new(
            "shift",
            TransformRule::AdditiveShift {
                direction: vec![0.1; dim],
            },
        );
        let sets = [vec![], vec![flip("f0", &[0])], vec![flip("f0", &[0]), flip("f1", &[1])]]
            .into_iter()
            .map(|d| AugmentationSet::new(d, vec![shift.clone()], 3, radius))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        for mode in [CliqueMode::Exact, CliqueMode::DualApprox] {
            for a in &sets {
                let curve = sigma_delta_curve(&ds, a, &deltas, mode).map_err(|e| e.to_string())?;
                if curve.windows(2).any(|w| w[1].sigma < w[0].sigma) {
                    let s: Vec<f64> = curve.iter().map(|e| e.sigma).collect();
                    return Err(format!("fixture {f} {}: sigma over delta {s:?}", mode.as_str()));
                }
                checks += 1;
            }
            for &delta in &[deltas[1], deltas[4], deltas[7]] {
                let chain = estimate_sigma_nested(&ds, &sets, delta, mode).map_err(|e| e.to_string())?;
                if chain.windows(2).any(|w| w[1].sigma < w[0].sigma) {
                    let s: Vec<f64> = chain.iter().map(|e| e.sigma).collect();
                    return Err(format!(
                        "fixture {f} {} delta {delta}: sigma over sets {s:?}",
                        mode.as_str()
                    ));
                }
                checks += 1;
            }
        }
    }
    Ok(format!("{checks} monotone sequences over 20 fixtures"))
}

fn c5_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let losses = [
        (LossSpec::InfoNce, NormMode::Sphere { r: 1.0 }),
        (LossSpec::CrossCorr { lambda: 0.05 }, NormMode::BatchStandardized),
        (LossSpec::Simple { lambda: 0.5 }, NormMode::Sphere { r: 2.0 }),
    ];
    let mut worst: f64 = 0.0;
    for (loss, norm) in losses {
        for draw in 0..20u64 {
            let input = rng.random_range(2..5);
            let hidden = rng.random_range(3..7);
            let out = rng.random_range(2..5);
            let model = EncoderModel::random(
                &[input, hidden, out],
                &[Activation::Tanh, Activation::Identity],
                norm,
                draw,
            )
            .map_err(|e| e.to_string())?;
            let b = rng.random_range(4..9);
            let batch = TrainBatch {
                anchors: gaussian_rows(&mut rng, b, input),
                positives: gaussian_rows(&mut rng, b, input),
                negatives: if loss.needs_negatives() {
                    gaussian_rows(&mut rng, b, input)
                } else {
                    Vec::new()
                },
            };
            let (_, grad) = loss_and_gradient(&model, &batch, &loss).map_err(|e| e.to_string())?;
            let p0 = model.params();
            let h = 1e-5;
            let mut fd = vec![0.0; p0.len()];
            let mut m = model.clone();
            for i in 0..p0.len() {
                let mut p = p0.clone();
                p[i] = p0[i] + h;
                m.set_params(&p).unwrap();
                let up = loss_and_gradient(&m, &batch, &loss).map_err(|e| e.to_string())?.0.total;
                p[i] = p0[i] - h;
                m.set_params(&p).unwrap();
                let down = loss_and_gradient(&m, &batch, &loss).map_err(|e| e.to_string())?.0.total;
                fd[i] = (up - down) / (2.0 * h);
            }
            let diff = grad.iter().zip(&fd).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            let scale = grad
                .iter()
                .map(|a| a * a)
                .sum::<f64>()
                .sqrt()
                .max(fd.iter().map(|a| a * a).sum::<f64>().sqrt())
                .max(1e-8);
            let rel = diff / scale;
            if rel >= 1e-4 {
                return Err(format!(
                    "{} draw {draw}: relative error {rel:.2e}",
                    loss.kind().as_str()
                ));
            }
            worst = worst.max(rel);
        }
    }
    Ok(format!("60 draws, max relative error {worst:.2e}"))
}

/// `collapsed` gives every class a single point and no augmentation, so the
/// concentration terms vanish and the divergence condition can verify.
fn inequality_config(loss: &str, lr: f64, d: usize, k: usize, seed: u64, collapsed: bool, out: &Path) -> String {
    let (spread, deltas, discrete, continuous) = if collapsed {
        ("0.0", "[1e-6]", "[]", "[]")
    } else {
        (
            "0.3",
            "[0.5, 1.0, 2.0]",
            r#"[{ name = "flip3", rule = "sign_flip_mask", coords = [3] }]"#,
            r#"[{ name = "shift", rule = "additive_shift", direction = [0.1, 0.1, 0.1, 0.1] }]"#,
        )
    };
    let centers: Vec<String> = (0..k)
        .map(|c| {
            let mut v = [0.0f64; 4];
            v[c / 2] = if c % 2 == 0 { 4.0 } else { -4.0 };
            format!(
                "[{}]",
                v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(", ")
            )
        })
        .collect();
    format!(
        r#"
seed = {seed}
output_dir = "{}"
epsilon_grid = [0.1, 0.25, 0.5]
delta_grid = {deltas}

[dataset]
num_classes = {k}
samples_per_class = 24
centers = [{}]
spread = {spread}
manifold = {{ kind = "gaussian_blobs" }}

[augmentation]
discrete = {discrete}
continuous = {continuous}

[encoder]
hidden = [16]
output_dim = {d}

[train]
loss = {loss}
steps = 1500
batch_size = 32
learning_rate = {lr}
"#,
        out.display(),
        centers.join(", ")
    )
}

fn c6_inequalities(tmp: &Path) -> Outcome {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut violations = Vec::new();
    let mut runs = 0;
    for collapsed in [false, true] {
        for (loss, lr) in [
            (r#"{ kind = "info_nce" }"#, 0.5),
            (r#"{ kind = "cross_corr", lambda = 0.005 }"#, 0.05),
        ] {
            for d in [2, 8] {
                for k in [2, 4] {
                    for seed in 0..10u64 {
                        let out = tmp.join(format!(
                            "ineq_{}_{d}_{k}_{seed}_{collapsed}",
                            if lr > 0.1 { "nce" } else { "cc" }
                        ));
                        let text = inequality_config(loss, lr, d, k, seed, collapsed, &out);
                        let cfg = ExperimentConfig::from_toml(&text).map_err(|e| e.to_string())?;
                        runs += 1;
                        let o = run_experiment(&cfg).map_err(|e| format!("{loss} d={d} K={k} seed={seed}: {e}"))?;
                        for rec in &o.reports {
                            let r = &rec.report;
                            let tag = format!("{loss} d={d} K={k} seed={seed} delta={} eps={}", rec.delta, rec.epsilon);
                            violations.extend(r.violations(1e-9).into_iter().map(|v| format!("{tag}: {v}")));
                            *counts.entry("spread_bound").or_default() += usize::from(r.spread_bound.holds(1e-9).is_some());
                            for (a, b) in &r.deviation {
                                *counts.entry("deviation").or_default() +=
                                    usize::from(a.holds(1e-9).is_some()) + usize::from(b.holds(1e-9).is_some());
                            }
                            for (name, div) in [("infonce_centers", &r.infonce_centers), ("crosscorr_centers", &r.crosscorr_centers)] {
                                if let Some(div) = div {
                                    *counts.entry(name).or_default() +=
                                        div.pairs.iter().filter(|p| p.in_domain).count();
                                }
                            }
                            *counts.entry("err_bound").or_default() += usize::from(r.err_bound.holds(1e-9).is_some());
                        }
                    }
                }
            }
        }
    }
    let summary = counts
        .iter()
        .map(|(k, v)| format!("{k} {v}"))
        .collect::<Vec<_>>()
        .join(", ");
    if violations.is_empty() {
        Ok(format!("{runs} trained encoders, checks: {summary}"))
    } else {
        Err(format!("{} violations, first: {}", violations.len(), violations[0]))
    }
}

fn c7_perfect_case() -> Outcome {
    let centers = vec![vec![4.0, 0.0, 0.0], vec![0.0, 4.0, 0.0], vec![0.0, 0.0, 4.0]];
    let ds = generate_dataset(&GeneratorConfig::blobs(centers, 10, 0.0, 7)).map_err(|e| e.to_string())?;
    let a = AugmentationSet::identity_only();
    let est = sigma_delta_curve(&ds, &a, &[0.0], CliqueMode::Exact)
        .map_err(|e| e.to_string())?
        .remove(0);
    let model = EncoderModel::random(
        &[3, 8, 3],
        &[Activation::Tanh, Activation::Identity],
        NormMode::Sphere { r: 1.0 },
        3,
    )
    .map_err(|e| e.to_string())?;
    let ev = embed_views(&model, &ds, &a, ViewAveraging::Enumerate).map_err(|e| e.to_string())?;
    let profile = SpreadProfile::from_views(&ev);
    let r_eps = profile.r_eps(0.0);
    let stats = ClassStats::new(
        centers_from_views(&ev).map_err(|e| e.to_string())?,
        ds.priors.clone(),
        1.0,
    );
    let xs: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.features.clone()).collect();
    let preds: Vec<usize> = model
        .embed(&xs)
        .unwrap()
        .iter()
        .map(|z| nn_classify(&stats, z))
        .collect();
    let err = error_from_predictions(&ds, &preds);
    let lipschitz = 37.0;
    let rho_all: Vec<f64> = ds
        .priors
        .iter()
        .map(|&p| rho(est.sigma, 0.0, 0.0, r_eps, p, lipschitz, 1.0))
        .collect();
    let rmax = rho_max(est.sigma, 0.0, 0.0, r_eps, &ds.priors, lipschitz, 1.0);
    let threshold = divergence_threshold(rmax, stats.delta_mu, 1.0);
    let holds = divergence_condition(&stats.pairwise_products(), threshold);
    let (bound, valid) = concentration_err_bound(est.sigma, r_eps, holds);
    let checks = [
        ("sigma", est.sigma, 1.0),
        ("r_eps", r_eps, 0.0),
        ("rho_max", rmax, 0.0),
        ("delta_mu", stats.delta_mu, 0.0),
        ("threshold", threshold, 1.0),
        ("err_bound", bound, 0.0),
        ("err", err, 0.0),
    ];
    for (name, got, want) in checks {
        if (got - want).abs() > 1e-12 {
            return Err(format!("{name} = {got}, expected {want}"));
        }
    }
    if rho_all.iter().any(|&r| r.abs() > 1e-12) || !valid {
        return Err(format!("per-class rho {rho_all:?}, bound valid {valid}"));
    }
    Ok("sigma 1, rho_max 0, delta_mu 0, threshold r^2, bound 0, err 0".into())
}

fn c8_eta() -> Outcome {
    let v = eta(1.0, 1, 1, 1.0, 1.0).map_err(|e| e.to_string())?;
    if (v - 108.0).abs() < 1e-4 {
        Ok(format!("eta = {v:.8}"))
    } else {
        Err(format!("eta = {v}"))
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Per level, per threshold: `(sigma, err)` for each seed.
fn sweep_over_seeds(name: &str, tmp: &Path) -> Result<(Vec<String>, Vec<f64>, Vec<Vec<Vec<(f64, f64)>>>), String> {
    let base = ExperimentConfig::load(&fixture(name)).map_err(|e| e.to_string())?;
    let spec = base.sweep.clone().ok_or("fixture has no sweep")?;
    let mut levels: Vec<String> = Vec::new();
    let deltas = base.delta_grid.clone();
    let mut table: Vec<Vec<Vec<(f64, f64)>>> = Vec::new();
    for seed in 1..=5u64 {
        let mut cfg = base.clone();
        cfg.reseed(seed);
        cfg.output_dir = tmp.join(format!("{name}_{seed}"));
        let out = run_sweep(&cfg, &spec).map_err(|e| e.to_string())?;
        if !out.failures.is_empty() {
            return Err(format!("seed {seed}: failed levels {:?}", out.failures));
        }
        for row in out.rows.iter().filter(|r| r.epsilon == cfg.epsilon_grid[0]) {
            let li = match levels.iter().position(|l| *l == row.level) {
                Some(i) => i,
                None => {
                    levels.push(row.level.clone());
                    table.push(vec![Vec::new(); deltas.len()]);
                    levels.len() - 1
                }
            };
            let di = deltas.iter().position(|&d| d == row.delta).unwrap();
            table[li][di].push((row.sigma, row.err));
        }
    }
    Ok((levels, deltas, table))
}

fn c9_richness(tmp: &Path) -> Outcome {
    let (levels, _, table) = sweep_over_seeds("richness.toml", tmp)?;
    if levels.len() != 3 {
        return Err(format!("expected 3 levels, got {levels:?}"));
    }
    let sigma: Vec<f64> = table
        .iter()
        .map(|l| median(l[0].iter().map(|p| p.0).collect()))
        .collect();
    let err: Vec<f64> = table
        .iter()
        .map(|l| median(l[0].iter().map(|p| p.1).collect()))
        .collect();
    let detail = format!("median sigma {sigma:.4?}, median err {err:.4?}");
    let up = sigma.windows(2).all(|w| w[1] > w[0]);
    let down = err.windows(2).all(|w| w[1] < w[0]);
    if up && down {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c10_pairs(tmp: &Path) -> Outcome {
    let (levels, deltas, table) = sweep_over_seeds("pairs.toml", tmp)?;
    if levels.len() != 6 || deltas.len() != 2 {
        return Err(format!(
            "expected 6 levels and 2 thresholds, got {} and {}",
            levels.len(),
            deltas.len()
        ));
    }
    let gap = |di: usize| -> Vec<f64> {
        table
            .iter()
            .map(|l| 1.0 - median(l[di].iter().map(|p| p.0).collect()))
            .collect()
    };
    let err: Vec<f64> = table
        .iter()
        .map(|l| median(l[0].iter().map(|p| p.1).collect()))
        .collect();
    let (g0, g1) = (gap(0), gap(1));
    let (s0, s1, stable) = (spearman(&g0, &err), spearman(&g1, &err), spearman(&g0, &g1));
    let detail = format!(
        "spearman(1-sigma, err) {s0:.3} at delta {}, {s1:.3} at delta {}; across thresholds {stable:.3}",
        deltas[0], deltas[1]
    );
    if s0 >= 0.5 && s1 >= 0.5 && stable >= 0.8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn csv_tree(dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>, root: &Path) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            csv_tree(&p, out, root);
        } else if p.extension().is_some_and(|e| e == "csv") {
            out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
        }
    }
}

fn c11_determinism(tmp: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_auglab");
    let cfg = fixture("richness.toml");
    let cfg = cfg.to_str().unwrap();
    let runs: [&[&str]; 6] = [
        &["gen-data"],
        &["concentration", "--mode", "exact"],
        &["train"],
        &["evaluate"],
        &["bounds"],
        &["sweep"],
    ];
    let mut files = 0;
    for args in runs {
        let mut trees = Vec::new();
        for rep in 0..2 {
            let out = tmp.join(format!("det_{}_{rep}", args[0]));
            let status = Command::new(bin)
                .args(args)
                .args(["--config", cfg, "--seed", "3", "--out", out.to_str().unwrap()])
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{}: {}", args[0], String::from_utf8_lossy(&status.stderr)));
            }
            let mut tree = BTreeMap::new();
            csv_tree(&out, &mut tree, &out);
            trees.push(tree);
        }
        if trees[0].is_empty() || trees[0] != trees[1] {
            return Err(format!("{}: CSV outputs differ between runs", args[0]));
        }
        files += trees[0].len();
    }
    Ok(format!("6 subcommands, {files} CSV files byte-identical"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let t = tmp.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 decomposition identities", Box::new(c1_decomposition)),
        (
            "2 alignment bound on standardized batches",
            Box::new(c2_alignment_bound),
        ),
        ("3 clique oracle equivalence", Box::new(c3_clique_oracle)),
        ("4 sigma monotonicity", Box::new(c4_sigma_monotone)),
        ("5 gradient correctness", Box::new(c5_gradients)),
        (
            "6 inequality suite on trained encoders",
            Box::new(|| c6_inequalities(t)),
        ),
        ("7 perfect-case exactness", Box::new(c7_perfect_case)),
        ("8 eta closed form", Box::new(c8_eta)),
        ("9 richness sweep trend", Box::new(|| c9_richness(t))),
        ("10 pairs sweep rank correlation", Box::new(|| c10_pairs(t))),
        ("11 CLI determinism", Box::new(|| c11_determinism(t))),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail}; {secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail}; {secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
