//! One experiment: data, augmentations, training, concentration, evaluation
//! and bounds, with every intermediate result written to the output directory.

use std::fmt::Write as _;
use std::path::Path;

use auglab_core::augment::{view_vectors, AugmentationSet};
use auglab_core::bounds::{full_report, BoundInputs, BoundReport, Empirical};
use auglab_core::concentration::{sigma_delta_curve, CliqueMode, ConcentrationEstimate};
use auglab_core::data::{save_dataset, Dataset, DatasetFormat};
use auglab_core::encoder::{train, write_trace, EncoderModel, NormMode, TraceRow};
use auglab_core::eval::{
    centers_from_views, deviation_moments, embed_views, error_from_predictions, freeze_population_standardizer,
    main_part_accuracy, nn_classify, population_cross_corr_loss, population_info_nce, ClassStats, EmbeddedViews,
    SpreadProfile, ViewAveraging,
};
use auglab_core::linalg::dot;
use auglab_core::losses::{LossBreakdown, LossKind, LossSpec};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Everything measured on a trained encoder that the bounds consume.
#[derive(Debug, Clone)]
pub struct Measurements {
    pub stats: ClassStats,
    pub predictions: Vec<usize>,
    pub err: f64,
    pub profile: SpreadProfile,
    pub deviation_first: Vec<f64>,
    pub deviation_second: Vec<f64>,
    pub population_loss: LossBreakdown,
    pub lipschitz: f64,
    pub lipschitz_probe_only: bool,
}

fn population_loss(ev: &EmbeddedViews, loss: &LossSpec, r: f64) -> Result<LossBreakdown, auglab_core::Error> {
    Ok(match *loss {
        LossSpec::InfoNce => population_info_nce(ev),
        LossSpec::CrossCorr { lambda } => population_cross_corr_loss(ev, lambda)?.1,
        LossSpec::Simple { lambda } => {
            // -E z1.z2 = -(r^2 - E|z1 - z2|^2 / 2) and |E f|^2 over all views.
            let l_pos = SpreadProfile::from_views(ev).l_pos();
            let l1 = -(r * r - 0.5 * l_pos);
            let d = ev.views[0][0].len();
            let n = ev.views.len() as f64;
            let mut mean = vec![0.0; d];
            for vs in &ev.views {
                for (z, w) in vs.iter().zip(&ev.weights) {
                    for k in 0..d {
                        mean[k] += w * z[k] / n;
                    }
                }
            }
            let l2 = dot(&mean, &mean);
            LossBreakdown {
                total: l1 + lambda * l2,
                l1,
                l2,
                kind: LossKind::Simple,
                lambda: Some(lambda),
            }
        }
    })
}

/// Evaluates a trained encoder. Standardized encoders must already carry
/// frozen population statistics.
pub fn measure(
    model: &EncoderModel,
    ds: &Dataset,
    a: &AugmentationSet,
    loss: &LossSpec,
) -> Result<Measurements, auglab_core::Error> {
    let r = model
        .radius()
        .ok_or_else(|| auglab_core::Error::InvalidConfig("encoder has no output norm".into()))?;
    let ev = embed_views(model, ds, a, ViewAveraging::Enumerate)?;
    let stats = ClassStats::new(centers_from_views(&ev)?, ds.priors.clone(), r);
    let xs: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.features.clone()).collect();
    let predictions: Vec<usize> = model.embed(&xs)?.iter().map(|z| nn_classify(&stats, z)).collect();
    let err = error_from_predictions(ds, &predictions);
    let profile = SpreadProfile::from_views(&ev);
    let (deviation_first, deviation_second) = deviation_moments(&ev, &stats.centers);
    let population_loss = population_loss(&ev, loss, r)?;
    let probe: Vec<Vec<f64>> = ds.samples.iter().flat_map(|s| view_vectors(&s.features, a)).collect();
    let cert = model.lipschitz_upper_bound(&probe)?;
    Ok(Measurements {
        stats,
        predictions,
        err,
        profile,
        deviation_first,
        deviation_second,
        population_loss,
        lipschitz: cert.l,
        lipschitz_probe_only: cert.probe_only,
    })
}

/// Bound inputs for one concentration estimate and one `epsilon`.
pub fn bound_inputs(
    model: &EncoderModel,
    a: &AugmentationSet,
    meas: &Measurements,
    est: &ConcentrationEstimate,
    epsilon: f64,
) -> BoundInputs {
    BoundInputs {
        sigma: est.sigma,
        delta: est.delta,
        epsilon,
        r_eps: meas.profile.r_eps(epsilon),
        l_pos: meas.profile.l_pos(),
        lipschitz: meas.lipschitz,
        r: meas.stats.r,
        d: model.output_dim(),
        m: a.m(),
        n: a.n(),
        big_m: a.lipschitz_m(),
        priors: meas.stats.priors.clone(),
        loss_kind: meas.population_loss.kind,
        l1: meas.population_loss.l1,
        l2: meas.population_loss.l2,
        lambda: meas.population_loss.lambda,
        centers: meas.stats.centers.clone(),
        delta_mu: meas.stats.delta_mu,
        fixed_norm: matches!(model.norm_mode, NormMode::Sphere { .. }),
        lipschitz_probe_only: meas.lipschitz_probe_only,
    }
}

pub fn report_for(
    ds: &Dataset,
    model: &EncoderModel,
    a: &AugmentationSet,
    meas: &Measurements,
    est: &ConcentrationEstimate,
    epsilon: f64,
) -> Result<BoundReport, auglab_core::Error> {
    let inputs = bound_inputs(model, a, meas, est, epsilon);
    let empirical = Empirical {
        err: Some(meas.err),
        deviation_first: Some(meas.deviation_first.clone()),
        deviation_second: Some(meas.deviation_second.clone()),
        main_part_accuracy: main_part_accuracy(ds, &meas.predictions, &est.main_parts, &meas.profile.in_s(epsilon)),
    };
    full_report(&inputs, &empirical)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRecord {
    pub delta: f64,
    pub epsilon: f64,
    pub report: BoundReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dataset: Dataset,
    pub augmentation: AugmentationSet,
    pub model: EncoderModel,
    pub trace: Vec<TraceRow>,
    pub estimates: Vec<ConcentrationEstimate>,
    pub measurements: Measurements,
    pub reports: Vec<ReportRecord>,
}

/// Last pipeline stage a subcommand runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    Data,
    Concentration,
    Train,
    Evaluate,
    Bounds,
}

/// Results of a pipeline that stopped at some [`Target`]. Fields of stages
/// that did not run are `None` or empty.
#[derive(Debug, Clone, Default)]
pub struct PartialOutcome {
    pub dataset: Option<Dataset>,
    pub augmentation: Option<AugmentationSet>,
    pub model: Option<EncoderModel>,
    pub trace: Vec<TraceRow>,
    pub estimates: Vec<ConcentrationEstimate>,
    pub measurements: Option<Measurements>,
    pub reports: Vec<ReportRecord>,
}

fn write(path: &Path, text: &str, stage: &'static str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::stage(stage, e.into()))
}

fn record_failure(dir: &Path, err: &CliError) {
    if let CliError::Stage { stage, source } = err {
        let _ = std::fs::write(dir.join("failure.txt"), format!("stage: {stage}\nerror: {source}\n"));
    }
}

pub fn resolve_mode(cfg: &ExperimentConfig, ds: &Dataset) -> CliqueMode {
    cfg.clique_mode.unwrap_or_else(|| CliqueMode::default_for(ds))
}

/// Runs every stage. On a stage failure, `failure.txt` names the stage and
/// the artifacts written so far stay on disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, CliError> {
    let p = run_until(cfg, Target::Bounds, None)?;
    Ok(ExperimentOutcome {
        dataset: p.dataset.expect("data stage ran"),
        augmentation: p.augmentation.expect("augmentation stage ran"),
        model: p.model.expect("train stage ran"),
        trace: p.trace,
        estimates: p.estimates,
        measurements: p.measurements.expect("evaluate stage ran"),
        reports: p.reports,
    })
}

/// Runs the stages needed for `target`. A `model` checkpoint path skips
/// training and loads the encoder instead.
pub fn run_until(cfg: &ExperimentConfig, target: Target, model: Option<&Path>) -> Result<PartialOutcome, CliError> {
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let out = run_stages(cfg, &dir, target, model);
    if let Err(e) = &out {
        record_failure(&dir, e);
    }
    out
}

fn run_stages(
    cfg: &ExperimentConfig,
    dir: &Path,
    target: Target,
    checkpoint: Option<&Path>,
) -> Result<PartialOutcome, CliError> {
    let mut out = PartialOutcome::default();
    let ds = cfg.load_dataset()?;
    save_dataset(&ds, &dir.join("dataset.csv"), DatasetFormat::Csv).map_err(|e| CliError::stage("data", e))?;
    out.dataset = Some(ds.clone());
    if target == Target::Data {
        return Ok(out);
    }

    let a = cfg.augmentation.build(&ds)?;
    let json = serde_json::to_string_pretty(&a).expect("augmentation sets serialize");
    write(&dir.join("augmentation.json"), &json, "augmentation")?;
    out.augmentation = Some(a.clone());

    if target == Target::Concentration || target == Target::Bounds {
        let mode = resolve_mode(cfg, &ds);
        let estimates =
            sigma_delta_curve(&ds, &a, &cfg.delta_grid, mode).map_err(|e| CliError::stage("concentration", e))?;
        // The other solver is reported alongside when exact search is affordable.
        let mut table = estimates.clone();
        if CliqueMode::default_for(&ds) == CliqueMode::Exact {
            let other = match mode {
                CliqueMode::Exact => CliqueMode::DualApprox,
                CliqueMode::DualApprox => CliqueMode::Exact,
            };
            table.extend(
                sigma_delta_curve(&ds, &a, &cfg.delta_grid, other).map_err(|e| CliError::stage("concentration", e))?,
            );
        }
        write(&dir.join("concentration.csv"), &concentration_csv(&table), "concentration")?;
        let fingerprint = a.fingerprint();
        for (i, est) in estimates.iter().enumerate() {
            est.save_record(&dir.join(format!("concentration_{i}.csv")), &fingerprint)
                .map_err(|e| CliError::stage("concentration", e))?;
        }
        out.estimates = estimates;
    }
    if target == Target::Concentration {
        return Ok(out);
    }

    let train_cfg = cfg.train_config();
    let model = match checkpoint {
        Some(path) => EncoderModel::load_checkpoint(path).map_err(|e| CliError::stage("train", e))?,
        None => {
            let init = cfg.encoder.build(ds.input_dim, &train_cfg.loss, cfg.init_seed())?;
            let (mut model, trace) = train(&init, &ds, &a, &train_cfg).map_err(|e| CliError::stage("train", e))?;
            write_trace(&trace, &dir.join("trace.csv")).map_err(|e| CliError::stage("train", e))?;
            if model.norm_mode == NormMode::BatchStandardized {
                freeze_population_standardizer(&mut model, &ds, &a).map_err(|e| CliError::stage("train", e))?;
            }
            model
                .save_checkpoint(&dir.join("model.bin"))
                .map_err(|e| CliError::stage("train", e))?;
            out.trace = trace;
            model
        }
    };
    out.model = Some(model.clone());
    if target == Target::Train {
        return Ok(out);
    }

    let meas = measure(&model, &ds, &a, &train_cfg.loss).map_err(|e| CliError::stage("evaluate", e))?;
    write(&dir.join("eval.csv"), &eval_csv(&meas, &cfg.epsilon_grid), "evaluate")?;
    out.measurements = Some(meas.clone());
    if target == Target::Evaluate {
        return Ok(out);
    }

    for est in &out.estimates {
        for &epsilon in &cfg.epsilon_grid {
            let report = report_for(&ds, &model, &a, &meas, est, epsilon).map_err(|e| CliError::stage("bounds", e))?;
            out.reports.push(ReportRecord {
                delta: est.delta,
                epsilon,
                report,
            });
        }
    }
    write(&dir.join("bounds.csv"), &bounds_csv(&out.reports), "bounds")?;
    let json = serde_json::to_string_pretty(&out.reports)
        .map_err(|e| CliError::stage("bounds", auglab_core::Error::Schema(e.to_string())))?;
    write(&dir.join("bounds.json"), &json, "bounds")?;
    Ok(out)
}

pub fn concentration_csv(estimates: &[ConcentrationEstimate]) -> String {
    let mut s = String::from("delta,sigma,mode\n");
    for e in estimates {
        let _ = writeln!(s, "{},{},{}", e.delta, e.sigma, e.mode.as_str());
    }
    s
}

pub fn eval_csv(meas: &Measurements, epsilons: &[f64]) -> String {
    let mut s = String::from("metric,value\n");
    let _ = writeln!(s, "err,{}", meas.err);
    let _ = writeln!(s, "l_pos,{}", meas.profile.l_pos());
    let _ = writeln!(s, "delta_mu,{}", meas.stats.delta_mu);
    for (i, &eps) in epsilons.iter().enumerate() {
        let _ = writeln!(s, "epsilon.{i},{eps}");
        let _ = writeln!(s, "r_eps.{i},{}", meas.profile.r_eps(eps));
    }
    for (k, n) in meas.stats.center_norms().iter().enumerate() {
        let _ = writeln!(s, "center_norm.{k},{n}");
    }
    let _ = writeln!(s, "population.l1,{}", meas.population_loss.l1);
    let _ = writeln!(s, "population.l2,{}", meas.population_loss.l2);
    let _ = writeln!(s, "population.total,{}", meas.population_loss.total);
    let _ = writeln!(s, "lipschitz,{}", meas.lipschitz);
    s
}

pub fn bounds_csv(reports: &[ReportRecord]) -> String {
    let mut s = String::from("delta,epsilon,key,value\n");
    for r in reports {
        for (k, v) in r.report.entries() {
            let _ = writeln!(s, "{},{},{k},{v}", r.delta, r.epsilon);
        }
    }
    s
}
