//! Declarative experiment configuration read from TOML.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/demo"
//! epsilon_grid = [0.1, 0.25, 0.5]
//! delta_grid = [0.5, 1.0]
//! clique_mode = "exact"            # optional; exact when every class fits the budget
//!
//! [dataset]                        # either `path = "data.csv"` or generator fields
//! num_classes = 2
//! samples_per_class = 24
//! centers = [[3.0, 0.0], [-3.0, 0.0]]
//! spread = 0.4
//! manifold = { kind = "gaussian_blobs" }
//!
//! [augmentation]
//! discrete = [{ name = "swap", rule = "coordinate_permutation", perm = [1, 0] }]
//! continuous = [{ name = "shift", rule = "additive_shift", direction = [0.2, 0.2] }]
//! grid_resolution = 3
//!
//! [encoder]
//! hidden = [16]
//! output_dim = 4
//!
//! [train]
//! loss = { kind = "info_nce" }
//! steps = 1500
//! batch_size = 32
//! learning_rate = 0.5
//!
//! [sweep]                          # only read by the `sweep` subcommand
//! kind = "richness"
//! levels = [[], ["swap"]]          # discrete member names per level
//! ```

use std::path::{Path, PathBuf};

use auglab_core::augment::{AugmentationSet, Transform, TransformRule};
use auglab_core::concentration::CliqueMode;
use auglab_core::data::{load_dataset, Dataset, DatasetFormat, GeneratorConfig};
use auglab_core::encoder::{Activation, EncoderModel, NormMode, TrainConfig};
use auglab_core::losses::LossSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    File { path: PathBuf },
    Generate(GeneratorSpec),
}

/// Generator fields with an optional seed; the experiment seed fills it in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub fields: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec {
    #[serde(default)]
    pub discrete: Vec<Transform>,
    #[serde(default)]
    pub continuous: Vec<Transform>,
    #[serde(default = "default_grid")]
    pub grid_resolution: usize,
    /// Defaults to the largest input norm of the dataset.
    pub domain_radius: Option<f64>,
}

fn default_grid() -> usize {
    3
}

impl AugmentationSpec {
    pub fn build(&self, ds: &Dataset) -> Result<AugmentationSet, CliError> {
        let radius = self.domain_radius.unwrap_or_else(|| ds.max_norm());
        let set = AugmentationSet::new(
            self.discrete.clone(),
            self.continuous.clone(),
            self.grid_resolution,
            radius,
        )
        .map_err(CliError::config)?;
        set.validate_for_dim(ds.input_dim).map_err(CliError::config)?;
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Output radius for the simple contrastive loss.
    #[serde(default = "default_radius")]
    pub radius: f64,
    pub init_seed: Option<u64>,
}

fn default_hidden() -> Vec<usize> {
    vec![16]
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_radius() -> f64 {
    1.0
}

impl EncoderSpec {
    /// Hidden layers use the configured activation, the output layer is linear.
    /// The output normalization follows the loss.
    pub fn build(&self, input_dim: usize, loss: &LossSpec, seed: u64) -> Result<EncoderModel, CliError> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        let mut acts = vec![self.activation; self.hidden.len()];
        acts.push(Activation::Identity);
        let norm = match loss {
            LossSpec::InfoNce => NormMode::Sphere { r: 1.0 },
            LossSpec::Simple { .. } => NormMode::Sphere { r: self.radius },
            LossSpec::CrossCorr { .. } => NormMode::BatchStandardized,
        };
        EncoderModel::random(&dims, &acts, norm, self.init_seed.unwrap_or(seed)).map_err(CliError::config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub loss: LossSpec,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Nested discrete sets, listed by member name.
    Richness,
    /// Multipliers applied to every continuous member's amplitude.
    Strength,
    /// Every 2-subset of the configured discrete members.
    Pairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    /// Richness: member names per level. Strength: one multiplier per level.
    /// Pairs: ignored.
    #[serde(default)]
    pub levels: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub epsilon_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub clique_mode: Option<CliqueMode>,
    pub dataset: DatasetSource,
    pub augmentation: AugmentationSpec,
    pub encoder: EncoderSpec,
    pub train: TrainSpec,
    pub sweep: Option<SweepSpec>,
}

/// Offsets that derive per-stage seeds from the experiment seed.
const DATA_SEED_OFFSET: u64 = 0;
const INIT_SEED_OFFSET: u64 = 1;
const TRAIN_SEED_OFFSET: u64 = 2;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative dataset paths resolve against the config file.
        if let DatasetSource::File { path: p } = &mut cfg.dataset {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.epsilon_grid.is_empty() || self.epsilon_grid.iter().any(|&e| !(e > 0.0)) {
            return Err(CliError::Config("epsilon_grid must be nonempty and positive".into()));
        }
        if self.delta_grid.is_empty() || self.delta_grid.iter().any(|&d| !(d > 0.0)) {
            return Err(CliError::Config("delta_grid must be nonempty and positive".into()));
        }
        if self.delta_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("delta_grid must be strictly ascending".into()));
        }
        self.train_config().validate().map_err(CliError::config)?;
        Ok(())
    }

    /// Replaces the experiment seed and drops explicit per-stage seeds so
    /// that every stage derives from the new one.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = None;
        self.encoder.init_seed = None;
        if let DatasetSource::Generate(g) = &mut self.dataset {
            g.fields.remove("seed");
        }
    }

    pub fn generator(&self) -> Option<Result<GeneratorConfig, CliError>> {
        match &self.dataset {
            DatasetSource::File { .. } => None,
            DatasetSource::Generate(g) => {
                let mut fields = g.fields.clone();
                fields
                    .entry("seed")
                    .or_insert(toml::Value::Integer(self.seed.wrapping_add(DATA_SEED_OFFSET) as i64));
                Some(
                    toml::Value::Table(fields)
                        .try_into::<GeneratorConfig>()
                        .map_err(|e| CliError::Config(format!("dataset: {e}"))),
                )
            }
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset, CliError> {
        match self.generator() {
            Some(g) => auglab_core::data::generate_dataset(&g?).map_err(CliError::config),
            None => {
                let DatasetSource::File { path } = &self.dataset else {
                    unreachable!()
                };
                load_dataset(path, DatasetFormat::from_path(path)).map_err(|e| CliError::stage("data", e))
            }
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.train.loss,
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            seed: self.train.seed.unwrap_or(self.seed.wrapping_add(TRAIN_SEED_OFFSET)),
        }
    }

    pub fn init_seed(&self) -> u64 {
        self.encoder
            .init_seed
            .unwrap_or(self.seed.wrapping_add(INIT_SEED_OFFSET))
    }
}

/// Multiplies the amplitude of a continuous rule by `s`.
pub fn scale_rule(rule: &TransformRule, s: f64) -> TransformRule {
    match rule {
        TransformRule::AdditiveShift { direction } => TransformRule::AdditiveShift {
            direction: direction.iter().map(|v| v * s).collect(),
        },
        TransformRule::Rotation2dSubspace { axes, max_angle } => TransformRule::Rotation2dSubspace {
            axes: *axes,
            max_angle: max_angle * s,
        },
        TransformRule::Scale { max_factor } => TransformRule::Scale {
            max_factor: 1.0 + (max_factor - 1.0) * s,
        },
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
output_dir = "out"
epsilon_grid = [0.1, 0.2]
delta_grid = [0.5]

[dataset]
num_classes = 2
samples_per_class = 4
centers = [[2.0, 0.0], [-2.0, 0.0]]
spread = 0.2
manifold = { kind = "gaussian_blobs" }

[augmentation]
discrete = [{ name = "swap", rule = "coordinate_permutation", perm = [1, 0] }]

[encoder]
output_dim = 2

[train]
loss = { kind = "info_nce" }
steps = 10
batch_size = 4
learning_rate = 0.1
"#;

    #[test]
    fn minimal_config_parses_and_derives_seeds() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.generator().unwrap().unwrap().seed, 3);
        assert_eq!(cfg.train_config().seed, 5);
        assert_eq!(cfg.init_seed(), 4);
        let ds = cfg.load_dataset().unwrap();
        let a = cfg.augmentation.build(&ds).unwrap();
        assert_eq!(a.m(), 2);
        assert_eq!(a.domain_radius, ds.max_norm());
    }

    #[test]
    fn invalid_grids_are_config_errors() {
        let bad = MINIMAL.replace("delta_grid = [0.5]", "delta_grid = [1.0, 0.5]");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(CliError::Config(_))));
        let bad = MINIMAL.replace("epsilon_grid = [0.1, 0.2]", "epsilon_grid = []");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(CliError::Config(_))));
        let bad = MINIMAL.replace("batch_size = 4", "batch_size = 1");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(CliError::Config(_))));
    }

    #[test]
    fn reseeding_overrides_explicit_seeds() {
        let text = MINIMAL.replace("learning_rate = 0.1", "learning_rate = 0.1\nseed = 99");
        let mut cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.train_config().seed, 99);
        cfg.reseed(10);
        assert_eq!(cfg.train_config().seed, 12);
    }

    #[test]
    fn strength_scaling() {
        let r = scale_rule(&TransformRule::Scale { max_factor: 1.5 }, 2.0);
        assert_eq!(r, TransformRule::Scale { max_factor: 2.0 });
        let r = scale_rule(
            &TransformRule::AdditiveShift {
                direction: vec![0.5, -1.0],
            },
            0.5,
        );
        assert_eq!(
            r,
            TransformRule::AdditiveShift {
                direction: vec![0.25, -0.5]
            }
        );
    }
}
