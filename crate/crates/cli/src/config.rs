//! Pipeline configuration, read from a TOML document.
//!
//! Every random choice is driven by the single top-level `seed` (or the
//! `--seed` flag); section tables may not carry their own seeds.

use std::collections::BTreeSet;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use tcav_core::cav::CavTrainConfig;
use tcav_core::concepts::{Color, SplitRatios, TextureKind};
use tcav_core::model::TrainConfig;
use tcav_core::rng::{derive_seed, fnv1a64};
use tcav_core::tcav::ExperimentConfig;
use tcav_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub output_dir: PathBuf,
    /// Labeled dataset, one subdirectory per class.
    pub data_dir: Option<PathBuf>,
    pub concepts_dir: Option<PathBuf>,
    pub pools_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            data_dir: None,
            concepts_dir: None,
            pools_dir: None,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Healthy vs lesioned synthetic leaves, written by `generate-concepts`.
    SyntheticLeaves,
    /// An existing directory tree at `paths.data_dir`.
    Directory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    pub per_class: usize,
    /// Height and width of generated images.
    pub image_size: [usize; 2],
    pub split: SplitRatios,
    /// Which split supplies the class inputs scored by TCAV.
    pub class_inputs: SplitChoice,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DatasetSource::SyntheticLeaves,
            per_class: 250,
            image_size: [32, 32],
            split: SplitRatios::default(),
            class_inputs: SplitChoice::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptKind {
    Color,
    Texture,
    DiseasePattern,
    /// Images already present under `<concepts_dir>/<name>`.
    Directory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptSpec {
    pub name: String,
    pub kind: ConceptKind,
    #[serde(default = "default_concept_count")]
    pub count: usize,
    /// Name of the negative pool this concept is contrasted with.
    pub pool: String,
}

fn default_concept_count() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    /// Grayscale lesioned leaves; free of every color concept.
    GrayscaleLesioned,
    /// Healthy leaves; free of textures and lesion patterns.
    Healthy,
    /// Images already present under `<pools_dir>/<name>`.
    Directory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub name: String,
    pub kind: PoolKind,
    #[serde(default = "default_pool_count")]
    pub count: usize,
    /// Concepts guaranteed absent from the pool; defaults by kind.
    #[serde(default)]
    pub excludes: Option<Vec<String>>,
}

fn default_pool_count() -> usize {
    300
}

impl PoolSpec {
    pub fn exclusion_tags(&self) -> Vec<String> {
        if let Some(tags) = &self.excludes {
            return tags.clone();
        }
        match self.kind {
            PoolKind::GrayscaleLesioned => {
                Color::ALL.iter().map(|c| c.name().to_string()).collect()
            }
            PoolKind::Healthy => TextureKind::ALL
                .iter()
                .map(|k| k.name().to_string())
                .chain(["late_blight_pattern".to_string()])
                .collect(),
            PoolKind::Directory => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub emit_csv: bool,
    pub emit_svg: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            emit_csv: true,
            emit_svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumpConfig {
    /// Layers to dump; empty means the experiment layers.
    pub layers: Vec<String>,
    pub split: SplitChoice,
    /// Append one gradient block per class.
    pub gradients: bool,
}

impl Default for DumpConfig {
    fn default() -> Self {
        Self {
            layers: Vec::new(),
            split: SplitChoice::All,
            gradients: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub paths: PathsConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentConfig,
    pub cav: CavTrainConfig,
    pub concepts: Vec<ConceptSpec>,
    pub pools: Vec<PoolSpec>,
    pub report: ReportConfig,
    pub dump: DumpConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            paths: PathsConfig::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            experiment: ExperimentConfig {
                layers: vec!["dense1".into()],
                class_k: 1,
                ..ExperimentConfig::default()
            },
            cav: CavTrainConfig::default(),
            concepts: Color::ALL
                .iter()
                .map(|c| ConceptSpec {
                    name: c.name().into(),
                    kind: ConceptKind::Color,
                    count: default_concept_count(),
                    pool: "grayscale".into(),
                })
                .collect(),
            pools: vec![PoolSpec {
                name: "grayscale".into(),
                kind: PoolKind::GrayscaleLesioned,
                count: default_pool_count(),
                excludes: None,
            }],
            report: ReportConfig::default(),
            dump: DumpConfig::default(),
        }
    }
}

/// Seed streams for the pipeline stages.
mod stream {
    pub const DATASET: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const INIT: u64 = 4;
    pub const CONCEPT: u64 = 5;
    pub const POOL: u64 = 6;
    pub const EXPERIMENT: u64 = 7;
    pub const CAV: u64 = 8;
}

/// A validated configuration with absolute paths and derived seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: PipelineConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data_dir: PathBuf,
    pub concepts_dir: PathBuf,
    pub pools_dir: PathBuf,
    pub checkpoint: PathBuf,
}

impl Resolved {
    pub fn dataset_seed(&self) -> u64 {
        derive_seed(self.seed, stream::DATASET, 0)
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, stream::SPLIT, 0)
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, stream::INIT, 0)
    }

    pub fn concept_seed(&self, name: &str) -> u64 {
        derive_seed(self.seed, stream::CONCEPT, fnv1a64([name.as_bytes()]))
    }

    pub fn pool_seed(&self, name: &str) -> u64 {
        derive_seed(self.seed, stream::POOL, fnv1a64([name.as_bytes()]))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, stream::TRAIN, 0),
            ..self.config.train.clone()
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            seed: derive_seed(self.seed, stream::EXPERIMENT, 0),
            ..self.config.experiment.clone()
        }
    }

    pub fn cav_config(&self) -> CavTrainConfig {
        CavTrainConfig {
            seed: derive_seed(self.seed, stream::CAV, 0),
            ..self.config.cav
        }
    }

    pub fn image_size(&self) -> (usize, usize) {
        let [h, w] = self.config.dataset.image_size;
        (h, w)
    }

    pub fn results_path(&self) -> PathBuf {
        self.output_dir.join("tcav_results.json")
    }
}

const SECTIONS_WITHOUT_SEEDS: [&str; 3] = ["train", "experiment", "cav"];

/// Parses a TOML document. Section-level `seed` keys are rejected so that
/// the top-level seed stays the single source of randomness.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
    for section in SECTIONS_WITHOUT_SEEDS {
        if table.get(section).and_then(|v| v.get("seed")).is_some() {
            return Err(Error::InvalidConfig(format!(
                "`{section}.seed` is not allowed; set the top-level `seed` instead"
            )));
        }
    }
    PipelineConfig::deserialize(table).map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// `p` resolved against `base`, with `.` and `..` removed lexically.
fn absolute(base: &Path, p: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for part in base.join(p).components() {
        match part {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    out
}

/// Loads (or defaults) the configuration and applies command-line
/// overrides. Relative paths in a file resolve against the file's
/// directory; `--out` resolves against the working directory.
pub fn resolve(
    config_path: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<Resolved> {
    let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
    let (config, base) = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => {
                    Error::InvalidConfig(format!("config file `{}` not found", path.display()))
                }
                _ => Error::io(path, e),
            })?;
            let dir = absolute(&cwd, path.parent().unwrap_or(Path::new("")));
            (parse_config(&text)?, dir)
        }
        None => (PipelineConfig::default(), cwd.clone()),
    };
    let seed = seed.or(config.seed).ok_or_else(|| {
        Error::InvalidConfig("no seed: set `seed` in the config or pass --seed".into())
    })?;
    let output_dir = match out {
        Some(o) => absolute(&cwd, o),
        None => absolute(&base, &config.paths.output_dir),
    };
    let under_out = |p: &Option<PathBuf>, default: &str| match p {
        Some(p) => absolute(&base, p),
        None => output_dir.join(default),
    };
    let resolved = Resolved {
        data_dir: under_out(&config.paths.data_dir, "data"),
        concepts_dir: under_out(&config.paths.concepts_dir, "concepts"),
        pools_dir: under_out(&config.paths.pools_dir, "pools"),
        checkpoint: under_out(&config.paths.checkpoint, "model.cvkm"),
        output_dir,
        seed,
        config,
    };
    validate(&resolved.config)?;
    Ok(resolved)
}

fn validate(cfg: &PipelineConfig) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidConfig(msg));
    cfg.train.validate()?;
    cfg.cav.validate()?;
    cfg.dataset.split.validate()?;
    let [h, w] = cfg.dataset.image_size;
    if h < 5 || w < 5 {
        return bad(format!(
            "image_size {h}x{w} is too small for the reference model (min 5x5)"
        ));
    }
    if cfg.dataset.per_class == 0 {
        return bad("dataset.per_class must be positive".into());
    }
    let mut names = BTreeSet::new();
    for c in &cfg.concepts {
        if !names.insert(c.name.as_str()) {
            return bad(format!("concept `{}` listed twice", c.name));
        }
        if c.count == 0 {
            return bad(format!("concept `{}` has count 0", c.name));
        }
        match c.kind {
            ConceptKind::Color => {
                c.name.parse::<Color>()?;
            }
            ConceptKind::Texture => {
                c.name.parse::<TextureKind>()?;
            }
            ConceptKind::DiseasePattern | ConceptKind::Directory => {}
        }
        let Some(pool) = cfg.pools.iter().find(|p| p.name == c.pool) else {
            return bad(format!(
                "concept `{}` refers to unknown pool `{}`",
                c.name, c.pool
            ));
        };
        if !pool.exclusion_tags().contains(&c.name) {
            return bad(format!(
                "pool `{}` does not guarantee the absence of concept `{}`",
                pool.name, c.name
            ));
        }
    }
    let mut pools = BTreeSet::new();
    for p in &cfg.pools {
        if !pools.insert(p.name.as_str()) {
            return bad(format!("pool `{}` listed twice", p.name));
        }
        if p.count == 0 {
            return bad(format!("pool `{}` has count 0", p.name));
        }
    }
    for name in &cfg.experiment.concepts {
        if !names.contains(name.as_str()) {
            return bad(format!("experiment concept `{name}` is not in the roster"));
        }
    }
    Ok(())
}
