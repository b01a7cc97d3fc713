//! Experiment files.
//!
//! TOML with optional global keys and one `[[experiment]]` table per block.
//! Every table rejects unknown keys, so a typo such as `epochz` fails the
//! parse with the key and its line in the message.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use otmap::eval::default_eval_samples;
use otmap::{Estimator, ExperimentConfig, IcnnArch, MapKind, Profile, SourceKind};
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Used when `--out` is not given.
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub profile: Option<Profile>,
    /// Write measured wall times; when false the column is zero and output
    /// files depend only on the configuration.
    #[serde(default = "yes")]
    pub record_timing: bool,
    #[serde(rename = "experiment", default)]
    pub experiments: Vec<BlockSpec>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub name: Option<String>,
    pub dim: usize,
    pub source: SourceKind,
    pub map: MapKind,
    pub estimator: Estimator,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub repetitions: Option<usize>,
    pub eval_samples: Option<usize>,
    pub base_seed: Option<u64>,
    pub profile: Option<Profile>,
    pub fail_fast: Option<bool>,
    #[serde(default)]
    pub arch: ArchOverrides,
    #[serde(default)]
    pub train: TrainOverrides,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchOverrides {
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub activation_alpha: Option<f64>,
}

/// Adjustments on top of the profile's training settings.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_x: Option<usize>,
    pub batch_y: Option<usize>,
    pub conjugate_steps: Option<usize>,
    pub conjugate_step_size: Option<f64>,
    pub learning_rate: Option<f64>,
    pub warm_start: Option<bool>,
}

/// A block resolved into a library config.
#[derive(Debug, Clone)]
pub struct Block {
    pub index: usize,
    pub label: String,
    pub config: ExperimentConfig,
}

impl Block {
    /// First 16 hex digits of SHA-256 over the resolved config's JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.config).expect("configs serialize");
        Sha256::digest(&json)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `<estimator>_<source>_<map>_d<dim>_n<n>_N<N>_<hash>`.
    pub fn file_stem(&self) -> String {
        let c = &self.config;
        format!(
            "{}_{}_{}_d{}_n{}_N{}_{}",
            c.estimator.name(),
            c.source.name(),
            c.map.name(),
            c.dim,
            c.n,
            c.big_n,
            self.hash()
        )
    }
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text)?;
        if file.experiments.is_empty() {
            bail!("config has no [[experiment]] blocks");
        }
        if file.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(file)
    }

    /// Resolves every block; a profile given on the command line wins over
    /// block and global settings.
    pub fn blocks(&self, profile_override: Option<Profile>) -> Result<Vec<Block>> {
        self.experiments
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let label = block_label(i, spec.name.as_deref());
                let profile = profile_override.or(spec.profile).or(self.profile).unwrap_or(Profile::Paper);
                let config = resolve(spec, profile).with_context(|| format!("invalid {label}"))?;
                Ok(Block {
                    index: i,
                    label,
                    config,
                })
            })
            .collect()
    }
}

pub fn block_label(index: usize, name: Option<&str>) -> String {
    match name {
        Some(n) => format!("experiment block {} (`{n}`)", index + 1),
        None => format!("experiment block {}", index + 1),
    }
}

fn resolve(spec: &BlockSpec, profile: Profile) -> Result<ExperimentConfig> {
    let defaults = IcnnArch::paper_default(spec.dim.max(1))?;
    let arch = IcnnArch::new(
        spec.dim,
        spec.arch.depth.unwrap_or(defaults.depth()),
        spec.arch.width.unwrap_or(defaults.width()),
        spec.arch.activation_alpha.unwrap_or(defaults.activation_alpha()),
    )?;
    let mut train = profile.train_config(spec.estimator);
    let t = &spec.train;
    if let Some(v) = t.epochs {
        train.epochs = v;
    }
    if let Some(v) = t.batch_x {
        train.batch_x = v;
    }
    if let Some(v) = t.batch_y {
        train.batch_y = v;
    }
    if let Some(v) = t.conjugate_steps {
        train.conjugate.steps = v;
    }
    if let Some(v) = t.conjugate_step_size {
        train.conjugate.step_size = v;
    }
    if let Some(v) = t.learning_rate {
        train.adam.learning_rate = v;
    }
    if let Some(v) = t.warm_start {
        train.warm_start = v;
    }
    let cfg = ExperimentConfig {
        dim: spec.dim,
        source: spec.source,
        map: spec.map,
        estimator: spec.estimator,
        n: spec.n,
        big_n: spec.big_n,
        repetitions: spec.repetitions.unwrap_or(20),
        eval_samples: spec.eval_samples.unwrap_or_else(|| default_eval_samples(spec.dim)),
        base_seed: spec.base_seed.unwrap_or(0),
        profile,
        arch,
        train,
        fail_fast: spec.fail_fast.unwrap_or(true),
    };
    cfg.validate()?;
    Ok(cfg)
}
