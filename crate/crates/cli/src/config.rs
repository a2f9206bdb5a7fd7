//! Run configuration file (TOML).
//!
//! ```toml
//! corpus_dir = "transcripts"
//! labels_file = "labels.csv"
//! output_dir = "runs/first"
//! cache_file = "cache/responses.ndjson"
//! workers = 4
//!
//! [[models]]
//! provider = "openai-compatible"
//! model_name = "gpt-4o"
//! requests_per_minute = 300
//!
//! [consensus]
//! n_samples = 5
//! temperature = 0.7
//!
//! [stats]
//! n_resamples = 10000
//! seed = 42
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tutor_moves::report::StatsConfig;
use tutor_moves::{
    ConsensusConfig, Error, ModelConfig, Result, DEFAULT_MAX_BYTES, DEFAULT_MIN_BYTES,
};

fn default_min_bytes() -> u64 {
    DEFAULT_MIN_BYTES
}

fn default_max_bytes() -> u64 {
    DEFAULT_MAX_BYTES
}

fn default_workers() -> usize {
    4
}

fn default_samples_in_flight() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_dir: PathBuf,
    #[serde(default)]
    pub labels_file: Option<PathBuf>,
    /// Bundled praise and errors skills when absent.
    #[serde(default)]
    pub skills_manifest: Option<PathBuf>,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub consensus: ConsensusConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    #[serde(default)]
    pub cache_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_min_bytes")]
    pub min_bytes: u64,
    #[serde(default = "default_max_bytes")]
    pub max_bytes: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_samples_in_flight")]
    pub samples_in_flight: usize,
}

impl RunConfig {
    /// A config with defaults for everything but the two required paths.
    pub fn new(corpus_dir: PathBuf, output_dir: PathBuf) -> Self {
        RunConfig {
            corpus_dir,
            labels_file: None,
            skills_manifest: None,
            models: Vec::new(),
            consensus: ConsensusConfig::default(),
            stats: StatsConfig::default(),
            cache_file: None,
            output_dir,
            min_bytes: DEFAULT_MIN_BYTES,
            max_bytes: DEFAULT_MAX_BYTES,
            workers: default_workers(),
            samples_in_flight: default_samples_in_flight(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_dir);
        fix(&mut self.output_dir);
        for p in [
            &mut self.labels_file,
            &mut self.skills_manifest,
            &mut self.cache_file,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for m in &mut self.models {
            if let Some(p) = &mut m.fixtures {
                fix(p);
            }
        }
    }

    /// Checks that every input path exists and the models are usable.
    pub fn validate(&self) -> Result<()> {
        let must_exist = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{what} {} does not exist",
                    p.display()
                )))
            }
        };
        must_exist("corpus_dir", &self.corpus_dir)?;
        if let Some(p) = &self.labels_file {
            must_exist("labels_file", p)?;
        }
        if let Some(p) = &self.skills_manifest {
            must_exist("skills_manifest", p)?;
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models configured".into()));
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.models {
            m.validate()?;
            if !names.insert(m.model_name.as_str()) {
                return Err(Error::Config(format!(
                    "model `{}` is listed twice",
                    m.model_name
                )));
            }
            if let Some(p) = &m.fixtures {
                must_exist("fixtures", p)?;
            }
        }
        if self.min_bytes > self.max_bytes {
            return Err(Error::Config(format!(
                "min_bytes {} exceeds max_bytes {}",
                self.min_bytes, self.max_bytes
            )));
        }
        if self.workers == 0 || self.samples_in_flight == 0 {
            return Err(Error::Config(
                "workers and samples_in_flight must be positive".into(),
            ));
        }
        Ok(())
    }
}
