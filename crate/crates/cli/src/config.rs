//! Run configuration read from TOML. Relative paths resolve against the
//! directory holding the config file.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use radsim_core::embedding::CombineMode;
use radsim_core::harness::DifferenceMode;
use radsim_core::lexical::{BleuConfig, Smoothing};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChatKind {
    #[default]
    Mock,
    Http,
}

impl FromStr for ChatKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(ChatKind::Mock),
            "http" => Ok(ChatKind::Http),
            other => Err(format!(
                "unknown chat provider `{other}` (expected mock or http)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Hashed,
    Http,
    File,
}

impl FromStr for EmbedderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hashed" => Ok(EmbedderKind::Hashed),
            "http" => Ok(EmbedderKind::Http),
            "file" => Ok(EmbedderKind::File),
            other => Err(format!(
                "unknown embedder `{other}` (expected hashed, http or file)"
            )),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub reports: PathBuf,
    pub chexpert: PathBuf,
    pub negbio: PathBuf,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// TOML finding schema; the CheXpert schema when absent.
    #[serde(default)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChatConfig {
    pub provider: ChatKind,
    pub lexicon: Option<PathBuf>,
    pub model: Option<String>,
    pub temperature: f64,
    pub task_selector: String,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    pub timeout_secs: u64,
    pub concurrency: usize,
    pub prompts_dir: Option<PathBuf>,
    /// Reports from group A shown to the model for identification and task
    /// generation.
    pub identify_samples: usize,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            provider: ChatKind::Mock,
            lexicon: None,
            model: None,
            temperature: 0.0,
            task_selector: "finding".into(),
            endpoint: None,
            api_key_env: None,
            max_retries: 3,
            retry_base_ms: 500,
            timeout_secs: 60,
            concurrency: 4,
            prompts_dir: None,
            identify_samples: 4,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub hash_seed: u64,
    pub url: Option<String>,
    pub path: Option<PathBuf>,
    pub combine: CombineMode,
    pub batch_size: usize,
    pub concurrency: usize,
    pub timeout_secs: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::Hashed,
            dim: 256,
            hash_seed: 0,
            url: None,
            path: None,
            combine: CombineMode::Join,
            batch_size: 64,
            concurrency: 4,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub bleu_max_n: usize,
    pub bleu_smoothing: String,
    pub bleu_epsilon: f64,
    pub difference: DifferenceMode,
    pub hex_radius: f64,
    pub min_count: usize,
    /// Scoring threads; rayon's default when absent.
    pub threads: Option<usize>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            bleu_max_n: 4,
            bleu_smoothing: "none".into(),
            bleu_epsilon: Smoothing::DEFAULT_EPSILON,
            difference: DifferenceMode::Absolute,
            hex_radius: 0.05,
            min_count: 100,
            threads: None,
        }
    }
}

impl MetricsConfig {
    pub fn bleu(&self) -> Result<BleuConfig, CliError> {
        let smoothing = match self.bleu_smoothing.as_str() {
            "none" => Smoothing::None,
            "epsilon" => Smoothing::Epsilon {
                epsilon: self.bleu_epsilon,
            },
            other => {
                return Err(CliError::input(format!(
                    "unknown bleu_smoothing `{other}` (expected none or epsilon)"
                )))
            }
        };
        Ok(BleuConfig {
            max_n: self.bleu_max_n,
            smoothing,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Cap on each group's size; the full halves when absent.
    #[serde(default)]
    pub per_group: Option<usize>,
    pub paths: PathsConfig,
    #[serde(default)]
    pub chat: ChatConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub provider: Option<ChatKind>,
    pub embedder: Option<EmbedderKind>,
    pub output_dir: Option<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::input(format!("config: {e}")))?;
        let p = &mut cfg.paths;
        p.reports = resolve(base_dir, &p.reports);
        p.chexpert = resolve(base_dir, &p.chexpert);
        p.negbio = resolve(base_dir, &p.negbio);
        p.output_dir = resolve(base_dir, &p.output_dir);
        p.cache_dir = p.cache_dir.as_ref().map(|c| resolve(base_dir, c));
        p.schema = p.schema.as_ref().map(|s| resolve(base_dir, s));
        cfg.chat.lexicon = cfg.chat.lexicon.as_ref().map(|l| resolve(base_dir, l));
        cfg.chat.prompts_dir = cfg.chat.prompts_dir.as_ref().map(|d| resolve(base_dir, d));
        cfg.embedding.path = cfg.embedding.path.as_ref().map(|f| resolve(base_dir, f));
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    /// Applies overrides. A cache directory inside the configured output
    /// directory moves along with an overridden output directory.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(kind) = o.provider {
            self.chat.provider = kind;
        }
        if let Some(kind) = o.embedder {
            self.embedding.kind = kind;
        }
        if let Some(out) = &o.output_dir {
            if let Some(cache) = &self.paths.cache_dir {
                if let Ok(rest) = cache.strip_prefix(&self.paths.output_dir) {
                    self.paths.cache_dir = Some(out.join(rest));
                }
            }
            self.paths.output_dir = out.clone();
        }
    }

    /// Checks invariants and that every referenced input exists.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.seed.is_none() {
            return Err(CliError::input(
                "config has no `seed` and none was given with --seed",
            ));
        }
        let must_exist = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::input(format!(
                    "{what} not found: {}",
                    p.display()
                )))
            }
        };
        must_exist("reports file", &self.paths.reports)?;
        must_exist("CheXpert label file", &self.paths.chexpert)?;
        must_exist("NegBio label file", &self.paths.negbio)?;
        if let Some(s) = &self.paths.schema {
            must_exist("finding schema", s)?;
        }
        if let Some(d) = &self.chat.prompts_dir {
            must_exist("prompt directory", d)?;
        }
        match self.chat.provider {
            ChatKind::Mock => match &self.chat.lexicon {
                Some(l) => must_exist("mock lexicon", l)?,
                None => {
                    return Err(CliError::input(
                        "chat.provider = \"mock\" needs chat.lexicon",
                    ))
                }
            },
            ChatKind::Http => {
                if self
                    .chat
                    .endpoint
                    .as_deref()
                    .is_none_or(|e| e.trim().is_empty())
                {
                    return Err(CliError::input(
                        "chat.provider = \"http\" needs chat.endpoint",
                    ));
                }
                if self.chat.model.is_none() {
                    return Err(CliError::input("chat.provider = \"http\" needs chat.model"));
                }
            }
        }
        if self.chat.temperature.is_nan() || self.chat.temperature < 0.0 {
            return Err(CliError::input(format!(
                "chat.temperature must be >= 0, got {}",
                self.chat.temperature
            )));
        }
        match self.embedding.kind {
            EmbedderKind::Hashed => {
                if self.embedding.dim < 64 {
                    return Err(CliError::input(format!(
                        "embedding.dim must be >= 64, got {}",
                        self.embedding.dim
                    )));
                }
            }
            EmbedderKind::Http => {
                if self.embedding.url.is_none() {
                    return Err(CliError::input(
                        "embedding.kind = \"http\" needs embedding.url",
                    ));
                }
            }
            EmbedderKind::File => match &self.embedding.path {
                Some(p) => must_exist("precomputed embedding file", p)?,
                None => {
                    return Err(CliError::input(
                        "embedding.kind = \"file\" needs embedding.path",
                    ))
                }
            },
        }
        if !(self.metrics.hex_radius > 0.0 && self.metrics.hex_radius.is_finite()) {
            return Err(CliError::input(format!(
                "metrics.hex_radius must be positive, got {}",
                self.metrics.hex_radius
            )));
        }
        if self.metrics.bleu_max_n == 0 {
            return Err(CliError::input("metrics.bleu_max_n must be at least 1"));
        }
        self.metrics.bleu()?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.paths
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("cache"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.paths.output_dir.join("manifest.json")
    }

    pub fn labels_path(&self) -> PathBuf {
        self.paths.output_dir.join("labels.jsonl")
    }

    pub fn pipeline_path(&self) -> PathBuf {
        self.paths.output_dir.join("pipeline.json")
    }

    pub fn scores_path(&self) -> PathBuf {
        self.paths.output_dir.join("scores.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.paths.output_dir.join("report")
    }

    pub fn chat_timeout(&self) -> Duration {
        Duration::from_secs(self.chat.timeout_secs)
    }
}
