//! Run configuration: TOML file values overlaid by environment and flags,
//! then validated as a whole so every violation is reported at once.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use cpi_core::pipeline::PipelineConfig;
use cpi_core::scoring::DEFAULT_SYNTHETIC_DIM;
use cpi_core::Aggregator;
use serde::{Deserialize, Serialize};

pub const ENV_ENDPOINT: &str = "CPI_EMBED_ENDPOINT";
pub const ENV_CACHE_DIR: &str = "CPI_CACHE_DIR";
/// Cache file name used when the cache location comes from `CPI_CACHE_DIR`.
pub const CACHE_FILE_NAME: &str = "embeddings.cpie";
pub const VOCAB_FILE_NAME: &str = "bpe_simple_vocab_16e6.txt.gz";
pub const DEFAULT_OUT_DIR: &str = "cpi-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Cached,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorArg {
    Mean,
    Max,
}

impl From<AggregatorArg> for Aggregator {
    fn from(a: AggregatorArg) -> Self {
        match a {
            AggregatorArg::Mean => Aggregator::Mean,
            AggregatorArg::Max => Aggregator::Max,
        }
    }
}

/// Every key of the configuration file; each one has a same-named flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Corpus JSONL file.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Directory for artifacts and stage markers.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Similarity backend.
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Embedding service base URL (remote backend, or cache fill).
    #[arg(long, global = true, env = ENV_ENDPOINT)]
    pub embed_endpoint: Option<String>,
    /// Embedding cache file (defaults to $CPI_CACHE_DIR/embeddings.cpie).
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Treat a cache miss as an error instead of calling the endpoint.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub strict_cache: Option<bool>,
    /// Embedding dimension when creating a new cache file.
    #[arg(long, global = true)]
    pub embed_dim: Option<usize>,
    /// Hashed bag-of-words dimension of the synthetic backend.
    #[arg(long, global = true)]
    pub synthetic_dim: Option<usize>,
    /// CLIP merges file (plain or gzip).
    #[arg(long, global = true)]
    pub vocab: Option<PathBuf>,
    /// Stage-1 retention fraction.
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    /// Final subset size as a fraction of the original corpus.
    #[arg(long, global = true)]
    pub target_fraction: Option<f64>,
    /// Maximum phrases intervened on per caption.
    #[arg(long, global = true)]
    pub max_k: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Extra seed material for nonce generation.
    #[arg(long, global = true)]
    pub seed_salt: Option<String>,
    /// Per-sample aggregation of phrase drops.
    #[arg(long, global = true, value_enum)]
    pub aggregator: Option<AggregatorArg>,
    /// Samples per scoring request.
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// Remote request timeout in seconds.
    #[arg(long, global = true)]
    pub timeout_secs: Option<u64>,
}

impl Settings {
    /// `self` wins wherever it has a value.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            config: self.config.or(base.config),
            corpus: self.corpus.or(base.corpus),
            out_dir: self.out_dir.or(base.out_dir),
            backend: self.backend.or(base.backend),
            embed_endpoint: self.embed_endpoint.or(base.embed_endpoint),
            cache: self.cache.or(base.cache),
            strict_cache: self.strict_cache.or(base.strict_cache),
            embed_dim: self.embed_dim.or(base.embed_dim),
            synthetic_dim: self.synthetic_dim.or(base.synthetic_dim),
            vocab: self.vocab.or(base.vocab),
            rho: self.rho.or(base.rho),
            target_fraction: self.target_fraction.or(base.target_fraction),
            max_k: self.max_k.or(base.max_k),
            workers: self.workers.or(base.workers),
            seed_salt: self.seed_salt.or(base.seed_salt),
            aggregator: self.aggregator.or(base.aggregator),
            batch_size: self.batch_size.or(base.batch_size),
            timeout_secs: self.timeout_secs.or(base.timeout_secs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

fn violation(field: &'static str, message: impl Into<String>) -> Violation {
    Violation {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Remote { endpoint: String },
    Cached { path: PathBuf, endpoint: Option<String>, strict: bool, dim: Option<usize> },
    Synthetic { dim: usize },
}

/// Validated configuration of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub backend: Backend,
    pub vocab: PathBuf,
    pub workers: usize,
    pub timeout_secs: u64,
    pub pipeline: PipelineConfig,
}

/// What the subcommand needs from the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Needs {
    pub corpus: bool,
}

fn default_vocab() -> PathBuf {
    let local = Path::new("assets").join(VOCAB_FILE_NAME);
    if local.is_file() {
        return local;
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets").join(VOCAB_FILE_NAME)
}

/// Nearest existing ancestor must be a directory for `dir` to be creatable.
fn creatable_dir(dir: &Path) -> bool {
    if dir.exists() {
        return dir.is_dir();
    }
    let mut cur = dir.parent();
    while let Some(p) = cur {
        if p.as_os_str().is_empty() {
            return true;
        }
        if p.exists() {
            return p.is_dir();
        }
        cur = p.parent();
    }
    true
}

/// Reads the configuration file named by `flags.config`, if any.
pub fn load_file(path: &Path) -> Result<Settings, Vec<Violation>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![violation("config", format!("{}: {e}", path.display()))])?;
    toml::from_str(&text).map_err(|e| vec![violation("config", format!("{}: {}", path.display(), e.message()))])
}

/// Merges flags over the file (and `CPI_CACHE_DIR` under flags) and checks
/// every constraint, collecting all violations.
pub fn resolve(flags: Settings, cache_dir_env: Option<PathBuf>, needs: Needs) -> Result<RunConfig, Vec<Violation>> {
    let file = match &flags.config {
        Some(p) => load_file(p)?,
        None => Settings::default(),
    };
    let env = Settings {
        cache: cache_dir_env.map(|d| d.join(CACHE_FILE_NAME)),
        ..Settings::default()
    };
    // Flags beat the environment, which beats the file. The endpoint's
    // environment value already arrives through its flag.
    let s = flags.over(env.over(file));
    let defaults = PipelineConfig::default();
    let mut errs = Vec::new();

    let rho = s.rho.unwrap_or(defaults.rho);
    let target = s.target_fraction.unwrap_or(defaults.target_fraction);
    if !(rho > 0.0 && rho <= 1.0) {
        errs.push(violation("rho", format!("must lie in (0, 1], got {rho}")));
    }
    if !(target > 0.0 && target <= 1.0) {
        errs.push(violation("target_fraction", format!("must lie in (0, 1], got {target}")));
    }
    if target > rho {
        errs.push(violation(
            "target_fraction",
            format!("{target} exceeds the stage-1 pool fraction rho = {rho}"),
        ));
    }
    let workers = s.workers.unwrap_or(1);
    if workers == 0 {
        errs.push(violation("workers", "must be at least 1"));
    }
    let max_k = s.max_k.unwrap_or(defaults.max_k);
    if max_k == 0 {
        errs.push(violation("max_k", "must be at least 1"));
    }
    let batch_size = s.batch_size.unwrap_or(defaults.batch_size);
    if batch_size == 0 {
        errs.push(violation("batch_size", "must be at least 1"));
    }
    if needs.corpus && s.corpus.is_none() {
        errs.push(violation("corpus", "required"));
    }
    let out_dir = s.out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    if !creatable_dir(&out_dir) {
        errs.push(violation("out_dir", format!("{} is not a directory and cannot be created", out_dir.display())));
    }
    let vocab = s.vocab.unwrap_or_else(default_vocab);
    if !vocab.is_file() {
        errs.push(violation("vocab", format!("{} does not exist", vocab.display())));
    }

    let backend = match s.backend.unwrap_or(BackendKind::Synthetic) {
        BackendKind::Synthetic => {
            let dim = s.synthetic_dim.unwrap_or(DEFAULT_SYNTHETIC_DIM);
            if dim == 0 {
                errs.push(violation("synthetic_dim", "must be at least 1"));
            }
            Backend::Synthetic { dim }
        }
        BackendKind::Remote => match s.embed_endpoint {
            Some(endpoint) if !endpoint.is_empty() => Backend::Remote { endpoint },
            _ => {
                errs.push(violation("embed_endpoint", format!("required by the remote backend (flag or {ENV_ENDPOINT})")));
                Backend::Remote { endpoint: String::new() }
            }
        },
        BackendKind::Cached => {
            let path = s.cache.unwrap_or_default();
            if path.as_os_str().is_empty() {
                errs.push(violation("cache", format!("required by the cached backend (flag or {ENV_CACHE_DIR})")));
            } else if path.is_dir() {
                errs.push(violation("cache", format!("{} is a directory; expected a cache file", path.display())));
            } else if !path.exists() {
                if s.embed_dim.is_none() {
                    errs.push(violation("embed_dim", format!("required to create the new cache {}", path.display())));
                }
                if !path.parent().is_none_or(creatable_dir) {
                    errs.push(violation("cache", format!("{} cannot be created", path.display())));
                }
            }
            if s.embed_dim == Some(0) {
                errs.push(violation("embed_dim", "must be at least 1"));
            }
            Backend::Cached {
                path,
                endpoint: s.embed_endpoint.filter(|e| !e.is_empty()),
                strict: s.strict_cache.unwrap_or(false),
                dim: s.embed_dim,
            }
        }
    };

    if !errs.is_empty() {
        return Err(errs);
    }
    Ok(RunConfig {
        corpus: s.corpus,
        out_dir,
        backend,
        vocab,
        workers,
        timeout_secs: s.timeout_secs.unwrap_or(30),
        pipeline: PipelineConfig {
            rho,
            target_fraction: target,
            max_k,
            seed_salt: s.seed_salt.unwrap_or_default(),
            aggregator: s.aggregator.map(Aggregator::from).unwrap_or(defaults.aggregator),
            batch_size,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: Needs = Needs { corpus: true };

    fn base() -> Settings {
        Settings {
            corpus: Some("corpus.jsonl".into()),
            vocab: Some(default_vocab()),
            ..Settings::default()
        }
    }

    #[test]
    fn operating_point_is_valid() {
        let cfg = resolve(
            Settings {
                rho: Some(0.7),
                target_fraction: Some(0.5),
                ..base()
            },
            None,
            ALL,
        )
        .unwrap();
        assert_eq!((cfg.pipeline.rho, cfg.pipeline.target_fraction), (0.7, 0.5));
        assert_eq!(cfg.backend, Backend::Synthetic { dim: DEFAULT_SYNTHETIC_DIM });
    }

    #[test]
    fn all_violations_are_listed() {
        let errs = resolve(
            Settings {
                rho: Some(0.7),
                target_fraction: Some(0.8),
                workers: Some(0),
                corpus: None,
                backend: Some(BackendKind::Remote),
                ..base()
            },
            None,
            ALL,
        )
        .unwrap_err();
        let fields: Vec<&str> = errs.iter().map(|v| v.field).collect();
        assert_eq!(fields, ["target_fraction", "workers", "corpus", "embed_endpoint"]);
    }

    #[test]
    fn flags_override_file_and_env_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cpi.toml");
        std::fs::write(&file, "rho = 0.9\ntarget_fraction = 0.4\nmax_k = 3\ncache = \"from-file.cpie\"\nembed_dim = 4\nbackend = \"cached\"\n").unwrap();
        let cfg = resolve(
            Settings {
                config: Some(file.clone()),
                rho: Some(0.8),
                ..base()
            },
            Some(dir.path().to_path_buf()),
            ALL,
        )
        .unwrap();
        assert_eq!((cfg.pipeline.rho, cfg.pipeline.target_fraction, cfg.pipeline.max_k), (0.8, 0.4, 3));
        let Backend::Cached { path, .. } = cfg.backend else { panic!("cached backend expected") };
        assert_eq!(path, dir.path().join(CACHE_FILE_NAME));
    }

    #[test]
    fn unknown_file_keys_are_violations() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("cpi.toml");
        std::fs::write(&file, "rho = 0.9\nrhoo = 0.1\n").unwrap();
        let errs = resolve(
            Settings {
                config: Some(file),
                ..base()
            },
            None,
            ALL,
        )
        .unwrap_err();
        assert_eq!(errs[0].field, "config");
        assert!(errs[0].message.contains("rhoo"), "{}", errs[0].message);
    }

    #[test]
    fn file_under_out_dir_path_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "").unwrap();
        let errs = resolve(
            Settings {
                out_dir: Some(blocker.join("sub")),
                ..base()
            },
            None,
            ALL,
        )
        .unwrap_err();
        assert_eq!(errs[0].field, "out_dir");
    }
}
