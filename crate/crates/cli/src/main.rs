//! `cpi`: two-stage curation of image-caption corpora.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 backend
//! error. Errors are JSON objects on stderr; progress lines are JSON too.

mod config;
mod diag;
mod progress;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use cpi_core::diagnostics::DiagError;
use cpi_core::pipeline::{read_corpus, Corpus, Pipeline, Progress, RunOutcome, DEFAULT_RHO_GRID};
use cpi_core::scoring::{CachedScorer, EmbeddingStore, RemoteScorer, Scorer, ScoringError, SyntheticScorer, CACHE_FORMAT_VERSION};
use cpi_core::{load_vocab, BpeError, ErrorClass, PipelineError, StopAfter, Vocab, ARTIFACT_FORMAT_VERSION};
use serde_json::json;

use config::{Backend, Needs, RunConfig, Settings, Violation};
use progress::Reporter;

#[derive(Debug, Parser)]
#[command(name = "cpi", about = "Phrase-sensitivity curation of image-caption corpora")]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    /// Suppress progress lines.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score global alignment and write the stage-1 manifest.
    ScoreAlign,
    /// Stage-1 manifests for a list of retention fractions.
    Sweep {
        /// Comma-separated fractions.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RHO_GRID)]
        rhos: Vec<f64>,
    },
    /// Phrase spans of the stage-1 pool.
    Extract,
    /// Nonce interventions for every selected phrase head.
    Forge,
    /// Phrase drops, per-sample means and pool-normalized scores.
    ScorePas,
    /// Stage-2 selection (runs any missing earlier stage).
    Select,
    /// Every stage end to end.
    Run,
    /// Analyses over run artifacts.
    Diag {
        #[command(subcommand)]
        which: DiagCommand,
    },
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum DiagCommand {
    /// Correlation of scores with global alignment.
    Corr,
    /// Kept-versus-dropped histograms of score and alignment.
    Hist {
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Caption-length and phrase-count baselines and their manifests.
    Heuristics,
    /// Text-only displacement of interventions, paired with their drops.
    Displacement {
        #[arg(long, default_value_t = 50_000)]
        limit: usize,
    },
    /// Nonce versus same- and cross-category real-word substitutions.
    Controls {
        #[arg(long, default_value_t = 100_000)]
        n: usize,
    },
}

/// A failed invocation, rendered as one JSON object on stderr.
#[derive(Debug)]
pub enum Failure {
    Config(Vec<Violation>),
    Run {
        class: ErrorClass,
        stage: Option<&'static str>,
        message: String,
    },
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run { class, .. } => match class {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Backend => 4,
            },
        }
    }

    fn render(&self) -> serde_json::Value {
        match self {
            Failure::Config(v) => json!({"error": "config", "violations": v}),
            Failure::Run { class, stage, message } => {
                let kind = match class {
                    ErrorClass::Config => "config",
                    ErrorClass::Data => "data",
                    ErrorClass::Backend => "backend",
                };
                json!({"error": kind, "stage": stage, "message": message})
            }
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure::Run {
            class: ErrorClass::Data,
            stage: None,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let stage = match &e {
            PipelineError::Stage { stage, .. } => Some(*stage),
            _ => None,
        };
        Failure::Run {
            class: e.class(),
            stage,
            message: e.to_string(),
        }
    }
}

impl From<ScoringError> for Failure {
    fn from(e: ScoringError) -> Self {
        Failure::Run {
            class: ErrorClass::Backend,
            stage: None,
            message: e.to_string(),
        }
    }
}

impl From<DiagError> for Failure {
    fn from(e: DiagError) -> Self {
        match e {
            DiagError::Scoring(s) => s.into(),
            e => Failure::data(e.to_string()),
        }
    }
}

impl From<BpeError> for Failure {
    fn from(e: BpeError) -> Self {
        Failure::data(e.to_string())
    }
}

fn version() -> String {
    format!(
        "{} (artifact format {ARTIFACT_FORMAT_VERSION}, embedding cache format {CACHE_FORMAT_VERSION})",
        env!("CARGO_PKG_VERSION")
    )
}

fn build_scorer(cfg: &RunConfig) -> Result<Box<dyn Scorer>, Failure> {
    let timeout = Duration::from_secs(cfg.timeout_secs);
    Ok(match &cfg.backend {
        Backend::Synthetic { dim } => Box::new(SyntheticScorer::new(*dim)),
        Backend::Remote { endpoint } => Box::new(RemoteScorer::new(endpoint, timeout)?),
        Backend::Cached { path, endpoint, strict, dim } => {
            let store = EmbeddingStore::open(path, *dim)?;
            let inner = match endpoint {
                Some(e) => Some(Box::new(RemoteScorer::new(e, timeout)?) as Box<dyn Scorer>),
                None => None,
            };
            Box::new(CachedScorer::new(store, inner, *strict))
        }
    })
}

/// Loaded inputs shared by every subcommand.
pub struct Session {
    pub cfg: RunConfig,
    pub vocab: Vocab,
    pub scorer: Box<dyn Scorer>,
    pub progress: Box<dyn Fn(&Progress) + Sync>,
}

impl Session {
    pub fn corpus(&self) -> Result<Corpus, Failure> {
        let path = self.cfg.corpus.as_ref().expect("validated");
        if !path.is_file() {
            return Err(Failure::data(format!("corpus {} not found", path.display())));
        }
        Ok(read_corpus(path)?)
    }

    pub fn pipeline(&self) -> Pipeline<'_> {
        Pipeline::new(self.cfg.pipeline.clone(), self.scorer.as_ref(), &self.vocab, &self.cfg.out_dir).with_progress(self.progress.as_ref())
    }

    pub fn run_until(&self, until: StopAfter) -> Result<(Corpus, RunOutcome), Failure> {
        let corpus = self.corpus()?;
        let outcome = self.pipeline().run(&corpus, until)?;
        Ok((corpus, outcome))
    }
}

fn stage_report(outcome: &RunOutcome, until: StopAfter, out_dir: &PathBuf) -> serde_json::Value {
    let valid_interventions = outcome.interventions.iter().filter(|i| i.is_valid()).count();
    let mut v = json!({
        "out_dir": out_dir,
        "samples": outcome.alignments.len(),
        "stage1_pool": outcome.align.as_ref().map(|m| m.len()),
    });
    let o = v.as_object_mut().expect("object");
    if until >= StopAfter::Extract {
        o.insert("phrases".into(), json!(outcome.phrases.iter().map(|p| p.spans.len()).sum::<usize>()));
    }
    if until >= StopAfter::Forge {
        o.insert("interventions".into(), json!(outcome.interventions.len()));
        o.insert("valid_interventions".into(), json!(valid_interventions));
    }
    if until >= StopAfter::Score {
        o.insert("valid_records".into(), json!(outcome.records.iter().filter(|r| r.valid).count()));
        o.insert("pool_stats".into(), json!(outcome.pool_stats));
    }
    if until >= StopAfter::Select {
        o.insert("summary".into(), json!(outcome.summary));
    }
    v
}

fn dispatch(session: &Session, command: &Command) -> Result<serde_json::Value, Failure> {
    let stop = match command {
        Command::ScoreAlign => Some(StopAfter::Align),
        Command::Extract => Some(StopAfter::Extract),
        Command::Forge => Some(StopAfter::Forge),
        Command::ScorePas => Some(StopAfter::Score),
        Command::Select | Command::Run => Some(StopAfter::Select),
        _ => None,
    };
    if let Some(until) = stop {
        let (_, outcome) = session.run_until(until)?;
        return Ok(stage_report(&outcome, until, &session.cfg.out_dir));
    }
    match command {
        Command::Sweep { rhos } => {
            let corpus = session.corpus()?;
            let manifests = session.pipeline().sweep(&corpus, rhos)?;
            let counts: Vec<serde_json::Value> = manifests
                .iter()
                .map(|m| json!({"rho": m.header.keep_fraction, "kept": m.len()}))
                .collect();
            Ok(json!({"samples": corpus.len(), "sweep": counts}))
        }
        Command::Diag { which } => diag::run(session, *which),
        _ => unreachable!("stage commands handled above"),
    }
}

fn needs(command: &Command) -> Needs {
    let corpus = !matches!(
        command,
        Command::Diag {
            which: DiagCommand::Corr | DiagCommand::Hist { .. }
        }
    );
    Needs { corpus }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("{}", f.render());
    ExitCode::from(f.exit_code())
}

fn main() -> ExitCode {
    let matches = match Cli::command().version(version()).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(Failure::Config(vec![Violation {
                field: "argv",
                message: e.kind().to_string() + ": " + e.to_string().lines().next().unwrap_or_default(),
            }]));
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            return fail(Failure::Config(vec![Violation {
                field: "argv",
                message: e.to_string(),
            }]))
        }
    };
    let cache_env = std::env::var_os(config::ENV_CACHE_DIR).filter(|v| !v.is_empty()).map(PathBuf::from);
    let cfg = match config::resolve(cli.settings, cache_env, needs(&cli.command)) {
        Ok(c) => c,
        Err(v) => return fail(Failure::Config(v)),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build() {
        Ok(p) => p,
        Err(e) => {
            return fail(Failure::Config(vec![Violation {
                field: "workers",
                message: e.to_string(),
            }]))
        }
    };
    let result = pool.install(|| -> Result<serde_json::Value, Failure> {
        let vocab = load_vocab(&cfg.vocab)?;
        let scorer = build_scorer(&cfg)?;
        let session = Session {
            cfg: cfg.clone(),
            vocab,
            scorer,
            progress: {
                let reporter = Reporter::new(cli.quiet);
                Box::new(move |p: &Progress| reporter.report(p))
            },
        };
        dispatch(&session, &cli.command)
    });
    match result {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(f) => fail(f),
    }
}
