//! Command-line front end: ingestion, indexing, single and batch pipeline
//! runs, evaluation, the `k2` sweep and the HTTP service.
//!
//! Every command prints JSON on stdout. A failure is one JSON line
//! `{"error": kind, "message": ...}` on stderr and a nonzero exit code.

pub mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use judgeflow_core::config::Config;
use judgeflow_core::Settings;
use judgeflow_service::ServiceError;
use thiserror::Error;

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "JUDGEFLOW_CONFIG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Pairing(String),
    #[error("cannot access {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{failed} of {total} documents failed; first: {first}")]
    Batch {
        failed: usize,
        total: usize,
        kind: &'static str,
        first: String,
    },
    #[error(transparent)]
    Core(#[from] judgeflow_core::Error),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, e: impl ToString) -> Self {
        CliError::Io {
            path: path.into(),
            message: e.to_string(),
        }
    }

    /// Stable name of the failure.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Pairing(_) => "PairingError",
            CliError::Io { .. } => "IoError",
            CliError::Batch { kind, .. } => kind,
            CliError::Core(e) => e.kind(),
            CliError::Service(e) => e.kind(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl From<judgeflow_core::config::ConfigError> for CliError {
    fn from(e: judgeflow_core::config::ConfigError) -> Self {
        CliError::Core(e.into())
    }
}

/// The single-line error report.
pub fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Search,
    Prejudge,
    Write,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Config file; defaults to $JUDGEFLOW_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for all randomness, recorded in outputs.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Documents processed concurrently by batch commands [default: processors].
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    /// Articles kept by dense retrieval, overriding the config.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub k1: Option<u64>,
    /// Articles kept after reranking, overriding the config.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub k2: Option<u64>,
    /// Halt runs at the intermediate conclusion.
    #[arg(long, global = true)]
    pub review: bool,
    /// Last stage a run executes.
    #[arg(long, global = true, value_enum)]
    pub stage: Option<Stage>,
}

impl Global {
    pub fn jobs(&self) -> usize {
        self.jobs
            .map(|j| j as usize)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    /// The stage a run stops after; `--review` wins over `--stage`.
    pub fn last_stage(&self) -> Stage {
        match (self.review, self.stage) {
            (true, Some(Stage::Search)) => Stage::Search,
            (true, _) => Stage::Prejudge,
            (false, s) => s.unwrap_or(Stage::Write),
        }
    }

    pub fn load_config(&self) -> Result<Config, CliError> {
        let path = match &self.config {
            Some(p) => p.clone(),
            None => std::env::var_os(CONFIG_ENV)
                .map(PathBuf::from)
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "no config given; pass --config or set {CONFIG_ENV}"
                    ))
                })?,
        };
        if !path.is_file() {
            return Err(CliError::Usage(format!(
                "config {} does not exist",
                path.display()
            )));
        }
        Ok(Config::load(&path)?)
    }

    /// Pipeline settings from the config with flag overrides applied.
    pub fn settings(&self, config: &Config) -> Settings {
        let base = judgeflow_core::pipeline::settings_from_config(config);
        Settings {
            k1: self.k1.map_or(base.k1, |k| k as usize),
            k2: self.k2.map_or(base.k2, |k| k as usize),
            ..base
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "judgeflow",
    version,
    about = "Search, pre-judge and write criminal judgment documents"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct FactArgs {
    /// UTF-8 file holding the case fact.
    #[arg(long)]
    pub fact_file: PathBuf,
    /// Case id kept out of precedent retrieval.
    #[arg(long)]
    pub exclude: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the source corpora and copy them into the data directory.
    Ingest {
        /// Law corpus, overriding `corpus.laws`.
        #[arg(long)]
        laws: Option<PathBuf>,
        /// Case corpus, overriding `corpus.cases`.
        #[arg(long)]
        cases: Option<PathBuf>,
    },
    /// Embed the ingested corpora and persist the index.
    Index,
    /// Retrieve the referential elements for a fact.
    Search(FactArgs),
    /// Search, then produce the intermediate conclusion.
    Prejudge(FactArgs),
    /// Write a document from a fact and a given conclusion.
    Write {
        #[command(flatten)]
        fact: FactArgs,
        /// Conclusion block, or a JSON conclusion.
        #[arg(long)]
        conclusion: PathBuf,
    },
    /// Run the pipeline on one fact or a batch of queries.
    Run {
        /// UTF-8 file holding one case fact.
        #[arg(long, conflicts_with = "queries", required_unless_present = "queries")]
        fact_file: Option<PathBuf>,
        /// Case corpus (JSON lines) or directory of `.txt` facts.
        #[arg(long, requires = "out")]
        queries: Option<PathBuf>,
        /// Output directory; `{name}.json` and `{name}.txt` per query.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Case id kept out of precedent retrieval (single fact only).
        #[arg(long, conflicts_with = "queries")]
        exclude: Option<String>,
    },
    /// Score generated documents against gold documents of the same file stem.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Directory for `{stem}.json` reports and `aggregate.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the full pipeline once per `k2` value.
    #[command(name = "sweep-k2")]
    SweepK2 {
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,10,15,20",
              value_parser = clap::value_parser!(u64).range(1..))]
        values: Vec<u64>,
        /// Gold cases (JSON lines); the ingested case corpus by default.
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Output file; stdout by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        /// Address, overriding `service.bind`.
        #[arg(long)]
        bind: Option<String>,
    },
}

/// Runs `cli`, writing command output to `out`.
pub async fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let g = &cli.global;
    let config = &g.load_config()?;
    match cli.command {
        Command::Ingest { laws, cases } => commands::ingest(config, laws, cases, out),
        Command::Index => commands::index(config, out).await,
        Command::Search(f) => {
            commands::single(
                g,
                config,
                &f.fact_file,
                f.exclude.as_deref(),
                Stage::Search,
                out,
            )
            .await
        }
        Command::Prejudge(f) => {
            commands::single(
                g,
                config,
                &f.fact_file,
                f.exclude.as_deref(),
                Stage::Prejudge,
                out,
            )
            .await
        }
        Command::Write { fact, conclusion } => {
            commands::write(g, config, &fact, &conclusion, out).await
        }
        Command::Run {
            fact_file,
            queries,
            out: out_dir,
            exclude,
        } => match (fact_file, queries) {
            (Some(f), _) => {
                commands::run_single(g, config, &f, exclude.as_deref(), out_dir.as_deref(), out)
                    .await
            }
            (None, Some(q)) => {
                let dir = out_dir.ok_or_else(|| CliError::Usage("--queries needs --out".into()))?;
                commands::run_batch(g, config, &q, &dir, out).await
            }
            (None, None) => Err(CliError::Usage("give --fact-file or --queries".into())),
        },
        Command::Eval {
            generated,
            gold,
            out: out_dir,
        } => commands::eval(g, config, &generated, &gold, out_dir.as_deref(), out).await,
        Command::SweepK2 {
            values,
            queries,
            out: out_file,
        } => {
            commands::sweep(
                g,
                config,
                &values,
                queries.as_deref(),
                out_file.as_deref(),
                out,
            )
            .await
        }
        Command::Serve { bind } => commands::serve(config, bind, out).await,
    }
}
