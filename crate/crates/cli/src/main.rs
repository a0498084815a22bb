use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use factctx::pipeline::{self, PipelineConfig};
use factctx::ranker::FeatureMode;
use factctx::{Error, Result};
use serde::Serialize;

/// Rank the facts around a knowledge-graph fact by contextual relevance.
#[derive(Parser, Debug)]
#[command(name = "factctx", version)]
struct Cli {
    /// Pipeline config (TOML). Relative paths inside resolve against its directory.
    #[arg(long, global = true, default_value = "factctx.toml")]
    config: PathBuf,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores. Overrides the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and validate the graph and corpus, then print counts.
    Ingest,
    /// Label query candidates by distant supervision and extract features.
    BuildDataset {
        #[arg(long)]
        max_queries: Option<usize>,
    },
    /// Train ranker checkpoints.
    Train {
        #[command(flatten)]
        modes: ModeArgs,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Rank the test queries with trained checkpoints.
    Rank {
        #[command(flatten)]
        modes: ModeArgs,
    },
    /// Write the heuristic and distant-supervision runs.
    Baseline,
    /// Score every run and write the report.
    Evaluate,
    /// Generate a synthetic world at the configured paths.
    Synth {
        /// `small` or `tiny`.
        #[arg(long)]
        size: Option<String>,
    },
}

#[derive(Args, Debug)]
struct ModeArgs {
    /// NFCM, LF, HF or `all`; defaults to the config's mode.
    #[arg(long)]
    mode: Option<String>,
}

impl ModeArgs {
    fn resolve(&self, cfg: &PipelineConfig) -> Result<Vec<FeatureMode>> {
        match self.mode.as_deref() {
            None => Ok(vec![cfg.ranker.feature_mode]),
            Some(m) if m.eq_ignore_ascii_case("all") => Ok(FeatureMode::ALL.to_vec()),
            Some(m) => Ok(vec![FeatureMode::parse(m)?]),
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = if cli.config.exists() {
        PipelineConfig::load(&cli.config)?
    } else if cli.config.as_os_str() == "factctx.toml" {
        log::info!("no factctx.toml; using defaults relative to the working directory");
        PipelineConfig::default()
    } else {
        return Err(Error::io(&cli.config, std::io::Error::from(std::io::ErrorKind::NotFound)));
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn emit(text: &str) {
    // a closed pipe downstream (`| head`) is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    emit(&serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    match &cli.command {
        Command::Ingest => print(&pipeline::cmd_ingest(&cfg)?),
        Command::BuildDataset { max_queries } => {
            if let Some(n) = max_queries {
                cfg.dataset.max_queries_per_relationship = *n;
            }
            print(&pipeline::cmd_build_dataset(&cfg)?)
        }
        Command::Train { modes, epochs } => {
            if let Some(e) = epochs {
                cfg.ranker.epochs = *e;
            }
            let summaries =
                modes.resolve(&cfg)?.into_iter().map(|m| pipeline::cmd_train(&cfg, m)).collect::<Result<Vec<_>>>()?;
            print(&summaries)
        }
        Command::Rank { modes } => {
            let summaries =
                modes.resolve(&cfg)?.into_iter().map(|m| pipeline::cmd_rank(&cfg, m)).collect::<Result<Vec<_>>>()?;
            print(&summaries)
        }
        Command::Baseline => print(&pipeline::cmd_baseline(&cfg)?),
        Command::Evaluate => {
            let report = pipeline::cmd_evaluate(&cfg)?;
            for r in &report.runs {
                emit(&format!(
                    "{:<8} MAP {:.4}  NDCG@5 {:.4}  NDCG@10 {:.4}  MRR {:.4}  ({} queries)",
                    r.method, r.overall.map, r.overall.ndcg5, r.overall.ndcg10, r.overall.mrr, r.overall.queries
                ));
            }
            emit(&format!("report: {}", cfg.work("report.json").display()));
            Ok(())
        }
        Command::Synth { size } => {
            if let Some(s) = size {
                cfg.synth.size = s.clone();
            }
            print(&pipeline::cmd_synth(&cfg)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
