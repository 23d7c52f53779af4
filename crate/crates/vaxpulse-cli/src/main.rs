//! Command-line front end: each subcommand drives one pipeline stage (or
//! the whole pipeline) from a single JSON config file.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
//! Runtime failures print a single-line JSON object to standard error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vaxpulse::config::{ConfigError, PipelineConfig};
use vaxpulse::corpus::{ConcernCategory, Platform};
use vaxpulse::pipeline::Pipeline;
use vaxpulse::sentiment::SentimentLabel;
use vaxpulse::trends::topic_table;
use vaxpulse::Error;

#[derive(Parser)]
#[command(
    name = "vaxpulse",
    version,
    about = "Social-media vaccine surveillance pipeline: ingest, clean, classify, topic-model, report"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Pipeline configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifyStage {
    Relevance,
    Sentiment,
    Concern,
}

#[derive(Subcommand)]
enum Command {
    /// Pull posts from a fixture file or trends CSV into the store.
    Ingest {
        #[command(flatten)]
        config: ConfigArg,
        /// Source platform recorded for the fetch job.
        #[arg(long)]
        source: Platform,
        /// Corpus-format JSONL fixture to ingest.
        #[arg(long, conflicts_with = "trends")]
        fixture: Option<PathBuf>,
        /// Search-interest CSV (`date,query,interest`) to ingest.
        #[arg(long)]
        trends: Option<PathBuf>,
    },
    /// Clean raw text and decide keep/drop for every new record.
    Normalize {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Run classification stages (default: relevance, sentiment, concern).
    Classify {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum)]
        stage: Option<ClassifyStage>,
    },
    /// Topic model operations.
    Topics {
        #[command(subcommand)]
        command: TopicsCommand,
    },
    /// Render the report from the current corpus and topic models.
    Report {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Whole-pipeline operations.
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
    /// Train the sentiment baseline from a labeled JSONL fixture.
    TrainSentiment {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        labeled: PathBuf,
    },
}

#[derive(Subcommand)]
enum TopicsCommand {
    /// Fit topic models over the classified corpus.
    Fit {
        #[command(flatten)]
        config: ConfigArg,
        /// Restrict the fit to one concern group.
        #[arg(long)]
        concern: Option<ConcernCategory>,
        /// Comma-separated sentiment labels to keep (overrides config).
        #[arg(long, value_delimiter = ',')]
        sentiment_filter: Option<Vec<SentimentLabel>>,
    },
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Run every stage in order and write the run manifest.
    Run {
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, stage) = classify_error(&err);
            let body = serde_json::json!({
                "error": {
                    "code": code,
                    "stage": stage,
                    "message": err.to_string(),
                }
            });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}

/// Config and usage problems exit 2; runtime failures exit 1.
fn classify_error(err: &Error) -> (u8, &'static str) {
    match err {
        Error::Config(_) => (2, "config"),
        Error::Corpus(_) => (1, "corpus"),
        Error::Ingest(_) => (1, "ingest"),
        Error::Provider(_) => (1, "provider"),
        Error::Train(_) => (1, "train"),
        Error::Topics(_) => (1, "topics"),
        Error::Trends(_) | Error::Report(_) => (1, "report"),
        Error::Pipeline(_) => (1, "pipeline"),
    }
}

fn load_config(path: &Path) -> Result<PipelineConfig, Error> {
    PipelineConfig::load(path).map_err(Error::Config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest {
            config,
            source,
            fixture,
            trends,
        } => {
            let config = load_config(&config.config)?;
            let mut pipeline = Pipeline::open(config)?;
            let stats = match (fixture, trends) {
                (Some(path), None) => pipeline.ingest_fixture(source, &path)?,
                (None, Some(path)) => pipeline.ingest_trends(&path)?,
                (None, None) => {
                    return Err(Error::Config(ConfigError::Field {
                        field: "ingest",
                        reason: "pass --fixture PATH or --trends PATH".into(),
                    }));
                }
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            println!("{}", serde_json::to_string(&stats).expect("stats serialize"));
            Ok(())
        }
        Command::Normalize { config } => {
            let config = load_config(&config.config)?;
            let mut pipeline = Pipeline::open(config)?;
            let report = pipeline.run_normalize()?;
            let body = serde_json::json!({
                "processed": report.input,
                "kept": report.output,
                "dropped": report.input - report.output,
            });
            println!("{body}");
            Ok(())
        }
        Command::Classify { config, stage } => {
            let config = load_config(&config.config)?;
            let mut pipeline = Pipeline::open(config)?;
            let reports = match stage {
                Some(ClassifyStage::Relevance) => vec![pipeline.run_relevance()?],
                Some(ClassifyStage::Sentiment) => vec![pipeline.run_sentiment()?],
                Some(ClassifyStage::Concern) => vec![pipeline.run_concern()?],
                None => vec![
                    pipeline.run_relevance()?,
                    pipeline.run_sentiment()?,
                    pipeline.run_concern()?,
                ],
            };
            println!("{}", serde_json::to_string(&reports).expect("reports serialize"));
            Ok(())
        }
        Command::Topics {
            command: TopicsCommand::Fit {
                config,
                concern,
                sentiment_filter,
            },
        } => {
            let mut config = load_config(&config.config)?;
            if let Some(filter) = sentiment_filter {
                config.topics.sentiment_filter = Some(filter);
            }
            let mut pipeline = Pipeline::open(config)?;
            let (report, models) = pipeline.run_topics_filtered(concern)?;
            for model in &models {
                println!("group: {} (outliers: {})", model.group, model.outlier_count);
                let (rows, _) = topic_table(model);
                for row in rows {
                    println!("  {}. {} — {} comments", row.serial, row.label, row.count);
                }
            }
            for note in &report.notes {
                println!("note: {note}");
            }
            Ok(())
        }
        Command::Report { config } => {
            let config = load_config(&config.config)?;
            let mut pipeline = Pipeline::open(config)?;
            let models = pipeline.load_current_models()?;
            let (_, manifest) = pipeline.run_report(&models)?;
            println!("{}", serde_json::to_string(&manifest).expect("manifest serialize"));
            Ok(())
        }
        Command::Pipeline {
            command: PipelineCommand::Run { config },
        } => {
            let config = load_config(&config.config)?;
            let out_dir = config.report.out_dir.clone();
            let mut pipeline = Pipeline::open(config)?;
            let manifest = pipeline.run_all()?;
            let body = serde_json::json!({
                "manifest": out_dir.join("manifest.json"),
                "stages": manifest.stages.len(),
                "outputs": manifest.outputs.len(),
                "warnings": manifest.warnings.len(),
            });
            println!("{body}");
            Ok(())
        }
        Command::TrainSentiment { config, labeled } => {
            let config = load_config(&config.config)?;
            let pipeline = Pipeline::open(config)?;
            let path = pipeline.train_sentiment(&labeled)?;
            let body = serde_json::json!({ "model_path": path });
            println!("{body}");
            Ok(())
        }
    }
}
