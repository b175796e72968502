//! `llmda`: augment, filter, sample and evaluate from the command line.
//!
//! Exit codes: 0 success, 2 config error, 3 gateway error, 4 data error.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use llmda::pipeline::{self, PipelineConfig, PipelineError, RunOptions};
use llmda::retrieval_math::{
    contrastive_loss_t2v, contrastive_loss_v2t, evaluate, mixed_similarity_matrix_with, read_feature_jsonl,
    FeatureVector, GroundTruth, LabeledFeature, Similarity, DEFAULT_TAU,
};

#[derive(Parser)]
#[command(name = "llmda", version, about = "LLM caption augmentation with a faithfulness filter")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// TOML config file; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<u32>,
    #[arg(long, global = true)]
    max_attempts: Option<u32>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Route both gateways to the in-process mocks.
    #[arg(long, global = true)]
    mock: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite and filter captions into the cache.
    Augment {
        /// Continue from the existing cache (default).
        #[arg(long, overrides_with = "no_resume")]
        resume: bool,
        /// Truncate the cache and start over.
        #[arg(long)]
        no_resume: bool,
        /// Stop after this many records reach an outcome.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Write one training manifest per epoch.
    Sample,
    /// Print statistics for the cache.
    Report,
    /// Parse and check the corpus.
    Validate,
    /// Losses and retrieval metrics over feature fixtures.
    Eval {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        texts: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10])]
        k: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Score::Cosine)]
        similarity: Score,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Score {
    Cosine,
    Dot,
}

fn load_config(o: &Overrides) -> Result<PipelineConfig, PipelineError> {
    let mut c = match &o.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &o.corpus {
        c.corpus_path = v.clone();
    }
    if let Some(v) = &o.cache {
        c.cache_path = v.clone();
    }
    if let Some(v) = &o.output_dir {
        c.output_dir = v.clone();
    }
    if let Some(v) = o.alpha {
        c.alpha = v;
    }
    if let Some(v) = o.beta {
        c.beta = v;
    }
    if let Some(v) = o.seed {
        c.seed = v;
        c.mock_profile.seed = v;
    }
    if let Some(v) = o.epochs {
        c.epochs = v;
    }
    if let Some(v) = o.max_attempts {
        c.max_attempts = v;
    }
    if let Some(v) = o.workers {
        c.worker_count = v;
    }
    c.mock |= o.mock;
    c.validate()?;
    Ok(c)
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable output"));
}

fn read_features(path: &Path) -> Result<Vec<LabeledFeature>, PipelineError> {
    let file = File::open(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    read_feature_jsonl(BufReader::new(file)).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn eval(images: &Path, texts: &Path, tau: f64, ks: &[usize], score: Score) -> Result<(), PipelineError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(PipelineError::Config(format!("tau must be > 0, got {tau}")));
    }
    let images = read_features(images)?;
    let texts = read_features(texts)?;
    let kind = match score {
        Score::Cosine => Similarity::Cosine,
        Score::Dot => Similarity::Dot,
    };
    let data = |e: llmda::retrieval_math::MathError| PipelineError::Data(e.to_string());
    let image_vecs: Vec<FeatureVector> = images.iter().map(|f| f.vector.clone()).collect();
    let text_vecs: Vec<FeatureVector> = texts.iter().map(|f| f.vector.clone()).collect();
    let s = mixed_similarity_matrix_with(&image_vecs, &text_vecs, kind).map_err(data)?;
    let image_labels: Vec<&str> = images.iter().map(LabeledFeature::label).collect();
    let text_labels: Vec<&str> = texts.iter().map(LabeledFeature::label).collect();
    let gt = GroundTruth::from_identities(&text_labels, &image_labels).map_err(data)?;
    let metrics = evaluate(&s, &gt, ks).map_err(data)?;
    let v2t = contrastive_loss_v2t(&s, tau).map_err(data)?;
    let t2v = contrastive_loss_t2v(&s, tau).map_err(data)?;
    print_json(&json!({
        "n": s.n(),
        "tau": tau,
        "loss_v2t": v2t,
        "loss_t2v": t2v,
        "loss": v2t + t2v,
        "rank": metrics.rank,
        "map": metrics.map,
    }));
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Augment { no_resume, limit, .. } => {
            let config = load_config(&cli.overrides)?;
            let gateways = pipeline::build_gateways(&config);
            let options = RunOptions {
                limit,
                resume: !no_resume,
            };
            match pipeline::run_augment(&config, &gateways, &options) {
                Ok(run) => {
                    log::info!("processed {} records", run.processed);
                    print_json(&run.report);
                    Ok(())
                }
                Err(PipelineError::Aborted { message, report }) => {
                    print_json(&report);
                    Err(PipelineError::Aborted { message, report })
                }
                Err(e) => Err(e),
            }
        }
        Command::Sample => {
            let config = load_config(&cli.overrides)?;
            for path in pipeline::run_sample(&config)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Report => {
            let config = load_config(&cli.overrides)?;
            print_json(&pipeline::run_report(&config.cache_path)?);
            Ok(())
        }
        Command::Validate => {
            let config = load_config(&cli.overrides)?;
            let (_, report) = pipeline::load_corpus(&config)?;
            print_json(&report);
            if report.is_clean() {
                Ok(())
            } else {
                Err(PipelineError::Data("corpus failed validation".into()))
            }
        }
        Command::Eval {
            images,
            texts,
            tau,
            k,
            similarity,
        } => eval(&images, &texts, tau, &k, similarity),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
