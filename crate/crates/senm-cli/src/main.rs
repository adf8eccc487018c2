//! Command-line front end. Each subcommand maps to one stage; `pipeline`
//! chains them all. Exit code 0 on success, 2 for configuration problems,
//! 3 for broken input data. Error lines are prefixed with the stage that
//! raised them.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use senm::config::PipelineConfig;
use senm::error::Error;
use senm::pipeline::{
    run_analyze, run_circles, run_ingest, run_preprocess, run_sign, run_topics,
};
use senm::signing::ProviderConfig;
use senm::simgen::{run_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "senm",
    version,
    about = "Reconstruct signed ego network models from interaction timelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// Settings file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sentiment provider: precomputed, lexicon, or shifted.
    #[arg(long)]
    provider: Option<String>,
    /// Second provider whose signs are reported alongside the first.
    #[arg(long)]
    drift_provider: Option<String>,
    /// Negative share above which a relationship is negative.
    #[arg(long)]
    sign_threshold: Option<f64>,
    /// Quantile of pairwise gaps used as the clustering bandwidth.
    #[arg(long)]
    bandwidth_quantile: Option<f64>,
    /// Circle count the per-circle reports condition on.
    #[arg(long)]
    circles_filter: Option<usize>,
    /// Average negativity per ego before pooling.
    #[arg(long)]
    per_ego_averaging: bool,
    /// Seed for randomized providers.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw timelines into per-dataset stage files.
    Ingest {
        /// Dataset directory or manifest file.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for stages and reports.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Drop non-person and low-activity egos, aggregate relationships.
    Preprocess {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Cluster each ego's active network into circles.
    Circles {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Label interactions and sign each relationship.
    Sign {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Write the negativity, circle, and location tables.
    Analyze {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Rank hashtags and words, correlate topics with negativity.
    Topics {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Generate synthetic datasets with ground-truth manifests.
    Simulate {
        /// Scenario description (TOML).
        #[arg(long)]
        scenario: PathBuf,
        /// Directory the datasets are written into.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run ingest, preprocess, circles, sign, analyze, and topics in order.
    Pipeline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
}

struct StageError {
    stage: &'static str,
    source: Error,
}

type StageResult<T> = Result<T, StageError>;

fn tag<T>(stage: &'static str, result: senm::error::Result<T>) -> StageResult<T> {
    result.map_err(|source| StageError { stage, source })
}

fn load_config(stage: &'static str, common: &CommonOpts) -> StageResult<PipelineConfig> {
    let mut config = match &common.config {
        Some(path) => tag(stage, PipelineConfig::from_path(path))?,
        None => PipelineConfig::default(),
    };
    if let Some(name) = &common.provider {
        config.provider.name = name.clone();
    }
    if let Some(name) = &common.drift_provider {
        match &mut config.drift_provider {
            Some(drift) => drift.name = name.clone(),
            None => config.drift_provider = Some(ProviderConfig::named(name)),
        }
    }
    if let Some(threshold) = common.sign_threshold {
        config.sign_threshold = threshold;
    }
    if let Some(quantile) = common.bandwidth_quantile {
        config.circles.bandwidth_quantile = quantile;
    }
    if let Some(filter) = common.circles_filter {
        config.analysis.circles_filter = filter;
    }
    if common.per_ego_averaging {
        config.analysis.per_ego_averaging = true;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
        config.provider.shift_seed = seed;
        if let Some(drift) = &mut config.drift_provider {
            drift.shift_seed = seed;
        }
    }
    tag(stage, config.validate())?;
    Ok(config)
}

fn configure_threads(common: &CommonOpts) {
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("thread pool is configured once, before any parallel work");
    }
}

fn report(stage: &str, notes: &[String]) {
    for note in notes {
        println!("{stage}: {note}");
    }
}

fn run(cli: Cli) -> StageResult<()> {
    match cli.command {
        Command::Ingest { data, out, common } => {
            configure_threads(&common);
            load_config("ingest", &common)?;
            let notes = tag("ingest", run_ingest(&data, &out))?;
            report("ingest", &notes);
        }
        Command::Preprocess { out, common } => {
            configure_threads(&common);
            let config = load_config("preprocess", &common)?;
            let notes = tag("preprocess", run_preprocess(&out, &config))?;
            report("preprocess", &notes);
        }
        Command::Circles { out, common } => {
            configure_threads(&common);
            let config = load_config("circles", &common)?;
            let notes = tag("circles", run_circles(&out, &config))?;
            report("circles", &notes);
        }
        Command::Sign { out, common } => {
            configure_threads(&common);
            let config = load_config("sign", &common)?;
            let notes = tag("sign", run_sign(&out, &config))?;
            report("sign", &notes);
        }
        Command::Analyze { out, common } => {
            configure_threads(&common);
            let config = load_config("analyze", &common)?;
            let notes = tag("analyze", run_analyze(&out, &config))?;
            report("analyze", &notes);
        }
        Command::Topics { out, common } => {
            configure_threads(&common);
            let config = load_config("topics", &common)?;
            let notes = tag("topics", run_topics(&out, &config))?;
            report("topics", &notes);
        }
        Command::Simulate {
            scenario,
            out,
            common,
        } => {
            configure_threads(&common);
            let scenario = tag("simulate", ScenarioConfig::from_path(&scenario))?;
            let generated = tag("simulate", run_scenario(&scenario, &out))?;
            for dataset in &generated {
                println!(
                    "simulate: {}: {} egos written to {}",
                    dataset.name,
                    dataset.truth.ego_count,
                    dataset.dir.display()
                );
            }
        }
        Command::Pipeline { data, out, common } => {
            configure_threads(&common);
            let config = load_config("pipeline", &common)?;
            report("ingest", &tag("ingest", run_ingest(&data, &out))?);
            report("preprocess", &tag("preprocess", run_preprocess(&out, &config))?);
            report("circles", &tag("circles", run_circles(&out, &config))?);
            report("sign", &tag("sign", run_sign(&out, &config))?);
            report("analyze", &tag("analyze", run_analyze(&out, &config))?);
            report("topics", &tag("topics", run_topics(&out, &config))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(StageError { stage, source }) => {
            eprintln!("{stage}: {source}");
            if source.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
