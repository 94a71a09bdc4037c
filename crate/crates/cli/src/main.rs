use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::{error, info};
use soundscape_cli::commands::{FeatureKind, FeatureParams};
use soundscape_cli::{
    cmd_case_study, cmd_evaluate, cmd_features, cmd_indices, cmd_mix, cmd_tune, parse_counts, Outcome, RunConfig,
};
use soundscape_core::eval::{LabelFilter, Objective};

#[derive(Parser)]
#[command(name = "soundscape", version, about = "Soundscape analytics toolkit")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (or file, for single-output commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ACI, ADI and NDSI for every WAV in a directory.
    Indices {
        audio_dir: PathBuf,
        /// Append per-file processing seconds (makes output non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Render a labelled synthetic corpus.
    Mix {
        /// CSV with `path,class` rows.
        pool: PathBuf,
        /// Clips per label combination, e.g. `A=10,BG=5,S=3`.
        #[arg(long)]
        counts: String,
    },
    /// Decisions, metrics, curves and stratified errors.
    Evaluate { scores: PathBuf, annotations: PathBuf },
    /// Tune per-class thresholds and emit a config.
    Tune {
        scores: PathBuf,
        annotations: PathBuf,
        /// f1 (PR curve) or youden (ROC curve); default from config.
        #[arg(long)]
        objective: Option<String>,
        /// Keep raw midpoint thresholds instead of snapping to 0.001.
        #[arg(long)]
        no_snap: bool,
    },
    /// Correlate indices with species counts under label filters.
    CaseStudy {
        indices: PathBuf,
        diversity: PathBuf,
        /// Ground-truth labels (annotation or decisions CSV).
        labels: PathBuf,
        /// Model decisions to filter by as well.
        #[arg(long)]
        model_labels: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "all,B,AB,BG")]
        filters: Vec<String>,
    },
    /// Dump a magnitude or log-mel spectrogram of one WAV file.
    Features {
        wav: PathBuf,
        #[arg(long, value_enum, default_value = "log-mel")]
        kind: FeatureKind,
        #[arg(long, default_value_t = 1024)]
        window: usize,
        #[arg(long, default_value_t = 320)]
        hop: usize,
        #[arg(long, default_value_t = 64)]
        mels: usize,
        /// Resample before analysis.
        #[arg(long)]
        rate: Option<u32>,
    },
}

fn out_dir(cli_out: &Option<PathBuf>) -> PathBuf {
    cli_out.clone().unwrap_or_else(|| PathBuf::from("soundscape-out"))
}

fn write_target(out: &Option<PathBuf>, name: &str) -> anyhow::Result<Box<dyn std::io::Write>> {
    Ok(match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            info!("writing {}", path.display());
            Box::new(std::io::BufWriter::new(std::fs::File::create(&path)?))
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring worker threads")?;
    }
    eprintln!("seed: {}", cfg.seed);

    match cli.command {
        Command::Indices { audio_dir, timing } => {
            let mut w = write_target(&cli.out, "indices.csv")?;
            let outcome = cmd_indices(&audio_dir, &cfg.indices, timing, &mut w)?;
            w.flush()?;
            Ok(outcome)
        }
        Command::Mix { pool, counts } => {
            let counts = parse_counts(&counts)?;
            let rows = cmd_mix(&pool, &counts, cfg.seed, &cfg.mix, &out_dir(&cli.out))?;
            Ok(Outcome {
                items: rows.len(),
                failures: 0,
            })
        }
        Command::Evaluate { scores, annotations } => {
            let dir = out_dir(&cli.out);
            let out = cmd_evaluate(&scores, &annotations, &cfg, &dir)?;
            print!("{}", out.report.to_table());
            info!("reports written to {}", dir.display());
            Ok(Outcome {
                items: out.report.n_recordings,
                failures: 0,
            })
        }
        Command::Tune {
            scores,
            annotations,
            objective,
            no_snap,
        } => {
            let objective = match objective {
                Some(o) => o.parse::<Objective>()?,
                None => cfg.tune.objective,
            };
            let snap = cfg.tune.snap && !no_snap;
            let path = match &cli.out {
                Some(p) if p.extension().is_some_and(|e| e == "toml") => p.clone(),
                other => out_dir(other).join("tuned.toml"),
            };
            let tuned = cmd_tune(&scores, &annotations, &cfg, objective, snap, &path)?;
            println!(
                "thresholds: anthropophony {} biophony {} geophony {}",
                tuned.thresholds[0], tuned.thresholds[1], tuned.thresholds[2]
            );
            info!("tuned config written to {}", path.display());
            Ok(Outcome { items: 3, failures: 0 })
        }
        Command::CaseStudy {
            indices,
            diversity,
            labels,
            model_labels,
            filters,
        } => {
            let filters: Vec<LabelFilter> = filters
                .iter()
                .map(|f| f.parse())
                .collect::<Result<_, _>>()?;
            let mut w = write_target(&cli.out, "correlations.csv")?;
            let outcome = cmd_case_study(&indices, &diversity, &labels, model_labels.as_deref(), &filters, &mut w)?;
            w.flush()?;
            Ok(outcome)
        }
        Command::Features {
            wav,
            kind,
            window,
            hop,
            mels,
            rate,
        } => {
            let params = FeatureParams {
                kind,
                window,
                hop,
                mels,
                rate_hz: rate,
            };
            let path = match &cli.out {
                Some(p) if p.extension().is_some() => p.clone(),
                other => {
                    let stem = wav.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    out_dir(other).join(Path::new(&stem).with_extension("sspg"))
                }
            };
            let (frames, bins) = cmd_features(&wav, &params, &path)?;
            println!("{}: {frames} x {bins}", path.display());
            Ok(Outcome { items: 1, failures: 0 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) if o.failures == 0 => ExitCode::SUCCESS,
        Ok(o) => {
            error!("{} of {} items failed", o.failures, o.items);
            ExitCode::from(1)
        }
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
