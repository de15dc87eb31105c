use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noisekws::adapt::AdaptConfig;
use noisekws::bench::{
    cmd_adapt, cmd_evaluate, cmd_experiment, cmd_prepare, cmd_pretrain, cmd_synth, parse_conditions, BenchError,
    ExperimentConfig, Figure, ModelKind, Profile, Workspace,
};
use noisekws::dataset::synth::SynthConfig;
use noisekws::dataset::{NoiseCondition, NoiseSource};

#[derive(Parser)]
#[command(name = "noisekws", version, about = "Noise-resilient keyword spotting benchmark")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file whose keys override the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use this single seed for data splits, training and the experiment seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "desk")]
    profile: Profile,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root of the speech-commands layout.
    #[arg(long, global = true, env = "NOISEKWS_DATA_ROOT")]
    data_root: Option<PathBuf>,
    /// Folder with one `<source>.wav` per recorded noise source.
    #[arg(long, global = true)]
    noise_dir: Option<PathBuf>,
    /// Cache for trained models and default outputs.
    #[arg(long, global = true, default_value = "work")]
    work_dir: PathBuf,
    /// Read the benchmark from this manifest instead of rebuilding it.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the benchmark and write its split/label manifest.
    Prepare,
    /// Train a baseline or noise-aware model.
    Pretrain {
        #[arg(long, default_value = "baseline")]
        kind: String,
        /// Extra noisy fraction for noise-aware models (0.2, 0.4, 0.6, 0.8 or 1.0).
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Fine-tune the last layer of a model to one noise condition.
    Adapt {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        source: NoiseSource,
        #[arg(long, allow_hyphen_values = true)]
        snr: i32,
        #[arg(long, default_value_t = 1)]
        shots: usize,
        #[arg(long, default_value_t = 1)]
        epochs: usize,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Test accuracy of a model on clean and noisy test sets.
    Evaluate {
        #[arg(long)]
        weights: PathBuf,
        /// Comma-separated `clean`, `source:snr` or `source` (all grid SNRs).
        #[arg(long, default_value = "clean", allow_hyphen_values = true)]
        conditions: String,
    },
    /// Run the grid behind one results figure.
    Experiment {
        #[arg(long)]
        figure: String,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Adaptation SNRs for fig6.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snrs: Option<Vec<i32>>,
    },
    /// Write a small synthetic corpus in the speech-commands layout.
    Synth {
        #[arg(long)]
        noise_out: Option<PathBuf>,
        #[arg(long, default_value_t = SynthConfig::default().keyword_clips)]
        keyword_clips: usize,
        #[arg(long, default_value_t = SynthConfig::default().other_clips)]
        other_clips: usize,
    },
}

fn workspace(c: &Common) -> Result<Workspace, BenchError> {
    let mut cfg = ExperimentConfig::load(c.profile, c.config.as_deref())?;
    if let Some(seed) = c.seed {
        cfg.reseed(seed);
    }
    Ok(Workspace {
        cfg,
        data_root: c.data_root.clone(),
        noise_dir: c.noise_dir.clone(),
        work_dir: c.work_dir.clone(),
        manifest: c.manifest.clone(),
        quiet: c.quiet,
    })
}

fn need_out(c: &Common) -> Result<PathBuf, BenchError> {
    c.out.clone().ok_or_else(|| BenchError::Usage("--out is required".into()))
}

fn run(cli: Cli) -> Result<(), BenchError> {
    let c = &cli.common;
    match cli.command {
        Command::Prepare => {
            let path = cmd_prepare(&workspace(c)?, c.out.as_deref())?;
            println!("{}", path.display());
        }
        Command::Pretrain { kind, fraction } => {
            let kind = ModelKind::parse(&kind, fraction)?;
            let path = cmd_pretrain(&workspace(c)?, kind, c.out.as_deref())?;
            println!("{}", path.display());
        }
        Command::Adapt { weights, source, snr, shots, epochs, lr } => {
            let cond = NoiseCondition::new(source, snr)?;
            let ws = workspace(c)?;
            let cfg = AdaptConfig { shots_per_class: shots, epochs, lr: lr.unwrap_or(ws.cfg.adapt_lr) };
            cfg.validate().map_err(|e| BenchError::Usage(e.to_string()))?;
            let seed = c.seed.unwrap_or(0);
            let path = cmd_adapt(&ws, &weights, cond, cfg, seed, &need_out(c)?)?;
            println!("{}", path.display());
        }
        Command::Evaluate { weights, conditions } => {
            let targets = parse_conditions(&conditions)?;
            let report = cmd_evaluate(&workspace(c)?, &weights, &targets, c.out.as_deref())?;
            if c.out.is_none() {
                report.write_csv(std::io::stdout().lock())?;
            }
        }
        Command::Experiment { figure, seeds, snrs } => {
            let figure = Figure::parse(&figure)?;
            let mut ws = workspace(c)?;
            if let Some(seeds) = seeds {
                ws.cfg.seeds = seeds;
            }
            if let Some(snrs) = snrs {
                ws.cfg.fig6_snrs = snrs;
            }
            ws.cfg.validate()?;
            let out = c.out.clone().unwrap_or_else(|| ws.work_dir.join(format!("{}.csv", figure.id())));
            let table = cmd_experiment(&ws, figure, Some(&out))?;
            if !c.quiet {
                eprintln!("{} rows → {}", table.rows.len(), out.display());
            }
        }
        Command::Synth { noise_out, keyword_clips, other_clips } => {
            let root = c
                .data_root
                .clone()
                .ok_or_else(|| BenchError::Usage("synth needs --data-root for the corpus".into()))?;
            let cfg = SynthConfig {
                seed: c.seed.unwrap_or(SynthConfig::default().seed),
                keyword_clips,
                other_clips,
                ..SynthConfig::default()
            };
            let noise = noise_out.or_else(|| c.noise_dir.clone());
            let s = cmd_synth(&root, noise.as_deref(), &cfg)?;
            println!("{} utterances, {} background files in {}", s.utterances, s.background_files, s.root.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                BenchError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
