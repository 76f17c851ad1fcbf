mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use syllabion_core::config::describe_keys;

/// Speaker-invariant syllabic units from speech: perturbation, BYOL-style
/// fine-tuning, min-cut segmentation, two-stage clustering and evaluation.
#[derive(Debug, Parser)]
#[command(name = "syllabion", version)]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true, env = "SYLLABION_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Base defaults the config file and overrides apply on top of.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,

    /// Override one configuration value, e.g. `--set clusterer.k1=256`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Output directory (defaults to `paths.out_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Source {
    /// JSON-lines manifest (defaults to `paths.manifest`).
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Student checkpoint directory (defaults to `paths.checkpoint`).
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,
    /// Encoder layer (defaults to `eval.layer`).
    #[arg(long)]
    pub layer: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Reference-scale model and clustering.
    Full,
    /// 256/64 clusters and a 4-layer, 256-wide encoder.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Feature tensors built from planted prototypes.
    Planted,
    /// Synthetic consonant-vowel speech.
    Speech,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply a random speaker perturbation to one WAV file.
    Perturb {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute log-mel features for every utterance and write a feature manifest.
    Featurize {
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
    },
    /// Fine-tune the encoder with the student/teacher objective.
    Train {
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
        /// Start from this student checkpoint instead of a fresh encoder.
        #[arg(long, value_name = "DIR")]
        init: Option<PathBuf>,
    },
    /// Segment every utterance into syllable-like spans.
    Segment {
        #[command(flatten)]
        src: Source,
    },
    /// Fit the two-stage codebook on pooled segment features.
    Cluster {
        #[command(flatten)]
        src: Source,
        /// Segments from `segment`; recomputed when omitted.
        #[arg(long, value_name = "FILE")]
        segments: Option<PathBuf>,
    },
    /// Map segments to units with a fitted codebook.
    Assign {
        #[command(flatten)]
        src: Source,
        #[arg(long, value_name = "DIR")]
        codebook: PathBuf,
        #[arg(long, value_name = "FILE")]
        segments: Option<PathBuf>,
    },
    /// Score predicted boundaries against reference alignments.
    EvalBoundaries {
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        segments: PathBuf,
    },
    /// Purity and mutual information of units against reference syllables.
    EvalUnits {
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        units: PathBuf,
        /// Frame rate of the unit token indices.
        #[arg(long, default_value_t = 50.0)]
        frame_rate: f64,
    },
    /// Linear speaker probe on pooled features, plus speaker/unit NMI.
    EvalSpeaker {
        #[command(flatten)]
        src: Source,
        #[arg(long, value_name = "FILE")]
        units: Option<PathBuf>,
    },
    /// Segment, cluster and score each listed layer; writes `layer_sweep.csv`.
    LayerSweep {
        #[command(flatten)]
        src: Source,
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<usize>,
    },
    /// Self-similarity image and boundary overlay for one utterance.
    PlotSsm {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        utterance: String,
    },
    /// Every stage end to end; writes `report.json`.
    Run {
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
        /// Fine-tune before segmenting.
        #[arg(long)]
        train: bool,
    },
    /// Generate a small synthetic corpus with a manifest.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Planted)]
        kind: SynthKind,
        #[arg(long, default_value_t = 20)]
        utterances: usize,
        #[arg(long, default_value_t = 4)]
        speakers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the effective configuration as JSON.
    Config,
}

fn keys_help() -> String {
    let mut s = String::from("Configuration keys (set with --set KEY=VALUE):\n");
    for line in describe_keys() {
        s.push_str("  ");
        s.push_str(&line);
        s.push('\n');
    }
    s
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(keys_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let name = cli.command.name();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{name}]: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain on one line. Core errors already print their cause, so a
/// cause whose text ends the message so far is not repeated.
fn one_line(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.ends_with(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg.replace('\n', " ")
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Perturb { .. } => "perturb",
            Command::Featurize { .. } => "featurize",
            Command::Train { .. } => "train",
            Command::Segment { .. } => "segment",
            Command::Cluster { .. } => "cluster",
            Command::Assign { .. } => "assign",
            Command::EvalBoundaries { .. } => "eval-boundaries",
            Command::EvalUnits { .. } => "eval-units",
            Command::EvalSpeaker { .. } => "eval-speaker",
            Command::LayerSweep { .. } => "layer-sweep",
            Command::PlotSsm { .. } => "plot-ssm",
            Command::Run { .. } => "run",
            Command::Synth { .. } => "synth",
            Command::Config => "config",
        }
    }
}
