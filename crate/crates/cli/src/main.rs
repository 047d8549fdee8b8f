mod commands;
mod error;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser)]
#[command(name = "nasalgan", version, about = "Train a categorical InfoWaveGAN on syllable audio and probe its latent space for nasality")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Clone)]
pub struct Common {
    /// Root seed; every random component derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// key=value file, e.g. a previous run's config.lock.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override any parameter as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labelled corpus of vowel + coda syllables.
    Synth {
        /// Tokens per class, e.g. VT=100,VN=100,V~T=100,V~N=100.
        #[arg(long)]
        counts: Option<String>,
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        sample_rate: Option<u32>,
        #[command(flatten)]
        common: Common,
    },
    /// Cut syllable tokens out of an aligned corpus.
    Extract {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Phone-class preset: english or french.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        len: Option<usize>,
        /// Per-class targets for a balanced manifest, e.g. VT=5570,VN=5570.
        #[arg(long)]
        balance: Option<String>,
        /// Restrict balancing to tokens with these vowels (comma-separated).
        #[arg(long)]
        vowels: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the nasality detector on a synthesized corpus.
    TrainDetector {
        #[arg(long)]
        data: Option<PathBuf>,
        /// four_way or dual_binary.
        #[arg(long)]
        mode: Option<String>,
        /// Synthesized corpus for held-out evaluation.
        #[arg(long)]
        held_out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the GAN; resumes when the output directory holds a checkpoint.
    TrainGan {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Only use these classes from the manifest.
        #[arg(long)]
        classes: Option<String>,
        /// Upper bound on generator steps.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        epochs: Option<f64>,
        #[arg(long)]
        n_phi: Option<usize>,
        #[arg(long)]
        n_z: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        checkpoint_every: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate clips and their latent codes from a trained GAN.
    Generate {
        #[arg(long)]
        gan: Option<PathBuf>,
        #[arg(short = 'n', long = "count")]
        count: Option<usize>,
        /// Write WAV files as well as codes.
        #[arg(long)]
        wav: Option<bool>,
        #[command(flatten)]
        common: Common,
    },
    /// Chi-square ranking and latent manipulation against detector verdicts.
    Probe {
        #[arg(long)]
        gan: Option<PathBuf>,
        #[arg(long)]
        detector: Option<PathBuf>,
        /// Clips in the labelled batch used for ranking.
        #[arg(short = 'n', long = "count")]
        count: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        include_phi: Option<bool>,
        /// z indices to sweep one at a time, e.g. 13,90.
        #[arg(long)]
        single: Option<String>,
        /// z index pairs to sweep jointly, e.g. 13:90,4:37.
        #[arg(long)]
        pair: Option<String>,
        /// Manipulation levels, e.g. -5,-4,-3,-2,-1,0,1,2,3,4,5.
        #[arg(long, allow_hyphen_values = true)]
        levels: Option<String>,
        #[arg(long)]
        n_base: Option<usize>,
        #[arg(long)]
        phi: Option<usize>,
        /// Archive the clips of single-variable sweeps.
        #[arg(long)]
        clips: Option<bool>,
        #[command(flatten)]
        common: Common,
    },
}

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn p(v: &Option<PathBuf>) -> Option<String> {
    v.as_ref().map(|p| p.display().to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    use commands::*;
    match cli.command {
        Command::Synth {
            counts,
            len,
            sample_rate,
            common,
        } => synth(
            &common,
            vec![("counts", counts), ("len", s(&len)), ("sample_rate", s(&sample_rate))],
        ),
        Command::Extract {
            corpus,
            preset,
            len,
            balance,
            vowels,
            common,
        } => extract(
            &common,
            vec![
                ("corpus", p(&corpus)),
                ("preset", preset),
                ("len", s(&len)),
                ("balance", balance),
                ("vowels", vowels),
            ],
        ),
        Command::TrainDetector {
            data,
            mode,
            held_out,
            epochs,
            common,
        } => train_detector(
            &common,
            vec![
                ("data", p(&data)),
                ("mode", mode),
                ("held_out", p(&held_out)),
                ("epochs", s(&epochs)),
            ],
        ),
        Command::TrainGan {
            data,
            classes,
            steps,
            epochs,
            n_phi,
            n_z,
            batch_size,
            lr,
            checkpoint_every,
            common,
        } => train_gan(
            &common,
            vec![
                ("data", p(&data)),
                ("classes", classes),
                ("max_gen_steps", s(&steps)),
                ("epochs", s(&epochs)),
                ("n_phi", s(&n_phi)),
                ("n_z", s(&n_z)),
                ("batch_size", s(&batch_size)),
                ("lr", s(&lr)),
                ("checkpoint_every", s(&checkpoint_every)),
            ],
        ),
        Command::Generate { gan, count, wav, common } => {
            generate(&common, vec![("gan", p(&gan)), ("n", s(&count)), ("wav", s(&wav))])
        }
        Command::Probe {
            gan,
            detector,
            count,
            top_k,
            include_phi,
            single,
            pair,
            levels,
            n_base,
            phi,
            clips,
            common,
        } => probe(
            &common,
            vec![
                ("gan", p(&gan)),
                ("detector", p(&detector)),
                ("n", s(&count)),
                ("top_k", s(&top_k)),
                ("include_phi", s(&include_phi)),
                ("single", single),
                ("pair", pair),
                ("levels", levels),
                ("n_base", s(&n_base)),
                ("phi", s(&phi)),
                ("clips", s(&clips)),
            ],
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nasalgan: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
