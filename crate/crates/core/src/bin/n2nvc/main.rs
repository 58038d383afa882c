//! Command-line front end for the noisy-to-noisy voice conversion toolkit:
//! corpus mixing, separation, conversion, superimposition, evaluation, and a
//! VQ bottleneck demo.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;

#[derive(Parser)]
#[command(
    name = "n2nvc",
    version,
    about = "Noisy-to-noisy voice conversion toolkit: mix, separate, convert, superimpose, evaluate"
)]
struct Cli {
    /// Flat key=value defaults file; explicit flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mix clean speech with noise clips at exact SNRs, writing noisy WAVs
    /// plus a JSON-lines manifest that replays bit-exactly
    Mix(MixArgs),
    /// Split noisy utterances into speech estimates and residual backgrounds
    Separate(SeparateArgs),
    /// Pass speech estimates through a voice converter (identity or an
    /// external command)
    Convert(ConvertArgs),
    /// Add separated backgrounds back onto converted speech (or drop them)
    Superimpose(SuperimposeArgs),
    /// Score estimates against a mix manifest and report per-SNR tables
    Eval(EvalArgs),
    /// Run the VQ bottleneck on synthetic clusters and print the
    /// convergence trace
    VqDemo(VqDemoArgs),
}

#[derive(Args)]
struct MixArgs {
    /// Directory of clean speech WAVs
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Directory of noise WAVs
    #[arg(long)]
    noise: Option<PathBuf>,
    /// Output directory for noisy WAVs and manifest.jsonl
    #[arg(long)]
    out: Option<PathBuf>,
    /// SNR levels: "7,11,15,19" mixes every utterance at every level;
    /// "5:20" draws one uniform SNR per utterance
    #[arg(long)]
    snr: Option<String>,
    /// Base seed for all random choices (default: $N2N_SEED, then 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
    /// Lock the background pattern to the utterance text id, so the same
    /// sentence spoken by different speakers gets the same noise
    #[arg(long)]
    lock_pattern: bool,
    /// Separator between speaker prefix and text id in file stems
    #[arg(long, default_value = "_")]
    pattern_split: char,
}

#[derive(Args)]
struct SeparateArgs {
    /// Directory of noisy WAVs
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output directory for speech estimates
    #[arg(long)]
    out_speech: Option<PathBuf>,
    /// Output directory for backgrounds (default: beside the speech
    /// estimates, with a .bg.wav suffix)
    #[arg(long)]
    out_bg: Option<PathBuf>,
    /// Denoiser: identity, zero, specsub, or irm
    #[arg(long)]
    denoiser: Option<String>,
    /// Directory of aligned clean references (required by the irm oracle)
    #[arg(long)]
    clean_ref: Option<PathBuf>,
    /// STFT window in ms
    #[arg(long)]
    stft_window_ms: Option<f64>,
    /// STFT hop in ms
    #[arg(long)]
    stft_hop_ms: Option<f64>,
    /// FFT length (power of two)
    #[arg(long)]
    stft_fft: Option<usize>,
    /// Leading noise-profile region for specsub, in ms
    #[arg(long)]
    specsub_profile_ms: Option<f64>,
    /// Oversubtraction factor for specsub
    #[arg(long)]
    specsub_oversubtraction: Option<f64>,
    /// Spectral floor for specsub, as a fraction of the noisy magnitude
    #[arg(long)]
    specsub_floor: Option<f64>,
    /// Dump each noisy spectrogram to this directory as a flat binary
    #[arg(long)]
    dump_spectra: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Directory of speech estimates
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output directory for converted speech
    #[arg(long)]
    out: Option<PathBuf>,
    /// Converter: identity or external
    #[arg(long)]
    converter: Option<String>,
    /// External command template; {in} and {out} are replaced with the
    /// input and output paths (appended if absent). Contract: exit 0,
    /// output file exists, same sample rate as the input.
    #[arg(long)]
    cmd: Option<String>,
    /// Scale each input to this RMS level in dBFS before conversion
    /// (off by default)
    #[arg(long)]
    normalize_rms_db: Option<f64>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SuperimposeArgs {
    /// Directory of converted speech WAVs
    #[arg(long)]
    converted: Option<PathBuf>,
    /// Directory of background WAVs ({utt}.bg.wav, falling back to
    /// {utt}.wav)
    #[arg(long)]
    bg: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// add or drop
    #[arg(long)]
    mode: Option<String>,
    /// Worker threads
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Mix manifest (JSON-lines)
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory of estimate WAVs
    #[arg(long)]
    est: Option<PathBuf>,
    /// Comma-separated metric list: si-sdr,sd-sdr,sar,mcd,stoi
    #[arg(long)]
    metrics: Option<String>,
    /// Score estimates of the speech or of the background
    #[arg(long)]
    target: Option<String>,
    /// Cepstral order for MCD
    #[arg(long)]
    mcd_coeffs: Option<usize>,
    /// Write the machine-readable report here
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Write the aligned table here (it always goes to stdout too)
    #[arg(long)]
    out_table: Option<PathBuf>,
}

#[derive(Args)]
struct VqDemoArgs {
    /// Number of synthetic clusters (and codewords)
    #[arg(long)]
    clusters: Option<usize>,
    /// Optimization steps
    #[arg(long)]
    steps: Option<usize>,
    /// Seed (default: $N2N_SEED, then 0)
    #[arg(long)]
    seed: Option<u64>,
    /// Save the trained codebook to this file
    #[arg(long)]
    save_codebook: Option<PathBuf>,
}

/// Runtime failures exit 1, invocation errors exit 2 (matching clap).
pub enum CmdError {
    Usage(String),
    Runtime(String),
}

impl CmdError {
    fn report(self) -> ExitCode {
        match self {
            CmdError::Usage(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
            CmdError::Runtime(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(1)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => match Config::load(path) {
            Ok(c) => c,
            Err(e) => return CmdError::Usage(e).report(),
        },
        None => Config::default(),
    };

    let outcome = match cli.command {
        Command::Mix(args) => commands::mix(args, &cfg),
        Command::Separate(args) => commands::separate_cmd(args, &cfg),
        Command::Convert(args) => commands::convert(args, &cfg),
        Command::Superimpose(args) => commands::superimpose_cmd(args, &cfg),
        Command::Eval(args) => commands::eval(args, &cfg),
        Command::VqDemo(args) => commands::vq_demo(args, &cfg),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        // partial failures: some files were flagged but the run continued
        Ok(false) => ExitCode::from(1),
        Err(e) => e.report(),
    }
}
