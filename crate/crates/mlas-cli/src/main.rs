//! Command-line orchestration: corpus generation, training, decoding,
//! evaluation, probes and attention inspection.
//!
//! Exit codes: 0 success; 2 configuration/argument errors; 3 I/O or
//! malformed-file failures; 4 training divergence; 5 checkpoint/registry
//! fingerprint mismatch; 6 model-variant mismatch; 1 internal errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "mlas",
    about = "Multilingual grapheme attention seq2seq speech recognition testbed",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus (registry, manifest, feature files).
    GenCorpus {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a model variant (or the monolingual suite).
    Train {
        #[arg(long)]
        config: PathBuf,
        /// joint | mtl | cond-enc | cond-dec | cond-enc-dec | monolingual
        #[arg(long)]
        variant: String,
        /// For --variant monolingual: a language id or "all".
        #[arg(long, default_value = "all")]
        language: String,
        /// Override the multitask loss weight.
        #[arg(long)]
        lambda: Option<f64>,
        /// Override the training step budget.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Resume from the variant's last checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Decode the test split and write error-rate and confusion reports.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Override the decode beam width.
        #[arg(long)]
        beam_width: Option<usize>,
        /// Comma-separated beam widths to sweep (one WER row per width).
        #[arg(long)]
        beam_sweep: Option<String>,
        /// Also evaluate ckpt-monolingual-<lang>.bin checkpoints and print
        /// a side-by-side per-language comparison table.
        #[arg(long)]
        compare_monolingual: bool,
    },
    /// Run a behavioral probe against a trained checkpoint.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// code-switch | mismatched-id
        #[arg(long)]
        kind: String,
        /// Language pair, e.g. "alpha,beta".
        #[arg(long, default_value = "alpha,beta")]
        pair: String,
        /// Number of probe utterances.
        #[arg(long, default_value_t = 40)]
        count: usize,
        /// Silent gap for code-switch probes, in milliseconds.
        #[arg(long, default_value_t = 50.0)]
        gap_ms: f64,
    },
    /// Dump the attention matrix for one utterance.
    Inspect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Utterance id from the corpus manifest.
        #[arg(long)]
        utterance: String,
        /// Output path (default: <output_dir>/inspect/attention-<id>.tsv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code_for(err: &mlas::Error) -> u8 {
    use mlas::Error;
    match err {
        Error::InvalidConfig(_)
        | Error::InvalidArgument(_)
        | Error::InvalidSpec(_)
        | Error::Registry(_)
        | Error::Oov { .. } => 2,
        Error::Io(_) | Error::Format(_) => 3,
        Error::Diverged { .. } => 4,
        Error::Fingerprint { .. } => 5,
        Error::Config(_) => 6,
        _ => 1,
    }
}

/// Guards an output directory against concurrent invocations.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &std::path::Path) -> Result<DirLock, String> {
        std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        let path = dir.join(".mlas-lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(_) => Err(format!(
                "output directory {} is locked by another invocation (delete {} if stale)",
                dir.display(),
                path.display()
            )),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, u8> {
    ExperimentConfig::load(path).map_err(|msg| {
        eprintln!("error: {msg}");
        2
    })
}

fn run() -> Result<(), u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenCorpus { config } => {
            let cfg = load_config(&config)?;
            let _lock = lock(&cfg)?;
            commands::gen_corpus(&cfg).map_err(report)
        }
        Command::Train {
            config,
            variant,
            language,
            lambda,
            max_steps,
            resume,
        } => {
            let cfg = load_config(&config)?;
            let _lock = lock(&cfg)?;
            commands::train(&cfg, &variant, &language, lambda, max_steps, resume).map_err(report)
        }
        Command::Eval {
            config,
            checkpoint,
            beam_width,
            beam_sweep,
            compare_monolingual,
        } => {
            let cfg = load_config(&config)?;
            let _lock = lock(&cfg)?;
            let sweep = match beam_sweep {
                Some(s) => Some(
                    s.split(',')
                        .map(|w| w.trim().parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| {
                            eprintln!("error: bad --beam-sweep: {e}");
                            2u8
                        })?,
                ),
                None => None,
            };
            commands::eval(&cfg, &checkpoint, beam_width, sweep, compare_monolingual)
                .map_err(report)
        }
        Command::Probe {
            config,
            checkpoint,
            kind,
            pair,
            count,
            gap_ms,
        } => {
            let cfg = load_config(&config)?;
            let _lock = lock(&cfg)?;
            let (a, b) = pair.split_once(',').ok_or_else(|| {
                eprintln!("error: --pair expects \"first,second\"");
                2u8
            })?;
            commands::probe(&cfg, &checkpoint, &kind, (a.trim(), b.trim()), count, gap_ms)
                .map_err(report)
        }
        Command::Inspect {
            config,
            checkpoint,
            utterance,
            out,
        } => {
            let cfg = load_config(&config)?;
            let _lock = lock(&cfg)?;
            commands::inspect(&cfg, &checkpoint, &utterance, out.as_deref()).map_err(report)
        }
    }
}

fn lock(cfg: &ExperimentConfig) -> Result<DirLock, u8> {
    DirLock::acquire(&cfg.output_dir).map_err(|msg| {
        eprintln!("error: {msg}");
        3
    })
}

fn report(err: mlas::Error) -> u8 {
    eprintln!("error: {err}");
    exit_code_for(&err)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
