use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use spse::app::commands;
use spse::app::RunConfig;
use spse::synth::dataset::Split;
use spse::train::Stage;
use spse::{Error, Result};

#[derive(Parser)]
#[command(
    name = "spse",
    version,
    about = "SNR-progressive speech enhancement with harmonic compensation"
)]
struct Cli {
    /// TOML run configuration; unspecified keys take the full-scale defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Pl,
    Pitch,
    Hc,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Pl => Stage::Pl,
            StageArg::Pitch => Stage::Pitch,
            StageArg::Hc => Stage::Hc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize mixtures, progressive targets and pitch labels.
    Synth {
        /// JSONL manifest; relative paths resolve against its directory.
        #[arg(long, conflicts_with = "toy", required_unless_present = "toy")]
        manifest: Option<PathBuf>,
        /// Generate this many vowel utterances in noise instead of reading a manifest.
        #[arg(long)]
        toy: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one stage on the train split of a synthesized dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        stage: StageArg,
        /// Checkpoint to continue from; required for the pitch and hc stages.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance a WAV file or every WAV file of a directory.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also write every progressive output and the decoded f0 track.
        #[arg(long)]
        dump_intermediates: bool,
    },
    /// Score enhanced files against a synthesized dataset.
    Eval {
        #[arg(long)]
        enhanced: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "spse")]
        system: String,
    },
    /// Render a log-magnitude spectrogram of a WAV file to PNG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate the full system and each single-component ablation.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a complete configuration file.
    Config {
        /// The desk-scale preset instead of the full-scale defaults.
        #[arg(long)]
        toy: bool,
    },
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.deterministic |= cli.deterministic;
    match cli.command {
        Command::Synth { manifest, toy, out } => {
            let report = match (manifest, toy) {
                (Some(m), _) => commands::synth(&m, &out, &cfg)?,
                (None, Some(n)) => commands::synth_toy(n, &out, &cfg)?,
                (None, None) => {
                    return Err(Error::InvalidConfig(
                        "either --manifest or --toy is required".into(),
                    ))
                }
            };
            eprintln!(
                "wrote {} items, {} failed",
                report.written.len(),
                report.errors.len()
            );
        }
        Command::Train {
            data,
            stage,
            from,
            out,
        } => {
            let ckpt = commands::train(&data, stage.into(), from.as_deref(), &out, &cfg, true)?;
            emit(&format!("{}\n", ckpt.display()));
        }
        Command::Enhance {
            input,
            checkpoint,
            output,
            dump_intermediates,
        } => {
            for p in commands::enhance(&input, &checkpoint, &output, dump_intermediates)? {
                emit(&format!("{}\n", p.display()));
            }
        }
        Command::Eval {
            enhanced,
            dataset,
            split,
            out,
            system,
        } => {
            let split = match split {
                SplitArg::Train => Some(Split::Train),
                SplitArg::Test => Some(Split::Test),
                SplitArg::All => None,
            };
            let outcome = commands::eval(&enhanced, &dataset, split, &out, &system, &cfg)?;
            for (id, why) in &outcome.skipped {
                eprintln!("skipped {id}: {why}");
            }
            emit(&std::fs::read_to_string(&out)?);
        }
        Command::Ablate { data, out } => {
            commands::ablate(&data, &out, &cfg, true)?;
            emit(&std::fs::read_to_string(out.join("report.tsv"))?);
        }
        Command::Plot { input, out } => commands::plot(&input, &out, &cfg)?,
        Command::Config { toy } => emit(
            &if toy {
                RunConfig {
                    seed: cfg.seed,
                    ..RunConfig::toy()
                }
            } else {
                cfg
            }
            .to_toml(),
        ),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
