//! Command implementations behind the `fwgan` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use fwgan_core::features::{self, AnalysisConfig};
use fwgan_core::generator::{self, Generator, GeneratorConfig, SpeechStream};
use fwgan_core::signal::{self, SignalBuffer};
use fwgan_core::sparsity::{self, PrunePlan};
use fwgan_core::{losses, metrics, weights, Error};

#[derive(Debug, Parser)]
#[command(name = "fwgan", version, about = "Framewise GAN vocoder engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Reference,
    High,
    Tiny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Kv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract 100 Hz features from a 16 kHz mono WAV file.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize speech from a feature file.
    Synth {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run frame by frame through the streaming engine.
        #[arg(long)]
        streaming: bool,
    },
    /// Write randomly initialized weights for a preset configuration.
    Init {
        #[arg(long, value_enum, default_value = "reference")]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        gain: f32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Complexity report.
    Flops {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = sparsity::STEPS_PER_SECOND)]
        steps: u64,
        #[arg(long, value_enum, default_value = "table")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Block-prune a model.
    Sparsify {
        #[arg(long)]
        weights: PathBuf,
        /// Plan file (`pattern density` per line) or `reference`.
        #[arg(long)]
        plan: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Real-time-factor benchmark on synthetic features.
    Bench {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        seconds: f64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pitch and voicing metrics.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        deg: PathBuf,
        #[arg(long, default_value = "FWGAN")]
        model: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-resolution spectral losses.
    Loss {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        deg: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Process exit status for each error class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const FORMAT: i32 = 4;
    pub const MODEL: i32 = 5;
    pub const INPUT: i32 = 6;
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => exit::IO,
        Error::Wav(_)
        | Error::BadMagic(_)
        | Error::UnsupportedVersion(_)
        | Error::Checksum { .. }
        | Error::UnexpectedEof
        | Error::Malformed(_)
        | Error::Features(_) => exit::FORMAT,
        Error::Shape { .. } | Error::UnknownTensor(_) | Error::DimensionMismatch { .. } => exit::MODEL,
        _ => exit::INPUT,
    }
}

/// Writes `text` to `out`, or returns it for stdout.
fn emit(text: String, out: Option<&Path>) -> Result<String, Error> {
    match out {
        Some(p) => {
            fs::write(p, &text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn preset(p: Preset) -> GeneratorConfig {
    match p {
        Preset::Reference => GeneratorConfig::reference(),
        Preset::High => GeneratorConfig::high_complexity(),
        Preset::Tiny => GeneratorConfig::tiny(32, 16, 2),
    }
}

/// Runs one command; the returned text goes to stdout.
pub fn run(cli: Cli) -> Result<String, Error> {
    match cli.command {
        Command::Analyze { input, out } => {
            let wav = signal::read_wav(&input)?;
            let frames = features::analyze(&wav, &AnalysisConfig::default())?;
            features::write_features(&out, &frames)?;
            Ok(format!("{} frames\n", frames.len()))
        }
        Command::Synth {
            weights: wpath,
            features: fpath,
            out,
            streaming,
        } => {
            let w = weights::load_model(&wpath)?;
            let feats = features::read_features(&fpath)?;
            let g = Generator::from_weights(&w)?;
            let (speech, clipped) = if streaming {
                let mut s = SpeechStream::new(Arc::new(g));
                let mut samples = Vec::with_capacity(feats.len() * 160);
                for f in &feats {
                    if let Some(fr) = s.push_frame(f)? {
                        samples.extend(fr);
                    }
                }
                if let Some(fr) = s.flush()? {
                    samples.extend(fr);
                }
                (SignalBuffer::natural(samples), s.clipped)
            } else {
                let p = g.synthesize_offline(&feats)?;
                let sp = generator::perceptual_to_speech(&p, &feats)?;
                (sp.signal, sp.clipped)
            };
            signal::write_wav(&out, &speech)?;
            Ok(format!("{} samples, {} clipped\n", speech.len(), clipped))
        }
        Command::Init { preset: p, seed, gain, out } => {
            let cfg = preset(p);
            let w = generator::random_weights(&cfg, seed, gain);
            weights::save_model(&w, &out)?;
            Ok(format!("{} parameters\n", w.total_params()))
        }
        Command::Flops {
            weights: wpath,
            steps,
            format,
            out,
        } => {
            let r = sparsity::count_flops(&weights::load_model(&wpath)?, steps)?;
            let text = match format {
                ReportFormat::Table => r.to_table(),
                ReportFormat::Kv => r.to_key_value(),
            };
            emit(text, out.as_deref())
        }
        Command::Sparsify { weights: wpath, plan, out } => {
            let w = weights::load_model(&wpath)?;
            let plan = if plan == "reference" {
                PrunePlan::reference(&GeneratorConfig::infer(&w)?)
            } else {
                PrunePlan::parse(&fs::read_to_string(&plan)?)?
            };
            let pruned = sparsity::prune(&w, &plan)?;
            weights::save_model(&pruned, &out)?;
            Ok(format!("active parameters {} of {}\n", pruned.active_params(), pruned.total_params()))
        }
        Command::Bench {
            weights: wpath,
            seconds,
            threads,
            runs,
            out,
        } => {
            let g = Arc::new(Generator::from_weights(&weights::load_model(&wpath)?)?);
            let r = sparsity::bench_rtf(g, seconds, threads, runs)?;
            emit(r.to_text(), out.as_deref())
        }
        Command::Eval {
            reference,
            deg,
            model,
            out,
        } => {
            let row = metrics::evaluate(&model, &signal::read_wav(&reference)?, &signal::read_wav(&deg)?)?;
            emit(metrics::format_table(&[row]), out.as_deref())
        }
        Command::Loss { reference, deg, out } => {
            let (a, b) = (signal::read_wav(&reference)?, signal::read_wav(&deg)?);
            let l = losses::spectral_losses(&a.samples, &b.samples)?;
            emit(l.to_table(), out.as_deref())
        }
    }
}
