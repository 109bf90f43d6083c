//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.
//! Every subcommand accepts `--config FILE` and repeated `--set key=value`;
//! `--set` wins over the file, which wins over built-in defaults. The
//! `VOICEFORGE_THREADS` environment variable caps the worker pool.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::archive::ModelArchive;
use crate::asr::{frame_accuracy, posteriorgram, train_asr};
use crate::audio::{read_wav, resample, write_wav, Waveform};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::manifest::parse_manifest;
use crate::nn::grad_check_suite;
use crate::pipeline::{build_training_pairs, convert, train_conversion_model, ConversionJob};
use crate::synth::{labeled_corpus, speaker_corpus, synth_utterance, write_corpus, SpeakerProfile};
use crate::vocoder::{analyze, synthesize};

/// Threshold the `gradcheck` subcommand reports against.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "voiceforge", version, about = "Singing voice conversion with phonetic posteriorgrams")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the phoneme classifier from a labeled manifest.
    AsrTrain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss and validation accuracy.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Print the frame accuracy of a classifier on a labeled manifest.
    AsrEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write the posteriorgram of a recording as a feature matrix.
    Posteriors {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write F0, aperiodicity and mel-cepstrum tracks to `<out>.*`.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a conversion model on unlabeled target-voice audio.
    VcTrain {
        #[arg(long)]
        asr: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Convert a recording to the target voice.
    Convert {
        #[arg(long)]
        asr: PathBuf,
        #[arg(long)]
        vc: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write the conversion report here instead of standard output.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Analyze and resynthesize a recording.
    Resynth {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        seeds: usize,
    },
    /// Generate the synthetic labeled corpus, a target-voice set and a source clip.
    MakeCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        utterances: usize,
        #[arg(long, default_value_t = 20)]
        target_utterances: usize,
        /// Length of the source clip in seconds.
        #[arg(long, default_value_t = 10.0)]
        source_seconds: f64,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &common.config {
        if !path.is_file() {
            return Err(Error::NotFound(path.clone()));
        }
        cfg.merge_text(&std::fs::read_to_string(path)?)?;
    }
    for kv in &common.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_at(path: &Path, rate: u32) -> Result<Waveform> {
    let w = read_wav(path)?;
    if w.sample_rate() == rate {
        Ok(w)
    } else {
        resample(&w, rate)
    }
}

fn configure_threads() {
    let Some(n) = std::env::var("VOICEFORGE_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) else {
        return;
    };
    if n > 0 {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::AsrTrain { manifest, out, log } => {
            let inventory = cfg.load_inventory()?;
            let (archive, report) = train_asr(&parse_manifest(manifest)?, &inventory, &cfg.asr_config())?;
            archive.save(&out)?;
            if let Some(log) = log {
                std::fs::write(log, report.to_text())?;
            }
            println!(
                "validation frame accuracy {:.4} (epoch {}), model {}",
                report.best_accuracy(),
                report.best_epoch,
                out.display()
            );
        }
        Command::AsrEval { model, manifest } => {
            let acc = frame_accuracy(&ModelArchive::load(model)?, &parse_manifest(manifest)?)?;
            println!("frame accuracy {acc:.6}");
        }
        Command::Posteriors { model, input, out } => {
            let post = posteriorgram(&ModelArchive::load(model)?, &read_at(&input, cfg.sample_rate)?)?;
            post.matrix().save(&out)?;
            println!("{} frames x {} classes -> {}", post.frames(), post.dims(), out.display());
        }
        Command::Analyze { input, out } => {
            let analysis = analyze(&read_at(&input, cfg.sample_rate)?, &cfg.vocoder_config())?;
            analysis.save(&out)?;
            println!("{} frames, {} voiced -> {}.*", analysis.frames(), analysis.f0.voiced_count(), out.display());
        }
        Command::VcTrain { asr, manifest, out, log } => {
            let asr = ModelArchive::load(asr)?;
            let set = build_training_pairs(&asr, &parse_manifest(manifest)?, &cfg.vocoder_config())?;
            let (archive, training) = train_conversion_model(&set, &cfg.vc_config())?;
            archive.save(&out)?;
            if let Some(log) = log {
                std::fs::write(log, training.to_text())?;
            }
            println!(
                "{} pairs, final mse {:.6}, model {}",
                set.pairs.len(),
                training.last().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Convert { asr, vc, input, out, report } => {
            let (asr, vc) = (ModelArchive::load(asr)?, ModelArchive::load(vc)?);
            let mut job = ConversionJob::new(read_wav(&input)?, &asr, &vc);
            job.output = Some(out);
            job.vocoder = cfg.vocoder_config();
            job.smoothing = cfg.smoothing;
            let text = convert(&job)?.report.to_text();
            match report {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
        Command::Resynth { input, out } => {
            let voc = cfg.vocoder_config();
            let analysis = analyze(&read_at(&input, cfg.sample_rate)?, &voc)?;
            let w = synthesize(&analysis, cfg.sample_rate, &voc)?;
            write_wav(&out, &w)?;
            println!("{} frames -> {}", analysis.frames(), out.display());
        }
        Command::Gradcheck { seeds } => {
            let s = grad_check_suite(seeds)?;
            println!("dense+softmax     {:.3e}", s.dense_softmax);
            println!("single BLSTM      {:.3e}", s.single_blstm);
            println!("two-layer DBLSTM  {:.3e}", s.two_layer_dblstm);
            println!("max relative error {:.3e} over {} seeds", s.max_error(), s.seeds);
            return Ok(if s.max_error() < GRADCHECK_TOLERANCE { 0 } else { 2 });
        }
        Command::MakeCorpus { out, utterances, target_utterances, source_seconds } => {
            let map = cfg.load_inventory()?.synthetic_classes()?;
            let asr = write_corpus(out.join("asr"), "utt", &labeled_corpus(utterances, cfg.seed), Some(&map))?;
            let target_set = speaker_corpus(&SpeakerProfile::target(), target_utterances, 1.5, cfg.seed.wrapping_add(1));
            let target = write_corpus(out.join("target"), "tgt", &target_set, None)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
            let source = out.join("source.wav");
            write_wav(&source, &synth_utterance(&SpeakerProfile::source(), source_seconds, &mut rng).waveform)?;
            println!("{}\n{}\n{}", asr.display(), target.display(), source.display());
        }
    }
    Ok(0)
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    configure_threads();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_command(["voiceforge", "frobnicate"]), 1);
        assert_eq!(run_command(["voiceforge"]), 1);
        assert_eq!(run_command(["voiceforge", "convert", "--asr", "a.vfm"]), 1);
        assert_eq!(run_command(["voiceforge", "--help"]), 0);
    }

    #[test]
    fn runtime_errors_exit_two() {
        assert_eq!(run_command(["voiceforge", "asr-eval", "--model", "/nonexistent.vfm", "--manifest", "/nonexistent"]), 2);
        assert_eq!(run_command(["voiceforge", "gradcheck", "--set", "bogus=1"]), 2);
    }

    #[test]
    fn gradcheck_passes() {
        assert_eq!(run_command(["voiceforge", "gradcheck", "--seeds", "2"]), 0);
    }
}
