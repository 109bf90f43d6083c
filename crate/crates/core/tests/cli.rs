//! The command-line surface, driven in-process through `run_command`.

use std::path::Path;

use voiceforge::archive::ModelArchive;
use voiceforge::audio::read_wav;
use voiceforge::cli::run_command;
use voiceforge::features::FeatureMatrix;
use voiceforge::vocoder::AcousticAnalysis;

fn run(args: &[&str]) -> i32 {
    run_command(std::iter::once("voiceforge").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_workflow_with_a_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("small.conf");
    std::fs::write(
        &config,
        "# small models for a quick run\nasr.hidden = 24\nasr.epochs = 4\nasr.learning_rate = 0.05\nvc.layers = 1\nvc.hidden = 8\nvc.epochs = 3\nseed = 5\n",
    )
    .unwrap();
    let c = s(&config);
    let corpus = d.join("corpus");

    assert_eq!(run(&["--config", c, "make-corpus", "--out", s(&corpus), "--utterances", "40", "--target-utterances", "4", "--source-seconds", "1.2"]), 0);
    let (asr_manifest, tgt_manifest, source) = (corpus.join("asr/utt.manifest"), corpus.join("target/tgt.manifest"), corpus.join("source.wav"));
    assert!(asr_manifest.exists() && tgt_manifest.exists() && source.exists());

    let (asr, asr_log) = (d.join("asr.vfm"), d.join("asr.log"));
    assert_eq!(run(&["--config", c, "asr-train", "--manifest", s(&asr_manifest), "--out", s(&asr), "--log", s(&asr_log)]), 0);
    let archive = ModelArchive::load(&asr).unwrap();
    assert_eq!(archive.classifier().unwrap().hidden_sizes(), vec![24]);
    assert_eq!(archive.model().output_dim(), 39);
    assert!(std::fs::read_to_string(&asr_log).unwrap().lines().count() >= 4);

    assert_eq!(run(&["--config", c, "asr-eval", "--model", s(&asr), "--manifest", s(&asr_manifest)]), 0);

    let post = d.join("source.post");
    assert_eq!(run(&["posteriors", "--model", s(&asr), "--in", s(&source), "--out", s(&post)]), 0);
    let pm = FeatureMatrix::load(&post).unwrap();
    assert_eq!((pm.frames(), pm.dims()), ((19_200 - 400) / 80 + 1, 39));

    let base = d.join("source");
    assert_eq!(run(&["analyze", "--in", s(&source), "--out", s(&base)]), 0);
    assert_eq!(AcousticAnalysis::load(&base).unwrap().frames(), pm.frames());

    let (vc, vc_log) = (d.join("vc.vfm"), d.join("vc.log"));
    assert_eq!(run(&["--config", c, "vc-train", "--asr", s(&asr), "--manifest", s(&tgt_manifest), "--out", s(&vc), "--log", s(&vc_log)]), 0);
    assert_eq!(ModelArchive::load(&vc).unwrap().regressor().unwrap().hidden_size(), 8);
    assert_eq!(std::fs::read_to_string(&vc_log).unwrap().lines().count(), 3);

    let (out, report) = (d.join("out.wav"), d.join("report.txt"));
    assert_eq!(run(&["convert", "--asr", s(&asr), "--vc", s(&vc), "--in", s(&source), "--out", s(&out), "--report", s(&report)]), 0);
    let converted = read_wav(&out).unwrap();
    assert_eq!(converted.len(), read_wav(&source).unwrap().len());
    assert!(std::fs::read_to_string(&report).unwrap().contains("frames_used"));

    let resynth = d.join("resynth.wav");
    assert_eq!(run(&["resynth", "--in", s(&source), "--out", s(&resynth)]), 0);
    assert!(resynth.exists());

    // a classifier cannot stand in for the conversion model
    assert_eq!(run(&["convert", "--asr", s(&asr), "--vc", s(&asr), "--in", s(&source), "--out", s(&out)]), 2);
}

#[test]
fn gradcheck_subcommand_passes() {
    assert_eq!(run(&["gradcheck", "--seeds", "3"]), 0);
}

#[test]
fn usage_and_runtime_errors() {
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&[]), 1);
    assert_eq!(run(&["convert", "--asr", "a.vfm"]), 1);
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["--set", "no-equals-sign", "gradcheck"]), 2);
    assert_eq!(run(&["--set", "vocoder.mcep_order=0", "gradcheck"]), 2);
    assert_eq!(run(&["--config", "/nonexistent/x.conf", "gradcheck"]), 2);
    assert_eq!(run(&["asr-eval", "--model", "/nonexistent/m.vfm", "--manifest", "/nonexistent/m.txt"]), 2);
}
