//! Small end-to-end model training shared by the pipeline-level tests.

#![allow(dead_code)]

use voiceforge::archive::ModelArchive;
use voiceforge::asr::{train_asr_utterances, AsrConfig, AsrTrainingReport, FrameLabels, LabeledUtterance, PhonemeInventory};
use voiceforge::audio::Waveform;
use voiceforge::nn::{OptimizerConfig, TrainingLog};
use voiceforge::pipeline::{build_training_pairs_from_waveforms, train_conversion_model, ConversionArch, VcConfig};
use voiceforge::synth::{labeled_corpus, speaker_corpus, SpeakerProfile};
use voiceforge::vocoder::VocoderConfig;

#[derive(Debug, Clone)]
pub struct Setup {
    pub asr_utterances: usize,
    pub asr_hidden: Vec<usize>,
    pub asr_epochs: usize,
    pub asr_learning_rate: f64,
    pub target_utterances: usize,
    pub target_seconds: f64,
    pub vc_layers: usize,
    pub vc_hidden: usize,
    pub vc_epochs: usize,
    pub vc_learning_rate: f64,
    pub seed: u64,
}

impl Setup {
    /// Sized for the integration suite on a single core.
    pub fn small() -> Self {
        Self {
            asr_utterances: 120,
            asr_hidden: vec![32, 32],
            asr_epochs: 8,
            asr_learning_rate: 0.05,
            target_utterances: 8,
            target_seconds: 1.5,
            vc_layers: 1,
            vc_hidden: 16,
            vc_epochs: 30,
            vc_learning_rate: 0.01,
            seed: 1,
        }
    }
}

pub struct Trained {
    pub asr: ModelArchive,
    pub asr_report: AsrTrainingReport,
    pub vc: ModelArchive,
    pub vc_log: TrainingLog,
    pub targets: Vec<Waveform>,
}

pub fn labeled_utterances(n: usize, seed: u64, inventory: &PhonemeInventory) -> Vec<LabeledUtterance> {
    let classes = inventory.synthetic_classes().unwrap();
    labeled_corpus(n, seed)
        .into_iter()
        .map(|u| LabeledUtterance { labels: FrameLabels { indices: u.labels(&classes) }, waveform: u.waveform })
        .collect()
}

pub fn train_asr(s: &Setup) -> (ModelArchive, AsrTrainingReport) {
    let inventory = PhonemeInventory::default_39();
    let utts = labeled_utterances(s.asr_utterances, s.seed, &inventory);
    let cfg = AsrConfig {
        hidden: s.asr_hidden.clone(),
        optimizer: OptimizerConfig { epochs: s.asr_epochs, learning_rate: s.asr_learning_rate, seed: s.seed, ..OptimizerConfig::default() },
        ..AsrConfig::default()
    };
    train_asr_utterances(&utts, &inventory, &cfg).unwrap()
}

pub fn train_all(s: &Setup) -> Trained {
    let (asr, asr_report) = train_asr(s);
    train_vc_with(s, asr, asr_report)
}

/// Trains the conversion model on target-speaker audio given a recognizer.
pub fn train_vc_with(s: &Setup, asr: ModelArchive, asr_report: AsrTrainingReport) -> Trained {
    let targets: Vec<Waveform> = speaker_corpus(&SpeakerProfile::target(), s.target_utterances, s.target_seconds, s.seed + 100)
        .into_iter()
        .map(|u| u.waveform)
        .collect();
    let set = build_training_pairs_from_waveforms(&asr, &targets, &VocoderConfig::default()).unwrap();
    let cfg = VcConfig {
        arch: ConversionArch { layers: s.vc_layers, hidden: s.vc_hidden },
        optimizer: OptimizerConfig { epochs: s.vc_epochs, learning_rate: s.vc_learning_rate, seed: s.seed, ..OptimizerConfig::default() },
    };
    let (vc, vc_log) = train_conversion_model(&set, &cfg).unwrap();
    Trained { asr, asr_report, vc, vc_log, targets }
}

/// Mean per-frame squared error between two equally shaped matrices.
pub fn mean_frame_sq_error(a: &[&[f64]], b: &[&[f64]]) -> f64 {
    assert_eq!(a.len(), b.len());
    let total: f64 = a.iter().zip(b).map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q).powi(2)).sum::<f64>()).sum();
    total / a.len() as f64
}
