//! Speaker-independent phoneme classification and phonetic posteriorgrams.
//!
//! Front end: 13 MFCCs on the 5 ms grid, stacked with 8 frames of context
//! on each side (221 dimensions) and mean-variance normalized with
//! statistics stored in the model archive. The classifier is a sigmoid DNN
//! with a softmax output over the phoneme inventory.

use std::collections::HashMap;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::archive::{FrontEnd, Model, ModelArchive};
use crate::audio::{read_wav, resample, Waveform};
use crate::error::{Error, Result};
use crate::features::{mfcc, mvn_apply, mvn_fit, stack_context, FeatureMatrix, MfccConfig};
use crate::manifest::DatasetManifest;
use crate::nn::{DnnClassifier, Example, Loss, OptimizerConfig, Trainer};

const DEFAULT_INVENTORY: &str = include_str!("../data/phonemes39.txt");

/// Ordered, unique phoneme labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeInventory {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhonemeInventory {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidArgument(format!("inventory needs at least 2 labels, got {}", labels.len())));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("invalid phoneme label {l:?}")));
            }
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate phoneme label {l:?}")));
            }
        }
        Ok(Self { labels, index })
    }

    /// The folded 39-phoneme TIMIT set.
    pub fn default_39() -> Self {
        Self::parse(DEFAULT_INVENTORY).expect("bundled inventory is valid")
    }

    /// One label per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels.get(i).map(String::as_str)
    }

    /// Inventory indices of the synthetic corpus classes.
    pub fn synthetic_classes(&self) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for (slot, name) in out.iter_mut().zip(crate::synth::CLASS_LABELS) {
            *slot = self
                .index_of(name)
                .ok_or_else(|| Error::InvalidArgument(format!("inventory lacks synthetic class {name:?}")))?;
        }
        Ok(out)
    }
}

impl Default for PhonemeInventory {
    fn default() -> Self {
        Self::default_39()
    }
}

/// Per-frame phoneme indices on the MFCC grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabels {
    pub indices: Vec<usize>,
}

impl FrameLabels {
    /// Parses one index per line, each below `classes`.
    pub fn parse(text: &str, classes: usize) -> Result<Self> {
        let mut indices = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: usize = line
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("label line {}: {line:?} is not an index", i + 1)))?;
            if v >= classes {
                return Err(Error::InvalidArgument(format!("label line {}: index {v} outside [0, {classes})", i + 1)));
            }
            indices.push(v);
        }
        Ok(Self { indices })
    }

    pub fn load(path: impl AsRef<Path>, classes: usize) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?, classes)
    }

    pub fn to_text(&self) -> String {
        self.indices.iter().map(|i| format!("{i}\n")).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Row-stochastic frames × P matrix of phoneme posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram(FeatureMatrix);

impl Posteriorgram {
    /// Wraps `m` after checking every row is a distribution within `1e-6`.
    pub fn from_matrix(m: FeatureMatrix) -> Result<Self> {
        for (t, row) in m.rows().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidArgument(format!("frame {t} is not a probability vector (sum {sum})")));
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &FeatureMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> FeatureMatrix {
        self.0
    }

    pub fn frames(&self) -> usize {
        self.0.frames()
    }

    pub fn dims(&self) -> usize {
        self.0.dims()
    }

    pub fn argmax(&self) -> Vec<usize> {
        self.0.rows().map(argmax).collect()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsrConfig {
    pub mfcc: MfccConfig,
    pub context_left: usize,
    pub context_right: usize,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerConfig,
    /// Share of utterances held out for per-epoch validation.
    pub validation_fraction: f64,
}

impl Default for AsrConfig {
    /// 221 → 2048 × 4 → P, 20 epochs.
    fn default() -> Self {
        Self {
            mfcc: MfccConfig::default(),
            context_left: 8,
            context_right: 8,
            hidden: vec![2048; 4],
            optimizer: OptimizerConfig { epochs: 20, ..OptimizerConfig::default() },
            validation_fraction: 0.1,
        }
    }
}

impl AsrConfig {
    pub fn input_dim(&self) -> usize {
        self.mfcc.n_ceps * (self.context_left + self.context_right + 1)
    }

    fn frontend(&self) -> FrontEnd {
        FrontEnd { mfcc: self.mfcc.clone(), context_left: self.context_left, context_right: self.context_right }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledUtterance {
    pub waveform: Waveform,
    pub labels: FrameLabels,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsrEpoch {
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AsrTrainingReport {
    pub epochs: Vec<AsrEpoch>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub train_utterances: usize,
    pub validation_utterances: usize,
}

impl AsrTrainingReport {
    pub fn best_accuracy(&self) -> f64 {
        self.epochs.get(self.best_epoch).map_or(0.0, |e| e.validation_accuracy)
    }

    /// `epoch<TAB>train_loss<TAB>validation_accuracy` per line.
    pub fn to_text(&self) -> String {
        self.epochs
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{i}\t{:.6e}\t{:.6}\n", e.train_loss, e.validation_accuracy))
            .collect()
    }
}

fn to_rate(w: &Waveform, rate: u32) -> Result<Waveform> {
    if w.sample_rate() == rate {
        Ok(w.clone())
    } else {
        resample(w, rate)
    }
}

/// MFCC plus context stacking, before normalization.
pub fn asr_features(w: &Waveform, frontend: &FrontEnd) -> Result<FeatureMatrix> {
    let w = to_rate(w, frontend.mfcc.sample_rate)?;
    let m = mfcc(&w, &frontend.mfcc)?;
    stack_context(&m, frontend.context_left, frontend.context_right)
}

fn split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5a11_7000));
    if n < 2 || fraction <= 0.0 {
        return (idx.clone(), idx);
    }
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    (idx, val)
}

fn accuracy_on(model: &DnnClassifier, data: &[Example]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for ex in data {
        let crate::nn::Target::Classes(labels) = &ex.target else { unreachable!() };
        for (p, &l) in model.forward(&ex.inputs)?.iter().zip(labels) {
            hit += usize::from(argmax(p) == l);
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

/// Trains a classifier on in-memory utterances. Every label sequence must
/// match its utterance's MFCC frame count.
pub fn train_asr_utterances(
    utts: &[LabeledUtterance],
    inventory: &PhonemeInventory,
    cfg: &AsrConfig,
) -> Result<(ModelArchive, AsrTrainingReport)> {
    if utts.is_empty() {
        return Err(Error::EmptyManifest);
    }
    cfg.mfcc.validate()?;
    let frontend = cfg.frontend();
    let feats = utts
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let f = asr_features(&u.waveform, &frontend)?;
            if f.frames() != u.labels.len() {
                return Err(Error::LabelLengthMismatch { utterance: format!("#{i}"), labels: u.labels.len(), frames: f.frames() });
            }
            if let Some(&bad) = u.labels.indices.iter().find(|&&l| l >= inventory.len()) {
                return Err(Error::InvalidArgument(format!("utterance {i}: label {bad} outside inventory")));
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;

    let (train_idx, val_idx) = split(utts.len(), cfg.validation_fraction, cfg.optimizer.seed);
    let norm = mvn_fit(train_idx.iter().map(|&i| &feats[i]))?;
    let examples = |idx: &[usize]| -> Result<Vec<Example>> {
        idx.iter()
            .map(|&i| Ok(Example::classes(mvn_apply(&feats[i], &norm)?.to_rows(), utts[i].labels.indices.clone())))
            .collect()
    };
    let train_set = examples(&train_idx)?;
    let val_set = examples(&val_idx)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.optimizer.seed);
    let mut model = DnnClassifier::random(cfg.input_dim(), &cfg.hidden, inventory.len(), &mut rng);
    let mut trainer = Trainer::new(&model, Loss::CrossEntropy, cfg.optimizer.clone());
    let mut report = AsrTrainingReport {
        train_utterances: train_idx.len(),
        validation_utterances: val_idx.len(),
        ..Default::default()
    };
    let mut best = model.clone();
    for epoch in 0..cfg.optimizer.epochs {
        let train_loss = trainer.run_epoch(&mut model, &train_set)?;
        let validation_accuracy = accuracy_on(&model, &val_set)?;
        info!("asr epoch {epoch}: loss {train_loss:.5}, validation accuracy {validation_accuracy:.4}");
        report.epochs.push(AsrEpoch { train_loss, validation_accuracy });
        if epoch == 0 || validation_accuracy > report.best_accuracy() {
            report.best_epoch = epoch;
            best = model.clone();
        }
    }
    let archive = ModelArchive::new(Model::Classifier(best), Some(frontend), Some(norm), None)?;
    Ok((archive, report))
}

fn load_labeled(manifest: &DatasetManifest, classes: usize) -> Result<Vec<LabeledUtterance>> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    manifest.require_labels()?;
    manifest
        .entries
        .par_iter()
        .map(|e| {
            Ok(LabeledUtterance {
                waveform: read_wav(&e.audio)?,
                labels: FrameLabels::load(e.labels.as_ref().expect("checked above"), classes)?,
            })
        })
        .collect()
}

/// Trains a classifier from a labeled manifest.
pub fn train_asr(
    manifest: &DatasetManifest,
    inventory: &PhonemeInventory,
    cfg: &AsrConfig,
) -> Result<(ModelArchive, AsrTrainingReport)> {
    train_asr_utterances(&load_labeled(manifest, inventory.len())?, inventory, cfg).map_err(|e| name_utterance(e, manifest))
}

/// Replaces the positional utterance reference in a label mismatch with the
/// manifest's audio path.
fn name_utterance(e: Error, manifest: &DatasetManifest) -> Error {
    match e {
        Error::LabelLengthMismatch { utterance, labels, frames } => {
            let named = utterance
                .strip_prefix('#')
                .and_then(|i| i.parse::<usize>().ok())
                .and_then(|i| manifest.entries.get(i))
                .map_or(utterance.clone(), |entry| entry.audio.display().to_string());
            Error::LabelLengthMismatch { utterance: named, labels, frames }
        }
        other => other,
    }
}

/// Per-frame phoneme posteriors of `w`, resampled to the model's rate.
pub fn posteriorgram(model: &ModelArchive, w: &Waveform) -> Result<Posteriorgram> {
    let clf = model.classifier()?;
    let frontend = model
        .frontend()
        .ok_or_else(|| Error::ArchitectureMismatch("classifier archive carries no feature front end".into()))?;
    let mut feats = asr_features(w, frontend)?;
    if let Some(norm) = model.input_norm() {
        feats = mvn_apply(&feats, norm)?;
    }
    let rows = clf.forward(&feats.to_rows())?;
    Ok(Posteriorgram(FeatureMatrix::from_rows(&rows, feats.frame_shift())?))
}

/// Fraction of frames whose argmax posterior equals the label.
pub fn frame_accuracy_utterances(model: &ModelArchive, utts: &[LabeledUtterance]) -> Result<f64> {
    if utts.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let counts = utts
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let pred = posteriorgram(model, &u.waveform)?.argmax();
            if pred.len() != u.labels.len() {
                return Err(Error::LabelLengthMismatch { utterance: format!("#{i}"), labels: u.labels.len(), frames: pred.len() });
            }
            Ok((pred.iter().zip(&u.labels.indices).filter(|(a, b)| a == b).count(), pred.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (hit, total) = counts.iter().fold((0, 0), |(h, t), &(a, b)| (h + a, t + b));
    Ok(hit as f64 / total.max(1) as f64)
}

pub fn frame_accuracy(model: &ModelArchive, manifest: &DatasetManifest) -> Result<f64> {
    let classes = model.classifier()?.num_classes();
    frame_accuracy_utterances(model, &load_labeled(manifest, classes)?).map_err(|e| name_utterance(e, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_utterance, SpeakerProfile};

    #[test]
    fn default_inventory_has_39_unique_labels() {
        let inv = PhonemeInventory::default_39();
        assert_eq!(inv.len(), 39);
        assert_eq!(inv.index_of("sil"), Some(30));
        assert!(inv.synthetic_classes().is_ok());
        assert!(PhonemeInventory::parse("a\nb\na\n").is_err());
        assert!(PhonemeInventory::parse("a\n").is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn labels_parse_and_range_check() {
        assert_eq!(FrameLabels::parse("0\n2\n\n1\n", 3).unwrap().indices, vec![0, 2, 1]);
        assert!(FrameLabels::parse("3\n", 3).is_err());
        assert!(FrameLabels::parse("x\n", 3).is_err());
    }

    #[test]
    fn split_holds_out_at_least_one() {
        let (t, v) = split(10, 0.1, 0);
        assert_eq!((t.len(), v.len()), (9, 1));
        let (t, v) = split(1, 0.5, 0);
        assert_eq!((t.len(), v.len()), (1, 1));
    }

    #[test]
    fn label_length_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = synth_utterance(&SpeakerProfile::target(), 0.5, &mut rng);
        let utt = LabeledUtterance { waveform: u.waveform, labels: FrameLabels { indices: vec![0; 3] } };
        let cfg = AsrConfig { hidden: vec![4], ..AsrConfig::default() };
        let err = train_asr_utterances(&[utt], &PhonemeInventory::default_39(), &cfg).unwrap_err();
        assert!(matches!(err, Error::LabelLengthMismatch { labels: 3, .. }), "{err:?}");
        assert!(matches!(
            train_asr_utterances(&[], &PhonemeInventory::default_39(), &cfg),
            Err(Error::EmptyManifest)
        ));
    }

    #[test]
    fn posteriorgram_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clf = DnnClassifier::random(221, &[16], 39, &mut rng);
        let fe = FrontEnd { mfcc: MfccConfig::default(), context_left: 8, context_right: 8 };
        let archive = ModelArchive::new(Model::Classifier(clf), Some(fe), None, None).unwrap();
        let u = synth_utterance(&SpeakerProfile::source(), 0.4, &mut rng);
        let p = posteriorgram(&archive, &u.waveform).unwrap();
        assert_eq!(p.dims(), 39);
        assert_eq!(p.frames(), u.classes.len());
        for row in p.matrix().rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
