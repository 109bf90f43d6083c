//! Pipeline configuration as flat `key = value` text.
//!
//! Keys (defaults in parentheses):
//!
//! | key | meaning |
//! |-----|---------|
//! | `sample_rate` | working rate in Hz (16000) |
//! | `frame_length`, `frame_shift` | shared frame grid in samples (400, 80) |
//! | `mfcc.nfft`, `mfcc.mels`, `mfcc.ceps` | MFCC geometry (512, 26, 13) |
//! | `mfcc.preemphasis`, `mfcc.low_hz`, `mfcc.high_hz` | (0.97, 0, 8000) |
//! | `context.left`, `context.right` | stacked context frames (8, 8) |
//! | `inventory` | phoneme list file; empty selects the bundled 39 labels |
//! | `asr.hidden` | comma-separated hidden sizes (2048,2048,2048,2048) |
//! | `asr.epochs`, `asr.learning_rate`, `asr.validation_fraction` | (20, 0.01, 0.1) |
//! | `vocoder.alpha`, `vocoder.f0_floor`, `vocoder.f0_ceil` | (0.42, 60, 1000) |
//! | `vocoder.voicing_threshold`, `vocoder.mcep_order` | (0.3, 40) |
//! | `vocoder.band_edges` | comma-separated Hz (0,1000,2000,4000,6000,8000) |
//! | `vc.layers`, `vc.hidden`, `vc.epochs`, `vc.learning_rate` | (4, 128, 50, 0.01) |
//! | `train.momentum`, `train.clip_norm` | shared optimizer settings (0.9, 5) |
//! | `seed` | seeds initialization, shuffling and synthesis noise (0) |
//! | `convert.smoothing` | moving-average width on predicted mel-cepstra, 0 = off |
//!
//! Later sources override earlier ones: built-in defaults, then the config
//! file, then command-line overrides.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::asr::{AsrConfig, PhonemeInventory};
use crate::error::{Error, Result};
use crate::features::MfccConfig;
use crate::nn::OptimizerConfig;
use crate::pipeline::{ConversionArch, VcConfig};
use crate::vocoder::VocoderConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sample_rate: u32,
    pub frame_length: usize,
    pub frame_shift: usize,
    pub mfcc_nfft: usize,
    pub mfcc_mels: usize,
    pub mfcc_ceps: usize,
    pub preemphasis: f64,
    pub mel_low_hz: f64,
    pub mel_high_hz: f64,
    pub context_left: usize,
    pub context_right: usize,
    pub inventory: Option<PathBuf>,
    pub asr_hidden: Vec<usize>,
    pub asr_epochs: usize,
    pub asr_learning_rate: f64,
    pub asr_validation_fraction: f64,
    pub alpha: f64,
    pub f0_floor: f64,
    pub f0_ceil: f64,
    pub voicing_threshold: f64,
    pub mcep_order: usize,
    pub band_edges: Vec<f64>,
    pub vc_layers: usize,
    pub vc_hidden: usize,
    pub vc_epochs: usize,
    pub vc_learning_rate: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub smoothing: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mfcc = MfccConfig::default();
        let voc = VocoderConfig::default();
        let opt = OptimizerConfig::default();
        let asr = AsrConfig::default();
        let vc = VcConfig::default();
        Self {
            sample_rate: mfcc.sample_rate,
            frame_length: mfcc.frame_length,
            frame_shift: mfcc.frame_shift,
            mfcc_nfft: mfcc.nfft,
            mfcc_mels: mfcc.n_mels,
            mfcc_ceps: mfcc.n_ceps,
            preemphasis: mfcc.preemphasis,
            mel_low_hz: mfcc.low_hz,
            mel_high_hz: mfcc.high_hz,
            context_left: asr.context_left,
            context_right: asr.context_right,
            inventory: None,
            asr_hidden: asr.hidden,
            asr_epochs: asr.optimizer.epochs,
            asr_learning_rate: asr.optimizer.learning_rate,
            asr_validation_fraction: asr.validation_fraction,
            alpha: voc.alpha,
            f0_floor: voc.f0_floor,
            f0_ceil: voc.f0_ceil,
            voicing_threshold: voc.voicing_threshold,
            mcep_order: voc.mcep_order,
            band_edges: voc.band_edges,
            vc_layers: vc.arch.layers,
            vc_hidden: vc.arch.hidden,
            vc_epochs: vc.optimizer.epochs,
            vc_learning_rate: vc.optimizer.learning_rate,
            momentum: opt.momentum,
            clip_norm: opt.clip_norm,
            seed: opt.seed,
            smoothing: 0,
        }
    }
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl PipelineConfig {
    /// Every key with its current value, in documentation order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("sample_rate", self.sample_rate.to_string()),
            ("frame_length", self.frame_length.to_string()),
            ("frame_shift", self.frame_shift.to_string()),
            ("mfcc.nfft", self.mfcc_nfft.to_string()),
            ("mfcc.mels", self.mfcc_mels.to_string()),
            ("mfcc.ceps", self.mfcc_ceps.to_string()),
            ("mfcc.preemphasis", self.preemphasis.to_string()),
            ("mfcc.low_hz", self.mel_low_hz.to_string()),
            ("mfcc.high_hz", self.mel_high_hz.to_string()),
            ("context.left", self.context_left.to_string()),
            ("context.right", self.context_right.to_string()),
            ("inventory", self.inventory.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("asr.hidden", join(&self.asr_hidden)),
            ("asr.epochs", self.asr_epochs.to_string()),
            ("asr.learning_rate", self.asr_learning_rate.to_string()),
            ("asr.validation_fraction", self.asr_validation_fraction.to_string()),
            ("vocoder.alpha", self.alpha.to_string()),
            ("vocoder.f0_floor", self.f0_floor.to_string()),
            ("vocoder.f0_ceil", self.f0_ceil.to_string()),
            ("vocoder.voicing_threshold", self.voicing_threshold.to_string()),
            ("vocoder.mcep_order", self.mcep_order.to_string()),
            ("vocoder.band_edges", join(&self.band_edges)),
            ("vc.layers", self.vc_layers.to_string()),
            ("vc.hidden", self.vc_hidden.to_string()),
            ("vc.epochs", self.vc_epochs.to_string()),
            ("vc.learning_rate", self.vc_learning_rate.to_string()),
            ("train.momentum", self.momentum.to_string()),
            ("train.clip_norm", self.clip_norm.to_string()),
            ("seed", self.seed.to_string()),
            ("convert.smoothing", self.smoothing.to_string()),
        ]
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "sample_rate" => self.sample_rate = parse(key, v)?,
            "frame_length" => self.frame_length = parse(key, v)?,
            "frame_shift" => self.frame_shift = parse(key, v)?,
            "mfcc.nfft" => self.mfcc_nfft = parse(key, v)?,
            "mfcc.mels" => self.mfcc_mels = parse(key, v)?,
            "mfcc.ceps" => self.mfcc_ceps = parse(key, v)?,
            "mfcc.preemphasis" => self.preemphasis = parse(key, v)?,
            "mfcc.low_hz" => self.mel_low_hz = parse(key, v)?,
            "mfcc.high_hz" => self.mel_high_hz = parse(key, v)?,
            "context.left" => self.context_left = parse(key, v)?,
            "context.right" => self.context_right = parse(key, v)?,
            "inventory" => self.inventory = (!v.is_empty()).then(|| PathBuf::from(v)),
            "asr.hidden" => self.asr_hidden = parse_list(key, v)?,
            "asr.epochs" => self.asr_epochs = parse(key, v)?,
            "asr.learning_rate" => self.asr_learning_rate = parse(key, v)?,
            "asr.validation_fraction" => self.asr_validation_fraction = parse(key, v)?,
            "vocoder.alpha" => self.alpha = parse(key, v)?,
            "vocoder.f0_floor" => self.f0_floor = parse(key, v)?,
            "vocoder.f0_ceil" => self.f0_ceil = parse(key, v)?,
            "vocoder.voicing_threshold" => self.voicing_threshold = parse(key, v)?,
            "vocoder.mcep_order" => self.mcep_order = parse(key, v)?,
            "vocoder.band_edges" => self.band_edges = parse_list(key, v)?,
            "vc.layers" => self.vc_layers = parse(key, v)?,
            "vc.hidden" => self.vc_hidden = parse(key, v)?,
            "vc.epochs" => self.vc_epochs = parse(key, v)?,
            "vc.learning_rate" => self.vc_learning_rate = parse(key, v)?,
            "train.momentum" => self.momentum = parse(key, v)?,
            "train.clip_norm" => self.clip_norm = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "convert.smoothing" => self.smoothing = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Defaults overridden by `text`, validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.mfcc_config().validate().or_else(|e| bad(e.to_string()))?;
        self.vocoder_config().validate().or_else(|e| bad(e.to_string()))?;
        if self.asr_hidden.is_empty() || self.asr_hidden.contains(&0) {
            return bad("asr.hidden needs at least one non-zero layer".into());
        }
        if self.vc_layers == 0 || self.vc_hidden == 0 {
            return bad("vc.layers and vc.hidden must be positive".into());
        }
        if self.asr_epochs == 0 || self.vc_epochs == 0 {
            return bad("epoch counts must be positive".into());
        }
        for (k, lr) in [("asr.learning_rate", self.asr_learning_rate), ("vc.learning_rate", self.vc_learning_rate)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("{k} must be finite and non-negative"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("train.momentum must lie in [0, 1)".into());
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("train.clip_norm must be positive".into());
        }
        if !(0.0..1.0).contains(&self.asr_validation_fraction) {
            return bad("asr.validation_fraction must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.voicing_threshold) {
            return bad("vocoder.voicing_threshold must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn mfcc_config(&self) -> MfccConfig {
        MfccConfig {
            sample_rate: self.sample_rate,
            frame_length: self.frame_length,
            frame_shift: self.frame_shift,
            nfft: self.mfcc_nfft,
            n_mels: self.mfcc_mels,
            n_ceps: self.mfcc_ceps,
            preemphasis: self.preemphasis,
            low_hz: self.mel_low_hz,
            high_hz: self.mel_high_hz,
            ..MfccConfig::default()
        }
    }

    pub fn vocoder_config(&self) -> VocoderConfig {
        VocoderConfig {
            sample_rate: self.sample_rate,
            frame_length: self.frame_length,
            frame_shift: self.frame_shift,
            f0_floor: self.f0_floor,
            f0_ceil: self.f0_ceil,
            voicing_threshold: self.voicing_threshold,
            alpha: self.alpha,
            mcep_order: self.mcep_order,
            band_edges: self.band_edges.clone(),
            noise_seed: self.seed ^ VocoderConfig::default().noise_seed,
            ..VocoderConfig::default()
        }
    }

    pub fn asr_config(&self) -> AsrConfig {
        AsrConfig {
            mfcc: self.mfcc_config(),
            context_left: self.context_left,
            context_right: self.context_right,
            hidden: self.asr_hidden.clone(),
            optimizer: OptimizerConfig {
                learning_rate: self.asr_learning_rate,
                momentum: self.momentum,
                clip_norm: self.clip_norm,
                epochs: self.asr_epochs,
                seed: self.seed,
                shuffle: true,
            },
            validation_fraction: self.asr_validation_fraction,
        }
    }

    pub fn vc_config(&self) -> VcConfig {
        VcConfig {
            arch: ConversionArch { layers: self.vc_layers, hidden: self.vc_hidden },
            optimizer: OptimizerConfig {
                learning_rate: self.vc_learning_rate,
                momentum: self.momentum,
                clip_norm: self.clip_norm,
                epochs: self.vc_epochs,
                seed: self.seed,
                shuffle: true,
            },
        }
    }

    /// The configured inventory file, or the bundled 39 labels.
    pub fn load_inventory(&self) -> Result<PhonemeInventory> {
        match &self.inventory {
            Some(p) => PhonemeInventory::load(p),
            None => Ok(PhonemeInventory::default_39()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_published_geometry() {
        let c = PipelineConfig::default();
        assert_eq!(c.mfcc_ceps * (c.context_left + c.context_right + 1), 221);
        assert_eq!(c.asr_hidden, vec![2048; 4]);
        assert_eq!((c.vc_layers, c.vc_hidden, c.mcep_order), (4, 128, 40));
        assert_eq!(c.frame_shift as f64 / c.sample_rate as f64, 0.005);
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let mut c = PipelineConfig { alpha: 0.1 + 0.2, seed: u64::MAX, asr_hidden: vec![3, 5], ..Default::default() };
        c.inventory = Some(PathBuf::from("/tmp/inv.txt"));
        c.vc_learning_rate = 1.0 / 3.0;
        assert_eq!(PipelineConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn later_sources_win_and_bad_input_is_reported() {
        let mut c = PipelineConfig::default();
        c.merge_text("# comment\nseed = 7\nvc.hidden = 32\n").unwrap();
        c.set("seed", "9").unwrap();
        assert_eq!((c.seed, c.vc_hidden), (9, 32));
        assert!(matches!(c.set("nope", "1"), Err(Error::Config(_))));
        assert!(PipelineConfig::parse("seed = x").is_err());
        assert!(PipelineConfig::parse("train.momentum = 1.5").is_err());
        assert!(PipelineConfig::parse("just text").is_err());
    }
}
