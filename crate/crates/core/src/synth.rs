//! Synthetic labeled speech for hermetic training and tests.
//!
//! Utterances are sequences of 200 to 400 ms segments drawn from three
//! classes: an /a/-like vowel, an /i/-like vowel (harmonic sources shaped by
//! Lorentzian formant resonances) and a high-frequency noise "fricative".
//! Speakers differ in F0 range and formant scale. Frame labels are taken
//! from the class active at each frame centre of the 5 ms MFCC grid.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{write_wav, Waveform};
use crate::error::Result;
use crate::features::FrameGrid;
use crate::nn::Example;
use crate::PIPELINE_SAMPLE_RATE;

/// Inventory labels of the three synthetic classes, in class order.
pub const CLASS_LABELS: [&str; 3] = ["aa", "iy", "s"];

const FORMANTS: [[f64; 3]; 2] = [[730.0, 1090.0, 2440.0], [270.0, 2290.0, 3010.0]];
const BANDWIDTHS: [f64; 3] = [90.0, 110.0, 170.0];
const FADE: usize = 80;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerProfile {
    pub f0_low: f64,
    pub f0_high: f64,
    pub formant_scale: f64,
    pub vibrato_hz: f64,
    /// Relative vibrato depth.
    pub vibrato_depth: f64,
}

impl SpeakerProfile {
    /// The fixed voice conversion models are trained towards.
    pub fn target() -> Self {
        Self { f0_low: 205.0, f0_high: 235.0, formant_scale: 1.1, vibrato_hz: 5.5, vibrato_depth: 0.01 }
    }

    /// A low-pitched source singer.
    pub fn source() -> Self {
        Self { f0_low: 105.0, f0_high: 140.0, formant_scale: 0.9, vibrato_hz: 5.0, vibrato_depth: 0.02 }
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        let low = rng.random_range(90.0..240.0);
        Self {
            f0_low: low,
            f0_high: low * rng.random_range(1.1..1.4),
            formant_scale: rng.random_range(0.85..1.15),
            vibrato_hz: rng.random_range(4.0..6.5),
            vibrato_depth: rng.random_range(0.0..0.025),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUtterance {
    pub waveform: Waveform,
    /// Class index (into [`CLASS_LABELS`]) per MFCC frame.
    pub classes: Vec<usize>,
}

impl SyntheticUtterance {
    /// Frame labels as indices into an inventory given per-class indices.
    pub fn labels(&self, class_to_index: &[usize; 3]) -> Vec<usize> {
        self.classes.iter().map(|&c| class_to_index[c]).collect()
    }
}

/// Generates one utterance of roughly `duration` seconds at 16 kHz.
pub fn synth_utterance(speaker: &SpeakerProfile, duration: f64, rng: &mut impl Rng) -> SyntheticUtterance {
    let sr = PIPELINE_SAMPLE_RATE as f64;
    let total = (duration * sr).round().max(800.0) as usize;
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut pos = 0;
    let mut prev = usize::MAX;
    while pos < total {
        let class = loop {
            let c = rng.random_range(0..3);
            if c != prev {
                break c;
            }
        };
        let len = (rng.random_range(0.2..0.4) * sr) as usize;
        segments.push((class, len.min(total - pos)));
        pos += len;
        prev = class;
    }

    let mut samples = vec![0.0; total];
    let mut class_at = vec![0usize; total];
    let mut phase = 0.0f64;
    let base_f0 = rng.random_range(speaker.f0_low..=speaker.f0_high);
    let vib_phase = rng.random_range(0.0..2.0 * PI);
    let mut start = 0;
    for &(class, len) in &segments {
        let gain = rng.random_range(0.6..1.0);
        let seg = if class == 2 {
            fricative(len, rng)
        } else {
            let glide = rng.random_range(-0.08..0.08);
            vowel(&FORMANTS[class], speaker, base_f0, glide, vib_phase, start, len, &mut phase)
        };
        for (i, v) in seg.into_iter().enumerate() {
            let edge = i.min(len - 1 - i);
            let fade = if edge < FADE { (edge as f64 + 0.5) / FADE as f64 } else { 1.0 };
            samples[start + i] = gain * fade * v;
            class_at[start + i] = class;
        }
        start += len;
    }
    let grid = FrameGrid { length: 400, shift: 80 };
    let frames = grid.frame_count(total).unwrap_or(0);
    let classes = (0..frames).map(|t| class_at[grid.center(t)]).collect();
    SyntheticUtterance { waveform: Waveform::new(samples, PIPELINE_SAMPLE_RATE).expect("finite samples"), classes }
}

fn formant_gain(f: f64, formants: &[f64; 3], scale: f64) -> f64 {
    formants
        .iter()
        .zip(BANDWIDTHS)
        .enumerate()
        .map(|(k, (&fc, bw))| {
            let d = (f - fc * scale) / bw;
            (1.0 / (k as f64 + 1.0)) / (1.0 + d * d)
        })
        .sum::<f64>()
        + 0.01
}

#[allow(clippy::too_many_arguments)]
fn vowel(
    formants: &[f64; 3],
    speaker: &SpeakerProfile,
    f0: f64,
    glide: f64,
    vib_phase: f64,
    offset: usize,
    len: usize,
    phase: &mut f64,
) -> Vec<f64> {
    let sr = PIPELINE_SAMPLE_RATE as f64;
    let nyquist_guard = 0.47 * sr;
    let mut out = Vec::with_capacity(len);
    let harmonics = (nyquist_guard / (f0 * 0.9)) as usize;
    let gains: Vec<f64> = (1..=harmonics).map(|k| formant_gain(k as f64 * f0, formants, speaker.formant_scale)).collect();
    let norm = gains.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-9);
    for n in 0..len {
        let t = (offset + n) as f64 / sr;
        let progress = n as f64 / len as f64;
        let inst = f0
            * (1.0 + glide * (progress - 0.5))
            * (1.0 + speaker.vibrato_depth * (2.0 * PI * speaker.vibrato_hz * t + vib_phase).sin());
        *phase += 2.0 * PI * inst / sr;
        *phase %= 2.0 * PI * 1e6;
        let mut v = 0.0;
        for (k, &g) in gains.iter().enumerate() {
            let fk = inst * (k + 1) as f64;
            if fk >= nyquist_guard {
                break;
            }
            v += g * ((k + 1) as f64 * *phase).sin();
        }
        out.push(0.35 * v / norm);
    }
    out
}

/// White noise twice differenced: power rises as `sin^4(w/2)`.
fn fricative(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let noise: Vec<f64> = (0..len + 2).map(|_| StandardNormal.sample(rng)).collect();
    (0..len).map(|n| 0.03 * (noise[n + 2] - 2.0 * noise[n + 1] + noise[n])).collect()
}

/// `n` utterances of 0.8 to 1.6 s from randomly drawn speakers.
pub fn labeled_corpus(n: usize, seed: u64) -> Vec<SyntheticUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let speaker = SpeakerProfile::random(&mut rng);
            let dur = rng.random_range(0.8..1.6);
            synth_utterance(&speaker, dur, &mut rng)
        })
        .collect()
}

/// `n` utterances from a single speaker.
pub fn speaker_corpus(speaker: &SpeakerProfile, n: usize, duration: f64, seed: u64) -> Vec<SyntheticUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| synth_utterance(speaker, duration, &mut rng)).collect()
}

/// Writes `name_NNNN.wav` (and `.lab` when `class_to_index` is given) plus a
/// tab-separated manifest with relative paths; returns the manifest path.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    name: &str,
    utts: &[SyntheticUtterance],
    class_to_index: Option<&[usize; 3]>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for (i, u) in utts.iter().enumerate() {
        let wav = format!("{name}_{i:04}.wav");
        write_wav(dir.join(&wav), &u.waveform)?;
        match class_to_index {
            Some(map) => {
                let lab = format!("{name}_{i:04}.lab");
                let text: String = u.labels(map).iter().map(|l| format!("{l}\n")).collect();
                std::fs::write(dir.join(&lab), text)?;
                manifest.push_str(&format!("{wav}\t{lab}\n"));
            }
            None => manifest.push_str(&format!("{wav}\n")),
        }
    }
    let path = dir.join(format!("{name}.manifest"));
    std::fs::write(&path, manifest)?;
    Ok(path)
}

/// Posteriorgram-like inputs (soft one-hot over `classes` of `dims`) paired
/// with targets that blend fixed per-class templates of `target_dims`.
pub fn synthetic_pairs(n: usize, frames: usize, dims: usize, target_dims: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let active = dims.min(3);
    let templates: Vec<Vec<f64>> = (0..active)
        .map(|_| (0..target_dims).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    (0..n)
        .map(|_| {
            let mut inputs = Vec::with_capacity(frames);
            let mut targets = Vec::with_capacity(frames);
            let mut class = rng.random_range(0..active);
            let mut left = rng.random_range(6..16);
            for _ in 0..frames {
                if left == 0 {
                    class = (class + rng.random_range(1..active.max(2))) % active;
                    left = rng.random_range(6..16);
                }
                left -= 1;
                let confidence = rng.random_range(0.7..0.98);
                let mut p = vec![(1.0 - confidence) / (dims - 1).max(1) as f64; dims];
                p[class] = confidence;
                let y = (0..target_dims).map(|d| (0..active).map(|k| p[k] * templates[k][d]).sum()).collect();
                inputs.push(p);
                targets.push(y);
            }
            Example::regression(inputs, targets)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_cover_every_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = synth_utterance(&SpeakerProfile::target(), 1.0, &mut rng);
        assert_eq!(u.waveform.len(), 16_000);
        assert_eq!(u.classes.len(), (16_000 - 400) / 80 + 1);
        assert!(u.classes.iter().all(|&c| c < 3));
        assert!(u.waveform.peak() < 1.0);
        let distinct: std::collections::BTreeSet<_> = u.classes.iter().collect();
        assert!(distinct.len() >= 2);
    }

    #[test]
    fn corpus_is_seeded() {
        assert_eq!(labeled_corpus(3, 9), labeled_corpus(3, 9));
        assert_ne!(labeled_corpus(1, 9), labeled_corpus(1, 10));
    }

    #[test]
    fn pairs_have_requested_shape() {
        let pairs = synthetic_pairs(4, 30, 39, 40, 1);
        assert_eq!(pairs.len(), 4);
        for ex in &pairs {
            assert_eq!(ex.inputs.len(), 30);
            for x in &ex.inputs {
                assert_eq!(x.len(), 39);
                assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
