//! Training and conversion stages.
//!
//! Training: target-speaker audio → (posteriorgram, mel-cepstrum) pairs →
//! DBLSTM regression onto normalized mel-cepstra. Conversion: source audio
//! → posteriorgram → DBLSTM → denormalized mel-cepstra, synthesized with
//! the source's own F0 and aperiodicity.

use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::archive::{Model, ModelArchive};
use crate::asr::posteriorgram;
use crate::audio::{read_wav, resample, write_wav, Waveform};
use crate::error::{Error, Result};
use crate::features::{mvn_fit, mvn_invert, FeatureMatrix, MvnStats};
use crate::manifest::DatasetManifest;
use crate::nn::{DblstmNetwork, Example, Loss, OptimizerConfig, Trainer, TrainingLog};
use crate::vocoder::{analyze, synthesize, AcousticAnalysis, VocoderConfig};

/// Largest posteriorgram/acoustic frame-count difference resolved by truncation.
pub const MAX_FRAME_MISMATCH: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    /// Posteriorgram, P dims.
    pub input: FeatureMatrix,
    /// Raw mel-cepstra, same frame count as `input`.
    pub target: FeatureMatrix,
    /// Frames dropped from the longer track.
    pub truncated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub pairs: Vec<TrainingPair>,
    /// Mel-cepstrum statistics over every target frame in the set.
    pub target_norm: MvnStats,
}

/// Common frame count of two tracks on the same grid.
pub fn reconcile_frames(posteriors: usize, acoustic: usize) -> Result<usize> {
    let difference = posteriors.abs_diff(acoustic);
    if difference > MAX_FRAME_MISMATCH {
        return Err(Error::FrameGridMismatch { posteriors, acoustic, difference });
    }
    Ok(posteriors.min(acoustic))
}

fn at_rate(w: &Waveform, rate: u32) -> Result<Waveform> {
    if w.sample_rate() == rate {
        Ok(w.clone())
    } else {
        resample(w, rate)
    }
}

pub fn training_pair(asr: &ModelArchive, w: &Waveform, vocoder: &VocoderConfig) -> Result<TrainingPair> {
    let w = at_rate(w, vocoder.sample_rate)?;
    let post = posteriorgram(asr, &w)?.into_matrix();
    let acoustic = analyze(&w, vocoder)?;
    let frames = reconcile_frames(post.frames(), acoustic.frames())?;
    Ok(TrainingPair {
        truncated: post.frames().max(acoustic.frames()) - frames,
        input: post.truncated(frames),
        target: acoustic.mcep.coeffs.truncated(frames),
    })
}

/// One pair per utterance plus target normalization statistics.
pub fn build_training_pairs_from_waveforms(
    asr: &ModelArchive,
    utterances: &[Waveform],
    vocoder: &VocoderConfig,
) -> Result<TrainingSet> {
    if utterances.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let pairs = utterances
        .par_iter()
        .map(|w| training_pair(asr, w, vocoder))
        .collect::<Result<Vec<_>>>()?;
    let target_norm = mvn_fit(pairs.iter().map(|p| &p.target))?;
    Ok(TrainingSet { pairs, target_norm })
}

/// Builds pairs from unlabeled target-speaker audio; label columns are ignored.
pub fn build_training_pairs(asr: &ModelArchive, manifest: &DatasetManifest, vocoder: &VocoderConfig) -> Result<TrainingSet> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let waves = manifest.entries.par_iter().map(|e| read_wav(&e.audio)).collect::<Result<Vec<_>>>()?;
    build_training_pairs_from_waveforms(asr, &waves, vocoder)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConversionArch {
    pub layers: usize,
    pub hidden: usize,
}

impl ConversionArch {
    /// Four layers of 128 cells per direction.
    pub const SMALL: Self = Self { layers: 4, hidden: 128 };
    /// Four layers of 512 cells per direction.
    pub const LARGE: Self = Self { layers: 4, hidden: 512 };
}

impl Default for ConversionArch {
    fn default() -> Self {
        Self::SMALL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcConfig {
    pub arch: ConversionArch,
    pub optimizer: OptimizerConfig,
}

impl Default for VcConfig {
    fn default() -> Self {
        Self { arch: ConversionArch::default(), optimizer: OptimizerConfig { epochs: 50, ..OptimizerConfig::default() } }
    }
}

/// Trains a DBLSTM from posteriorgrams to normalized mel-cepstra; the
/// archive carries the target statistics for denormalization.
pub fn train_conversion_model(set: &TrainingSet, cfg: &VcConfig) -> Result<(ModelArchive, TrainingLog)> {
    let first = set.pairs.first().ok_or(Error::EmptyInput)?;
    let (input_dim, output_dim) = (first.input.dims(), first.target.dims());
    let examples = set
        .pairs
        .iter()
        .map(|p| {
            if p.input.dims() != input_dim || p.target.dims() != output_dim {
                return Err(Error::ShapeMismatch("training pairs disagree on dimensions".into()));
            }
            if p.input.frames() != p.target.frames() {
                return Err(Error::FrameGridMismatch {
                    posteriors: p.input.frames(),
                    acoustic: p.target.frames(),
                    difference: p.input.frames().abs_diff(p.target.frames()),
                });
            }
            let norm = crate::features::mvn_apply(&p.target, &set.target_norm)?;
            Ok(Example::regression(p.input.to_rows(), norm.to_rows()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.optimizer.seed);
    let mut net = DblstmNetwork::random(input_dim, cfg.arch.hidden, cfg.arch.layers, output_dim, &mut rng);
    let mut trainer = Trainer::new(&net, Loss::Mse, cfg.optimizer.clone());
    let mut log = TrainingLog::default();
    for epoch in 0..cfg.optimizer.epochs {
        let loss = trainer.run_epoch(&mut net, &examples)?;
        info!("vc epoch {epoch}: mse {loss:.6}");
        log.epoch_losses.push(loss);
    }
    let archive = ModelArchive::new(Model::Regressor(net), None, None, Some(set.target_norm.clone()))?;
    Ok((archive, log))
}

/// Checks the ASR → DBLSTM → vocoder dimension chain.
pub fn check_dimension_chain(asr: &ModelArchive, vc: &ModelArchive, vocoder: &VocoderConfig) -> Result<()> {
    let classes = asr.classifier()?.num_classes();
    let net = vc.regressor()?;
    if classes != net.input_dim() {
        return Err(Error::ModelDimMismatch(format!(
            "ASR emits {classes} posteriors but the conversion model reads {}",
            net.input_dim()
        )));
    }
    if net.output_dim() != vocoder.mcep_order {
        return Err(Error::ModelDimMismatch(format!(
            "conversion model emits {} coefficients but the vocoder expects {}",
            net.output_dim(),
            vocoder.mcep_order
        )));
    }
    Ok(())
}

/// Denormalized mel-cepstra predicted for the first `frames` posteriorgram frames.
fn run_dblstm(vc: &ModelArchive, post: &FeatureMatrix, frames: usize) -> Result<FeatureMatrix> {
    let rows = vc.regressor()?.forward(&post.truncated(frames).to_rows())?;
    let m = FeatureMatrix::from_rows(&rows, post.frame_shift())?;
    match vc.output_norm() {
        Some(norm) => mvn_invert(&m, norm),
        None => Ok(m),
    }
}

/// Centred moving average over `width` frames (edges use the frames available).
pub fn smooth_frames(m: &FeatureMatrix, width: usize) -> FeatureMatrix {
    if width <= 1 || m.frames() == 0 {
        return m.clone();
    }
    let half = width / 2;
    let mut out = m.clone();
    for t in 0..m.frames() {
        let (lo, hi) = (t.saturating_sub(half), (t + half).min(m.frames() - 1));
        let n = (hi - lo + 1) as f64;
        for d in 0..m.dims() {
            out.row_mut(t)[d] = (lo..=hi).map(|s| m.row(s)[d]).sum::<f64>() / n;
        }
    }
    out
}

/// Mel-cepstra the models predict for `w` (no synthesis).
pub fn predict_mcep(asr: &ModelArchive, vc: &ModelArchive, w: &Waveform, vocoder: &VocoderConfig) -> Result<FeatureMatrix> {
    check_dimension_chain(asr, vc, vocoder)?;
    let w = at_rate(w, vocoder.sample_rate)?;
    let post = posteriorgram(asr, &w)?.into_matrix();
    run_dblstm(vc, &post, post.frames())
}

#[derive(Debug, Clone)]
pub struct ConversionJob<'a> {
    pub source: Waveform,
    pub asr_model: &'a ModelArchive,
    pub vc_model: &'a ModelArchive,
    /// Written as 16-bit PCM when set.
    pub output: Option<PathBuf>,
    pub vocoder: VocoderConfig,
    /// Moving-average width applied to predicted mel-cepstra; 0 or 1 disables it.
    pub smoothing: usize,
}

impl<'a> ConversionJob<'a> {
    pub fn new(source: Waveform, asr_model: &'a ModelArchive, vc_model: &'a ModelArchive) -> Self {
        Self { source, asr_model, vc_model, output: None, vocoder: VocoderConfig::default(), smoothing: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConversionReport {
    pub source_sample_rate: u32,
    pub output_sample_rate: u32,
    pub source_samples: usize,
    pub output_samples: usize,
    pub posteriorgram_frames: usize,
    pub acoustic_frames: usize,
    pub frames_used: usize,
    pub truncated: usize,
    pub smoothing: usize,
    pub clipped_samples: usize,
    pub seconds_asr: f64,
    pub seconds_dblstm: f64,
    pub seconds_analysis: f64,
    pub seconds_synthesis: f64,
}

impl ConversionReport {
    pub fn to_text(&self) -> String {
        format!(
            "source_sample_rate = {}\noutput_sample_rate = {}\nsource_samples = {}\noutput_samples = {}\n\
             posteriorgram_frames = {}\nacoustic_frames = {}\nframes_used = {}\ntruncated_frames = {}\n\
             smoothing = {}\nclipped_samples = {}\nseconds_asr = {:.3}\nseconds_dblstm = {:.3}\n\
             seconds_analysis = {:.3}\nseconds_synthesis = {:.3}\n",
            self.source_sample_rate,
            self.output_sample_rate,
            self.source_samples,
            self.output_samples,
            self.posteriorgram_frames,
            self.acoustic_frames,
            self.frames_used,
            self.truncated,
            self.smoothing,
            self.clipped_samples,
            self.seconds_asr,
            self.seconds_dblstm,
            self.seconds_analysis,
            self.seconds_synthesis
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversion {
    pub waveform: Waveform,
    /// Analysis of the (resampled) source.
    pub source_analysis: AcousticAnalysis,
    /// Exactly what the synthesizer consumed.
    pub synthesis_input: AcousticAnalysis,
    pub report: ConversionReport,
}

/// Converts `job.source` to the voice the conversion model was trained on.
pub fn convert(job: &ConversionJob) -> Result<Conversion> {
    let cfg = &job.vocoder;
    check_dimension_chain(job.asr_model, job.vc_model, cfg)?;
    let source = at_rate(&job.source, cfg.sample_rate)?;

    let t = Instant::now();
    let post = posteriorgram(job.asr_model, &source)?.into_matrix();
    let seconds_asr = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let source_analysis = analyze(&source, cfg)?;
    let seconds_analysis = t.elapsed().as_secs_f64();

    let frames = reconcile_frames(post.frames(), source_analysis.frames())?;
    let t = Instant::now();
    let mut mcep = run_dblstm(job.vc_model, &post, frames)?;
    if job.smoothing > 1 {
        mcep = smooth_frames(&mcep, job.smoothing);
    }
    let seconds_dblstm = t.elapsed().as_secs_f64();

    let mut synthesis_input = source_analysis.truncated(frames);
    synthesis_input.mcep.coeffs = mcep;
    debug_assert!(synthesis_input.f0.values[..] == source_analysis.f0.values[..frames]);
    debug_assert!(synthesis_input.ap.ratios.data() == source_analysis.ap.ratios.truncated(frames).data());

    let t = Instant::now();
    let waveform = synthesize(&synthesis_input, cfg.sample_rate, cfg)?;
    let seconds_synthesis = t.elapsed().as_secs_f64();

    let mut report = ConversionReport {
        source_sample_rate: job.source.sample_rate(),
        output_sample_rate: waveform.sample_rate(),
        source_samples: job.source.len(),
        output_samples: waveform.len(),
        posteriorgram_frames: post.frames(),
        acoustic_frames: source_analysis.frames(),
        frames_used: frames,
        truncated: post.frames().max(source_analysis.frames()) - frames,
        smoothing: job.smoothing,
        clipped_samples: 0,
        seconds_asr,
        seconds_dblstm,
        seconds_analysis,
        seconds_synthesis,
    };
    if report.truncated > 0 {
        warn!("truncated {} frame(s) to reconcile frame grids", report.truncated);
    }
    if let Some(path) = &job.output {
        report.clipped_samples = write_wav(path, &waveform)?.clipped;
    }
    Ok(Conversion { waveform, source_analysis, synthesis_input, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::FrontEnd;
    use crate::features::MfccConfig;
    use crate::nn::DnnClassifier;
    use crate::synth::{synth_utterance, SpeakerProfile};

    fn models(classes: usize, vc_in: usize, vc_out: usize) -> (ModelArchive, ModelArchive) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fe = FrontEnd { mfcc: MfccConfig::default(), context_left: 8, context_right: 8 };
        let asr = ModelArchive::new(Model::Classifier(DnnClassifier::random(221, &[8], classes, &mut rng)), Some(fe), None, None);
        let vc = ModelArchive::new(Model::Regressor(DblstmNetwork::random(vc_in, 3, 1, vc_out, &mut rng)), None, None, None);
        (asr.unwrap(), vc.unwrap())
    }

    #[test]
    fn mismatch_tolerance() {
        assert_eq!(reconcile_frames(100, 102).unwrap(), 100);
        assert_eq!(reconcile_frames(98, 96).unwrap(), 96);
        assert!(matches!(reconcile_frames(100, 103), Err(Error::FrameGridMismatch { difference: 3, .. })));
    }

    #[test]
    fn dimension_chain_fails_fast() {
        let (asr, vc) = models(39, 38, 40);
        let w = Waveform::silence(4000, 16_000).unwrap();
        let job = ConversionJob::new(w, &asr, &vc);
        assert!(matches!(convert(&job), Err(Error::ModelDimMismatch(_))));
        let (asr, vc) = models(39, 39, 12);
        assert!(matches!(check_dimension_chain(&asr, &vc, &VocoderConfig::default()), Err(Error::ModelDimMismatch(_))));
    }

    #[test]
    fn conversion_passes_source_excitation_through() {
        let (asr, vc) = models(39, 39, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = synth_utterance(&SpeakerProfile::source(), 0.5, &mut rng).waveform;
        let out = convert(&ConversionJob::new(src.clone(), &asr, &vc)).unwrap();
        assert_eq!(out.waveform.len(), src.len());
        assert_eq!(out.report.truncated, 0);
        let f0 = crate::vocoder::estimate_f0(&src, &VocoderConfig::default()).unwrap();
        assert_eq!(out.synthesis_input.f0.values, f0.values);
        assert_eq!(out.synthesis_input.ap, out.source_analysis.ap);
    }

    #[test]
    fn smoothing_preserves_constants() {
        let m = FeatureMatrix::new(vec![2.0; 12], 6, 2, 0.005).unwrap();
        assert_eq!(smooth_frames(&m, 3), m);
        let ramp = FeatureMatrix::new((0..5).map(f64::from).collect(), 5, 1, 0.005).unwrap();
        assert_eq!(smooth_frames(&ramp, 3).data(), &[0.5, 1.0, 2.0, 3.0, 3.5]);
    }

    #[test]
    fn empty_sets_rejected() {
        let (asr, _) = models(39, 39, 40);
        assert!(matches!(
            build_training_pairs_from_waveforms(&asr, &[], &VocoderConfig::default()),
            Err(Error::EmptyManifest)
        ));
        let set = TrainingSet { pairs: vec![], target_norm: MvnStats::identity(40) };
        assert!(train_conversion_model(&set, &VcConfig::default()).is_err());
    }
}
