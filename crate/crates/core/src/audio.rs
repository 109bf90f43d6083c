//! Waveform container, WAV I/O and sample-rate conversion.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// Averages interleaved channels into one.
pub fn downmix(interleaved: &[f64], channels: usize) -> Vec<f64> {
    if channels <= 1 {
        return interleaved.to_vec();
    }
    let scale = 1.0 / channels as f64;
    interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() * scale)
        .collect()
}

fn map_hound(err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::Io(e),
        hound::Error::FormatError(msg) => Error::CorruptHeader(msg.to_string()),
        hound::Error::Unsupported => Error::UnsupportedEncoding("unsupported WAV format".into()),
        other => Error::CorruptHeader(other.to_string()),
    }
}

/// Reads a PCM16 or float32 WAV file with one or two channels.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    // the file opened, so read failures while parsing mean a malformed header
    let mut reader = hound::WavReader::new(file).map_err(|e| match e {
        hound::Error::IoError(io) => Error::CorruptHeader(io.to_string()),
        other => map_hound(other),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedEncoding(format!("{channels} channels")));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (format, bits) => {
            return Err(Error::UnsupportedEncoding(format!("{format:?} with {bits} bits")));
        }
    };
    Waveform::new(downmix(&interleaved, channels), spec.sample_rate)
}

/// Outcome of [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteReport {
    /// Samples whose magnitude exceeded 1 and were saturated.
    pub clipped: usize,
}

/// Writes 16-bit PCM mono. Samples beyond ±1 are saturated and counted.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<WriteReport> {
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec).map_err(map_hound)?;
    let mut report = WriteReport::default();
    for &s in w.samples() {
        if s.abs() > 1.0 {
            report.clipped += 1;
        }
        writer.write_sample(quantize_i16(s)).map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)?;
    if report.clipped > 0 {
        log::warn!(
            "{}: {} samples exceeded full scale and were saturated",
            path.as_ref().display(),
            report.clipped
        );
    }
    Ok(report)
}

fn quantize_i16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

const SINC_ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 9.0;
const CUTOFF_MARGIN: f64 = 0.97;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= half / k as f64;
        let t2 = term * term;
        sum += t2;
        if t2 < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Kaiser-windowed sinc resampler. The output has `round(len * target / source)`
/// samples; equal rates return the input unchanged.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    let source_rate = w.sample_rate();
    if source_rate == target_rate {
        return Ok(w.clone());
    }
    let ratio = target_rate as f64 / source_rate as f64;
    let out_len = (w.len() as f64 * ratio).round() as usize;
    // cutoff relative to the source Nyquist
    let cutoff = ratio.min(1.0) * CUTOFF_MARGIN;
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let norm = bessel_i0(KAISER_BETA);
    let x = w.samples();
    let step = source_rate as f64 / target_rate as f64;

    let out = (0..out_len)
        .map(|m| {
            let t = m as f64 * step;
            let lo = ((t - half_width).ceil().max(0.0)) as usize;
            let hi = ((t + half_width).floor() as isize).min(x.len() as isize - 1);
            if hi < lo as isize {
                return 0.0;
            }
            (lo..=hi as usize)
                .map(|k| {
                    let d = t - k as f64;
                    let r = d / half_width;
                    let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
                    x[k] * cutoff * sinc(cutoff * d) * window
                })
                .sum()
        })
        .collect();
    Waveform::new(out, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, len: usize, amp: f64) -> Waveform {
        let s = (0..len)
            .map(|n| amp * (2.0 * PI * freq * n as f64 / rate as f64).sin())
            .collect();
        Waveform::new(s, rate).unwrap()
    }

    fn write_raw_wav(path: &Path, spec: hound::WavSpec, f: impl FnOnce(&mut hound::WavWriter<std::io::BufWriter<std::fs::File>>)) {
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        f(&mut w);
        w.finalize().unwrap();
    }

    #[test]
    fn silence_file_reads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.wav");
        let spec = hound::WavSpec { channels: 1, sample_rate: 16000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        write_raw_wav(&p, spec, |w| (0..16000).for_each(|_| w.write_sample(0i16).unwrap()));
        let wav = read_wav(&p).unwrap();
        assert_eq!(wav.len(), 16000);
        assert_eq!(wav.sample_rate(), 16000);
        assert!(wav.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn stereo_symmetric_downmix_is_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = hound::WavSpec { channels: 2, sample_rate: 16000, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
        write_raw_wav(&p, spec, |w| {
            for _ in 0..100 {
                w.write_sample(0.5f32).unwrap();
                w.write_sample(-0.5f32).unwrap();
            }
        });
        let wav = read_wav(&p).unwrap();
        assert_eq!(wav.len(), 100);
        assert!(wav.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn int16_half_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.wav");
        let spec = hound::WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
        write_raw_wav(&p, spec, |w| w.write_sample(16384i16).unwrap());
        let wav = read_wav(&p).unwrap();
        assert_eq!(wav.samples(), &[16384.0 / 32768.0]);
        assert_eq!(wav.samples()[0], 0.5);
    }

    #[test]
    fn rejects_24_bit_and_missing_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("24.wav");
        let spec = hound::WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 24, sample_format: hound::SampleFormat::Int };
        write_raw_wav(&p, spec, |w| w.write_sample(1i32).unwrap());
        assert!(matches!(read_wav(&p), Err(Error::UnsupportedEncoding(_))));

        assert!(matches!(read_wav(dir.path().join("nope.wav")), Err(Error::NotFound(_))));

        let g = dir.path().join("garbage.wav");
        std::fs::write(&g, b"RIFF\x10\x00\x00\x00WAVEjunkjunkjunk").unwrap();
        let r = read_wav(&g);
        assert!(matches!(r, Err(Error::CorruptHeader(_))), "{r:?}");
    }

    #[test]
    fn write_round_trip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sine.wav");
        let w = sine(440.0, 16000, 16000, 0.8);
        let report = write_wav(&p, &w).unwrap();
        assert_eq!(report.clipped, 0);
        // canonical 44-byte header
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 44 + 2 * 16000);
        let back = read_wav(&p).unwrap();
        let max_err = w.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_err <= 1.0 / 32768.0, "{max_err}");
    }

    #[test]
    fn write_saturates_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clip.wav");
        let w = Waveform::new(vec![1.5, -2.0, 0.25], 16000).unwrap();
        let report = write_wav(&p, &w).unwrap();
        assert_eq!(report.clipped, 2);
        let back = read_wav(&p).unwrap();
        assert!((back.samples()[0] - 1.0).abs() <= 1.0 / 32768.0);
        assert_eq!(back.samples()[1], -1.0);
        assert_eq!(back.samples()[2], 0.25);
    }

    #[test]
    fn write_empty_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let w = Waveform::new(vec![], 16000).unwrap();
        assert!(matches!(write_wav(dir.path().join("e.wav"), &w), Err(Error::EmptyInput)));
    }

    #[test]
    fn resample_identity_and_length() {
        let w = sine(100.0, 16000, 1234, 0.5);
        assert_eq!(resample(&w, 16000).unwrap(), w);
        let w48 = sine(100.0, 48000, 48000, 0.5);
        assert_eq!(resample(&w48, 16000).unwrap().len(), 16000);
        let w441 = sine(100.0, 44100, 44100, 0.5);
        assert_eq!(resample(&w441, 16000).unwrap().len(), 16000);
        assert!(resample(&w, 0).is_err());
    }

    #[test]
    fn downmix_is_linear() {
        let a = [0.1, 0.3, -0.2, 0.4];
        let b = [0.5, -0.1, 0.2, 0.0];
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let lhs = downmix(&sum, 2);
        let rhs: Vec<f64> = downmix(&a, 2).iter().zip(downmix(&b, 2)).map(|(x, y)| x + y).collect();
        for (l, r) in lhs.iter().zip(&rhs) {
            assert!((l - r).abs() < 1e-15);
        }
    }
}
