//! Front-end DSP: framing, STFT, MFCC, context stacking and mean-variance
//! normalization.

use std::f64::consts::PI;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::Waveform;
use crate::binio::{round_f32, Reader, Writer};
use crate::error::{Error, Result};

/// Frames × dims real matrix on a fixed frame grid.
///
/// MFCCs, stacked contexts, posteriorgrams and acoustic tracks all use this
/// container.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    frames: usize,
    dims: usize,
    frame_shift: f64,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, frames: usize, dims: usize, frame_shift: f64) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidArgument("feature dims must be positive".into()));
        }
        if data.len() != frames * dims {
            return Err(Error::DimMismatch { expected: frames * dims, got: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite feature at frame {}, dim {}",
                i / dims,
                i % dims
            )));
        }
        Ok(Self { data, frames, dims, frame_shift })
    }

    pub fn zeros(frames: usize, dims: usize, frame_shift: f64) -> Self {
        assert!(dims > 0);
        Self { data: vec![0.0; frames * dims], frames, dims, frame_shift }
    }

    pub fn from_rows(rows: &[Vec<f64>], frame_shift: f64) -> Result<Self> {
        let dims = rows.first().map(Vec::len).ok_or(Error::EmptyInput)?;
        if let Some(bad) = rows.iter().find(|r| r.len() != dims) {
            return Err(Error::DimMismatch { expected: dims, got: bad.len() });
        }
        Self::new(rows.concat(), rows.len(), dims, frame_shift)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn frame_shift(&self) -> f64 {
        self.frame_shift
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dims..(t + 1) * self.dims]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dims..(t + 1) * self.dims]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dims)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Keeps the first `frames` frames.
    pub fn truncated(&self, frames: usize) -> Self {
        let frames = frames.min(self.frames);
        Self {
            data: self.data[..frames * self.dims].to_vec(),
            frames,
            dims: self.dims,
            frame_shift: self.frame_shift,
        }
    }

    /// Rounds every value to f32 precision, the resolution of the file format.
    pub fn quantized(&self) -> Self {
        Self {
            data: self.data.iter().map(|&v| round_f32(v)).collect(),
            ..self.clone()
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(FMAT_MAGIC);
        w.u32(FMAT_VERSION);
        w.u32(self.frames as u32);
        w.u32(self.dims as u32);
        w.f64(self.frame_shift);
        w.f32s(&self.data);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4)?;
        if magic != FMAT_MAGIC {
            return Err(Error::VersionMismatch {
                expected: "FMAT".into(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let version = r.u32()?;
        if version != FMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: format!("FMAT v{FMAT_VERSION}"),
                found: format!("FMAT v{version}"),
            });
        }
        let frames = r.u32()? as usize;
        let dims = r.u32()? as usize;
        let frame_shift = r.f64()?;
        if dims == 0 {
            return Err(Error::Corrupt("zero feature dimension".into()));
        }
        let data = r.f32s(frames * dims)?;
        if r.remaining() != 0 {
            return Err(Error::Corrupt(format!("{} trailing bytes", r.remaining())));
        }
        Self::new(data, frames, dims, frame_shift).map_err(|e| Error::Corrupt(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }
}

const FMAT_MAGIC: &[u8; 4] = b"FMAT";
const FMAT_VERSION: u32 = 1;

/// Analysis frame geometry in samples. Frame `t` covers
/// `[t*shift, t*shift + length)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGrid {
    pub length: usize,
    pub shift: usize,
}

impl FrameGrid {
    pub fn new(length: usize, shift: usize) -> Result<Self> {
        if length == 0 || shift == 0 {
            return Err(Error::InvalidArgument("frame length and shift must be positive".into()));
        }
        Ok(Self { length, shift })
    }

    pub fn frame_count(&self, num_samples: usize) -> Result<usize> {
        if num_samples < self.length {
            return Err(Error::SignalTooShort { needed: self.length, got: num_samples });
        }
        Ok((num_samples - self.length) / self.shift + 1)
    }

    /// Sample index of the centre of frame `t`.
    pub fn center(&self, t: usize) -> usize {
        t * self.shift + self.length / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hamming,
    Hann,
}

impl WindowKind {
    /// Symmetric window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let denom = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let c = (2.0 * PI * i as f64 / denom).cos();
                match self {
                    WindowKind::Hamming => 0.54 - 0.46 * c,
                    WindowKind::Hann => 0.5 - 0.5 * c,
                }
            })
            .collect()
    }
}

/// One-sided complex spectrogram.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub nfft: usize,
    pub frames: Vec<Vec<Complex64>>,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.nfft / 2 + 1
    }

    pub fn power(&self) -> Vec<Vec<f64>> {
        self.frames.iter().map(|f| f.iter().map(|c| c.norm_sqr()).collect()).collect()
    }
}

/// Short-time Fourier transform with `nfft` the next power of two at or above
/// `frame_len`.
pub fn stft(samples: &[f64], frame_len: usize, shift: usize, window: WindowKind) -> Result<Spectrogram> {
    let grid = FrameGrid::new(frame_len, shift)?;
    let count = grid.frame_count(samples.len())?;
    let nfft = frame_len.next_power_of_two();
    let win = window.coefficients(frame_len);
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let bins = nfft / 2 + 1;
    let mut buf = vec![Complex64::default(); nfft];
    let frames = (0..count)
        .map(|t| {
            let start = t * shift;
            buf.iter_mut().for_each(|c| *c = Complex64::default());
            for (i, (&x, &w)) in samples[start..start + frame_len].iter().zip(&win).enumerate() {
                buf[i] = Complex64::new(x * w, 0.0);
            }
            fft.process(&mut buf);
            buf[..bins].to_vec()
        })
        .collect();
    Ok(Spectrogram { nfft, frames })
}

/// Orthonormal DCT-II of `x`, keeping the first `n_out` coefficients.
pub fn dct2_orthonormal(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len();
    let nf = n as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, &v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * nf)).cos())
                    .sum::<f64>()
        })
        .collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_length: usize,
    pub frame_shift: usize,
    pub nfft: usize,
    pub n_mels: usize,
    pub n_ceps: usize,
    pub preemphasis: f64,
    pub low_hz: f64,
    pub high_hz: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    /// 25 ms Hamming frames every 5 ms at 16 kHz, 26 mel bands, 13 cepstra.
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_length: 400,
            frame_shift: 80,
            nfft: 512,
            n_mels: 26,
            n_ceps: 13,
            preemphasis: 0.97,
            low_hz: 0.0,
            high_hz: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn grid(&self) -> FrameGrid {
        FrameGrid { length: self.frame_length, shift: self.frame_shift }
    }

    pub fn frame_shift_seconds(&self) -> f64 {
        self.frame_shift as f64 / self.sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_length == 0 || self.frame_shift == 0 || self.n_mels == 0 || self.n_ceps == 0 {
            return Err(Error::InvalidArgument("MFCC geometry must be positive".into()));
        }
        if self.nfft < self.frame_length || !self.nfft.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "nfft {} must be a power of two >= frame length {}",
                self.nfft, self.frame_length
            )));
        }
        if self.n_ceps > self.n_mels {
            return Err(Error::InvalidArgument("more cepstra than mel bands".into()));
        }
        if !(self.low_hz >= 0.0 && self.low_hz < self.high_hz && self.high_hz <= self.sample_rate as f64 / 2.0) {
            return Err(Error::InvalidArgument("mel band edges out of range".into()));
        }
        Ok(())
    }
}

/// Triangular filters on the HTK mel scale, evaluated at each FFT bin's
/// exact centre frequency.
pub fn mel_filterbank(cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let bins = cfg.nfft / 2 + 1;
    let mel_lo = hz_to_mel(cfg.low_hz);
    let mel_hi = hz_to_mel(cfg.high_hz);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.nfft as f64;
    (0..cfg.n_mels)
        .map(|j| {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn preemphasize(x: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for &v in x {
        out.push(v - coeff * prev);
        prev = v;
    }
    out
}

/// Mel-frequency cepstral coefficients (c0..c{n_ceps-1}) on the configured grid.
pub fn mfcc(w: &Waveform, cfg: &MfccConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "MFCC expects {} Hz audio, got {} Hz",
            cfg.sample_rate,
            w.sample_rate()
        )));
    }
    let count = cfg.grid().frame_count(w.len())?;
    let emphasized = preemphasize(w.samples(), cfg.preemphasis);
    let filters = mel_filterbank(cfg);
    let win = WindowKind::Hamming.coefficients(cfg.frame_length);
    let fft = FftPlanner::new().plan_fft_forward(cfg.nfft);
    let bins = cfg.nfft / 2 + 1;

    let mut buf = vec![Complex64::default(); cfg.nfft];
    let mut power = vec![0.0; bins];
    let mut log_mel = vec![0.0; cfg.n_mels];
    let mut data = Vec::with_capacity(count * cfg.n_ceps);
    for t in 0..count {
        let start = t * cfg.frame_shift;
        buf.iter_mut().for_each(|c| *c = Complex64::default());
        for (i, (&x, &wv)) in emphasized[start..start + cfg.frame_length].iter().zip(&win).enumerate() {
            buf[i].re = x * wv;
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf[..bins]) {
            *p = c.norm_sqr();
        }
        for (lm, filt) in log_mel.iter_mut().zip(&filters) {
            let e: f64 = filt.iter().zip(&power).map(|(a, b)| a * b).sum();
            *lm = e.max(cfg.log_floor).ln();
        }
        data.extend(dct2_orthonormal(&log_mel, cfg.n_ceps));
    }
    FeatureMatrix::new(data, count, cfg.n_ceps, cfg.frame_shift_seconds())
}

/// Concatenates each frame with `left` predecessors and `right` successors,
/// replicating the edge frames at utterance boundaries.
pub fn stack_context(m: &FeatureMatrix, left: usize, right: usize) -> Result<FeatureMatrix> {
    if m.frames() == 0 {
        return Err(Error::EmptyInput);
    }
    let width = left + right + 1;
    let last = m.frames() as isize - 1;
    let mut data = Vec::with_capacity(m.frames() * m.dims() * width);
    for t in 0..m.frames() as isize {
        for offset in -(left as isize)..=(right as isize) {
            let src = (t + offset).clamp(0, last) as usize;
            data.extend_from_slice(m.row(src));
        }
    }
    FeatureMatrix::new(data, m.frames(), m.dims() * width, m.frame_shift())
}

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl MvnStats {
    pub fn identity(dims: usize) -> Self {
        Self { mean: vec![0.0; dims], std: vec![1.0; dims] }
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn quantized(&self) -> Self {
        Self {
            mean: self.mean.iter().map(|&v| round_f32(v)).collect(),
            // keep the floor after rounding
            std: self.std.iter().map(|&v| round_f32(v).max(round_f32(STD_FLOOR))).collect(),
        }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for (((o, &x), &m), &s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.std) {
            *o = (x - m) / s;
        }
    }

    pub fn invert_row(&self, row: &[f64], out: &mut [f64]) {
        for (((o, &x), &m), &s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.std) {
            *o = x * s + m;
        }
    }
}

/// Population mean/std over every frame of every matrix, std floored at
/// [`STD_FLOOR`].
pub fn mvn_fit<'a>(ms: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<MvnStats> {
    let mut sum: Vec<f64> = Vec::new();
    let mut sum_sq: Vec<f64> = Vec::new();
    let mut count = 0usize;
    let mut shift_mean: Vec<f64> = Vec::new();
    for m in ms {
        if m.frames() == 0 {
            continue;
        }
        if sum.is_empty() {
            sum = vec![0.0; m.dims()];
            sum_sq = vec![0.0; m.dims()];
            // shifted accumulation keeps the variance well conditioned
            shift_mean = m.row(0).to_vec();
        } else if m.dims() != sum.len() {
            return Err(Error::DimMismatch { expected: sum.len(), got: m.dims() });
        }
        for row in m.rows() {
            for (d, &x) in row.iter().enumerate() {
                let v = x - shift_mean[d];
                sum[d] += v;
                sum_sq[d] += v * v;
            }
        }
        count += m.frames();
    }
    if count == 0 {
        return Err(Error::EmptyInput);
    }
    let n = count as f64;
    let mean = sum.iter().zip(&shift_mean).map(|(s, k)| k + s / n).collect();
    let std = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, sq)| {
            let m = s / n;
            (sq / n - m * m).max(0.0).sqrt().max(STD_FLOOR)
        })
        .collect();
    Ok(MvnStats { mean, std })
}

pub fn mvn_apply(m: &FeatureMatrix, s: &MvnStats) -> Result<FeatureMatrix> {
    if m.dims() != s.dims() {
        return Err(Error::DimMismatch { expected: s.dims(), got: m.dims() });
    }
    let mut out = m.clone();
    for t in 0..m.frames() {
        s.apply_row(m.row(t), out.row_mut(t));
    }
    Ok(out)
}

/// Undoes [`mvn_apply`].
pub fn mvn_invert(m: &FeatureMatrix, s: &MvnStats) -> Result<FeatureMatrix> {
    if m.dims() != s.dims() {
        return Err(Error::DimMismatch { expected: s.dims(), got: m.dims() });
    }
    let mut out = m.clone();
    for t in 0..m.frames() {
        s.invert_row(m.row(t), out.row_mut(t));
    }
    Ok(out)
}
