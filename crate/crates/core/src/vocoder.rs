//! Parametric analysis and source-filter synthesis.
//!
//! Analysis produces three tracks on the shared 5 ms frame grid: F0 by
//! normalized autocorrelation, per-band aperiodicity from the harmonic to
//! inter-harmonic energy balance, and a 40-dimensional mel-cepstrum of a
//! pitch-adaptive spectral envelope. Synthesis mixes a pulse train with
//! Gaussian noise per band, shapes each frame with the decoded envelope and
//! overlap-adds the result.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::features::{dct2_orthonormal, FeatureMatrix, FrameGrid, WindowKind};

pub const ENVELOPE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct VocoderConfig {
    pub sample_rate: u32,
    /// Nominal frame length; frame `t` is centred at `t * frame_shift + frame_length / 2`.
    pub frame_length: usize,
    pub frame_shift: usize,
    pub f0_floor: f64,
    pub f0_ceil: f64,
    /// Autocorrelation window for F0 estimation.
    pub f0_window: usize,
    pub voicing_threshold: f64,
    pub rms_threshold: f64,
    pub nfft: usize,
    pub unvoiced_window: usize,
    pub unvoiced_smoothing_hz: f64,
    pub alpha: f64,
    pub mcep_order: usize,
    pub band_edges: Vec<f64>,
    pub noise_seed: u64,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_length: 400,
            frame_shift: 80,
            f0_floor: 60.0,
            f0_ceil: 1000.0,
            f0_window: 640,
            voicing_threshold: 0.3,
            rms_threshold: 1e-4,
            nfft: 1024,
            unvoiced_window: 400,
            unvoiced_smoothing_hz: 500.0,
            alpha: 0.42,
            mcep_order: 40,
            band_edges: vec![0.0, 1000.0, 2000.0, 4000.0, 6000.0, 8000.0],
            noise_seed: 0x5eed,
        }
    }
}

impl VocoderConfig {
    pub fn grid(&self) -> FrameGrid {
        FrameGrid { length: self.frame_length, shift: self.frame_shift }
    }

    pub fn frame_shift_seconds(&self) -> f64 {
        self.frame_shift as f64 / self.sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.frame_length == 0 || self.frame_shift == 0 || self.f0_window < 4 {
            return bad("frame geometry must be positive");
        }
        if !(self.f0_floor > 0.0 && self.f0_floor < self.f0_ceil) {
            return bad("need 0 < f0_floor < f0_ceil");
        }
        if !self.nfft.is_power_of_two() || self.nfft < 2 * self.frame_shift.max(self.unvoiced_window) {
            return bad("nfft must be a power of two covering the analysis windows");
        }
        if self.mcep_order == 0 || self.mcep_order > self.nfft / 2 + 1 {
            return bad("mel-cepstrum order out of range");
        }
        if !(self.alpha > -1.0 && self.alpha < 1.0) {
            return bad("warping coefficient must lie in (-1, 1)");
        }
        if self.band_edges.len() < 2 || self.band_edges.windows(2).any(|w| w[0] >= w[1]) {
            return bad("band edges must be strictly increasing");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    /// Hz per frame, 0 for unvoiced.
    pub values: Vec<f64>,
    pub frame_shift: f64,
}

impl F0Track {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.values.iter().filter(|&&f| f > 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AperiodicityTrack {
    /// frames × bands, each ratio in [0, 1].
    pub ratios: FeatureMatrix,
    pub band_edges: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McepTrack {
    /// frames × order, c0 first.
    pub coeffs: FeatureMatrix,
    pub alpha: f64,
    /// Number of spectral bins the coefficients were computed over; fixes
    /// the orthonormal DCT scale.
    pub bins: usize,
}

/// Per-frame positive power envelopes over `nfft / 2 + 1` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEnvelope {
    pub nfft: usize,
    pub frames: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticAnalysis {
    pub f0: F0Track,
    pub ap: AperiodicityTrack,
    pub mcep: McepTrack,
    pub sample_rate: u32,
    pub num_samples: usize,
    /// Centre of frame 0 in seconds.
    pub frame_offset: f64,
}

impl AcousticAnalysis {
    pub fn frames(&self) -> usize {
        self.f0.len()
    }

    pub fn check_grid(&self) -> Result<()> {
        let n = self.f0.len();
        if self.ap.ratios.frames() != n || self.mcep.coeffs.frames() != n {
            return Err(Error::GridMismatch(format!(
                "f0 {} / aperiodicity {} / mcep {} frames",
                n,
                self.ap.ratios.frames(),
                self.mcep.coeffs.frames()
            )));
        }
        if self.ap.ratios.dims() + 1 != self.ap.band_edges.len() {
            return Err(Error::GridMismatch("aperiodicity bands disagree with band edges".into()));
        }
        Ok(())
    }

    /// Keeps the first `frames` frames of every track.
    pub fn truncated(&self, frames: usize) -> Self {
        let frames = frames.min(self.frames());
        Self {
            f0: F0Track { values: self.f0.values[..frames].to_vec(), frame_shift: self.f0.frame_shift },
            ap: AperiodicityTrack { ratios: self.ap.ratios.truncated(frames), band_edges: self.ap.band_edges.clone() },
            mcep: McepTrack { coeffs: self.mcep.coeffs.truncated(frames), ..self.mcep.clone() },
            ..self.clone()
        }
    }

    fn paths(basename: &Path) -> [PathBuf; 4] {
        let with = |ext: &str| {
            let mut s = basename.as_os_str().to_owned();
            s.push(ext);
            PathBuf::from(s)
        };
        [with(".f0.fmat"), with(".ap.fmat"), with(".mcep.fmat"), with(".hdr")]
    }

    /// Writes `<basename>.f0.fmat`, `.ap.fmat`, `.mcep.fmat` and a `.hdr` text header.
    pub fn save(&self, basename: impl AsRef<Path>) -> Result<()> {
        self.check_grid()?;
        let [f0p, app, mcp, hdr] = Self::paths(basename.as_ref());
        FeatureMatrix::new(self.f0.values.clone(), self.f0.len(), 1, self.f0.frame_shift)?.save(f0p)?;
        self.ap.ratios.save(app)?;
        self.mcep.coeffs.save(mcp)?;
        let edges: Vec<String> = self.ap.band_edges.iter().map(|e| e.to_string()).collect();
        let header = format!(
            "alpha = {}\nsample_rate = {}\nband_edges = {}\nmcep_bins = {}\nnum_samples = {}\nframe_offset = {}\n",
            self.mcep.alpha,
            self.sample_rate,
            edges.join(","),
            self.mcep.bins,
            self.num_samples,
            self.frame_offset
        );
        std::fs::write(hdr, header)?;
        Ok(())
    }

    pub fn load(basename: impl AsRef<Path>) -> Result<Self> {
        let [f0p, app, mcp, hdr] = Self::paths(basename.as_ref());
        if !hdr.exists() {
            return Err(Error::NotFound(hdr));
        }
        let text = std::fs::read_to_string(&hdr)?;
        let mut alpha = None;
        let mut sample_rate = None;
        let mut band_edges = None;
        let mut bins = None;
        let mut num_samples = None;
        let mut frame_offset = None;
        let corrupt = |k: &str| Error::Corrupt(format!("{}: bad value for {k}", hdr.display()));
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').ok_or_else(|| corrupt(line))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "alpha" => alpha = Some(v.parse::<f64>().map_err(|_| corrupt(k))?),
                "sample_rate" => sample_rate = Some(v.parse::<u32>().map_err(|_| corrupt(k))?),
                "band_edges" => {
                    band_edges = Some(
                        v.split(',')
                            .map(|e| e.trim().parse::<f64>())
                            .collect::<Result<Vec<_>, _>>()
                            .map_err(|_| corrupt(k))?,
                    )
                }
                "mcep_bins" => bins = Some(v.parse::<usize>().map_err(|_| corrupt(k))?),
                "num_samples" => num_samples = Some(v.parse::<usize>().map_err(|_| corrupt(k))?),
                "frame_offset" => frame_offset = Some(v.parse::<f64>().map_err(|_| corrupt(k))?),
                _ => {}
            }
        }
        let missing = |k: &str| Error::Corrupt(format!("{}: missing {k}", hdr.display()));
        let f0m = FeatureMatrix::load(f0p)?;
        if f0m.dims() != 1 {
            return Err(Error::DimMismatch { expected: 1, got: f0m.dims() });
        }
        let analysis = Self {
            f0: F0Track { values: f0m.data().to_vec(), frame_shift: f0m.frame_shift() },
            ap: AperiodicityTrack {
                ratios: FeatureMatrix::load(app)?,
                band_edges: band_edges.ok_or_else(|| missing("band_edges"))?,
            },
            mcep: McepTrack {
                coeffs: FeatureMatrix::load(mcp)?,
                alpha: alpha.ok_or_else(|| missing("alpha"))?,
                bins: bins.ok_or_else(|| missing("mcep_bins"))?,
            },
            sample_rate: sample_rate.ok_or_else(|| missing("sample_rate"))?,
            num_samples: num_samples.ok_or_else(|| missing("num_samples"))?,
            frame_offset: frame_offset.ok_or_else(|| missing("frame_offset"))?,
        };
        analysis.check_grid()?;
        Ok(analysis)
    }
}

fn check_rate(w: &Waveform, cfg: &VocoderConfig) -> Result<()> {
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "vocoder configured for {} Hz, got {} Hz",
            cfg.sample_rate,
            w.sample_rate()
        )));
    }
    Ok(())
}

/// Copies `len` samples centred at `center`, zero outside the signal.
fn centered_segment(x: &[f64], center: usize, len: usize) -> Vec<f64> {
    let start = center as isize - (len / 2) as isize;
    (0..len)
        .map(|i| {
            let idx = start + i as isize;
            if idx >= 0 && (idx as usize) < x.len() {
                x[idx as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Normalized autocorrelation of `x` at `lag`, over the overlapping part.
fn normalized_autocorrelation(x: &[f64], prefix_energy: &[f64], lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    let cross: f64 = x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum();
    let e0 = prefix_energy[n - lag];
    let e1 = prefix_energy[n] - prefix_energy[lag];
    let denom = (e0 * e1).sqrt();
    if denom <= 0.0 {
        0.0
    } else {
        cross / denom
    }
}

/// Picks the F0 of one analysis window, or 0 when unvoiced.
fn frame_f0(seg: &[f64], cfg: &VocoderConfig) -> f64 {
    let n = seg.len();
    let energy: f64 = seg.iter().map(|v| v * v).sum();
    if (energy / n as f64).sqrt() < cfg.rms_threshold {
        return 0.0;
    }
    let sr = cfg.sample_rate as f64;
    let min_lag = ((sr / cfg.f0_ceil).floor() as usize).max(2);
    let max_lag = ((sr / cfg.f0_floor).ceil() as usize).min(n.saturating_sub(2));
    if min_lag >= max_lag {
        return 0.0;
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in seg {
        acc += v * v;
        prefix.push(acc);
    }
    let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(|lag| normalized_autocorrelation(seg, &prefix, lag)).collect();
    let at = |lag: usize| r[lag + 1 - min_lag];

    let peaks: Vec<usize> = (min_lag..=max_lag).filter(|&l| at(l) >= at(l - 1) && at(l) >= at(l + 1) && at(l) > 0.0).collect();
    let Some(best) = peaks.iter().map(|&l| at(l)).max_by(f64::total_cmp) else {
        return 0.0;
    };
    if best < cfg.voicing_threshold {
        return 0.0;
    }
    // shortest lag whose peak is close to the best one, to avoid subharmonic picks
    let lag = peaks.into_iter().find(|&l| at(l) >= 0.9 * best).unwrap();
    let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
    let curvature = a - 2.0 * b + c;
    let delta = if curvature.abs() > 1e-12 { (0.5 * (a - c) / curvature).clamp(-0.5, 0.5) } else { 0.0 };
    (sr / (lag as f64 + delta)).clamp(cfg.f0_floor, cfg.f0_ceil)
}

/// Frame-wise F0 by normalized autocorrelation with parabolic lag refinement.
pub fn estimate_f0(w: &Waveform, cfg: &VocoderConfig) -> Result<F0Track> {
    cfg.validate()?;
    check_rate(w, cfg)?;
    let grid = cfg.grid();
    let count = grid.frame_count(w.len())?;
    let values = (0..count)
        .map(|t| frame_f0(&centered_segment(w.samples(), grid.center(t), cfg.f0_window), cfg))
        .collect();
    Ok(F0Track { values, frame_shift: cfg.frame_shift_seconds() })
}

fn check_f0_grid(w: &Waveform, f0: &F0Track, cfg: &VocoderConfig) -> Result<usize> {
    let count = cfg.grid().frame_count(w.len())?;
    if f0.len() != count {
        return Err(Error::GridMismatch(format!(
            "F0 track has {} frames, waveform grid has {count}",
            f0.len()
        )));
    }
    Ok(count)
}

struct SpectrumAnalyzer {
    planner: FftPlanner<f64>,
}

impl SpectrumAnalyzer {
    fn new() -> Self {
        Self { planner: FftPlanner::new() }
    }

    /// Power spectrum of a Hann-windowed segment, divided by the window energy
    /// so its mean over all bins equals the signal power.
    fn power(&mut self, x: &[f64], center: usize, win_len: usize, nfft: usize) -> Vec<f64> {
        let seg = centered_segment(x, center, win_len);
        let win = WindowKind::Hann.coefficients(win_len);
        let win_energy: f64 = win.iter().map(|w| w * w).sum();
        let mut buf = vec![Complex64::default(); nfft];
        for (i, (s, w)) in seg.iter().zip(&win).enumerate() {
            buf[i].re = s * w;
        }
        self.planner.plan_fft_forward(nfft).process(&mut buf);
        buf[..nfft / 2 + 1].iter().map(|c| c.norm_sqr() / win_energy).collect()
    }
}

/// Band aperiodicity: per band, one minus the fraction of energy attributed
/// to harmonics. Energy within ±f0/4 of each harmonic counts as harmonic
/// after subtracting the noise floor measured between harmonics. Unvoiced
/// frames are fully aperiodic.
pub fn estimate_aperiodicity(w: &Waveform, f0: &F0Track, cfg: &VocoderConfig) -> Result<AperiodicityTrack> {
    cfg.validate()?;
    check_rate(w, cfg)?;
    let count = check_f0_grid(w, f0, cfg)?;
    let bands = cfg.band_edges.len() - 1;
    let sr = cfg.sample_rate as f64;
    let grid = cfg.grid();
    let mut analyzer = SpectrumAnalyzer::new();
    let mut data = Vec::with_capacity(count * bands);
    for t in 0..count {
        let hz = f0.values[t];
        if hz <= 0.0 {
            data.extend(std::iter::repeat_n(1.0, bands));
            continue;
        }
        // ten periods keep the Hann main lobe inside ±f0/4
        let win_len = ((10.0 * sr / hz).ceil() as usize).max(cfg.f0_window);
        let nfft = (2 * win_len).next_power_of_two();
        let power = analyzer.power(w.samples(), grid.center(t), win_len, nfft);
        let bin_hz = sr / nfft as f64;
        for b in 0..bands {
            let (lo, hi) = (cfg.band_edges[b], cfg.band_edges[b + 1]);
            let (mut eh, mut en, mut wh, mut wn) = (0.0, 0.0, 0usize, 0usize);
            for (k, &p) in power.iter().enumerate() {
                let f = k as f64 * bin_hz;
                let in_band = f >= lo && (f < hi || (b == bands - 1 && f <= hi));
                if !in_band {
                    continue;
                }
                let h = (f / hz).round();
                if h >= 1.0 && (f - h * hz).abs() <= hz / 4.0 {
                    eh += p;
                    wh += 1;
                } else {
                    en += p;
                    wn += 1;
                }
            }
            let total = eh + en;
            let ratio = if total <= 1e-20 || wh + wn == 0 {
                1.0
            } else {
                let noise_density = if wn > 0 { en / wn as f64 } else { 0.0 };
                let harmonic = (eh - noise_density * wh as f64).max(0.0);
                (1.0 - harmonic / total).clamp(0.0, 1.0)
            };
            data.push(ratio);
        }
    }
    Ok(AperiodicityTrack {
        ratios: FeatureMatrix::new(data, count, bands, cfg.frame_shift_seconds())?,
        band_edges: cfg.band_edges.clone(),
    })
}

/// Moving average over `width` bins, mirroring the spectrum at DC and Nyquist.
fn smooth_mirrored(p: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    if half == 0 {
        return p.to_vec();
    }
    let n = p.len() as isize;
    let mirror = |i: isize| -> f64 {
        let period = 2 * (n - 1);
        let mut j = i.rem_euclid(period.max(1));
        if j >= n {
            j = period - j;
        }
        p[j as usize]
    };
    let span = (2 * half + 1) as f64;
    let mut acc: f64 = (-(half as isize)..=half as isize).map(mirror).sum();
    let mut out = Vec::with_capacity(p.len());
    for k in 0..n {
        out.push(acc / span);
        acc += mirror(k + half as isize + 1) - mirror(k - half as isize);
    }
    out
}

/// Pitch-adaptive spectral envelope: three-period windows for voiced frames,
/// a fixed window otherwise, smoothed over one harmonic spacing (or
/// `unvoiced_smoothing_hz`).
pub fn spectral_envelope(w: &Waveform, f0: &F0Track, cfg: &VocoderConfig) -> Result<SpectralEnvelope> {
    cfg.validate()?;
    check_rate(w, cfg)?;
    let count = check_f0_grid(w, f0, cfg)?;
    let sr = cfg.sample_rate as f64;
    let bin_hz = sr / cfg.nfft as f64;
    let grid = cfg.grid();
    let mut analyzer = SpectrumAnalyzer::new();
    let frames = (0..count)
        .map(|t| {
            let hz = f0.values[t];
            let (win_len, width_hz) = if hz > 0.0 {
                (((3.0 * sr / hz).round() as usize).clamp(16, cfg.nfft), hz)
            } else {
                (cfg.unvoiced_window, cfg.unvoiced_smoothing_hz)
            };
            let power = analyzer.power(w.samples(), grid.center(t), win_len, cfg.nfft);
            let width = (width_hz / bin_hz).round().max(1.0) as usize;
            smooth_mirrored(&power, width).into_iter().map(|v| v.max(ENVELOPE_FLOOR)).collect()
        })
        .collect();
    Ok(SpectralEnvelope { nfft: cfg.nfft, frames })
}

/// First-order all-pass frequency warping; `warp(warp(w, a), -a) == w`.
pub fn warp_frequency(omega: f64, alpha: f64) -> f64 {
    omega + 2.0 * (alpha * omega.sin() / (1.0 - alpha * omega.cos())).atan()
}

/// Log envelope resampled onto a uniform warped-frequency grid, then an
/// orthonormal DCT-II truncated to `order` coefficients.
pub fn melcep_encode(env: &SpectralEnvelope, alpha: f64, order: usize, frame_shift: f64) -> Result<McepTrack> {
    let bins = env.nfft / 2 + 1;
    if order == 0 || order > bins {
        return Err(Error::InvalidArgument(format!("order {order} outside 1..={bins}")));
    }
    // linear-bin position of each warped grid point
    let positions: Vec<f64> = (0..bins)
        .map(|j| {
            let warped = PI * (j as f64 + 0.5) / bins as f64;
            warp_frequency(warped, -alpha) / PI * (bins - 1) as f64
        })
        .collect();
    let mut data = Vec::with_capacity(env.frames.len() * order);
    let mut resampled = vec![0.0; bins];
    for (t, frame) in env.frames.iter().enumerate() {
        if frame.len() != bins {
            return Err(Error::DimMismatch { expected: bins, got: frame.len() });
        }
        if let Some(k) = frame.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveEnvelope { frame: t, bin: k });
        }
        for (r, &pos) in resampled.iter_mut().zip(&positions) {
            let pos = pos.clamp(0.0, (bins - 1) as f64);
            let i = (pos.floor() as usize).min(bins - 2);
            let frac = pos - i as f64;
            *r = (1.0 - frac) * frame[i].ln() + frac * frame[i + 1].ln();
        }
        data.extend(dct2_orthonormal(&resampled, order));
    }
    Ok(McepTrack {
        coeffs: FeatureMatrix::new(data, env.frames.len(), order, frame_shift)?,
        alpha,
        bins,
    })
}

/// Evaluates the warped cosine series at every linear bin of an `nfft`-point
/// spectrum and exponentiates.
pub fn melcep_decode(m: &McepTrack, nfft: usize) -> Result<SpectralEnvelope> {
    melcep_decode_checked(m, nfft, None)
}

fn melcep_decode_checked(m: &McepTrack, nfft: usize, expected_order: Option<usize>) -> Result<SpectralEnvelope> {
    if let Some(order) = expected_order {
        if m.coeffs.dims() != order {
            return Err(Error::DimMismatch { expected: order, got: m.coeffs.dims() });
        }
    }
    if nfft < 2 || m.bins == 0 {
        return Err(Error::InvalidArgument("nfft and bins must be positive".into()));
    }
    let order = m.coeffs.dims();
    let out_bins = nfft / 2 + 1;
    let scale0 = (1.0 / m.bins as f64).sqrt();
    let scale = (2.0 / m.bins as f64).sqrt();
    let basis: Vec<f64> = (0..out_bins)
        .flat_map(|k| {
            let omega = PI * k as f64 / (out_bins - 1) as f64;
            let warped = warp_frequency(omega, m.alpha);
            (0..order).map(move |c| if c == 0 { scale0 } else { scale * (c as f64 * warped).cos() })
        })
        .collect();
    let frames = m
        .coeffs
        .rows()
        .map(|row| {
            basis
                .chunks_exact(order)
                .map(|b| b.iter().zip(row).map(|(x, y)| x * y).sum::<f64>().exp())
                .collect()
        })
        .collect();
    Ok(SpectralEnvelope { nfft, frames })
}

/// Runs the full analysis: F0, aperiodicity and mel-cepstrum on one grid.
pub fn analyze(w: &Waveform, cfg: &VocoderConfig) -> Result<AcousticAnalysis> {
    let f0 = estimate_f0(w, cfg)?;
    let ap = estimate_aperiodicity(w, &f0, cfg)?;
    let env = spectral_envelope(w, &f0, cfg)?;
    let mcep = melcep_encode(&env, cfg.alpha, cfg.mcep_order, cfg.frame_shift_seconds())?;
    let analysis = AcousticAnalysis {
        f0,
        ap,
        mcep,
        sample_rate: cfg.sample_rate,
        num_samples: w.len(),
        frame_offset: (cfg.frame_length / 2) as f64 / cfg.sample_rate as f64,
    };
    analysis.check_grid()?;
    Ok(analysis)
}

/// Instantaneous F0 at sample `n`: linear between two voiced frames,
/// otherwise the nearest frame's value.
fn f0_at(values: &[f64], pos: f64) -> f64 {
    let last = values.len() - 1;
    let pos = pos.clamp(0.0, last as f64);
    let i = pos.floor() as usize;
    let j = (i + 1).min(last);
    let frac = pos - i as f64;
    let (a, b) = (values[i], values[j]);
    if a > 0.0 && b > 0.0 {
        a + frac * (b - a)
    } else if frac < 0.5 {
        a
    } else {
        b
    }
}

/// Source-filter synthesis with overlap-add at the analysis hop, peak
/// normalized to 0.9.
pub fn synthesize(a: &AcousticAnalysis, sample_rate: u32, cfg: &VocoderConfig) -> Result<Waveform> {
    if a.frames() == 0 {
        return Err(Error::EmptyAnalysis);
    }
    a.check_grid()?;
    if sample_rate == 0 {
        return Err(Error::InvalidArgument("sample rate must be positive".into()));
    }
    let sr = sample_rate as f64;
    let out_len = (a.num_samples as f64 * sr / a.sample_rate as f64).round() as usize;
    if out_len == 0 {
        return Err(Error::EmptyAnalysis);
    }
    let hop = ((a.f0.frame_shift * sr).round() as usize).max(1);
    let first_center = a.frame_offset * sr;
    let nfft = (4 * hop).max(cfg.nfft).next_power_of_two();
    let bins = nfft / 2 + 1;
    let frames = a.frames();

    let envelope = melcep_decode(&a.mcep, nfft)?;
    let frame_pos = |n: f64| (n - first_center) / hop as f64;

    // excitation sources over the whole output
    let mut pulses = vec![0.0; out_len];
    let mut phase = 0.0;
    for (n, p) in pulses.iter_mut().enumerate() {
        let hz = f0_at(&a.f0.values, frame_pos(n as f64));
        if hz > 0.0 {
            phase += hz / sr;
            if phase >= 1.0 {
                phase -= phase.floor();
                *p = (sr / hz).sqrt();
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise_seed);
    let noise: Vec<f64> = (0..out_len).map(|_| StandardNormal.sample(&mut rng)).collect();

    let band_of_bin: Vec<usize> = (0..bins)
        .map(|k| {
            let f = k as f64 * sr / nfft as f64;
            let edges = &a.ap.band_edges;
            edges[1..edges.len() - 1].iter().take_while(|&&e| f >= e).count()
        })
        .collect();

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);
    let ola_len = 2 * hop;
    // periodic Hann sums to one at 50% overlap
    let ola_win: Vec<f64> = (0..ola_len).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / ola_len as f64).cos()).collect();

    let spectrum_of = |x: &[f64], center: isize, fft: &dyn Fft<f64>| -> Vec<Complex64> {
        let start = center - (nfft / 2) as isize;
        let mut buf: Vec<Complex64> = (0..nfft)
            .map(|i| {
                let idx = start + i as isize;
                if idx >= 0 && (idx as usize) < x.len() {
                    Complex64::new(x[idx as usize], 0.0)
                } else {
                    Complex64::default()
                }
            })
            .collect();
        fft.process(&mut buf);
        buf
    };

    let mut out = vec![0.0; out_len];
    let t_first = -((first_center / hop as f64).ceil() as isize) - 1;
    let t_last = ((out_len as f64 - first_center) / hop as f64).ceil() as isize + 1;
    for t in t_first..=t_last {
        let center = (first_center + t as f64 * hop as f64).round() as isize;
        if center + hop as isize <= 0 || center - hop as isize >= out_len as isize {
            continue;
        }
        let frame = t.clamp(0, frames as isize - 1) as usize;
        let ap = a.ap.ratios.row(frame);
        let env = &envelope.frames[frame];
        let voiced = a.f0.values[frame] > 0.0;
        let ps = spectrum_of(&pulses, center, fwd.as_ref());
        let ns = spectrum_of(&noise, center, fwd.as_ref());
        let mut mixed = vec![Complex64::default(); nfft];
        for k in 0..nfft {
            let kb = if k < bins { k } else { nfft - k };
            let ratio = if voiced { ap[band_of_bin[kb]] } else { 1.0 };
            let gain = env[kb].sqrt();
            mixed[k] = (ps[k] * (1.0 - ratio).sqrt() + ns[k] * ratio.sqrt()) * gain;
        }
        inv.process(&mut mixed);
        let norm = 1.0 / nfft as f64;
        for (i, wv) in ola_win.iter().enumerate() {
            let idx = center - hop as isize + i as isize;
            if idx >= 0 && (idx as usize) < out_len {
                out[idx as usize] += mixed[nfft / 2 - hop + i].re * norm * wv;
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = 0.9 / peak;
        out.iter_mut().for_each(|v| *v *= g);
    }
    Waveform::new(out, sample_rate)
}

/// Decodes with an order check, for callers holding model outputs.
pub fn decode_envelope(m: &McepTrack, nfft: usize, order: usize) -> Result<SpectralEnvelope> {
    melcep_decode_checked(m, nfft, Some(order))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64) -> Waveform {
        let n = (secs * 16000.0) as usize;
        Waveform::new((0..n).map(|i| (2.0 * PI * freq * i as f64 / 16000.0).sin()).collect(), 16000).unwrap()
    }

    #[test]
    fn silence_is_unvoiced_with_floor_envelope() {
        let cfg = VocoderConfig::default();
        let w = Waveform::silence(8000, 16000).unwrap();
        let f0 = estimate_f0(&w, &cfg).unwrap();
        assert!(f0.values.iter().all(|&f| f == 0.0));
        let env = spectral_envelope(&w, &f0, &cfg).unwrap();
        assert!(env.frames.iter().flatten().all(|&v| v == ENVELOPE_FLOOR));
        let ap = estimate_aperiodicity(&w, &f0, &cfg).unwrap();
        assert!(ap.ratios.data().iter().all(|&r| r == 1.0));
    }

    #[test]
    fn sine_f0() {
        let cfg = VocoderConfig::default();
        for (freq, tol) in [(200.0, 2.0), (400.0, 4.0)] {
            let f0 = estimate_f0(&tone(freq, 0.5), &cfg).unwrap();
            let n = f0.len();
            for &v in &f0.values[4..n - 4] {
                assert!((v - freq).abs() <= tol, "{freq}: {v}");
            }
        }
    }

    #[test]
    fn grid_mismatch_detected() {
        let cfg = VocoderConfig::default();
        let w = tone(200.0, 0.2);
        let f0 = F0Track { values: vec![200.0; 3], frame_shift: 0.005 };
        assert!(matches!(estimate_aperiodicity(&w, &f0, &cfg), Err(Error::GridMismatch(_))));
        assert!(matches!(spectral_envelope(&w, &f0, &cfg), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn warp_inverse() {
        for i in 0..50 {
            let w = PI * i as f64 / 49.0;
            assert!((warp_frequency(warp_frequency(w, 0.42), -0.42) - w).abs() < 1e-12);
        }
        assert!((warp_frequency(PI, 0.42) - PI).abs() < 1e-12);
    }

    #[test]
    fn constant_envelope_encodes_to_c0_only() {
        let c: f64 = 1.7;
        let env = SpectralEnvelope { nfft: 1024, frames: vec![vec![c.exp(); 513]] };
        let m = melcep_encode(&env, 0.42, 40, 0.005).unwrap();
        assert_eq!(m.coeffs.dims(), 40);
        let row = m.coeffs.row(0);
        assert!((row[0] - c * 513f64.sqrt()).abs() < 1e-9);
        assert!(row[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn decode_zero_and_c0() {
        let zeros = McepTrack { coeffs: FeatureMatrix::zeros(2, 40, 0.005), alpha: 0.42, bins: 513 };
        let env = melcep_decode(&zeros, 1024).unwrap();
        assert!(env.frames.iter().flatten().all(|&v| v == 1.0));

        let mut c = vec![0.0; 40];
        c[0] = 3.0;
        let m = McepTrack { coeffs: FeatureMatrix::new(c, 1, 40, 0.005).unwrap(), alpha: 0.42, bins: 513 };
        let env = melcep_decode(&m, 512).unwrap();
        let expected = (3.0 / 513f64.sqrt()).exp();
        assert!(env.frames[0].iter().all(|&v| (v - expected).abs() < 1e-12));

        let short = McepTrack { coeffs: FeatureMatrix::zeros(1, 39, 0.005), alpha: 0.42, bins: 513 };
        assert!(matches!(decode_envelope(&short, 1024, 40), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn encode_rejects_nonpositive() {
        let mut frame = vec![1.0; 513];
        frame[7] = 0.0;
        let env = SpectralEnvelope { nfft: 1024, frames: vec![frame] };
        assert!(matches!(melcep_encode(&env, 0.42, 40, 0.005), Err(Error::NonPositiveEnvelope { frame: 0, bin: 7 })));
    }

    #[test]
    fn empty_analysis_rejected() {
        let cfg = VocoderConfig::default();
        let a = AcousticAnalysis {
            f0: F0Track { values: vec![], frame_shift: 0.005 },
            ap: AperiodicityTrack { ratios: FeatureMatrix::zeros(0, 5, 0.005), band_edges: cfg.band_edges.clone() },
            mcep: McepTrack { coeffs: FeatureMatrix::zeros(0, 40, 0.005), alpha: 0.42, bins: 513 },
            sample_rate: 16000,
            num_samples: 0,
            frame_offset: 0.0125,
        };
        assert!(matches!(synthesize(&a, 16000, &cfg), Err(Error::EmptyAnalysis)));
    }

    #[test]
    fn smoothing_preserves_constant() {
        let p = vec![2.0; 100];
        assert!(smooth_mirrored(&p, 13).iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }
}
