//! Short-time spectra and log-mel spectrograms.
//!
//! Framing is centred: the signal is reflection-padded by half a window on
//! both sides, so a clip of `N` samples yields `1 + floor(N / hop)` frames.
//! Windows are periodic Hann.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

/// Floor added before taking logarithms of mel power.
pub const LOG_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    LinearMagnitude,
    Power,
    LogMelDb,
}

impl Scale {
    fn tag(self) -> u8 {
        match self {
            Scale::LinearMagnitude => 0,
            Scale::Power => 1,
            Scale::LogMelDb => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Scale> {
        match tag {
            0 => Some(Scale::LinearMagnitude),
            1 => Some(Scale::Power),
            2 => Some(Scale::LogMelDb),
            _ => None,
        }
    }
}

/// A `[frames x bins]` matrix stored row-major, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Vec<f64>,
    n_frames: usize,
    n_bins: usize,
    frame_hop_s: f64,
    bin_freqs_hz: Vec<f64>,
    scale: Scale,
    /// Magnitude produced by a full-scale sine at a bin centre; the 0 dBFS reference.
    full_scale: f64,
}

impl Spectrogram {
    /// Builds a spectrogram from frame rows. Used for fixtures and by the dump reader.
    pub fn from_frames(
        frames: Vec<Vec<f64>>,
        frame_hop_s: f64,
        bin_freqs_hz: Vec<f64>,
        scale: Scale,
        full_scale: f64,
    ) -> Result<Self> {
        let n_bins = bin_freqs_hz.len();
        if frames.iter().any(|f| f.len() != n_bins) {
            return Err(Error::invalid("every frame must have one value per bin"));
        }
        let n_frames = frames.len();
        Self::from_flat(
            frames.into_iter().flatten().collect(),
            n_frames,
            frame_hop_s,
            bin_freqs_hz,
            scale,
            full_scale,
        )
    }

    fn from_flat(
        values: Vec<f64>,
        n_frames: usize,
        frame_hop_s: f64,
        bin_freqs_hz: Vec<f64>,
        scale: Scale,
        full_scale: f64,
    ) -> Result<Self> {
        let n_bins = bin_freqs_hz.len();
        if values.len() != n_frames * n_bins {
            return Err(Error::invalid("value count does not match dimensions"));
        }
        if bin_freqs_hz.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("bin frequencies must be strictly ascending"));
        }
        if !(frame_hop_s > 0.0) || !(full_scale > 0.0) {
            return Err(Error::invalid("hop and full-scale reference must be positive"));
        }
        if scale != Scale::LogMelDb && values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("linear and power values must be non-negative"));
        }
        Ok(Self {
            values,
            n_frames,
            n_bins,
            frame_hop_s,
            bin_freqs_hz,
            scale,
            full_scale,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_bins.max(1)).take(self.n_frames)
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.values[frame * self.n_bins + bin]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame_hop_s(&self) -> f64 {
        self.frame_hop_s
    }

    pub fn bin_freqs_hz(&self) -> &[f64] {
        &self.bin_freqs_hz
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn full_scale(&self) -> f64 {
        self.full_scale
    }

    /// Squares a linear-magnitude spectrogram.
    pub fn to_power(&self) -> Result<Spectrogram> {
        if self.scale != Scale::LinearMagnitude {
            return Err(Error::invalid(
                "power conversion needs a linear-magnitude spectrogram",
            ));
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= *v);
        out.full_scale *= self.full_scale;
        out.scale = Scale::Power;
        Ok(out)
    }

    /// Returns a copy with every value multiplied by `factor` (linear scales only).
    pub fn scaled(&self, factor: f64) -> Result<Spectrogram> {
        if self.scale == Scale::LogMelDb || !(factor >= 0.0) {
            return Err(Error::invalid(
                "scaling requires a linear spectrogram and factor >= 0",
            ));
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        Ok(out)
    }
}

pub fn hann_periodic(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Centred Hann-windowed STFT magnitude with `window_len / 2 + 1` bins.
/// The window length must be even.
pub fn stft_magnitude(clip: &AudioClip, window_len: usize, hop: usize) -> Result<Spectrogram> {
    let n = clip.len();
    if hop == 0 || hop > window_len {
        return Err(Error::invalid(format!("hop {hop} must be in 1..={window_len}")));
    }
    if !window_len.is_multiple_of(2) {
        return Err(Error::invalid("window length must be even"));
    }
    if window_len > n {
        return Err(Error::invalid(format!(
            "clip of {n} samples is shorter than one window of {window_len}"
        )));
    }

    let pad = window_len / 2;
    let x = clip.samples();
    let padded: Vec<f64> = (0..n + 2 * pad)
        .map(|i| {
            let i = i as isize - pad as isize;
            let j = if i < 0 {
                -i
            } else if i >= n as isize {
                2 * (n as isize - 1) - i
            } else {
                i
            };
            x[j as usize]
        })
        .collect();

    let window = hann_periodic(window_len);
    let n_frames = 1 + n / hop;
    let n_bins = window_len / 2 + 1;
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(window_len);
    let mut buf = vec![Complex::new(0.0, 0.0); window_len];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut values = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        let start = t * hop;
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(padded[start + k] * window[k], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        values.extend(buf[..n_bins].iter().map(|c| c.norm()));
    }

    let rate = clip.sample_rate_hz() as f64;
    let bin_freqs = (0..n_bins)
        .map(|k| k as f64 * rate / window_len as f64)
        .collect();
    let full_scale = window.iter().sum::<f64>() / 2.0;
    Spectrogram::from_flat(
        values,
        n_frames,
        hop as f64 / rate,
        bin_freqs,
        Scale::LinearMagnitude,
        full_scale,
    )
}

const MEL_F_SP: f64 = 200.0 / 3.0;
const MEL_MIN_LOG_HZ: f64 = 1000.0;

fn mel_logstep() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    let min_log_mel = MEL_MIN_LOG_HZ / MEL_F_SP;
    if hz >= MEL_MIN_LOG_HZ {
        min_log_mel + (hz / MEL_MIN_LOG_HZ).ln() / mel_logstep()
    } else {
        hz / MEL_F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    let min_log_mel = MEL_MIN_LOG_HZ / MEL_F_SP;
    if mel >= min_log_mel {
        MEL_MIN_LOG_HZ * (mel_logstep() * (mel - min_log_mel)).exp()
    } else {
        MEL_F_SP * mel
    }
}

/// Triangular, area-normalised filters on the Slaney mel scale.
/// Build once and share across threads.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn new(bin_freqs_hz: &[f64], n_mels: usize, fmin_hz: f64, fmax_hz: f64) -> Result<Self> {
        let nyquist = bin_freqs_hz.last().copied().unwrap_or(0.0);
        if n_mels == 0 {
            return Err(Error::invalid("n_mels must be at least 1"));
        }
        if !(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= nyquist + 1e-9) {
            return Err(Error::invalid(format!(
                "mel range [{fmin_hz}, {fmax_hz}] Hz invalid for Nyquist {nyquist} Hz"
            )));
        }
        let lo = hz_to_mel(fmin_hz);
        let hi = hz_to_mel(fmax_hz);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();

        let mut weights = Vec::with_capacity(n_mels);
        for i in 0..n_mels {
            let (left, center, right) = (edges[i], edges[i + 1], edges[i + 2]);
            let norm = 2.0 / (right - left);
            let row: Vec<f64> = bin_freqs_hz
                .iter()
                .map(|&f| {
                    let up = (f - left) / (center - left);
                    let down = (right - f) / (right - center);
                    up.min(down).max(0.0) * norm
                })
                .collect();
            if row.iter().sum::<f64>() <= 0.0 {
                return Err(Error::invalid(format!(
                    "mel filter {i} covers no spectral bin; reduce n_mels or widen the range"
                )));
            }
            weights.push(row);
        }
        Ok(Self {
            weights,
            centers_hz: edges[1..=n_mels].to_vec(),
            n_bins: bin_freqs_hz.len(),
        })
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Projects a linear-magnitude spectrogram to log-mel dB.
    pub fn apply(&self, spec: &Spectrogram) -> Result<Spectrogram> {
        if spec.scale() != Scale::LinearMagnitude {
            return Err(Error::invalid("log-mel needs a linear-magnitude spectrogram"));
        }
        if spec.n_bins() != self.n_bins {
            return Err(Error::invalid("filterbank and spectrogram bin counts differ"));
        }
        let mut values = Vec::with_capacity(spec.n_frames() * self.n_mels());
        for frame in spec.frames() {
            for row in &self.weights {
                let energy: f64 = row.iter().zip(frame).map(|(w, m)| w * m * m).sum();
                values.push(10.0 * (energy + LOG_EPSILON).log10());
            }
        }
        Spectrogram::from_flat(
            values,
            spec.n_frames(),
            spec.frame_hop_s(),
            self.centers_hz.clone(),
            Scale::LogMelDb,
            spec.full_scale() * spec.full_scale(),
        )
    }
}

pub fn log_mel(spec: &Spectrogram, n_mels: usize, fmin_hz: f64, fmax_hz: f64) -> Result<Spectrogram> {
    if spec.scale() != Scale::LinearMagnitude {
        return Err(Error::invalid("log-mel needs a linear-magnitude spectrogram"));
    }
    MelFilterbank::new(spec.bin_freqs_hz(), n_mels, fmin_hz, fmax_hz)?.apply(spec)
}

const DUMP_MAGIC: &[u8; 4] = b"SSPG";
const DUMP_VERSION: u16 = 1;

/// Writes the little-endian debug container described in FORMATS.md.
pub fn write_spectrogram(mut w: impl Write, spec: &Spectrogram) -> std::io::Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&[spec.scale.tag(), 0])?;
    w.write_all(&(spec.n_frames as u32).to_le_bytes())?;
    w.write_all(&(spec.n_bins as u32).to_le_bytes())?;
    w.write_all(&spec.frame_hop_s.to_le_bytes())?;
    w.write_all(&spec.full_scale.to_le_bytes())?;
    for f in &spec.bin_freqs_hz {
        w.write_all(&f.to_le_bytes())?;
    }
    for v in &spec.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_spectrogram(mut r: impl Read) -> Result<Spectrogram> {
    let bad = |m: &str| Error::Schema(format!("spectrogram dump: {m}"));
    let mut head = [0u8; 32];
    r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
    if &head[0..4] != DUMP_MAGIC {
        return Err(bad("bad magic"));
    }
    if u16::from_le_bytes([head[4], head[5]]) != DUMP_VERSION {
        return Err(bad("unsupported version"));
    }
    let scale = Scale::from_tag(head[6]).ok_or_else(|| bad("unknown scale tag"))?;
    let n_frames = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let n_bins = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let hop = f64::from_le_bytes(head[16..24].try_into().unwrap());
    let full_scale = f64::from_le_bytes(head[24..32].try_into().unwrap());
    let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; count * 8];
        r.read_exact(&mut bytes).map_err(|_| bad("truncated body"))?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let freqs = read_f64s(n_bins)?;
    let values = read_f64s(n_frames * n_bins)?;
    Spectrogram::from_flat(values, n_frames, hop, freqs, scale, full_scale)
}

pub fn dump_spectrogram(path: impl AsRef<Path>, spec: &Spectrogram) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_spectrogram(&mut w, spec).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
