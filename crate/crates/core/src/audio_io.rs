//! WAV decoding, resampling and slicing of mono recordings.

use std::path::Path;

use crate::error::{Error, Result};

/// A decoded mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate_hz: u32,
    source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }
}

/// Reads a linear-PCM WAV file (8/16/24/32-bit integer or 32-bit float) and
/// averages all channels down to mono. Integer samples are divided by
/// `2^(bits-1)`.
pub fn decode_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            reason: "zero channels".into(),
        });
    }

    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            if !matches!(spec.bits_per_sample, 8 | 16 | 24 | 32) {
                return Err(Error::UnsupportedFormat {
                    path: path.into(),
                    reason: format!("{}-bit integer PCM", spec.bits_per_sample),
                });
            }
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale).map_err(|e| map_hound(path, e)))
                .collect::<Result<_>>()?
        }
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(Error::UnsupportedFormat {
                    path: path.into(),
                    reason: format!("{}-bit float PCM", spec.bits_per_sample),
                });
            }
            let mut clamped = 0usize;
            let mut out = Vec::with_capacity(reader.len() as usize);
            for (i, s) in reader.into_samples::<f32>().enumerate() {
                let v = s.map_err(|e| map_hound(path, e))? as f64;
                if !v.is_finite() {
                    return Err(Error::Decode {
                        path: path.into(),
                        reason: format!("non-finite sample at index {i}"),
                    });
                }
                if v.abs() > 1.0 {
                    clamped += 1;
                }
                out.push(v.clamp(-1.0, 1.0));
            }
            if clamped > 0 {
                log::warn!("{}: clamped {clamped} float samples to [-1, 1]", path.display());
            }
            out
        }
    };

    if interleaved.len() < channels {
        return Err(Error::EmptyAudio { path: path.into() });
    }
    let samples: Vec<f64> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };

    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioClip::new(samples, spec.sample_rate, id)
}

/// Reads only the header: (duration in seconds, sample rate).
pub fn probe_wav(path: impl AsRef<Path>) -> Result<(f64, u32)> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let frames = reader.duration();
    if frames == 0 {
        return Err(Error::EmptyAudio { path: path.into() });
    }
    Ok((frames as f64 / spec.sample_rate as f64, spec.sample_rate))
}

/// Writes a mono 16-bit PCM WAV. Samples are rounded from `x * 32767` and
/// clamped to the representable range.
pub fn write_wav_i16(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &clip.samples {
        let q = (s * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path: path.into(),
            reason: "unsupported WAV encoding".into(),
        },
        other => Error::Decode {
            path: path.into(),
            reason: other.to_string(),
        },
    }
}

/// Half-width of the interpolation kernel in input samples (64 taps per phase).
const HALF_TAPS: i64 = 32;
const KAISER_BETA: f64 = 8.0;
const ROLLOFF: f64 = 0.945;
/// Above this many phases the kernel is evaluated on the fly instead of tabulated.
const MAX_TABLE_PHASES: u64 = 4096;

/// Band-limited sample-rate conversion with a polyphase windowed-sinc
/// (Kaiser) kernel. Output length is `round(len * target / source)`.
pub fn resample(clip: &AudioClip, target_hz: u32) -> Result<AudioClip> {
    if target_hz == 0 {
        return Err(Error::invalid("target sample rate must be positive"));
    }
    let src = clip.sample_rate_hz as u64;
    let dst = target_hz as u64;
    if src == dst {
        return Ok(clip.clone());
    }
    let g = gcd(src, dst);
    let up = dst / g;
    let down = src / g;
    let n_in = clip.samples.len() as u64;
    let n_out = (2 * n_in * dst + src) / (2 * src);

    let cutoff = ROLLOFF * (dst as f64 / src as f64).min(1.0);
    let kernel = Kernel::new(cutoff);
    let table = (up <= MAX_TABLE_PHASES).then(|| {
        (0..up)
            .map(|phase| kernel.taps(phase as f64 / up as f64))
            .collect::<Vec<_>>()
    });

    let x = &clip.samples;
    let mut out = Vec::with_capacity(n_out as usize);
    for n in 0..n_out {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let owned;
        let taps: &[f64; 2 * HALF_TAPS as usize] = match &table {
            Some(t) => &t[phase as usize],
            None => {
                owned = kernel.taps(phase as f64 / up as f64);
                &owned
            }
        };
        let mut acc = 0.0;
        for (j, w) in taps.iter().enumerate() {
            let k = base - HALF_TAPS + 1 + j as i64;
            if k >= 0 && (k as usize) < x.len() {
                acc += w * x[k as usize];
            }
        }
        out.push(acc);
    }
    AudioClip::new(out, target_hz, clip.source_id.clone())
}

struct Kernel {
    cutoff: f64,
    i0_beta: f64,
}

impl Kernel {
    fn new(cutoff: f64) -> Self {
        Self {
            cutoff,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    /// Taps for input offsets `base-31 ..= base+32` at fractional position `frac`.
    fn taps(&self, frac: f64) -> [f64; 2 * HALF_TAPS as usize] {
        let mut taps = [0.0; 2 * HALF_TAPS as usize];
        let half = HALF_TAPS as f64;
        for (j, t) in taps.iter_mut().enumerate() {
            let d = frac + (HALF_TAPS - 1 - j as i64) as f64;
            let u = d / half;
            let win = if u.abs() <= 1.0 {
                bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / self.i0_beta
            } else {
                0.0
            };
            *t = sinc(self.cutoff * d) * win;
        }
        let sum: f64 = taps.iter().sum();
        if sum != 0.0 {
            taps.iter_mut().for_each(|t| *t /= sum);
        }
        taps
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Extracts `round(dur_s * rate)` samples starting at `round(start_s * rate)`.
pub fn slice(clip: &AudioClip, start_s: f64, dur_s: f64) -> Result<AudioClip> {
    if !(start_s >= 0.0) || !(dur_s >= 0.0) {
        return Err(Error::OutOfRange(format!(
            "slice start {start_s} s / duration {dur_s} s must be non-negative"
        )));
    }
    let rate = clip.sample_rate_hz as f64;
    let start = (start_s * rate).round() as usize;
    let count = (dur_s * rate).round() as usize;
    if start + count > clip.samples.len() {
        return Err(Error::OutOfRange(format!(
            "slice [{start_s}, {}) s exceeds clip duration {} s",
            start_s + dur_s,
            clip.duration_s()
        )));
    }
    AudioClip::new(
        clip.samples[start..start + count].to_vec(),
        clip.sample_rate_hz,
        clip.source_id.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};
    use std::f64::consts::PI;

    fn tone(freq: f64, rate: u32, secs: f64, amp: f64) -> AudioClip {
        let n = (secs * rate as f64).round() as usize;
        let s = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioClip::new(s, rate, "tone").unwrap()
    }

    fn write_int(path: &Path, bits: u16, channels: u16, data: &[i32]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: 8000,
            bits_per_sample: bits,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &d in data {
            match bits {
                8 => w.write_sample(d as i8).unwrap(),
                16 => w.write_sample(d as i16).unwrap(),
                _ => w.write_sample(d).unwrap(),
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn decode_16bit_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_int(&p, 16, 1, &[0, 32767, -32768]);
        let clip = decode_wav(&p).unwrap();
        assert_eq!(clip.samples(), &[0.0, 32767.0 / 32768.0, -1.0]);
        assert_eq!(clip.source_id(), "a");
    }

    #[test]
    fn decode_other_depths() {
        let dir = tempfile::tempdir().unwrap();
        let p8 = dir.path().join("b8.wav");
        write_int(&p8, 8, 1, &[-128, 64]);
        assert_eq!(decode_wav(&p8).unwrap().samples(), &[-1.0, 0.5]);

        let p24 = dir.path().join("b24.wav");
        write_int(&p24, 24, 1, &[-(1 << 23), 1 << 22]);
        assert_eq!(decode_wav(&p24).unwrap().samples(), &[-1.0, 0.5]);

        let p32 = dir.path().join("b32.wav");
        write_int(&p32, 32, 1, &[i32::MIN, 1 << 30]);
        assert_eq!(decode_wav(&p32).unwrap().samples(), &[-1.0, 0.5]);
    }

    #[test]
    fn decode_stereo_is_channel_mean() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(1.0f32).unwrap();
        w.write_sample(0.0f32).unwrap();
        w.finalize().unwrap();
        assert_eq!(decode_wav(&p).unwrap().samples(), &[0.5]);
    }

    #[test]
    fn decode_rejects_nan_and_empty_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let p = dir.path().join("nan.wav");
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(f32::NAN).unwrap();
        w.finalize().unwrap();
        assert!(matches!(decode_wav(&p), Err(Error::Decode { .. })));

        let p = dir.path().join("empty.wav");
        hound::WavWriter::create(&p, spec).unwrap().finalize().unwrap();
        assert!(matches!(decode_wav(&p), Err(Error::EmptyAudio { .. })));

        let p = dir.path().join("junk.wav");
        std::fs::write(&p, b"definitely not a riff file").unwrap();
        assert!(decode_wav(&p).is_err());

        assert!(matches!(
            decode_wav(dir.path().join("missing.wav")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn decode_is_deterministic_and_round_trips_i16() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        let clip = tone(440.0, 16000, 0.25, 0.5);
        write_wav_i16(&p, &clip).unwrap();
        let a = decode_wav(&p).unwrap();
        let b = decode_wav(&p).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.samples().iter().zip(clip.samples()) {
            assert!((x - y).abs() < 1.0 / 32767.0);
        }
        let (dur, rate) = probe_wav(&p).unwrap();
        assert_eq!(rate, 16000);
        assert!((dur - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sixty_seconds_at_48k_has_expected_length() {
        let clip = AudioClip::new(vec![0.0; 2_880_000], 48_000, "x").unwrap();
        assert_eq!(clip.duration_s(), 60.0);
        let out = resample(&clip, 32_000).unwrap();
        assert_eq!(out.len(), 1_920_000);
    }

    #[test]
    fn resample_identity_rate() {
        let clip = tone(1000.0, 48_000, 0.1, 0.3);
        assert_eq!(resample(&clip, 48_000).unwrap(), clip);
        assert!(resample(&clip, 0).is_err());
    }

    fn peak_frequency(samples: &[f64], rate: u32) -> f64 {
        let n = samples.len();
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (k, _) = buf[..n / 2]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
            .unwrap();
        k as f64 * rate as f64 / n as f64
    }

    #[test]
    fn resampled_tone_keeps_its_frequency() {
        let clip = tone(1000.0, 48_000, 2.0, 0.5);
        let out = resample(&clip, 32_000).unwrap();
        assert_eq!(out.len(), 64_000);
        assert_eq!(out.sample_rate_hz(), 32_000);
        let f = peak_frequency(out.samples(), 32_000);
        assert!((f - 1000.0).abs() <= 1.0, "peak at {f}");
    }

    #[test]
    fn round_trip_preserves_rms() {
        for (src, dst) in [(48_000, 32_000), (44_100, 32_000), (32_000, 48_000)] {
            let clip = tone(3000.0, src, 1.0, 0.7);
            let there = resample(&clip, dst).unwrap();
            let back = resample(&there, src).unwrap();
            assert_eq!(back.len(), clip.len());
            // skip the kernel edge where zero padding attenuates
            let m = 200;
            let a = crate::util::rms(&clip.samples()[m..clip.len() - m]);
            let b = crate::util::rms(&back.samples()[m..back.len() - m]);
            assert!((b / a - 1.0).abs() < 0.01, "{src}->{dst}: {a} vs {b}");
        }
    }

    #[test]
    fn large_phase_count_uses_direct_kernel() {
        // 44101 and 32000 are coprime: 32000 phases exceed the table limit
        let clip = tone(500.0, 44_101, 0.2, 0.5);
        let out = resample(&clip, 32_000).unwrap();
        // round(8820 * 32000 / 44101) = round(6399.85)
        assert_eq!(out.len(), 6400);
        let f = peak_frequency(&out.samples()[..6400], 32_000);
        assert!((f - 500.0).abs() <= 5.0);
    }

    #[test]
    fn slicing() {
        let clip = AudioClip::new(vec![0.25; 600], 10, "s").unwrap();
        assert_eq!(slice(&clip, 0.0, 10.0).unwrap().duration_s(), 10.0);
        let last = slice(&clip, 50.0, 10.0).unwrap();
        assert_eq!(last.len(), 100);
        assert!(slice(&clip, 55.0, 10.0).is_err());
        assert!(slice(&clip, -1.0, 1.0).is_err());
        assert_eq!(slice(&clip, 0.0, clip.duration_s()).unwrap(), clip);
    }

    #[test]
    fn clip_rejects_bad_input() {
        assert!(AudioClip::new(vec![0.0], 0, "x").is_err());
        assert!(AudioClip::new(vec![f64::INFINITY], 8000, "x").is_err());
    }
}
