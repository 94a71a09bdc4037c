//! Classical acoustic indices: ACI, ADI and NDSI.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::error::{csv_error, Error, Result};
use crate::features::{hann_periodic, stft_magnitude, Scale, Spectrogram};

/// Band powers below this fraction of the total PSD power count as zero in NDSI.
pub const NDSI_POWER_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexResult {
    pub recording_id: String,
    pub aci: f64,
    pub adi: f64,
    /// `None` when both band powers vanish.
    pub ndsi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Band {
    pub const fn new(low_hz: f64, high_hz: f64) -> Self {
        Self { low_hz, high_hz }
    }

    fn contains(&self, f: f64) -> bool {
        f >= self.low_hz && f < self.high_hz
    }

    fn overlaps(&self, other: &Band) -> bool {
        self.low_hz < other.high_hz && other.low_hz < self.high_hz
    }
}

/// Parameters for [`compute_indices`]. Defaults: 1024/512 STFT, ACI over the
/// whole clip, ADI with 1 kHz bands up to 10 kHz at -50 dBFS, NDSI with
/// anthropophony 1-2 kHz and biophony 2-8 kHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexParams {
    pub window_len: usize,
    pub hop: usize,
    /// ACI chunk length in seconds; `None` uses the whole recording as one chunk.
    pub aci_chunk_s: Option<f64>,
    pub adi_band_width_hz: f64,
    pub adi_max_freq_hz: f64,
    pub adi_db_threshold: f64,
    pub ndsi_anthro_hz: Band,
    pub ndsi_bio_hz: Band,
    pub welch_segment: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            window_len: 1024,
            hop: 512,
            aci_chunk_s: None,
            adi_band_width_hz: 1000.0,
            adi_max_freq_hz: 10_000.0,
            adi_db_threshold: -50.0,
            ndsi_anthro_hz: Band::new(1000.0, 2000.0),
            ndsi_bio_hz: Band::new(2000.0, 8000.0),
            welch_segment: 1024,
        }
    }
}

impl IndexParams {
    /// One-line `key=value` summary for CSV header comments.
    pub fn describe(&self) -> String {
        format!(
            "window_len={} hop={} aci_chunk_s={} adi_band_width_hz={} adi_max_freq_hz={} \
             adi_db_threshold={} ndsi_anthro_hz={}-{} ndsi_bio_hz={}-{} welch_segment={}",
            self.window_len,
            self.hop,
            self.aci_chunk_s.map_or("full".to_string(), |c| c.to_string()),
            self.adi_band_width_hz,
            self.adi_max_freq_hz,
            self.adi_db_threshold,
            self.ndsi_anthro_hz.low_hz,
            self.ndsi_anthro_hz.high_hz,
            self.ndsi_bio_hz.low_hz,
            self.ndsi_bio_hz.high_hz,
            self.welch_segment,
        )
    }
}

pub fn compute_indices(clip: &AudioClip, params: &IndexParams) -> Result<IndexResult> {
    let spec = stft_magnitude(clip, params.window_len, params.hop)?;
    Ok(IndexResult {
        recording_id: clip.source_id().to_string(),
        aci: aci(&spec, params.aci_chunk_s)?,
        adi: adi(
            &spec,
            params.adi_band_width_hz,
            params.adi_max_freq_hz,
            params.adi_db_threshold,
        )?,
        ndsi: ndsi_with_segment(
            clip,
            params.ndsi_anthro_hz,
            params.ndsi_bio_hz,
            params.welch_segment,
        )?,
    })
}

/// Acoustic Complexity Index.
///
/// Frames are grouped into consecutive chunks of `chunk_s` seconds (the whole
/// spectrogram when `None`); a trailing partial chunk counts if it holds at
/// least two frames. Each (bin, chunk) contributes the summed absolute
/// frame-to-frame difference divided by the summed amplitude, or 0 when the
/// amplitude sum is zero.
pub fn aci(spec: &Spectrogram, chunk_s: Option<f64>) -> Result<f64> {
    if spec.scale() != Scale::LinearMagnitude {
        return Err(Error::invalid("ACI needs a linear-magnitude spectrogram"));
    }
    let n = spec.n_frames();
    if n < 2 {
        return Err(Error::invalid("ACI needs at least two frames"));
    }
    let per_chunk = match chunk_s {
        None => n,
        Some(c) => {
            let frames = (c / spec.frame_hop_s() + 1e-9).floor();
            if !(frames >= 2.0) {
                return Err(Error::invalid(format!(
                    "ACI chunk of {c} s spans fewer than two frames"
                )));
            }
            frames as usize
        }
    };

    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + per_chunk).min(n);
        if end - start >= 2 {
            for bin in 0..spec.n_bins() {
                let mut diff = 0.0;
                let mut sum = spec.get(start, bin);
                for t in start + 1..end {
                    let a = spec.get(t, bin);
                    diff += (a - spec.get(t - 1, bin)).abs();
                    sum += a;
                }
                if sum > 0.0 {
                    total += diff / sum;
                }
            }
        }
        start = end;
    }
    Ok(total)
}

/// Acoustic Diversity Index: Shannon entropy of per-band occupancy, where a
/// cell is occupied when its level exceeds `db_threshold` dBFS.
pub fn adi(spec: &Spectrogram, band_width_hz: f64, max_freq_hz: f64, db_threshold: f64) -> Result<f64> {
    if spec.scale() != Scale::LinearMagnitude {
        return Err(Error::invalid("ADI needs a linear-magnitude spectrogram"));
    }
    let nyquist = spec.bin_freqs_hz().last().copied().unwrap_or(0.0);
    if max_freq_hz > nyquist + 1e-9 {
        return Err(Error::invalid(format!(
            "ADI max frequency {max_freq_hz} Hz exceeds Nyquist {nyquist} Hz"
        )));
    }
    if !(band_width_hz > 0.0) {
        return Err(Error::invalid("ADI band width must be positive"));
    }
    let n_bands = (max_freq_hz / band_width_hz - 1e-9).ceil();
    if !(n_bands >= 2.0) {
        return Err(Error::invalid("ADI needs at least two bands"));
    }
    let n_bands = n_bands as usize;

    let reference = spec.full_scale();
    let mut above = vec![0usize; n_bands];
    let mut cells = vec![0usize; n_bands];
    for (bin, &f) in spec.bin_freqs_hz().iter().enumerate() {
        if f > max_freq_hz + 1e-9 {
            break;
        }
        let band = ((f / band_width_hz) as usize).min(n_bands - 1);
        for t in 0..spec.n_frames() {
            cells[band] += 1;
            let level = 20.0 * (spec.get(t, bin) / reference).log10();
            if level > db_threshold {
                above[band] += 1;
            }
        }
    }
    let occupancy: Vec<f64> = above
        .iter()
        .zip(&cells)
        .map(|(&a, &c)| if c == 0 { 0.0 } else { a as f64 / c as f64 })
        .collect();
    Ok(shannon_of_occupancy(&occupancy))
}

/// `-sum p ln p` over occupancies normalised to proportions; 0 when all are zero.
pub fn shannon_of_occupancy(occupancy: &[f64]) -> f64 {
    let total: f64 = occupancy.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    -occupancy
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| {
            let p = q / total;
            p * p.ln()
        })
        .sum::<f64>()
}

/// `(B - A) / (B + A)`; `None` when both powers are zero.
pub fn ndsi_from_powers(anthro: f64, bio: f64) -> Option<f64> {
    let denom = anthro + bio;
    (denom > 0.0).then(|| (bio - anthro) / denom)
}

/// Normalised Difference Soundscape Index with a 1024-sample Welch PSD.
pub fn ndsi(clip: &AudioClip, anthro_band_hz: Band, bio_band_hz: Band) -> Result<Option<f64>> {
    ndsi_with_segment(clip, anthro_band_hz, bio_band_hz, 1024)
}

pub fn ndsi_with_segment(
    clip: &AudioClip,
    anthro: Band,
    bio: Band,
    segment: usize,
) -> Result<Option<f64>> {
    let nyquist = clip.sample_rate_hz() as f64 / 2.0;
    for band in [anthro, bio] {
        if !(band.low_hz >= 0.0 && band.low_hz < band.high_hz && band.high_hz <= nyquist) {
            return Err(Error::invalid(format!(
                "NDSI band {}-{} Hz invalid for Nyquist {nyquist} Hz",
                band.low_hz, band.high_hz
            )));
        }
    }
    if anthro.overlaps(&bio) {
        return Err(Error::invalid("NDSI bands overlap"));
    }

    let (freqs, psd) = welch_psd(clip, segment)?;
    let df = freqs.get(1).copied().unwrap_or(0.0);
    let total: f64 = psd.iter().sum::<f64>() * df;
    if total <= 0.0 {
        return Ok(None);
    }
    let band_power = |band: &Band| -> f64 {
        let p: f64 = freqs
            .iter()
            .zip(&psd)
            .filter(|(f, _)| band.contains(**f))
            .map(|(_, p)| p)
            .sum::<f64>()
            * df;
        if p < NDSI_POWER_FLOOR * total {
            0.0
        } else {
            p
        }
    };
    Ok(ndsi_from_powers(band_power(&anthro), band_power(&bio)))
}

/// One-sided Welch power spectral density: Hann segments with 50 % overlap,
/// mean removed per segment. Returns (frequencies, density).
pub fn welch_psd(clip: &AudioClip, segment: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = clip.len();
    let seg = segment.min(n);
    if seg < 2 {
        return Err(Error::invalid("Welch PSD needs at least two samples"));
    }
    let step = (seg / 2).max(1);
    let window = hann_periodic(seg);
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let fs = clip.sample_rate_hz() as f64;
    let n_bins = seg / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let mut acc = vec![0.0; n_bins];
    let mut count = 0usize;
    let x = clip.samples();
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    let mut start = 0;
    while start + seg <= n {
        let chunk = &x[start..start + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        for ((b, &v), &w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let mut p = buf[k].norm_sqr() / (fs * win_power);
            if k != 0 && !(seg.is_multiple_of(2) && k == seg / 2) {
                p *= 2.0;
            }
            *a += p;
        }
        count += 1;
        start += step;
    }
    acc.iter_mut().for_each(|a| *a /= count as f64);
    let freqs = (0..n_bins).map(|k| k as f64 * fs / seg as f64).collect();
    Ok((freqs, acc))
}

pub const INDICES_HEADER: &str = "recording_id,aci,adi,ndsi";

/// Writes index rows; an undefined NDSI is an empty field. With `seconds`,
/// a trailing `seconds` column holds per-row processing time.
pub fn write_indices(mut w: impl std::io::Write, rows: &[IndexResult], seconds: Option<&[f64]>) -> std::io::Result<()> {
    write!(w, "{INDICES_HEADER}")?;
    if seconds.is_some() {
        write!(w, ",seconds")?;
    }
    writeln!(w)?;
    for (i, r) in rows.iter().enumerate() {
        let ndsi = r.ndsi.map(|v| format!("{v:?}")).unwrap_or_default();
        write!(w, "{},{:?},{:?},{}", r.recording_id, r.aci, r.adi, ndsi)?;
        if let Some(t) = seconds {
            write!(w, ",{:.6}", t[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_indices(path: impl AsRef<std::path::Path>) -> Result<Vec<IndexResult>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().take(4).ne(INDICES_HEADER.split(',')) {
        return Err(Error::Parse {
            file: path.display().to_string(),
            line: 1,
            message: format!("expected header {INDICES_HEADER}"),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |m: String| Error::Parse {
            file: path.display().to_string(),
            line,
            message: m,
        };
        let num = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|_| err(format!("column {}: '{}' is not a number", i + 1, &record[i])))
        };
        out.push(IndexResult {
            recording_id: record[0].to_string(),
            aci: num(1)?,
            adi: num(2)?,
            ndsi: if record[3].is_empty() { None } else { Some(num(3)?) },
        });
    }
    Ok(out)
}
