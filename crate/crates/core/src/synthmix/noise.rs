//! Background noise generators. Every generator output is peak-normalised to 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    WhiteGaussian,
    WhiteUniform,
    Pink,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::WhiteGaussian, NoiseKind::WhiteUniform, NoiseKind::Pink];
}

const PINK_ROWS: usize = 16;

/// `len` samples of the given noise colour, scaled so the largest magnitude is 1.
pub fn generate(kind: NoiseKind, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<f64> = match kind {
        NoiseKind::WhiteGaussian => (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        NoiseKind::WhiteUniform => (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        NoiseKind::Pink => voss_mccartney(len, &mut rng),
    };
    let peak = crate::util::peak(&out);
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v /= peak);
    }
    out
}

/// Voss-McCartney pink noise: row `k` is redrawn every `2^k` samples (the row
/// picked by the trailing zeros of a running counter) and the rows are summed
/// with one fresh white term per sample.
fn voss_mccartney(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut rows = [0.0f64; PINK_ROWS];
    for r in rows.iter_mut() {
        *r = rng.random_range(-1.0..=1.0);
    }
    let mut running: f64 = rows.iter().sum();
    let mut out = Vec::with_capacity(len);
    for counter in 1..=len as u64 {
        let row = counter.trailing_zeros() as usize;
        if row < PINK_ROWS {
            let fresh = rng.random_range(-1.0..=1.0);
            running += fresh - rows[row];
            rows[row] = fresh;
        }
        let white: f64 = rng.random_range(-1.0..=1.0);
        out.push(running + white);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_peak_normalised() {
        for kind in NoiseKind::ALL {
            let a = generate(kind, 10_000, 3);
            assert_eq!(a, generate(kind, 10_000, 3));
            assert_ne!(a, generate(kind, 10_000, 4));
            assert!((crate::util::peak(&a) - 1.0).abs() < 1e-12);
        }
    }

    fn band_energy(x: &[f64], lo: usize, hi: usize) -> f64 {
        // Goertzel-free brute DFT over a few bins is enough for a slope check
        let n = x.len();
        (lo..hi)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, v) in x.iter().enumerate() {
                    let a = -2.0 * std::f64::consts::PI * (k * i % n) as f64 / n as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                re * re + im * im
            })
            .sum::<f64>()
            / (hi - lo) as f64
    }

    #[test]
    fn pink_has_more_low_frequency_energy_than_white() {
        let n = 4096;
        let pink = generate(NoiseKind::Pink, n, 11);
        let white = generate(NoiseKind::WhiteUniform, n, 11);
        let pink_ratio = band_energy(&pink, 4, 12) / band_energy(&pink, 1000, 1008);
        let white_ratio = band_energy(&white, 4, 12) / band_energy(&white, 1000, 1008);
        assert!(pink_ratio > 10.0 * white_ratio, "{pink_ratio} vs {white_ratio}");
    }
}
