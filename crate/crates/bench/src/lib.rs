//! Deterministic inputs shared by the benchmarks.

use soundscape_core::{AudioClip, LabelSet, ScoreMatrix};

/// A reproducible broadband test signal.
pub fn test_clip(rate_hz: u32, seconds: f64) -> AudioClip {
    let n = (rate_hz as f64 * seconds) as usize;
    let mut state = 0x2545_f491_u64;
    let x = (0..n)
        .map(|i| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let t = i as f64 / rate_hz as f64;
            0.3 * (2.0 * std::f64::consts::PI * 440.0 * t).sin() + 0.1 * ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        })
        .collect();
    AudioClip::new(x, rate_hz, "bench").expect("non-empty clip")
}

/// Score matrices with scores on a 0.001 grid and labels that loosely follow them.
pub fn score_set(recordings: usize, windows: usize) -> (Vec<ScoreMatrix>, Vec<LabelSet>) {
    let mut state = 0x9e37_79b9_7f4a_7c15_u64;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) % 1001) as f64 / 1000.0
    };
    let mut matrices = Vec::with_capacity(recordings);
    let mut labels = Vec::with_capacity(recordings);
    for r in 0..recordings {
        let rows: Vec<[f64; 3]> = (0..windows).map(|_| [next(), next(), next()]).collect();
        let peak: [f64; 3] = std::array::from_fn(|c| rows.iter().map(|row| row[c]).fold(0.0, f64::max));
        labels.push(LabelSet::from_flags(peak.map(|p| p > 0.9)));
        let starts = (0..windows).map(|w| w as f64).collect();
        matrices.push(ScoreMatrix::new(format!("r{r}"), starts, 10.0, rows, None).expect("valid matrix"));
    }
    (matrices, labels)
}
