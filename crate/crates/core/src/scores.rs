//! Per-window classifier scores: the boundary to any external model.
//!
//! Score CSV header: `recording_id,window_start_s,anthropophony,biophony,geophony[,silence]`.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{csv_error, Error, Result};

/// Relative tolerance for "uniform" window spacing.
const SPACING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub window_len_s: f64,
    pub step_s: f64,
    /// Adds one zero-padded window covering trailing audio shorter than a window.
    #[serde(default)]
    pub pad_last: bool,
}

impl WindowSpec {
    pub fn new(window_len_s: f64, step_s: f64) -> Self {
        Self {
            window_len_s,
            step_s,
            pad_last: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_len_s > 0.0 && self.step_s > 0.0 && self.step_s <= self.window_len_s) {
            return Err(Error::Config(format!(
                "window spec needs 0 < step ({}) <= window length ({})",
                self.step_s, self.window_len_s
            )));
        }
        Ok(())
    }

    /// Number of windows [`enumerate_windows`] yields for `duration_s`.
    pub fn count(&self, duration_s: f64) -> Result<usize> {
        enumerate_windows(duration_s, self).map(|w| w.len())
    }
}

/// Window start times `0, step, 2*step, ...` with `start + window_len <= duration`.
/// Trailing audio shorter than a window is dropped unless `pad_last` is set.
pub fn enumerate_windows(duration_s: f64, spec: &WindowSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if !(duration_s + 1e-9 >= spec.window_len_s) {
        return Err(Error::OutOfRange(format!(
            "duration {duration_s} s is shorter than one {} s window",
            spec.window_len_s
        )));
    }
    let full = ((duration_s - spec.window_len_s) / spec.step_s + 1e-9).floor() as usize + 1;
    let mut starts: Vec<f64> = (0..full).map(|k| k as f64 * spec.step_s).collect();
    if spec.pad_last {
        let last_end = starts[full - 1] + spec.window_len_s;
        if duration_s - last_end > 1e-9 {
            starts.push(full as f64 * spec.step_s);
        }
    }
    Ok(starts)
}

/// Scores for one recording, one row per window, classes ordered A, B, G.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    recording_id: String,
    window_starts_s: Vec<f64>,
    window_len_s: f64,
    scores: Vec<[f64; 3]>,
    silence: Option<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(
        recording_id: impl Into<String>,
        window_starts_s: Vec<f64>,
        window_len_s: f64,
        scores: Vec<[f64; 3]>,
        silence: Option<Vec<f64>>,
    ) -> Result<Self> {
        let id = recording_id.into();
        let bad = |m: String| Err(Error::Schema(format!("recording '{id}': {m}")));
        if window_starts_s.len() != scores.len() {
            return bad("window starts and score rows differ in length".into());
        }
        if let Some(s) = &silence {
            if s.len() != scores.len() {
                return bad("silence column length differs".into());
            }
        }
        if !(window_len_s > 0.0) {
            return bad("window length must be positive".into());
        }
        let in_unit = |v: &f64| (0.0..=1.0).contains(v);
        if let Some(i) = scores.iter().position(|r| !r.iter().all(in_unit)) {
            return bad(format!("score outside [0, 1] in window {i}"));
        }
        if silence.as_ref().is_some_and(|s| !s.iter().all(in_unit)) {
            return bad("silence score outside [0, 1]".into());
        }
        if window_starts_s.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("window starts are not strictly ascending".into());
        }
        if window_starts_s.len() > 2 {
            let step = window_starts_s[1] - window_starts_s[0];
            let tol = SPACING_TOLERANCE * step.max(1.0);
            if window_starts_s.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > tol) {
                return bad("window spacing is not uniform".into());
            }
        }
        Ok(Self {
            recording_id: id,
            window_starts_s,
            window_len_s,
            scores,
            silence,
        })
    }

    pub fn recording_id(&self) -> &str {
        &self.recording_id
    }

    pub fn window_starts_s(&self) -> &[f64] {
        &self.window_starts_s
    }

    pub fn window_len_s(&self) -> f64 {
        self.window_len_s
    }

    pub fn rows(&self) -> &[[f64; 3]] {
        &self.scores
    }

    pub fn silence(&self) -> Option<&[f64]> {
        self.silence.as_deref()
    }

    pub fn n_windows(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores of one class across windows.
    pub fn column(&self, class: usize) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().map(move |r| r[class])
    }

    /// End of the last window: a lower bound on the recording length.
    pub fn covered_s(&self) -> f64 {
        self.window_starts_s
            .last()
            .map_or(0.0, |s| s + self.window_len_s)
    }
}

/// Reads a score CSV, grouping rows by recording (in order of first
/// appearance) and sorting each group by window start.
pub fn load_scores(path: impl AsRef<Path>, window_len_s: f64) -> Result<Vec<ScoreMatrix>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_scores(file, &path.display().to_string(), window_len_s)
}

pub fn read_scores(reader: impl std::io::Read, source: &str, window_len_s: f64) -> Result<Vec<ScoreMatrix>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let src_path = Path::new(source);
    let headers = rdr.headers().map_err(|e| csv_error(src_path, e))?.clone();
    let expected = ["recording_id", "window_start_s", "anthropophony", "biophony", "geophony"];
    let has_silence = match headers.len() {
        5 => false,
        6 if &headers[5] == "silence" => true,
        _ => {
            return Err(Error::Parse {
                file: source.into(),
                line: 1,
                message: format!("expected header {}[,silence]", expected.join(",")),
            })
        }
    };
    if headers.iter().take(5).ne(expected.iter().copied()) {
        return Err(Error::Parse {
            file: source.into(),
            line: 1,
            message: format!("expected header {}[,silence]", expected.join(",")),
        });
    }

    struct Group {
        rows: Vec<(f64, [f64; 3], f64, u64)>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Group> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(src_path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse {
            file: source.into(),
            line,
            message,
        };
        let num = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = record[i]
                .parse()
                .map_err(|_| err(format!("{name}: '{}' is not a number", &record[i])))?;
            if !v.is_finite() {
                return Err(err(format!("{name}: non-finite value")));
            }
            Ok(v)
        };
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(err("empty recording_id".into()));
        }
        let start = num(1, "window_start_s")?;
        let mut scores = [0.0; 3];
        for (c, s) in scores.iter_mut().enumerate() {
            *s = num(2 + c, expected[2 + c])?;
            if !(0.0..=1.0).contains(s) {
                return Err(err(format!("{}: score {} outside [0, 1]", expected[2 + c], s)));
            }
        }
        let silence = if has_silence {
            let s = num(5, "silence")?;
            if !(0.0..=1.0).contains(&s) {
                return Err(err(format!("silence: score {s} outside [0, 1]")));
            }
            s
        } else {
            0.0
        };
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Group { rows: Vec::new() }
            })
            .rows
            .push((start, scores, silence, line));
    }

    order
        .into_iter()
        .map(|id| {
            let mut g = groups.remove(&id).expect("group exists");
            g.rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(w) = g.rows.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Parse {
                    file: source.into(),
                    line: w[1].3,
                    message: format!("recording '{id}': duplicate window start {}", w[1].0),
                });
            }
            let starts = g.rows.iter().map(|r| r.0).collect();
            let scores = g.rows.iter().map(|r| r.1).collect();
            let silence = has_silence.then(|| g.rows.iter().map(|r| r.2).collect());
            ScoreMatrix::new(id, starts, window_len_s, scores, silence)
        })
        .collect()
}

/// Writes matrices in the score CSV format. Floats use the shortest
/// representation that round-trips exactly.
pub fn dump_scores(mut w: impl Write, matrices: &[ScoreMatrix]) -> std::io::Result<()> {
    let with_silence = matrices.iter().any(|m| m.silence.is_some());
    write!(w, "recording_id,window_start_s,anthropophony,biophony,geophony")?;
    if with_silence {
        write!(w, ",silence")?;
    }
    writeln!(w)?;
    for m in matrices {
        for (i, (start, row)) in m.window_starts_s.iter().zip(&m.scores).enumerate() {
            write!(w, "{},{:?},{:?},{:?},{:?}", m.recording_id, start, row[0], row[1], row[2])?;
            if with_silence {
                let s = m.silence.as_ref().map_or(0.0, |s| s[i]);
                write!(w, ",{s:?}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn published_window_counts() {
        assert_eq!(enumerate_windows(60.0, &WindowSpec::new(10.0, 10.0)).unwrap().len(), 6);
        assert_eq!(enumerate_windows(60.0, &WindowSpec::new(10.0, 1.0)).unwrap().len(), 51);
        assert_eq!(enumerate_windows(10.0, &WindowSpec::new(10.0, 10.0)).unwrap(), vec![0.0]);
        assert!(enumerate_windows(9.0, &WindowSpec::new(10.0, 10.0)).is_err());
        assert!(enumerate_windows(60.0, &WindowSpec::new(10.0, 11.0)).is_err());
    }

    #[test]
    fn trailing_audio_dropped_unless_padded() {
        let mut spec = WindowSpec::new(10.0, 10.0);
        assert_eq!(enumerate_windows(65.0, &spec).unwrap().len(), 6);
        spec.pad_last = true;
        assert_eq!(enumerate_windows(65.0, &spec).unwrap().len(), 7);
        assert_eq!(enumerate_windows(60.0, &spec).unwrap().len(), 6);
    }

    fn brute_force_count(duration: f64, len: f64, step: f64) -> usize {
        let mut n = 0;
        loop {
            let start = n as f64 * step;
            if start + len > duration + 1e-9 {
                return n;
            }
            n += 1;
        }
    }

    proptest! {
        #[test]
        fn count_formula_matches_brute_force(
            len_ms in 100u32..20_000,
            step_frac in 1u32..=100,
            extra_ms in 0u32..200_000,
        ) {
            let len = len_ms as f64 / 1000.0;
            let step = (len * step_frac as f64 / 100.0 * 1000.0).round().max(1.0) / 1000.0;
            let duration = len + extra_ms as f64 / 1000.0;
            let starts = enumerate_windows(duration, &WindowSpec::new(len, step)).unwrap();
            prop_assert_eq!(starts.len(), brute_force_count(duration, len, step));
            let want = ((duration - len) / step + 1e-9).floor() as usize + 1;
            prop_assert_eq!(starts.len(), want);
        }

        #[test]
        fn dump_then_load_is_identity(
            rows in proptest::collection::vec(proptest::array::uniform3(0.0f64..=1.0), 1..20),
            step in 1u32..20,
        ) {
            let starts: Vec<f64> = (0..rows.len()).map(|i| (i as u32 * step) as f64).collect();
            let m = ScoreMatrix::new("rec", starts, 10.0, rows, None).unwrap();
            let mut buf = Vec::new();
            dump_scores(&mut buf, std::slice::from_ref(&m)).unwrap();
            let back = read_scores(&buf[..], "mem", 10.0).unwrap();
            prop_assert_eq!(back, vec![m]);
        }
    }

    #[test]
    fn loads_grouped_and_sorted() {
        let csv = "recording_id,window_start_s,anthropophony,biophony,geophony\n\
                   r2,10,0.1,0.2,0.3\n\
                   r1,10,0.4,0.5,0.6\n\
                   r2,0,0.7,0.8,0.9\n\
                   r1,0,0.0,1.0,0.5\n";
        let ms = read_scores(csv.as_bytes(), "mem", 10.0).unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[0].recording_id(), "r2");
        assert_eq!(ms[0].window_starts_s(), &[0.0, 10.0]);
        assert_eq!(ms[0].rows()[0], [0.7, 0.8, 0.9]);
        assert_eq!(ms[1].rows()[1], [0.4, 0.5, 0.6]);
    }

    #[test]
    fn six_rows_make_one_matrix() {
        let mut csv = String::from("recording_id,window_start_s,anthropophony,biophony,geophony,silence\n");
        for k in 0..6 {
            csv.push_str(&format!("x,{},0.1,0.2,0.3,0.0\n", k * 10));
        }
        let ms = read_scores(csv.as_bytes(), "mem", 10.0).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms[0].n_windows(), 6);
        assert_eq!(ms[0].silence().unwrap().len(), 6);
        assert_eq!(ms[0].covered_s(), 60.0);
    }

    #[test]
    fn validation_errors_carry_line_numbers() {
        let csv = "recording_id,window_start_s,anthropophony,biophony,geophony\n\
                   r,0,0.1,0.2,0.3\n\
                   r,10,0.1,1.2,0.3\n";
        match read_scores(csv.as_bytes(), "s.csv", 10.0) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("biophony"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let csv = "recording_id,window_start_s,anthropophony,biophony,geophony\nr,0,x,0.2,0.3\n";
        assert!(matches!(read_scores(csv.as_bytes(), "s.csv", 10.0), Err(Error::Parse { line: 2, .. })));
        let csv = "recording_id,start,anthropophony,biophony,geophony\n";
        assert!(matches!(read_scores(csv.as_bytes(), "s.csv", 10.0), Err(Error::Parse { line: 1, .. })));
        let csv = "recording_id,window_start_s,anthropophony,biophony,geophony\nr,0,0.1\n";
        assert!(read_scores(csv.as_bytes(), "s.csv", 10.0).is_err());
    }

    #[test]
    fn non_uniform_spacing_rejected() {
        let csv = "recording_id,window_start_s,anthropophony,biophony,geophony\n\
                   r,0,0.1,0.2,0.3\nr,10,0.1,0.2,0.3\nr,25,0.1,0.2,0.3\n";
        assert!(matches!(read_scores(csv.as_bytes(), "s.csv", 10.0), Err(Error::Schema(_))));
        let dup = "recording_id,window_start_s,anthropophony,biophony,geophony\n\
                   r,0,0.1,0.2,0.3\nr,0,0.1,0.2,0.3\n";
        assert!(read_scores(dup.as_bytes(), "s.csv", 10.0).is_err());
    }
}
