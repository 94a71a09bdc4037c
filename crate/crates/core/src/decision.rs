//! Recording-level decisions from per-window scores, plus the annotation
//! side: strong/weak label loading and duration-based label filtering (PDA).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{csv_error, Error, Result};
use crate::labels::{Class, LabelSet};
use crate::scores::ScoreMatrix;

/// Slack for duration comparisons, so `p * T` products like `0.05 * 60`
/// compare equal to the intended value.
const DURATION_EPS: f64 = 1e-9;

/// Ground truth for one recording.
///
/// Strong annotations carry per-class segments; weak ones only carry flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    recording_id: String,
    duration_s: f64,
    segments: [Vec<(f64, f64)>; 3],
    weak: Option<LabelSet>,
}

impl AnnotationSet {
    /// Validates and merges overlapping or touching segments per class.
    pub fn new(
        recording_id: impl Into<String>,
        duration_s: f64,
        segments: [Vec<(f64, f64)>; 3],
    ) -> Result<Self> {
        let recording_id = recording_id.into();
        if !(duration_s >= 0.0 && duration_s.is_finite()) {
            return Err(Error::Schema(format!(
                "recording '{recording_id}': invalid duration {duration_s}"
            )));
        }
        let mut merged: [Vec<(f64, f64)>; 3] = Default::default();
        for (c, list) in segments.into_iter().enumerate() {
            for &(s, e) in &list {
                if !(0.0 <= s && s < e && e <= duration_s + DURATION_EPS) {
                    return Err(Error::Schema(format!(
                        "recording '{recording_id}': {} segment ({s}, {e}) outside 0 <= start < end <= {duration_s}",
                        Class::ALL[c]
                    )));
                }
            }
            merged[c] = merge_segments(list);
        }
        Ok(Self {
            recording_id,
            duration_s,
            segments: merged,
            weak: None,
        })
    }

    /// Flags without timing information.
    pub fn from_weak(recording_id: impl Into<String>, duration_s: f64, labels: LabelSet) -> Self {
        Self {
            recording_id: recording_id.into(),
            duration_s,
            segments: Default::default(),
            weak: Some(labels),
        }
    }

    pub fn recording_id(&self) -> &str {
        &self.recording_id
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn is_weak(&self) -> bool {
        self.weak.is_some()
    }

    pub fn segments(&self, class: Class) -> &[(f64, f64)] {
        &self.segments[class.index()]
    }

    /// Active classes: non-empty segment lists (or the weak flags).
    pub fn labels(&self) -> LabelSet {
        match self.weak {
            Some(l) => l,
            None => Class::ALL
                .iter()
                .filter(|c| !self.segments[c.index()].is_empty())
                .fold(LabelSet::EMPTY, |acc, &c| acc.with(c)),
        }
    }

    pub fn total_duration(&self, class: Class) -> f64 {
        self.segments[class.index()].iter().map(|(s, e)| e - s).sum()
    }

    pub fn longest_segment(&self, class: Class) -> f64 {
        self.segments[class.index()]
            .iter()
            .map(|(s, e)| e - s)
            .fold(0.0, f64::max)
    }

    /// Re-anchors the set to a known recording length.
    pub fn with_duration(self, duration_s: f64) -> Result<Self> {
        match self.weak {
            Some(l) => Ok(Self::from_weak(self.recording_id, duration_s, l)),
            None => Self::new(self.recording_id, duration_s, self.segments),
        }
    }
}

fn merge_segments(mut list: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(list.len());
    for (s, e) in list {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdaMode {
    /// Sum of merged segment durations.
    #[default]
    Summed,
    /// Longest single merged segment.
    Longest,
}

/// Minimum annotated duration per class, as a fraction of recording length.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PdaPolicy {
    pub fractions: [Option<f64>; 3],
    pub mode: PdaMode,
}

impl PdaPolicy {
    pub fn new(fractions: [Option<f64>; 3], mode: PdaMode) -> Result<Self> {
        let p = Self { fractions, mode };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (c, p) in self.fractions.iter().enumerate() {
            if let Some(p) = p {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::Config(format!(
                        "PDA fraction for {} must lie in (0, 1), got {p}",
                        Class::ALL[c]
                    )));
                }
            }
        }
        Ok(())
    }

    /// `p * T` for the class, if it has a fraction.
    pub fn min_duration(&self, class: Class, duration_s: f64) -> Option<f64> {
        self.fractions[class.index()].map(|p| p * duration_s)
    }
}

/// Drops class labels whose annotated duration is below `p * T`.
/// Weak annotations carry no durations and pass through unchanged.
pub fn apply_pda(ann: &AnnotationSet, policy: &PdaPolicy) -> AnnotationSet {
    let mut out = ann.clone();
    if ann.is_weak() {
        return out;
    }
    for class in Class::ALL {
        let Some(min) = policy.min_duration(class, ann.duration_s) else {
            continue;
        };
        let measure = match policy.mode {
            PdaMode::Summed => ann.total_duration(class),
            PdaMode::Longest => ann.longest_segment(class),
        };
        if measure + DURATION_EPS < min {
            out.segments[class.index()].clear();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    #[default]
    Global,
    PerClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub mode: ThresholdMode,
    /// Per class; all equal in global mode.
    pub thresholds: [f64; 3],
    /// Minimum number of windows above threshold, per class.
    pub counts: Option<[usize; 3]>,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self::global(0.5)
    }
}

impl ThresholdPolicy {
    pub fn global(theta: f64) -> Self {
        Self {
            mode: ThresholdMode::Global,
            thresholds: [theta; 3],
            counts: None,
        }
    }

    pub fn per_class(thresholds: [f64; 3]) -> Self {
        Self {
            mode: ThresholdMode::PerClass,
            thresholds,
            counts: None,
        }
    }

    pub fn with_counts(mut self, counts: [usize; 3]) -> Self {
        self.counts = Some(counts);
        self
    }

    pub fn threshold(&self, class: Class) -> f64 {
        self.thresholds[class.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
        }
        if self.mode == ThresholdMode::Global && self.thresholds.iter().any(|t| *t != self.thresholds[0]) {
            return Err(Error::Config("global mode requires one threshold for all classes".into()));
        }
        if self.counts.is_some_and(|c| c.contains(&0)) {
            return Err(Error::Config("window counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Checks counts against the number of windows per recording.
    pub fn validate_for_windows(&self, n_windows: usize) -> Result<()> {
        self.validate()?;
        if let Some(c) = self.counts {
            if let Some(bad) = c.iter().find(|&&c| c > n_windows) {
                return Err(Error::Config(format!(
                    "window count {bad} exceeds the {n_windows} windows per recording"
                )));
            }
        }
        Ok(())
    }
}

/// Multi-label decision for one recording. Silence is the empty active set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub recording_id: String,
    pub active: LabelSet,
}

impl Decision {
    pub fn silence(&self) -> bool {
        self.active.is_empty()
    }
}

/// Per-class maximum over windows.
pub fn aggregate(matrix: &ScoreMatrix) -> Result<[f64; 3]> {
    if matrix.is_empty() {
        return Err(Error::EmptyInput(format!(
            "score matrix for '{}' has no windows",
            matrix.recording_id()
        )));
    }
    let mut out = [f64::NEG_INFINITY; 3];
    for row in matrix.rows() {
        for c in 0..3 {
            out[c] = out[c].max(row[c]);
        }
    }
    Ok(out)
}

/// A class is active when its max score exceeds the threshold (strictly), or,
/// with counts, when at least `c` windows exceed it.
pub fn decide(matrix: &ScoreMatrix, policy: &ThresholdPolicy) -> Result<Decision> {
    let agg = aggregate(matrix)?;
    policy.validate_for_windows(matrix.n_windows())?;
    let mut active = LabelSet::EMPTY;
    for class in Class::ALL {
        let c = class.index();
        let theta = policy.thresholds[c];
        let on = match policy.counts {
            None => agg[c] > theta,
            Some(counts) => matrix.column(c).filter(|&s| s > theta).count() >= counts[c],
        };
        if on {
            active = active.with(class);
        }
    }
    Ok(Decision {
        recording_id: matrix.recording_id().to_string(),
        active,
    })
}

/// [`decide`] over many recordings in parallel, preserving order.
pub fn decide_all(matrices: &[ScoreMatrix], policy: &ThresholdPolicy) -> Result<Vec<Decision>> {
    matrices.par_iter().map(|m| decide(m, policy)).collect()
}

/// `floor(p * w)`, raised to 1 when the product floors to 0.
pub fn count_for_fraction(p: f64, w: usize) -> usize {
    ((p * w as f64 + DURATION_EPS).floor() as usize).max(1)
}

pub const DECISIONS_HEADER: &str = "recording_id,anthropophony,biophony,geophony,silence";

pub fn write_decisions(mut w: impl Write, decisions: &[Decision]) -> std::io::Result<()> {
    writeln!(w, "{DECISIONS_HEADER}")?;
    for d in decisions {
        let [a, b, g] = d.active.flags();
        writeln!(
            w,
            "{},{},{},{},{}",
            d.recording_id,
            u8::from(a),
            u8::from(b),
            u8::from(g),
            u8::from(d.silence())
        )?;
    }
    Ok(())
}

fn parse_flag(v: &str) -> Option<bool> {
    match v {
        "0" | "false" => Some(false),
        "1" | "true" => Some(true),
        _ => None,
    }
}

/// Reads a per-recording label table: either the weak annotation layout
/// (`recording_id,A,B,G`) or the decisions layout written by
/// [`write_decisions`]. Rows keep file order.
pub fn read_label_table(path: impl AsRef<Path>) -> Result<Vec<(String, LabelSet)>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols = label_columns(&headers).ok_or_else(|| Error::Parse {
        file: path.display().to_string(),
        line: 1,
        message: format!("expected header recording_id,A,B,G or {DECISIONS_HEADER}"),
    })?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        out.push(parse_label_row(&record, &cols, path, line)?);
    }
    Ok(out)
}

fn label_columns(headers: &csv::StringRecord) -> Option<[usize; 4]> {
    let find = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    Some([
        find(&["recording_id"])?,
        find(&["A", "anthropophony"])?,
        find(&["B", "biophony"])?,
        find(&["G", "geophony"])?,
    ])
}

fn parse_label_row(record: &csv::StringRecord, cols: &[usize; 4], path: &Path, line: u64) -> Result<(String, LabelSet)> {
    let err = |message: String| Error::Parse {
        file: path.display().to_string(),
        line,
        message,
    };
    let id = record.get(cols[0]).unwrap_or_default().to_string();
    if id.is_empty() {
        return Err(err("empty recording_id".into()));
    }
    let mut flags = [false; 3];
    for c in 0..3 {
        let v = record.get(cols[c + 1]).unwrap_or_default();
        flags[c] = parse_flag(v).ok_or_else(|| err(format!("{}: expected 0 or 1, got '{v}'", Class::ALL[c])))?;
    }
    Ok((id, LabelSet::from_flags(flags)))
}

/// Loads strong (`recording_id,class,start_s,end_s`) or weak
/// (`recording_id,A,B,G`) annotations, detected from the header.
///
/// A strong row whose class is `silence` (or `S`) declares a recording with no
/// events; its times are ignored. Recording length comes from `duration_of`;
/// when that returns `None`, strong sets use the latest segment end and weak
/// sets use 0.
pub fn load_annotations(
    path: impl AsRef<Path>,
    duration_of: impl Fn(&str) -> Option<f64>,
) -> Result<Vec<AnnotationSet>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let file = path.display().to_string();

    if let Some(cols) = label_columns(&headers).filter(|_| headers.iter().all(|h| h != "class")) {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let (id, labels) = parse_label_row(&record, &cols, path, line)?;
            if seen.insert(id.clone(), line).is_some() {
                return Err(Error::Parse {
                    file,
                    line,
                    message: format!("duplicate recording '{id}'"),
                });
            }
            let t = duration_of(&id).unwrap_or(0.0);
            out.push(AnnotationSet::from_weak(id, t, labels));
        }
        return Ok(out);
    }

    let expected = ["recording_id", "class", "start_s", "end_s"];
    if headers.len() != 4 || headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            file,
            line: 1,
            message: format!("expected header {} or recording_id,A,B,G", expected.join(",")),
        });
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, [Vec<(f64, f64)>; 3]> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse {
            file: file.clone(),
            line,
            message,
        };
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(err("empty recording_id".into()));
        }
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Default::default()
        });
        let class_str = &record[1];
        if matches!(class_str, "silence" | "S" | "s") {
            continue;
        }
        let class: Class = class_str.parse().map_err(|e: Error| err(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("{}: '{}' is not a number", expected[i], &record[i])))
        };
        let (s, e) = (num(2)?, num(3)?);
        if !(0.0 <= s && s < e) {
            return Err(err(format!("segment ({s}, {e}) needs 0 <= start < end")));
        }
        if let Some(t) = duration_of(&id) {
            if e > t + DURATION_EPS {
                return Err(err(format!("segment end {e} exceeds recording length {t}")));
            }
        }
        entry[class.index()].push((s, e));
    }
    order
        .into_iter()
        .map(|id| {
            let segs = groups.remove(&id).expect("group exists");
            let t = duration_of(&id).unwrap_or_else(|| {
                segs.iter().flatten().map(|&(_, e)| e).fold(0.0, f64::max)
            });
            AnnotationSet::new(id, t, segs)
        })
        .collect()
}
