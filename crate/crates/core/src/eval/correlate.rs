use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{csv_error, Error, Result};
use crate::indices::IndexResult;
use crate::labels::LabelSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Aci,
    Adi,
    Ndsi,
}

impl IndexKind {
    pub const ALL: [IndexKind; 3] = [IndexKind::Aci, IndexKind::Adi, IndexKind::Ndsi];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Aci => "aci",
            IndexKind::Adi => "adi",
            IndexKind::Ndsi => "ndsi",
        }
    }

    pub fn value(self, r: &IndexResult) -> Option<f64> {
        match self {
            IndexKind::Aci => Some(r.aci),
            IndexKind::Adi => Some(r.adi),
            IndexKind::Ndsi => r.ndsi,
        }
    }
}

/// Which recordings enter a correlation, by their label set.
///
/// `B`, `AB`, `BG`, `ABG` (alias `all`) keep recordings whose non-empty label
/// set lies within the given classes, so `B` means "only biophony". A leading
/// `=` demands an exact match instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelFilter {
    Within(LabelSet),
    Exactly(LabelSet),
}

impl LabelFilter {
    pub fn accepts(self, labels: LabelSet) -> bool {
        match self {
            LabelFilter::Within(set) => !labels.is_empty() && labels.bits() & !set.bits() == 0,
            LabelFilter::Exactly(set) => labels == set,
        }
    }
}

impl std::fmt::Display for LabelFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelFilter::Within(s) if *s == LabelSet::ALL => f.write_str("all"),
            LabelFilter::Within(s) => write!(f, "{s}"),
            LabelFilter::Exactly(s) => write!(f, "={s}"),
        }
    }
}

impl std::str::FromStr for LabelFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(LabelFilter::Within(LabelSet::ALL));
        }
        match s.strip_prefix('=') {
            Some(rest) => Ok(LabelFilter::Exactly(rest.parse()?)),
            None => {
                let set: LabelSet = s.parse()?;
                if set.is_empty() {
                    return Err(Error::InvalidParameter("filter selects no class; use '=S' for silence".into()));
                }
                Ok(LabelFilter::Within(set))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub filter: LabelFilter,
    pub index: IndexKind,
    pub rho: f64,
    pub n: usize,
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter("paired vectors differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate(format!("correlation needs at least 2 points, got {}", x.len())));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance in a correlated variable".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson r between an index and species counts over recordings whose
/// labels pass `filter`. Recordings with an undefined index value are skipped.
pub fn correlate(
    indices: &[IndexResult],
    diversity: &HashMap<String, f64>,
    filter: LabelFilter,
    labels: &HashMap<String, LabelSet>,
    index: IndexKind,
) -> Result<CorrelationResult> {
    let mut missing = Vec::new();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for r in indices {
        let (Some(d), Some(l)) = (diversity.get(&r.recording_id), labels.get(&r.recording_id)) else {
            missing.push(r.recording_id.clone());
            continue;
        };
        if !filter.accepts(*l) {
            continue;
        }
        if let Some(v) = index.value(r) {
            x.push(v);
            y.push(*d);
        }
    }
    if !missing.is_empty() {
        return Err(Error::IdMismatch(format!(
            "no diversity or label entry for: {}",
            missing.join(", ")
        )));
    }
    let rho = pearson(&x, &y)?;
    Ok(CorrelationResult {
        filter,
        index,
        rho,
        n: x.len(),
    })
}

/// Reads `recording_id,species_count`.
pub fn read_diversity(path: impl AsRef<Path>) -> Result<HashMap<String, f64>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().ne(["recording_id", "species_count"]) {
        return Err(Error::Parse {
            file: path.display().to_string(),
            line: 1,
            message: "expected header recording_id,species_count".into(),
        });
    }
    let mut out = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse {
            file: path.display().to_string(),
            line,
            message,
        };
        let v: f64 = record[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| err(format!("species_count: '{}' is not a non-negative number", &record[1])))?;
        if out.insert(record[0].to_string(), v).is_some() {
            return Err(err(format!("duplicate recording '{}'", &record[0])));
        }
    }
    Ok(out)
}
