use std::io::Write;

use serde::{Deserialize, Serialize};

use super::align;
use crate::decision::{AnnotationSet, Decision};
use crate::error::Result;
use crate::labels::{Class, LabelSet};

/// Errors of one target class among recordings whose other annotated labels
/// form `combination` (`S` when none).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub target: Class,
    pub combination: LabelSet,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Recordings whose other annotated labels equal `combination`.
    pub recordings: usize,
}

impl Stratum {
    pub fn fp_rate(&self) -> f64 {
        rate(self.fp, self.recordings)
    }

    pub fn fn_rate(&self) -> f64 {
        rate(self.fn_, self.recordings)
    }
}

fn rate(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedErrors {
    /// Per target in A, B, G order; combinations in subset order.
    pub strata: Vec<Stratum>,
}

impl StratifiedErrors {
    pub fn get(&self, target: Class, combination: LabelSet) -> Option<&Stratum> {
        self.strata
            .iter()
            .find(|s| s.target == target && s.combination == combination)
    }

    pub fn total_fp(&self, target: Class) -> usize {
        self.strata.iter().filter(|s| s.target == target).map(|s| s.fp).sum()
    }

    pub fn total_fn(&self, target: Class) -> usize {
        self.strata.iter().filter(|s| s.target == target).map(|s| s.fn_).sum()
    }

    /// Long format: `target,combination,kind,count,rate`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "target,combination,kind,count,rate")?;
        for s in &self.strata {
            for (kind, count, rate) in [("fp", s.fp, s.fp_rate()), ("fn", s.fn_, s.fn_rate())] {
                writeln!(w, "{},{},{kind},{count},{rate:?}", s.target.name(), s.combination)?;
            }
        }
        Ok(())
    }
}

/// Tallies each class's false positives and false negatives by the annotated
/// combination of the other classes.
pub fn stratify_errors(decisions: &[Decision], truth: &[AnnotationSet]) -> Result<StratifiedErrors> {
    let pairs = align(decisions, truth)?;
    let mut strata = Vec::with_capacity(12);
    for target in Class::ALL {
        for combination in LabelSet::all_subsets() {
            if combination.contains(target) {
                continue;
            }
            let mut s = Stratum {
                target,
                combination,
                fp: 0,
                fn_: 0,
                recordings: 0,
            };
            for (pred, t) in &pairs {
                if t.without(target) != combination {
                    continue;
                }
                s.recordings += 1;
                match (pred.contains(target), t.contains(target)) {
                    (true, false) => s.fp += 1,
                    (false, true) => s.fn_ += 1,
                    _ => {}
                }
            }
            strata.push(s);
        }
    }
    Ok(StratifiedErrors { strata })
}
