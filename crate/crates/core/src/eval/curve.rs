use std::io::Write;

use serde::{Deserialize, Serialize};

use super::f1_from_counts;
use crate::error::{Error, Result};
use crate::labels::{Class, LabelSet};

/// Step of the optional reporting grid.
const GRID_STEP: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Pr,
    Roc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    F1,
    Youden,
}

impl Objective {
    pub fn curve_kind(self) -> CurveKind {
        match self {
            Objective::F1 => CurveKind::Pr,
            Objective::Youden => CurveKind::Roc,
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Objective::F1),
            "youden" | "j" => Ok(Objective::Youden),
            _ => Err(Error::InvalidParameter(format!("unknown objective '{s}' (f1 or youden)"))),
        }
    }
}

/// One operating point. PR: `x` = recall, `y` = precision.
/// ROC: `x` = false positive rate, `y` = true positive rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub kind: CurveKind,
    /// Thresholds descending.
    pub points: Vec<CurvePoint>,
    pub best_threshold: f64,
    /// Best F1 (PR) or Youden's J (ROC).
    pub best_score: f64,
}

/// Thresholds realising every distinct classification under `score > t`:
/// the top score (nothing positive), midpoints between consecutive distinct
/// scores, and 0 when every score is positive (everything positive).
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = scores.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    u.dedup();
    let Some(&top) = u.first() else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(u.len() + 1);
    out.push(top);
    out.extend(u.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    if u[u.len() - 1] > 0.0 {
        out.push(0.0);
    }
    out
}

/// `(tp, fp, fn, tn)` when predicting `score > threshold`.
pub fn confusion_at(scores: &[f64], truth: &[bool], threshold: f64) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    for (&s, &t) in scores.iter().zip(truth) {
        match (s > threshold, t) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
    }
    c
}

fn objective_value(kind: CurveKind, tp: usize, fp: usize, fn_: usize, tn: usize) -> f64 {
    match kind {
        CurveKind::Pr => f1_from_counts(tp, fp, fn_),
        CurveKind::Roc => tpr(tp, fn_) - fpr(fp, tn),
    }
}

fn tpr(tp: usize, fn_: usize) -> f64 {
    if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    }
}

fn fpr(fp: usize, tn: usize) -> f64 {
    if fp + tn == 0 {
        0.0
    } else {
        fp as f64 / (fp + tn) as f64
    }
}

/// PR or ROC curve of recording-level scores. The best point maximises F1
/// (PR) or Youden's J (ROC); ties go to the higher threshold.
pub fn curve(scores: &[f64], truth: &[bool], kind: CurveKind) -> Result<Curve> {
    if scores.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "{} scores but {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("curve over zero items".into()));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::OutOfRange(format!("score {s} outside [0, 1]")));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    if kind == CurveKind::Roc && (positives == 0 || positives == truth.len()) {
        return Err(Error::Degenerate(
            "ROC needs at least one positive and one negative item".into(),
        ));
    }

    // Sweep items by descending score; each candidate admits one more score group.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let thresholds = candidate_thresholds(scores);
    let negatives = truth.len() - positives;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut next = 0;
    let mut points = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        while next < order.len() && scores[order[next]] > t {
            if truth[order[next]] {
                tp += 1;
            } else {
                fp += 1;
            }
            next += 1;
        }
        let (fn_, tn) = (positives - tp, negatives - fp);
        let (x, y) = match kind {
            CurveKind::Pr => (
                tpr(tp, fn_),
                if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 },
            ),
            CurveKind::Roc => (fpr(fp, tn), tpr(tp, fn_)),
        };
        points.push(CurvePoint { threshold: t, x, y, tp, fp, fn_, tn });
    }

    let mut best = (points[0].threshold, f64::NEG_INFINITY);
    for p in &points {
        let v = objective_value(kind, p.tp, p.fp, p.fn_, p.tn);
        if v > best.1 {
            best = (p.threshold, v);
        }
    }
    Ok(Curve {
        kind,
        points,
        best_threshold: best.0,
        best_score: best.1,
    })
}

/// Moves `t` onto the 0.001 grid when a grid value gives the same
/// classification of `scores`.
fn snap_to_grid(t: f64, scores: &[f64]) -> f64 {
    let above = scores.iter().copied().filter(|&s| s > t).fold(f64::INFINITY, f64::min);
    let below = scores.iter().copied().filter(|&s| s <= t).fold(f64::NEG_INFINITY, f64::max);
    // Same classification for any threshold in [below, above).
    let lo = below.max(0.0);
    let hi = above.min(1.0 + GRID_STEP);
    let round = (t / GRID_STEP).round() * GRID_STEP;
    let round = (round * 1000.0).round() / 1000.0;
    if round >= lo && round < hi && round <= 1.0 {
        return round;
    }
    let up = ((lo / GRID_STEP).ceil() * GRID_STEP * 1000.0).round() / 1000.0;
    if up < hi && up <= 1.0 {
        up
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedThresholds {
    pub objective: Objective,
    pub thresholds: [f64; 3],
    /// Objective value at each threshold.
    pub scores: [f64; 3],
}

/// Per-class threshold maximising the objective over the curve candidates.
/// With `snap`, each threshold is moved onto the 0.001 grid when that keeps
/// the same operating point.
pub fn tune_thresholds(
    scores: &[[f64; 3]],
    truth: &[LabelSet],
    objective: Objective,
    snap: bool,
) -> Result<TunedThresholds> {
    if scores.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "{} score rows but {} label sets",
            scores.len(),
            truth.len()
        )));
    }
    let mut thresholds = [0.0; 3];
    let mut values = [0.0; 3];
    for class in Class::ALL {
        let c = class.index();
        let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
        let t: Vec<bool> = truth.iter().map(|l| l.contains(class)).collect();
        let cv = curve(&s, &t, objective.curve_kind())
            .map_err(|e| Error::Degenerate(format!("{class}: {e}")))?;
        thresholds[c] = if snap { snap_to_grid(cv.best_threshold, &s) } else { cv.best_threshold };
        values[c] = cv.best_score;
    }
    Ok(TunedThresholds {
        objective,
        thresholds,
        scores: values,
    })
}

/// Long-format CSV: `class,kind,threshold,x,y,tp,fp,fn,tn`.
pub fn write_curves(mut w: impl Write, curves: &[(Class, Curve)]) -> std::io::Result<()> {
    writeln!(w, "class,kind,threshold,x,y,tp,fp,fn,tn")?;
    for (class, c) in curves {
        let kind = match c.kind {
            CurveKind::Pr => "pr",
            CurveKind::Roc => "roc",
        };
        for p in &c.points {
            writeln!(
                w,
                "{},{kind},{:?},{:?},{:?},{},{},{},{}",
                class.name(),
                p.threshold,
                p.x,
                p.y,
                p.tp,
                p.fp,
                p.fn_,
                p.tn
            )?;
        }
    }
    Ok(())
}
