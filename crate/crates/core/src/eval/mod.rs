//! Multi-label metrics with bootstrap confidence intervals, PR/ROC curves,
//! threshold tuning, error stratification and index/diversity correlation.

mod correlate;
mod curve;
mod stratify;

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{AnnotationSet, Decision};
use crate::error::{Error, Result};
use crate::labels::{Class, LabelSet};
use crate::util::subseed;

pub use correlate::{correlate, pearson, read_diversity, CorrelationResult, IndexKind, LabelFilter};
pub use curve::{
    candidate_thresholds, confusion_at, curve, tune_thresholds, write_curves, Curve, CurveKind, CurvePoint,
    Objective, TunedThresholds,
};
pub use stratify::{stratify_errors, StratifiedErrors, Stratum};

/// Confusion counts and rates for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: Class,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    pub fn from_counts(class: Class, tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            class,
            tp,
            fp,
            fn_,
            tn,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: f1_from_counts(tp, fp, fn_),
        }
    }
}

/// `2TP / (2TP + FP + FN)`, which equals `2PR / (P + R)`; 0 when TP = 0.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Unweighted mean of the three class F1 scores.
pub fn macro_f1(f1: [f64; 3]) -> f64 {
    f1.iter().sum::<f64>() / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resamples == 0 || !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config(format!(
                "bootstrap needs resamples >= 1 and confidence in (0, 1), got {} and {}",
                self.resamples, self.confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_recordings: usize,
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub macro_f1_ci: (f64, f64),
    pub bootstrap: BootstrapConfig,
    pub predicted_silence_rate: f64,
    pub true_silence_rate: f64,
}

/// Pairs each decision with its ground truth, in decision order.
pub fn align(decisions: &[Decision], truth: &[AnnotationSet]) -> Result<Vec<(LabelSet, LabelSet)>> {
    if decisions.is_empty() {
        return Err(Error::EmptyInput("no decisions to evaluate".into()));
    }
    let mut by_id: HashMap<&str, LabelSet> = HashMap::with_capacity(truth.len());
    for t in truth {
        if by_id.insert(t.recording_id(), t.labels()).is_some() {
            return Err(Error::IdMismatch(format!("duplicate truth for '{}'", t.recording_id())));
        }
    }
    let mut seen = std::collections::HashSet::new();
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(decisions.len());
    for d in decisions {
        if !seen.insert(d.recording_id.as_str()) {
            return Err(Error::IdMismatch(format!("duplicate decision for '{}'", d.recording_id)));
        }
        match by_id.get(d.recording_id.as_str()) {
            Some(&t) => pairs.push((d.active, t)),
            None => missing.push(d.recording_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::IdMismatch(format!("no ground truth for: {}", missing.join(", "))));
    }
    if truth.len() != decisions.len() {
        let extra: Vec<&str> = truth
            .iter()
            .map(|t| t.recording_id())
            .filter(|id| !seen.contains(id))
            .collect();
        return Err(Error::IdMismatch(format!("no decision for: {}", extra.join(", "))));
    }
    Ok(pairs)
}

/// Per-class metrics over aligned `(predicted, truth)` pairs.
pub fn class_metrics(pairs: &[(LabelSet, LabelSet)]) -> [ClassMetrics; 3] {
    Class::ALL.map(|c| {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (p, t) in pairs {
            match (p.contains(c), t.contains(c)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        ClassMetrics::from_counts(c, tp, fp, fn_, tn)
    })
}

fn macro_of(pairs: &[(LabelSet, LabelSet)]) -> f64 {
    macro_f1(class_metrics(pairs).map(|m| m.f1))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap over recordings. Resample `r` draws from
/// `subseed(seed, r)`, so the interval does not depend on thread count.
/// The interval is widened if needed to contain the point estimate.
pub fn bootstrap_macro_f1(pairs: &[(LabelSet, LabelSet)], config: &BootstrapConfig) -> Result<(f64, f64)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("bootstrap over zero recordings".into()));
    }
    let n = pairs.len();
    let mut stats: Vec<f64> = (0..config.resamples as u64)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |buf, r| {
                let mut rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, r));
                buf.clear();
                buf.extend((0..n).map(|_| pairs[rng.random_range(0..n)]));
                macro_of(buf)
            },
        )
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - config.confidence) / 2.0;
    let point = macro_of(pairs);
    let lo = percentile(&stats, alpha).min(point);
    let hi = percentile(&stats, 1.0 - alpha).max(point);
    Ok((lo, hi))
}

pub fn evaluate(decisions: &[Decision], truth: &[AnnotationSet], bootstrap: &BootstrapConfig) -> Result<EvalReport> {
    let pairs = align(decisions, truth)?;
    let per_class = class_metrics(&pairs);
    let n = pairs.len();
    let rate = |k: usize| k as f64 / n as f64;
    Ok(EvalReport {
        n_recordings: n,
        macro_f1: macro_f1(per_class.map(|m| m.f1)),
        macro_f1_ci: bootstrap_macro_f1(&pairs, bootstrap)?,
        per_class: per_class.to_vec(),
        bootstrap: *bootstrap,
        predicted_silence_rate: rate(pairs.iter().filter(|(p, _)| p.is_empty()).count()),
        true_silence_rate: rate(pairs.iter().filter(|(_, t)| t.is_empty()).count()),
    })
}

impl EvalReport {
    /// Fixed-width text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<14} {:>5} {:>5} {:>5} {:>5} {:>9} {:>9} {:>7}",
            "class", "TP", "FP", "FN", "TN", "precision", "recall", "F1"
        );
        for m in &self.per_class {
            let _ = writeln!(
                s,
                "{:<14} {:>5} {:>5} {:>5} {:>5} {:>9.3} {:>9.3} {:>7.3}",
                m.class.name(),
                m.tp,
                m.fp,
                m.fn_,
                m.tn,
                m.precision,
                m.recall,
                m.f1
            );
        }
        let pct = (self.bootstrap.confidence * 100.0).round();
        let _ = writeln!(
            s,
            "macro F1 {:.3}  ({pct}% CI {:.3}-{:.3}, {} resamples)",
            self.macro_f1, self.macro_f1_ci.0, self.macro_f1_ci.1, self.bootstrap.resamples
        );
        let _ = writeln!(
            s,
            "silence: predicted {:.1}%, annotated {:.1}%  (n = {})",
            100.0 * self.predicted_silence_rate,
            100.0 * self.true_silence_rate,
            self.n_recordings
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(id: &str, code: &str) -> Decision {
        Decision {
            recording_id: id.into(),
            active: code.parse().unwrap(),
        }
    }

    fn weak(id: &str, code: &str) -> AnnotationSet {
        AnnotationSet::from_weak(id, 60.0, code.parse().unwrap())
    }

    fn round3(x: f64) -> f64 {
        (x * 1000.0).round() / 1000.0
    }

    #[test]
    fn published_macro_f1_rows() {
        assert_eq!(round3(macro_f1([0.678, 0.937, 0.776])), 0.797);
        assert_eq!(round3(macro_f1([0.649, 0.909, 0.717])), 0.758);
        assert_eq!(round3(macro_f1([0.678, 0.936, 0.782])), 0.799);
    }

    #[test]
    fn perfect_predictions() {
        let codes = ["A", "BG", "S", "ABG", "B"];
        let ds: Vec<_> = codes.iter().enumerate().map(|(i, c)| dec(&i.to_string(), c)).collect();
        let ts: Vec<_> = codes.iter().enumerate().map(|(i, c)| weak(&i.to_string(), c)).collect();
        let r = evaluate(&ds, &ts, &BootstrapConfig::default()).unwrap();
        assert!(r.per_class.iter().all(|m| m.f1 == 1.0));
        assert_eq!(r.macro_f1, 1.0);
        // A resample can miss every positive of a class, which scores F1 = 0.
        assert!(r.macro_f1_ci.0 <= 1.0 && r.macro_f1_ci.1 == 1.0);
        assert_eq!(r.predicted_silence_rate, 0.2);
    }

    #[test]
    fn zero_tp_gives_zero_f1() {
        assert_eq!(f1_from_counts(0, 0, 0), 0.0);
        assert_eq!(f1_from_counts(0, 3, 2), 0.0);
        assert_eq!(f1_from_counts(2, 1, 1), 2.0 / 3.0);
        let m = ClassMetrics::from_counts(Class::Biophony, 3, 1, 2, 4);
        let (p, r) = (0.75, 0.6);
        assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let b = BootstrapConfig::default();
        assert!(matches!(evaluate(&[], &[], &b), Err(Error::EmptyInput(_))));
        assert!(matches!(evaluate(&[dec("x", "A")], &[weak("y", "A")], &b), Err(Error::IdMismatch(_))));
        assert!(matches!(
            evaluate(&[dec("x", "A")], &[weak("x", "A"), weak("y", "B")], &b),
            Err(Error::IdMismatch(_))
        ));
        assert!(matches!(
            evaluate(&[dec("x", "A"), dec("x", "B")], &[weak("x", "A")], &b),
            Err(Error::IdMismatch(_))
        ));
    }

    #[test]
    fn bootstrap_brackets_and_is_reproducible() {
        let mut ds = Vec::new();
        let mut ts = Vec::new();
        for i in 0..60 {
            let id = i.to_string();
            let truth = LabelSet::from_bits((i % 8) as u8);
            let pred = LabelSet::from_bits(((i * 5 + 3) % 8) as u8);
            ds.push(Decision { recording_id: id.clone(), active: pred });
            ts.push(AnnotationSet::from_weak(id, 60.0, truth));
        }
        for resamples in [10, 100, 1000] {
            for seed in 0..5 {
                let cfg = BootstrapConfig { resamples, seed, ..Default::default() };
                let r = evaluate(&ds, &ts, &cfg).unwrap();
                assert!(r.macro_f1_ci.0 <= r.macro_f1 && r.macro_f1 <= r.macro_f1_ci.1);
                assert_eq!(r, evaluate(&ds, &ts, &cfg).unwrap());
            }
        }
        let pairs = align(&ds, &ts).unwrap();
        let cfg = BootstrapConfig { seed: 3, ..Default::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        assert_eq!(
            one.install(|| bootstrap_macro_f1(&pairs, &cfg).unwrap()),
            bootstrap_macro_f1(&pairs, &cfg).unwrap()
        );
    }

    #[test]
    fn report_serializes() {
        let r = evaluate(&[dec("x", "AB")], &[weak("x", "A")], &BootstrapConfig::default()).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"fn\":0"));
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(r.to_table().contains("macro F1 0.333"));
    }
}
