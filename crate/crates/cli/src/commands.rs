use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use log::{error, info, warn};
use rayon::prelude::*;
use soundscape_core::decision::{aggregate, apply_pda, decide_all, load_annotations, write_decisions, AnnotationSet};
use soundscape_core::eval::{
    correlate, curve, evaluate, read_diversity, stratify_errors, tune_thresholds, write_curves, Curve, CurveKind,
    EvalReport, IndexKind, LabelFilter, Objective, TunedThresholds,
};
use soundscape_core::indices::{read_indices, write_indices};
use soundscape_core::synthmix::ManifestRow;
use soundscape_core::{
    build_corpus, compute_indices, decode_wav, load_scores, resample, Class, Error, IndexParams, IndexResult,
    LabelSet, MixConfig, ScoreMatrix, SourcePool, ThresholdPolicy,
};

use crate::config::{PolicySection, RunConfig};

/// Count of per-item failures; the process exits nonzero when it is not 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Outcome {
    pub items: usize,
    pub failures: usize,
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// WAV files directly inside `dir`, sorted by name.
pub fn list_wavs(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if path.is_file() && is_wav {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// ACI/ADI/NDSI for every WAV in `audio_dir`, in file-name order. Files that
/// fail are logged and left out. `timing` appends per-file seconds.
pub fn cmd_indices(audio_dir: &Path, params: &IndexParams, timing: bool, out: impl Write) -> anyhow::Result<Outcome> {
    let files = list_wavs(audio_dir)?;
    info!("{} WAV files in {}; {}", files.len(), audio_dir.display(), params.describe());
    let results: Vec<Result<(IndexResult, f64), Error>> = files
        .par_iter()
        .map(|path| {
            let t0 = Instant::now();
            let clip = decode_wav(path)?;
            let r = compute_indices(&clip, params)?;
            Ok((r, t0.elapsed().as_secs_f64()))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut seconds = Vec::with_capacity(results.len());
    let mut failures = 0;
    for (path, r) in files.iter().zip(results) {
        match r {
            Ok((row, t)) => {
                rows.push(row);
                seconds.push(t);
            }
            Err(e) => {
                error!("{}: {e}", path.display());
                failures += 1;
            }
        }
    }
    write_indices(out, &rows, timing.then_some(&seconds[..]))?;
    Ok(Outcome {
        items: files.len(),
        failures,
    })
}

/// Parses `A=10,BG=3,S=2` into per-combination counts.
pub fn parse_counts(spec: &str) -> anyhow::Result<BTreeMap<LabelSet, usize>> {
    let mut out = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (code, n) = part
            .split_once('=')
            .with_context(|| format!("count '{part}' is not CODE=N"))?;
        let set: LabelSet = code.trim().parse()?;
        let n: usize = n.trim().parse().with_context(|| format!("count '{part}'"))?;
        if out.insert(set, n).is_some() {
            bail!("combination {set} given twice");
        }
    }
    Ok(out)
}

pub fn cmd_mix(
    pool_manifest: &Path,
    counts: &BTreeMap<LabelSet, usize>,
    seed: u64,
    config: &MixConfig,
    out_dir: &Path,
) -> anyhow::Result<Vec<ManifestRow>> {
    let pool = SourcePool::from_manifest(pool_manifest, config.target_rate_hz)?;
    for class in Class::ALL {
        info!("{class}: {} sources", pool.sources(class).len());
    }
    let rows = build_corpus(&pool, counts, seed, out_dir, config)?;
    info!("wrote {} clips and manifest.csv to {}", rows.len(), out_dir.display());
    Ok(rows)
}

/// Scores and PDA-filtered ground truth, aligned by recording.
pub struct Loaded {
    pub matrices: Vec<ScoreMatrix>,
    pub truth: Vec<AnnotationSet>,
}

pub fn load_inputs(scores_csv: &Path, annotations_csv: &Path, cfg: &RunConfig) -> anyhow::Result<Loaded> {
    let matrices = load_scores(scores_csv, cfg.windows.window_len_s)?;
    if matrices.is_empty() {
        bail!("{}: no score rows", scores_csv.display());
    }
    let durations: HashMap<&str, f64> = matrices
        .iter()
        .map(|m| (m.recording_id(), cfg.windows.recording_len_s.unwrap_or_else(|| m.covered_s())))
        .collect();
    let raw = load_annotations(annotations_csv, |id| durations.get(id).copied())?;
    let pda = cfg.pda.policy()?;
    let by_id: HashMap<String, AnnotationSet> = raw
        .into_iter()
        .map(|a| (a.recording_id().to_string(), apply_pda(&a, &pda)))
        .collect();
    let missing: Vec<&str> = matrices
        .iter()
        .map(|m| m.recording_id())
        .filter(|id| !by_id.contains_key(*id))
        .collect();
    if !missing.is_empty() {
        bail!(Error::IdMismatch(format!("no annotations for: {}", missing.join(", "))));
    }
    let extra: Vec<&String> = by_id
        .keys()
        .filter(|id| !durations.contains_key(id.as_str()))
        .collect();
    if !extra.is_empty() {
        let mut extra: Vec<&str> = extra.into_iter().map(String::as_str).collect();
        extra.sort_unstable();
        bail!(Error::IdMismatch(format!("no scores for: {}", extra.join(", "))));
    }
    let mut by_id = by_id;
    let truth = matrices
        .iter()
        .map(|m| by_id.remove(m.recording_id()).expect("checked above"))
        .collect();
    Ok(Loaded { matrices, truth })
}

pub struct EvaluateOutput {
    pub report: EvalReport,
    pub policy: ThresholdPolicy,
}

/// PDA, decisions, metrics, curves and stratified errors. Writes
/// `report.json`, `report.txt`, `decisions.csv`, `curves.csv` and
/// `stratified.csv` into `out_dir`.
pub fn cmd_evaluate(
    scores_csv: &Path,
    annotations_csv: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
) -> anyhow::Result<EvaluateOutput> {
    let policy = cfg.threshold_policy()?;
    let Loaded { matrices, truth } = load_inputs(scores_csv, annotations_csv, cfg)?;
    if let Some(counts) = policy.counts {
        let fewest = matrices.iter().map(ScoreMatrix::n_windows).min().unwrap_or(0);
        policy
            .validate_for_windows(fewest)
            .with_context(|| format!("counts {counts:?} against score windows"))?;
    }
    let decisions = decide_all(&matrices, &policy)?;
    let report = evaluate(&decisions, &truth, &cfg.bootstrap())?;
    let strata = stratify_errors(&decisions, &truth)?;

    let maxima: Vec<[f64; 3]> = matrices.iter().map(aggregate).collect::<Result<_, _>>()?;
    let mut curves: Vec<(Class, Curve)> = Vec::new();
    for class in Class::ALL {
        let s: Vec<f64> = maxima.iter().map(|r| r[class.index()]).collect();
        let t: Vec<bool> = truth.iter().map(|a| a.labels().contains(class)).collect();
        for kind in [CurveKind::Pr, CurveKind::Roc] {
            match curve(&s, &t, kind) {
                Ok(c) => curves.push((class, c)),
                Err(e) => warn!("{class} {kind:?} curve skipped: {e}"),
            }
        }
    }

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut w = create(&out_dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    std::fs::write(out_dir.join("report.txt"), report.to_table())?;
    let mut w = create(&out_dir.join("decisions.csv"))?;
    write_decisions(&mut w, &decisions)?;
    w.flush()?;
    let mut w = create(&out_dir.join("curves.csv"))?;
    write_curves(&mut w, &curves)?;
    w.flush()?;
    let mut w = create(&out_dir.join("stratified.csv"))?;
    strata.write_csv(&mut w)?;
    w.flush()?;
    Ok(EvaluateOutput { report, policy })
}

/// Tunes per-class thresholds on max-aggregated scores against
/// PDA-filtered truth and writes `cfg` with the tuned policy to `out_path`.
/// Counts configured in `cfg` are kept.
pub fn cmd_tune(
    scores_csv: &Path,
    annotations_csv: &Path,
    cfg: &RunConfig,
    objective: Objective,
    snap: bool,
    out_path: &Path,
) -> anyhow::Result<TunedThresholds> {
    let Loaded { matrices, truth } = load_inputs(scores_csv, annotations_csv, cfg)?;
    let maxima: Vec<[f64; 3]> = matrices.iter().map(aggregate).collect::<Result<_, _>>()?;
    let labels: Vec<LabelSet> = truth.iter().map(AnnotationSet::labels).collect();
    let tuned = tune_thresholds(&maxima, &labels, objective, snap)?;

    let mut out = cfg.clone();
    let tuned_section = PolicySection::from_policy(&ThresholdPolicy::per_class(tuned.thresholds));
    out.policy = PolicySection {
        counts: cfg.policy.counts,
        count_fractions: cfg.policy.count_fractions,
        ..tuned_section
    };
    out.tune.objective = objective;
    out.tune.snap = snap;
    out.validate().context("tuned configuration")?;
    let mut w = create(out_path)?;
    writeln!(
        w,
        "# thresholds tuned for {:?}: {:.3} / {:.3} / {:.3} (anthropophony / biophony / geophony)",
        objective, tuned.scores[0], tuned.scores[1], tuned.scores[2]
    )?;
    w.write_all(out.to_toml()?.as_bytes())?;
    w.flush()?;
    Ok(tuned)
}

fn labels_by_id(path: &Path) -> anyhow::Result<HashMap<String, LabelSet>> {
    let sets = load_annotations(path, |_| None)?;
    Ok(sets
        .into_iter()
        .map(|a| (a.recording_id().to_string(), a.labels()))
        .collect())
}

pub const CASE_STUDY_HEADER: &str = "index,filter,labels,rho,n,error";

/// Pearson r between each index and species counts for every filter and
/// label source. A failed row carries the error text and counts as a failure.
pub fn cmd_case_study(
    indices_csv: &Path,
    diversity_csv: &Path,
    truth_labels: &Path,
    model_labels: Option<&Path>,
    filters: &[LabelFilter],
    mut out: impl Write,
) -> anyhow::Result<Outcome> {
    let indices = read_indices(indices_csv)?;
    let diversity = read_diversity(diversity_csv)?;
    let mut sources = vec![("truth", labels_by_id(truth_labels)?)];
    if let Some(p) = model_labels {
        sources.push(("model", labels_by_id(p)?));
    }
    writeln!(out, "{CASE_STUDY_HEADER}")?;
    let mut outcome = Outcome::default();
    for (source, labels) in &sources {
        for filter in filters {
            for index in IndexKind::ALL {
                outcome.items += 1;
                match correlate(&indices, &diversity, *filter, labels, index) {
                    Ok(r) => writeln!(out, "{},{filter},{source},{:?},{},", index.name(), r.rho, r.n)?,
                    Err(e) => {
                        outcome.failures += 1;
                        warn!("{} / {filter} / {source}: {e}", index.name());
                        let msg = e.to_string().replace(['"', '\n'], "'");
                        writeln!(out, "{},{filter},{source},,,\"{msg}\"", index.name())?;
                    }
                }
            }
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FeatureKind {
    Magnitude,
    LogMel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub kind: FeatureKind,
    pub window: usize,
    pub hop: usize,
    pub mels: usize,
    pub rate_hz: Option<u32>,
}

/// Writes a binary spectrogram dump of one WAV file.
pub fn cmd_features(wav: &Path, params: &FeatureParams, out_path: &Path) -> anyhow::Result<(usize, usize)> {
    use soundscape_core::features::dump_spectrogram;
    use soundscape_core::{log_mel, stft_magnitude};

    let mut clip = decode_wav(wav)?;
    if let Some(rate) = params.rate_hz {
        clip = resample(&clip, rate)?;
    }
    let mag = stft_magnitude(&clip, params.window, params.hop)?;
    let spec = match params.kind {
        FeatureKind::Magnitude => mag,
        FeatureKind::LogMel => log_mel(&mag, params.mels, 0.0, clip.sample_rate_hz() as f64 / 2.0)?,
    };
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    dump_spectrogram(out_path, &spec)?;
    Ok((spec.n_frames(), spec.n_bins()))
}
