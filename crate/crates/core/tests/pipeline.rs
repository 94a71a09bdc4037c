//! Corpus -> audio -> indices, and scores -> decisions -> metrics, through the public API.

use std::collections::BTreeMap;

use soundscape_core::decision::decide_all;
use soundscape_core::eval::BootstrapConfig;
use soundscape_core::{
    build_corpus, compute_indices, decode_wav, dump_scores, evaluate, load_scores, log_mel, stft_magnitude,
    AnnotationSet, AudioClip, Class, IndexParams, LabelSet, MixConfig, ScoreMatrix, SourcePool, ThresholdPolicy,
};

fn tone(freq: f64, rate: u32, secs: f64) -> AudioClip {
    let n = (rate as f64 * secs) as usize;
    let x = (0..n)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
        .collect();
    AudioClip::new(x, rate, format!("{freq}hz")).unwrap()
}

fn quiet_config() -> MixConfig {
    MixConfig {
        noise_probability: 0.0,
        ..MixConfig::default()
    }
}

fn corpus(dir: &std::path::Path) -> Vec<(String, LabelSet)> {
    let mut pool = SourcePool::new(32_000);
    pool.push_clip(Class::Anthropophony, tone(1_500.0, 16_000, 3.0)).unwrap();
    pool.push_clip(Class::Biophony, tone(5_000.0, 44_100, 2.0)).unwrap();
    pool.push_clip(Class::Geophony, tone(300.0, 32_000, 7.0)).unwrap();
    let counts: BTreeMap<LabelSet, usize> = [("A", 2), ("B", 2), ("G", 1), ("S", 1)]
        .iter()
        .map(|(c, n)| (c.parse().unwrap(), *n))
        .collect();
    build_corpus(&pool, &counts, 11, dir, &quiet_config())
        .unwrap()
        .into_iter()
        .map(|row| (row.file, row.labels))
        .collect()
}

#[test]
fn rendered_clips_decode_to_target_shape() {
    let dir = tempfile::tempdir().unwrap();
    for (file, _) in corpus(dir.path()) {
        let clip = decode_wav(dir.path().join(&file)).unwrap();
        assert_eq!(clip.sample_rate_hz(), 32_000);
        assert_eq!(clip.len(), 160_000, "{file}");
        let mag = stft_magnitude(&clip, 1024, 320).unwrap();
        assert_eq!((mag.n_frames(), mag.n_bins()), (501, 513));
        let mel = log_mel(&mag, 64, 0.0, 16_000.0).unwrap();
        assert_eq!(mel.n_bins(), 64);
    }
}

#[test]
fn ndsi_sign_follows_source_band() {
    let dir = tempfile::tempdir().unwrap();
    for (file, labels) in corpus(dir.path()) {
        let clip = decode_wav(dir.path().join(&file)).unwrap();
        let r = compute_indices(&clip, &IndexParams::default()).unwrap();
        assert!(r.aci.is_finite() && r.adi >= 0.0);
        let ndsi = r.ndsi.unwrap_or(0.0);
        if labels == "A".parse().unwrap() {
            assert!(ndsi < -0.9, "{file}: {ndsi}");
        } else if labels == "B".parse().unwrap() {
            assert!(ndsi > 0.9, "{file}: {ndsi}");
        }
    }
}

#[test]
fn perfect_scores_survive_dump_and_evaluate_to_unit_f1() {
    let dir = tempfile::tempdir().unwrap();
    let rows = corpus(dir.path());
    let matrices: Vec<ScoreMatrix> = rows
        .iter()
        .map(|(file, labels)| {
            let row = labels.flags().map(|on| if on { 0.93 } else { 0.02 });
            ScoreMatrix::new(file.clone(), vec![0.0], 5.0, vec![row], None).unwrap()
        })
        .collect();
    let path = dir.path().join("scores.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    dump_scores(&mut f, &matrices).unwrap();
    drop(f);
    let loaded = load_scores(&path, 5.0).unwrap();
    assert_eq!(loaded, matrices);

    let decisions = decide_all(&loaded, &ThresholdPolicy::global(0.5)).unwrap();
    let truth: Vec<AnnotationSet> = rows
        .iter()
        .map(|(file, labels)| AnnotationSet::from_weak(file.clone(), 5.0, *labels))
        .collect();
    let report = evaluate(&decisions, &truth, &BootstrapConfig::default()).unwrap();
    assert_eq!(report.macro_f1, 1.0);
    assert_eq!(report.predicted_silence_rate, report.true_silence_rate);
    assert!((report.true_silence_rate - 1.0 / 6.0).abs() < 1e-12);
}
