use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{draw_recipe, render_mix, render_silence_recipe, draw_silence, MixConfig, MixedClip, Recipe, SourcePool};
use crate::audio_io::write_wav_i16;
use crate::error::{Error, Result};
use crate::labels::{Class, LabelSet};
use crate::util::subseed;

/// One line of `manifest.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub file: String,
    pub labels: LabelSet,
    pub silence: bool,
    pub seed: u64,
    /// First 16 hex digits of the SHA-256 of the recipe's JSON.
    pub recipe: String,
}

pub const MANIFEST_HEADER: &str = "file,anthropophony,biophony,geophony,silence,seed,recipe";

impl ManifestRow {
    pub fn to_csv_line(&self) -> String {
        let f = |c: Class| u8::from(self.labels.contains(c));
        format!(
            "{},{},{},{},{},{},{}",
            self.file,
            f(Class::Anthropophony),
            f(Class::Biophony),
            f(Class::Geophony),
            u8::from(self.silence),
            self.seed,
            self.recipe
        )
    }
}

fn recipe_digest(recipe: &Recipe) -> (String, String) {
    let json = serde_json::to_string(recipe).expect("recipes serialise");
    let hash = Sha256::digest(json.as_bytes());
    let hex: String = hash.iter().take(8).map(|b| format!("{b:02x}")).collect();
    (hex, json)
}

/// Renders `counts[combination]` clips per label combination (the empty set
/// means silence) into `out_dir`, along with `manifest.csv` and
/// `recipes.jsonl`.
///
/// Item `i` (in combination order, then sequence) is rendered from
/// `subseed(seed, i)`, so the output is identical for any thread count.
pub fn build_corpus(
    pool: &SourcePool,
    counts: &BTreeMap<LabelSet, usize>,
    seed: u64,
    out_dir: impl AsRef<Path>,
    config: &MixConfig,
) -> Result<Vec<ManifestRow>> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let jobs: Vec<(usize, LabelSet)> = counts
        .iter()
        .flat_map(|(&combo, &n)| std::iter::repeat_n(combo, n))
        .enumerate()
        .collect();

    let rendered: Vec<Result<(ManifestRow, String)>> = jobs
        .par_iter()
        .map(|&(index, combo)| {
            let item_seed = subseed(seed, index as u64);
            let mixed: MixedClip = if combo.is_empty() {
                render_silence_recipe(&draw_silence(item_seed, config))?
            } else {
                let recipe = draw_recipe(pool, combo, item_seed, config)?;
                render_mix(&recipe, pool, config)?
            };
            let file = format!("{index:06}_{}.wav", combo.code());
            write_wav_i16(out_dir.join(&file), &mixed.clip)?;
            let (digest, json) = recipe_digest(&mixed.recipe);
            Ok((
                ManifestRow {
                    file,
                    labels: mixed.labels,
                    silence: mixed.is_silence(),
                    seed: item_seed,
                    recipe: digest,
                },
                json,
            ))
        })
        .collect();

    let mut rows = Vec::with_capacity(rendered.len());
    let mut recipes = Vec::with_capacity(rendered.len());
    for r in rendered {
        let (row, json) = r?;
        rows.push(row);
        recipes.push(json);
    }

    let manifest_path = out_dir.join("manifest.csv");
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    for row in &rows {
        manifest.push_str(&row.to_csv_line());
        manifest.push('\n');
    }
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

    let recipes_path = out_dir.join("recipes.jsonl");
    let mut f = std::fs::File::create(&recipes_path).map_err(|e| Error::io(&recipes_path, e))?;
    for json in recipes {
        writeln!(f, "{json}").map_err(|e| Error::io(&recipes_path, e))?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::AudioClip;

    fn pool() -> SourcePool {
        let mut p = SourcePool::new(8_000);
        for (class, f) in [(Class::Anthropophony, 300.0), (Class::Biophony, 2500.0), (Class::Geophony, 90.0)] {
            let x = (0..16_000)
                .map(|i| 0.3 * (2.0 * std::f64::consts::PI * f * i as f64 / 8_000.0).sin())
                .collect();
            p.push_clip(class, AudioClip::new(x, 8_000, class.name()).unwrap()).unwrap();
        }
        p
    }

    fn config() -> MixConfig {
        MixConfig {
            target_len_s: 1.0,
            target_rate_hz: 8_000,
            ..MixConfig::default()
        }
    }

    #[test]
    fn manifest_flags_follow_requested_counts() {
        let dir = tempfile::tempdir().unwrap();
        let a: LabelSet = "A".parse().unwrap();
        let bg: LabelSet = "BG".parse().unwrap();
        let counts = BTreeMap::from([(a, 2), (bg, 3), (LabelSet::EMPTY, 1)]);
        let rows = build_corpus(&pool(), &counts, 5, dir.path(), &config()).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows.iter().filter(|r| r.labels == a).count(), 2);
        assert_eq!(rows.iter().filter(|r| r.labels == bg).count(), 3);
        assert_eq!(rows.iter().filter(|r| r.silence && r.labels.is_empty()).count(), 1);
        let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        let lines: Vec<&str> = manifest.lines().collect();
        assert_eq!(lines[0], MANIFEST_HEADER);
        assert_eq!(lines.len(), 7);
        assert!(lines.iter().any(|l| l.contains("_BG.wav,0,1,1,0,")));
        for row in &rows {
            assert!(dir.path().join(&row.file).exists());
        }
        let jsonl = std::fs::read_to_string(dir.path().join("recipes.jsonl")).unwrap();
        assert_eq!(jsonl.lines().count(), 6);
    }

    #[test]
    fn zero_counts_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let counts = BTreeMap::from([(LabelSet::ALL, 0)]);
        let rows = build_corpus(&pool(), &counts, 1, dir.path(), &config()).unwrap();
        assert!(rows.is_empty());
        let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest, format!("{MANIFEST_HEADER}\n"));
    }

    #[test]
    fn regeneration_is_byte_identical_across_thread_counts() {
        let counts = BTreeMap::from([(LabelSet::ALL, 3), ("AB".parse().unwrap(), 2), (LabelSet::EMPTY, 1)]);
        let build = |threads: usize| {
            let dir = tempfile::tempdir().unwrap();
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| build_corpus(&pool(), &counts, 77, dir.path(), &config()).unwrap());
            let mut files: Vec<_> = std::fs::read_dir(dir.path())
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            files.sort();
            files
                .iter()
                .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()))
                .collect::<Vec<_>>()
        };
        assert_eq!(build(1), build(4));
    }
}
