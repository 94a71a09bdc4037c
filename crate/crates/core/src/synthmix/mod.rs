//! Labelled synthetic soundscape mixtures and silence clips.
//!
//! A mixture draws a handful of source files for each active class, gives
//! each a random gain, and adds them one at a time at a random SNR relative
//! to the running mix, renormalising after every addition. Half of the
//! mixtures also receive a background noise layer. Silence clips are pure
//! low-level noise. Every draw comes from a ChaCha8 stream seeded with a
//! 64-bit value, so a corpus is reproducible on any platform.

mod corpus;
pub mod noise;
mod pool;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};
use crate::labels::{Class, LabelSet};
use crate::util::{db_to_amp, peak, rms};

pub use corpus::{build_corpus, ManifestRow};
pub use noise::NoiseKind;
pub use pool::{SourceEntry, SourcePool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Scale the running mix so its peak equals `peak_target`.
    Peak,
    /// Scale to `rms_target`, then pull the peak back under `peak_target` if needed.
    Rms,
}

/// Every distribution parameter of the mixer.
///
/// File-count masses are indexed by `count - 1`: `single_class_counts[1]` is
/// the probability of drawing two files for a one-class mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixConfig {
    pub target_len_s: f64,
    pub target_rate_hz: u32,
    pub gain_db: (f64, f64),
    pub snr_db: (f64, f64),
    pub noise_probability: f64,
    pub noise_snr_db: (f64, f64),
    pub single_class_counts: Vec<f64>,
    pub two_class_counts: Vec<f64>,
    pub three_class_counts: Vec<f64>,
    pub normalization: Normalization,
    pub peak_target: f64,
    pub rms_target: f64,
    pub crossfade_s: f64,
    pub silence_initial_gain_db: (f64, f64),
    pub silence_attenuation_db: (f64, f64),
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            target_len_s: 5.0,
            target_rate_hz: 32_000,
            gain_db: (-30.0, 0.0),
            snr_db: (-5.0, 5.0),
            noise_probability: 0.5,
            noise_snr_db: (-5.0, 15.0),
            single_class_counts: vec![0.1, 0.4, 0.4, 0.1],
            two_class_counts: vec![0.6, 0.3, 0.1],
            three_class_counts: vec![0.7, 0.3],
            normalization: Normalization::Peak,
            peak_target: 0.99,
            rms_target: 0.1,
            crossfade_s: 0.01,
            silence_initial_gain_db: (-5.0, 1.0),
            silence_attenuation_db: (-40.0, -5.0),
        }
    }
}

impl MixConfig {
    pub fn target_len(&self) -> usize {
        (self.target_len_s * self.target_rate_hz as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("mix: {m}")));
        if self.target_rate_hz == 0 || self.target_len() == 0 {
            return bad("target length and rate must be positive".into());
        }
        for (name, (lo, hi)) in [
            ("gain_db", self.gain_db),
            ("snr_db", self.snr_db),
            ("noise_snr_db", self.noise_snr_db),
            ("silence_initial_gain_db", self.silence_initial_gain_db),
            ("silence_attenuation_db", self.silence_attenuation_db),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} range [{lo}, {hi}] is invalid"));
            }
        }
        if self.silence_initial_gain_db.1 + self.silence_attenuation_db.1 > 0.0 {
            return bad("silence gains could exceed full scale".into());
        }
        if !(0.0..=1.0).contains(&self.noise_probability) {
            return bad("noise_probability must be in [0, 1]".into());
        }
        for (name, masses) in [
            ("single_class_counts", &self.single_class_counts),
            ("two_class_counts", &self.two_class_counts),
            ("three_class_counts", &self.three_class_counts),
        ] {
            let sum: f64 = masses.iter().sum();
            if masses.is_empty() || masses.iter().any(|m| !(*m >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return bad(format!("{name} must be non-negative masses summing to 1"));
            }
        }
        if self.single_class_counts.len() > 4
            || self.two_class_counts.len() > 3
            || self.three_class_counts.len() > 2
        {
            return bad("file counts exceed 4 / 3 / 2 for one / two / three classes".into());
        }
        if !(self.peak_target > 0.0 && self.peak_target <= 1.0) || !(self.rms_target > 0.0) {
            return bad("normalisation targets must be positive with peak_target <= 1".into());
        }
        if !(self.crossfade_s >= 0.0) {
            return bad("crossfade_s must be non-negative".into());
        }
        Ok(())
    }

    fn counts_for(&self, n_active: usize) -> &[f64] {
        match n_active {
            1 => &self.single_class_counts,
            2 => &self.two_class_counts,
            _ => &self.three_class_counts,
        }
    }
}

/// One source file within a mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub class: Class,
    pub source_index: usize,
    /// Crop start in target-rate samples; 0 for sources that are looped.
    pub offset: usize,
    pub gain_db: f64,
    /// Ratio of running-mix RMS to this layer's RMS; `None` for the first layer.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub snr_db: f64,
    pub seed: u64,
}

/// Full provenance of one mixture; rendering is a pure function of the recipe and pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixRecipe {
    pub active: LabelSet,
    /// Layers in the order they are added.
    pub layers: Vec<LayerSpec>,
    pub noise: Option<NoiseSpec>,
    pub target_len_s: f64,
    pub target_rate_hz: u32,
    pub seed: u64,
}

impl MixRecipe {
    pub fn file_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for layer in &self.layers {
            counts[layer.class.index()] += 1;
        }
        counts
    }

    pub fn gains_db(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.gain_db).collect()
    }

    pub fn layer_snrs_db(&self) -> Vec<f64> {
        self.layers.iter().filter_map(|l| l.snr_db).collect()
    }

    /// Checks the file-count rule and parameter ranges against `config`.
    pub fn validate(&self, config: &MixConfig) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(format!("recipe: {m}")));
        if self.active.is_empty() {
            return bad("no active class".into());
        }
        let counts = self.file_counts();
        for class in Class::ALL {
            let n = counts[class.index()];
            if self.active.contains(class) != (n > 0) {
                return bad(format!("{class} layers do not match the active set"));
            }
        }
        let total: usize = counts.iter().sum();
        let ok = match self.active.len() {
            1 => (1..=4).contains(&total),
            2 => counts.iter().all(|&c| c <= 3),
            _ => counts.iter().all(|&c| c <= 2),
        };
        if !ok {
            return bad(format!("file counts {counts:?} violate the per-class limits"));
        }
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        for (i, layer) in self.layers.iter().enumerate() {
            if !within(layer.gain_db, config.gain_db) {
                return bad(format!("gain {} dB out of range", layer.gain_db));
            }
            match (i, layer.snr_db) {
                (0, None) => {}
                (0, Some(_)) => return bad("first layer carries an SNR".into()),
                (_, Some(s)) if within(s, config.snr_db) => {}
                (_, s) => return bad(format!("layer {i} SNR {s:?} invalid")),
            }
        }
        if let Some(n) = &self.noise {
            if !within(n.snr_db, config.noise_snr_db) {
                return bad(format!("noise SNR {} dB out of range", n.snr_db));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilenceRecipe {
    pub kind: NoiseKind,
    pub initial_gain_db: f64,
    pub attenuation_db: f64,
    pub noise_seed: u64,
    pub target_len_s: f64,
    pub target_rate_hz: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Recipe {
    Mix(MixRecipe),
    Silence(SilenceRecipe),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedClip {
    pub clip: AudioClip,
    /// Active classes; empty for silence clips.
    pub labels: LabelSet,
    pub recipe: Recipe,
}

impl MixedClip {
    pub fn is_silence(&self) -> bool {
        matches!(self.recipe, Recipe::Silence(_))
    }
}

/// Scalars applied at one addition step: the incoming layer is multiplied by
/// `layer_scale`, then the whole running mix by `norm_gain`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixStep {
    pub layer_scale: f64,
    pub norm_gain: f64,
}

/// Record of every scalar applied while rendering, in addition order
/// (source layers first, then the noise layer if any).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MixTrace {
    pub steps: Vec<MixStep>,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn categorical(rng: &mut ChaCha8Rng, masses: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, m) in masses.iter().enumerate() {
        acc += m;
        if u < acc {
            return i;
        }
    }
    masses.iter().rposition(|m| *m > 0.0).unwrap_or(0)
}

/// Draws a recipe for `active` from `pool`; identical inputs give identical recipes.
pub fn draw_recipe(pool: &SourcePool, active: LabelSet, seed: u64, config: &MixConfig) -> Result<MixRecipe> {
    if active.is_empty() {
        return Err(Error::invalid("a mixture needs at least one active class"));
    }
    for class in active.iter() {
        if pool.sources(class).is_empty() {
            return Err(Error::EmptyInput(format!("source pool has no {class} files")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = config.target_len();
    let masses = config.counts_for(active.len());

    let mut layers = Vec::new();
    for class in active.iter() {
        let count = categorical(&mut rng, masses) + 1;
        for _ in 0..count {
            let sources = pool.sources(class);
            let source_index = rng.random_range(0..sources.len());
            let src_len = sources[source_index].len_at(config.target_rate_hz);
            let offset = if src_len > target {
                rng.random_range(0..=src_len - target)
            } else {
                0
            };
            let gain_db = uniform(&mut rng, config.gain_db);
            layers.push(LayerSpec {
                class,
                source_index,
                offset,
                gain_db,
                snr_db: None,
            });
        }
    }
    layers.shuffle(&mut rng);
    for layer in layers.iter_mut().skip(1) {
        layer.snr_db = Some(uniform(&mut rng, config.snr_db));
    }

    let noise = if rng.random::<f64>() < config.noise_probability {
        let kind = NoiseKind::ALL[rng.random_range(0..3)];
        let snr_db = uniform(&mut rng, config.noise_snr_db);
        Some(NoiseSpec {
            kind,
            snr_db,
            seed: rng.random(),
        })
    } else {
        None
    };

    Ok(MixRecipe {
        active,
        layers,
        noise,
        target_len_s: config.target_len_s,
        target_rate_hz: config.target_rate_hz,
        seed,
    })
}

/// Loops `src` with a linear crossfade at each seam until `len` samples exist.
fn loop_to_length(src: &[f64], len: usize, crossfade: usize) -> Vec<f64> {
    let fade = crossfade.min(src.len() / 2);
    let mut out = Vec::with_capacity(len + src.len());
    out.extend_from_slice(src);
    while out.len() < len {
        let seam = out.len() - fade;
        for i in 0..fade {
            let r = (i + 1) as f64 / (fade + 1) as f64;
            out[seam + i] = out[seam + i] * (1.0 - r) + src[i] * r;
        }
        out.extend_from_slice(&src[fade..]);
    }
    out.truncate(len);
    out
}

/// One source layer at target rate and length with its per-file gain applied.
pub fn prepare_layer(layer: &LayerSpec, pool: &SourcePool, config: &MixConfig) -> Result<Vec<f64>> {
    if pool.target_rate_hz() != config.target_rate_hz {
        return Err(Error::invalid("pool and mix config disagree on the target rate"));
    }
    let src = pool.load(layer.class, layer.source_index)?;
    let target = config.target_len();
    let mut x = if src.len() >= target {
        let start = layer.offset.min(src.len() - target);
        src[start..start + target].to_vec()
    } else {
        let fade = (config.crossfade_s * config.target_rate_hz as f64).round() as usize;
        loop_to_length(&src, target, fade)
    };
    let g = db_to_amp(layer.gain_db);
    x.iter_mut().for_each(|v| *v *= g);
    Ok(x)
}

fn normalize(mix: &mut [f64], config: &MixConfig) -> f64 {
    let p = peak(mix);
    if p == 0.0 {
        return 1.0;
    }
    let g = match config.normalization {
        Normalization::Peak => config.peak_target / p,
        Normalization::Rms => {
            let g = config.rms_target / rms(mix);
            if p * g > config.peak_target {
                config.peak_target / p
            } else {
                g
            }
        }
    };
    mix.iter_mut().for_each(|v| *v *= g);
    g
}

/// Adds `layer` to `mix` at `snr_db` and renormalises; returns the applied scalars.
fn add_layer(mix: &mut Option<Vec<f64>>, layer: &[f64], snr_db: Option<f64>, config: &MixConfig) -> MixStep {
    let layer_scale = match (mix.as_ref(), snr_db) {
        (Some(m), Some(snr)) => {
            let (rm, rl) = (rms(m), rms(layer));
            if rl == 0.0 {
                0.0
            } else if rm == 0.0 {
                1.0
            } else {
                rm / (rl * db_to_amp(snr))
            }
        }
        _ => 1.0,
    };
    let m = mix.get_or_insert_with(|| vec![0.0; layer.len()]);
    for (a, b) in m.iter_mut().zip(layer) {
        *a += layer_scale * b;
    }
    let norm_gain = normalize(m, config);
    MixStep {
        layer_scale,
        norm_gain,
    }
}

pub fn render_mix(recipe: &MixRecipe, pool: &SourcePool, config: &MixConfig) -> Result<MixedClip> {
    render_mix_traced(recipe, pool, config).map(|(clip, _)| clip)
}

/// Renders a mixture and reports the scalars applied at each step.
pub fn render_mix_traced(
    recipe: &MixRecipe,
    pool: &SourcePool,
    config: &MixConfig,
) -> Result<(MixedClip, MixTrace)> {
    recipe.validate(config)?;
    let mut mix: Option<Vec<f64>> = None;
    let mut trace = MixTrace::default();
    for layer in &recipe.layers {
        let x = prepare_layer(layer, pool, config)?;
        trace.steps.push(add_layer(&mut mix, &x, layer.snr_db, config));
    }
    if let Some(n) = &recipe.noise {
        let x = noise::generate(n.kind, config.target_len(), n.seed);
        trace.steps.push(add_layer(&mut mix, &x, Some(n.snr_db), config));
    }
    let samples = mix.unwrap_or_else(|| vec![0.0; config.target_len()]);
    let clip = AudioClip::new(samples, config.target_rate_hz, format!("mix-{:016x}", recipe.seed))?;
    Ok((
        MixedClip {
            clip,
            labels: recipe.active,
            recipe: Recipe::Mix(recipe.clone()),
        },
        trace,
    ))
}

pub fn draw_silence(seed: u64, config: &MixConfig) -> SilenceRecipe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = NoiseKind::ALL[rng.random_range(0..3)];
    let initial_gain_db = uniform(&mut rng, config.silence_initial_gain_db);
    let attenuation_db = uniform(&mut rng, config.silence_attenuation_db);
    SilenceRecipe {
        kind,
        initial_gain_db,
        attenuation_db,
        noise_seed: rng.random(),
        target_len_s: config.target_len_s,
        target_rate_hz: config.target_rate_hz,
        seed,
    }
}

/// Full-scale noise of the drawn colour, shaped by the initial gain and then
/// the attenuation stage.
pub fn render_silence_recipe(recipe: &SilenceRecipe) -> Result<MixedClip> {
    let len = (recipe.target_len_s * recipe.target_rate_hz as f64).round() as usize;
    let g = db_to_amp(recipe.initial_gain_db) * db_to_amp(recipe.attenuation_db);
    let mut x = noise::generate(recipe.kind, len, recipe.noise_seed);
    x.iter_mut().for_each(|v| *v *= g);
    let clip = AudioClip::new(x, recipe.target_rate_hz, format!("silence-{:016x}", recipe.seed))?;
    Ok(MixedClip {
        clip,
        labels: LabelSet::EMPTY,
        recipe: Recipe::Silence(recipe.clone()),
    })
}

pub fn render_silence(seed: u64, config: &MixConfig) -> Result<MixedClip> {
    render_silence_recipe(&draw_silence(seed, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::amp_to_db;

    fn tone_clip(freq: f64, rate: u32, secs: f64, id: &str) -> AudioClip {
        let n = (rate as f64 * secs) as usize;
        let x = (0..n)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioClip::new(x, rate, id).unwrap()
    }

    fn pool() -> SourcePool {
        let mut p = SourcePool::new(32_000);
        p.push_clip(Class::Anthropophony, tone_clip(300.0, 32_000, 7.0, "a0")).unwrap();
        p.push_clip(Class::Anthropophony, tone_clip(350.0, 32_000, 2.0, "a1")).unwrap();
        p.push_clip(Class::Biophony, tone_clip(3000.0, 32_000, 6.0, "b0")).unwrap();
        p.push_clip(Class::Geophony, tone_clip(120.0, 16_000, 5.5, "g0")).unwrap();
        p
    }

    #[test]
    fn default_config_is_valid() {
        MixConfig::default().validate().unwrap();
        let c = MixConfig {
            two_class_counts: vec![0.5, 0.6],
            ..MixConfig::default()
        };
        assert!(c.validate().is_err());
        let c = MixConfig {
            three_class_counts: vec![0.5, 0.3, 0.2],
            ..MixConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn recipes_are_deterministic_and_respect_limits() {
        let pool = pool();
        let cfg = MixConfig::default();
        let abg = LabelSet::ALL;
        assert_eq!(
            draw_recipe(&pool, abg, 9, &cfg).unwrap(),
            draw_recipe(&pool, abg, 9, &cfg).unwrap()
        );
        for seed in 0..300 {
            let r = draw_recipe(&pool, abg, seed, &cfg).unwrap();
            assert!(r.file_counts().iter().all(|&c| (1..=2).contains(&c)));
            r.validate(&cfg).unwrap();
            let a = draw_recipe(&pool, "A".parse().unwrap(), seed, &cfg).unwrap();
            let total: usize = a.file_counts().iter().sum();
            assert!((1..=4).contains(&total));
            let bg = draw_recipe(&pool, "BG".parse().unwrap(), seed, &cfg).unwrap();
            assert!(bg.file_counts().iter().all(|&c| c <= 3));
            assert_eq!(bg.file_counts()[0], 0);
            for g in a.gains_db() {
                assert!((-30.0..=0.0).contains(&g));
            }
            for s in a.layer_snrs_db() {
                assert!((-5.0..=5.0).contains(&s));
            }
        }
    }

    #[test]
    fn count_distribution_modes() {
        let pool = pool();
        let cfg = MixConfig::default();
        let mut hist = [0usize; 5];
        for seed in 0..4000 {
            let r = draw_recipe(&pool, "B".parse().unwrap(), seed, &cfg).unwrap();
            hist[r.layers.len()] += 1;
        }
        // two and three files dominate for single-class mixtures
        assert!(hist[2] > hist[1] * 2 && hist[3] > hist[4] * 2, "{hist:?}");
        let with_noise = (0..4000)
            .filter(|&s| draw_recipe(&pool, "B".parse().unwrap(), s, &cfg).unwrap().noise.is_some())
            .count();
        assert!((1800..2200).contains(&with_noise), "{with_noise}");
    }

    #[test]
    fn empty_class_is_an_error() {
        let mut p = SourcePool::new(32_000);
        p.push_clip(Class::Biophony, tone_clip(1000.0, 32_000, 1.0, "b")).unwrap();
        let cfg = MixConfig::default();
        assert!(matches!(
            draw_recipe(&p, "AB".parse().unwrap(), 1, &cfg),
            Err(Error::EmptyInput(_))
        ));
        assert!(draw_recipe(&p, LabelSet::EMPTY, 1, &cfg).is_err());
    }

    #[test]
    fn single_layer_is_normalised_source() {
        let pool = pool();
        let cfg = MixConfig::default();
        let recipe = MixRecipe {
            active: "B".parse().unwrap(),
            layers: vec![LayerSpec {
                class: Class::Biophony,
                source_index: 0,
                offset: 0,
                gain_db: 0.0,
                snr_db: None,
            }],
            noise: None,
            target_len_s: 5.0,
            target_rate_hz: 32_000,
            seed: 0,
        };
        let out = render_mix(&recipe, &pool, &cfg).unwrap();
        let src = pool.load(Class::Biophony, 0).unwrap();
        let p = peak(&src[..160_000]);
        for (o, s) in out.clip.samples().iter().zip(src.iter()) {
            assert!((o - s * 0.99 / p).abs() < 1e-12);
        }
        assert_eq!(out.labels, recipe.active);
    }

    #[test]
    fn looping_and_resampled_sources_reach_target_length() {
        let pool = pool();
        let cfg = MixConfig::default();
        let layer = LayerSpec {
            class: Class::Anthropophony,
            source_index: 1,
            offset: 0,
            gain_db: -6.0,
            snr_db: None,
        };
        let x = prepare_layer(&layer, &pool, &cfg).unwrap();
        assert_eq!(x.len(), 160_000);
        // before the first seam the source is untouched apart from gain
        let src = pool.load(Class::Anthropophony, 1).unwrap();
        let g = db_to_amp(-6.0);
        assert!((x[1000] - src[1000] * g).abs() < 1e-12);
        let geo = LayerSpec {
            class: Class::Geophony,
            source_index: 0,
            ..layer
        };
        assert_eq!(prepare_layer(&geo, &pool, &cfg).unwrap().len(), 160_000);
    }

    #[test]
    fn crossfade_keeps_constant_signal_constant() {
        let out = loop_to_length(&[1.0; 100], 350, 10);
        assert_eq!(out.len(), 350);
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn silence_properties() {
        let cfg = MixConfig::default();
        let a = render_silence(5, &cfg).unwrap();
        assert_eq!(a, render_silence(5, &cfg).unwrap());
        assert_eq!(a.clip.len(), 160_000);
        assert!(a.is_silence() && a.labels.is_empty());
        assert!(peak(a.clip.samples()) <= 1.0);

        let base = draw_silence(77, &cfg);
        let loud = SilenceRecipe {
            attenuation_db: -5.0,
            ..base.clone()
        };
        let quiet = SilenceRecipe {
            attenuation_db: -40.0,
            ..base
        };
        let rl = rms(render_silence_recipe(&loud).unwrap().clip.samples());
        let rq = rms(render_silence_recipe(&quiet).unwrap().clip.samples());
        assert!((amp_to_db(rl / rq) - 35.0).abs() < 0.01);
    }
}
