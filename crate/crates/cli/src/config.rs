//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//!
//! [windows]
//! window_len_s = 10.0
//! step_s = 1.0
//! recording_len_s = 60.0
//!
//! [policy]
//! mode = "per-class"
//! thresholds = { anthropophony = 0.722, biophony = 0.920, geophony = 0.571 }
//! counts = { anthropophony = 2, biophony = 5, geophony = 10 }
//!
//! [pda]
//! mode = "summed"
//! anthropophony = 0.25
//! geophony = 0.05
//! ```

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use soundscape_core::decision::{count_for_fraction, PdaMode, PdaPolicy, ThresholdMode, ThresholdPolicy};
use soundscape_core::eval::{BootstrapConfig, Objective};
use soundscape_core::{enumerate_windows, IndexParams, MixConfig, WindowSpec};

/// One optional value per target class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerClass<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anthropophony: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub biophony: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geophony: Option<T>,
}

impl<T: Copy> PerClass<T> {
    pub fn from_array(v: [T; 3]) -> Self {
        Self {
            anthropophony: Some(v[0]),
            biophony: Some(v[1]),
            geophony: Some(v[2]),
        }
    }

    pub fn to_array(&self) -> [Option<T>; 3] {
        [self.anthropophony, self.biophony, self.geophony]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub window_len_s: f64,
    pub step_s: f64,
    pub pad_last: bool,
    /// Recording length T; when absent it is taken from the score windows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recording_len_s: Option<f64>,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self {
            window_len_s: 10.0,
            step_s: 10.0,
            pad_last: false,
            recording_len_s: None,
        }
    }
}

impl WindowSection {
    pub fn spec(&self) -> WindowSpec {
        WindowSpec {
            window_len_s: self.window_len_s,
            step_s: self.step_s,
            pad_last: self.pad_last,
        }
    }

    /// Windows per recording, when the recording length is configured.
    pub fn window_count(&self) -> anyhow::Result<Option<usize>> {
        match self.recording_len_s {
            Some(t) => Ok(Some(enumerate_windows(t, &self.spec())?.len())),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub mode: ThresholdMode,
    /// Global-mode threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<PerClass<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<PerClass<usize>>,
    /// Counts as fractions p of the window count, `c = floor(p * w)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count_fractions: Option<PerClass<f64>>,
}

impl PolicySection {
    pub fn from_policy(p: &ThresholdPolicy) -> Self {
        let (threshold, thresholds) = match p.mode {
            ThresholdMode::Global => (Some(p.thresholds[0]), None),
            ThresholdMode::PerClass => (None, Some(PerClass::from_array(p.thresholds))),
        };
        Self {
            mode: p.mode,
            threshold,
            thresholds,
            counts: p.counts.map(PerClass::from_array),
            count_fractions: None,
        }
    }

    /// Resolves the section into a policy. `windows` is the per-recording
    /// window count, needed for `count_fractions` and count validation.
    pub fn policy(&self, windows: Option<usize>) -> anyhow::Result<ThresholdPolicy> {
        let mut policy = match self.mode {
            ThresholdMode::Global => {
                if self.thresholds.is_some() {
                    bail!("[policy] global mode takes `threshold`, not `thresholds`");
                }
                ThresholdPolicy::global(self.threshold.unwrap_or(0.5))
            }
            ThresholdMode::PerClass => {
                if self.threshold.is_some() {
                    bail!("[policy] per-class mode takes `thresholds`, not `threshold`");
                }
                let t = self.thresholds.context("[policy] per-class mode needs `thresholds`")?;
                let arr = t.to_array();
                if arr.iter().any(Option::is_none) {
                    bail!("[policy.thresholds] needs anthropophony, biophony and geophony");
                }
                ThresholdPolicy::per_class(arr.map(Option::unwrap))
            }
        };
        match (self.counts, self.count_fractions) {
            (Some(_), Some(_)) => bail!("[policy] give either `counts` or `count_fractions`"),
            (Some(c), None) => policy.counts = Some(c.to_array().map(|c| c.unwrap_or(1))),
            (None, Some(f)) => {
                let w = windows.context(
                    "[policy] `count_fractions` needs [windows] recording_len_s to know the window count",
                )?;
                for p in f.to_array().into_iter().flatten() {
                    if !(p > 0.0 && p <= 1.0) {
                        bail!("[policy.count_fractions] value {p} outside (0, 1]");
                    }
                }
                policy.counts = Some(f.to_array().map(|p| p.map_or(1, |p| count_for_fraction(p, w))));
            }
            (None, None) => {}
        }
        match windows {
            Some(w) => policy.validate_for_windows(w)?,
            None => policy.validate()?,
        }
        Ok(policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdaSection {
    pub mode: PdaMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anthropophony: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub biophony: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geophony: Option<f64>,
}

impl PdaSection {
    pub fn policy(&self) -> anyhow::Result<PdaPolicy> {
        Ok(PdaPolicy::new([self.anthropophony, self.biophony, self.geophony], self.mode)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub objective: Objective,
    /// Move tuned thresholds onto the 0.001 grid when that keeps the operating point.
    pub snap: bool,
}

impl Default for TuneSection {
    fn default() -> Self {
        Self {
            objective: Objective::F1,
            snap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub resamples: usize,
    pub confidence: f64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        Self {
            resamples: d.resamples,
            confidence: d.confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub windows: WindowSection,
    pub policy: PolicySection,
    pub pda: PdaSection,
    pub tune: TuneSection,
    pub bootstrap: BootstrapSection,
    pub indices: IndexParams,
    pub mix: MixConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every embedded policy.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.windows.spec().validate()?;
        let w = self.windows.window_count()?;
        self.policy.policy(w)?;
        self.pda.policy()?;
        self.mix.validate()?;
        BootstrapConfig {
            resamples: self.bootstrap.resamples,
            confidence: self.bootstrap.confidence,
            seed: self.seed,
        }
        .validate()?;
        Ok(())
    }

    pub fn threshold_policy(&self) -> anyhow::Result<ThresholdPolicy> {
        self.policy.policy(self.windows.window_count()?)
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            resamples: self.bootstrap.resamples,
            confidence: self.bootstrap.confidence,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.threshold_policy().unwrap(), ThresholdPolicy::global(0.5));
        assert_eq!(cfg.pda.policy().unwrap(), PdaPolicy::default());
    }

    #[test]
    fn full_config_parses() {
        let cfg = RunConfig::parse(
            r#"
seed = 7
[windows]
window_len_s = 10.0
step_s = 1.0
recording_len_s = 60.0
[policy]
mode = "per-class"
thresholds = { anthropophony = 0.722, biophony = 0.920, geophony = 0.571 }
count_fractions = { anthropophony = 0.05, biophony = 0.10, geophony = 0.20 }
[pda]
mode = "longest"
anthropophony = 0.25
geophony = 0.05
[bootstrap]
resamples = 200
"#,
        )
        .unwrap();
        let p = cfg.threshold_policy().unwrap();
        assert_eq!(p, ThresholdPolicy::per_class([0.722, 0.920, 0.571]).with_counts([2, 5, 10]));
        let pda = cfg.pda.policy().unwrap();
        assert_eq!(pda.fractions, [Some(0.25), None, Some(0.05)]);
        assert_eq!(pda.mode, PdaMode::Longest);
        assert_eq!(cfg.bootstrap().seed, 7);
    }

    #[test]
    fn invalid_configs_rejected() {
        let too_many = "[windows]\nrecording_len_s = 60.0\n[policy]\nthreshold = 0.5\ncounts = { geophony = 7 }\n";
        assert!(RunConfig::parse(too_many).is_err());
        assert!(RunConfig::parse("[windows]\nrecording_len_s = 60.0\n[policy]\ncounts = { geophony = 6 }\n").is_ok());
        assert!(RunConfig::parse("[policy]\nthreshold = 1.5\n").is_err());
        assert!(RunConfig::parse("[policy]\nmode = \"per-class\"\n").is_err());
        assert!(RunConfig::parse("[policy]\nmode = \"per-class\"\nthresholds = { biophony = 0.5 }\n").is_err());
        assert!(RunConfig::parse("[pda]\ngeophony = 1.5\n").is_err());
        assert!(RunConfig::parse("[windows]\nstep_s = 20.0\n").is_err());
        assert!(RunConfig::parse("bogus = 1\n").is_err());
    }

    #[test]
    fn emitted_config_round_trips() {
        let mut cfg = RunConfig {
            policy: PolicySection::from_policy(&ThresholdPolicy::per_class([0.722, 0.92, 0.571]).with_counts([2, 5, 10])),
            ..RunConfig::default()
        };
        cfg.pda.geophony = Some(0.05);
        cfg.windows.recording_len_s = Some(60.0);
        cfg.windows.step_s = 1.0;
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.threshold_policy().unwrap(), cfg.threshold_policy().unwrap());
    }

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("../../../FORMATS.md");
        let start = doc.find("```toml\n").unwrap() + 8;
        let end = start + doc[start..].find("```").unwrap();
        let cfg = RunConfig::parse(&doc[start..end]).unwrap();
        assert_eq!(cfg.threshold_policy().unwrap().counts, Some([2, 5, 10]));
        assert_eq!(cfg.indices, IndexParams::default());
        assert_eq!(cfg.mix, MixConfig::default());
    }
}
