//! File-backed run configuration: sectioned TOML with documented defaults.
//! Unknown keys are rejected; `eta_loop` and `loss_db` are mutually
//! exclusive ways of stating the per-pass loop loss.
//!
//! Every field is optional and defaults to the reference operating point:
//! 5 MHz pump, depth 4, 1.0 dB switch loss, thermal source at 0.05 mean
//! pairs, keep-last overwrite, unit herald windows, zero dark clicks.

use std::path::Path;

use serde::Deserialize;

use crate::analytics::db_to_efficiency;
use crate::controller::OverwritePolicy;
use crate::error::{Error, Result};
use crate::photon_stats::{DetectorSpec, PairDistribution, PairSourceSpec};
use crate::sim::{MuxSpec, SimConfig, SimMode};

pub const DEFAULT_MEAN_PAIRS: f64 = 0.05;
pub const DEFAULT_HERALD_EFFICIENCY: f64 = 0.25;
pub const DEFAULT_IDLER_EFFICIENCY: f64 = 0.5;
pub const DEFAULT_DEPTH: u32 = 4;
pub const DEFAULT_LOSS_DB: f64 = 1.0;
pub const DEFAULT_GATE_EFFICIENCY: f64 = 0.9;
pub const DEFAULT_HERALD_DET_EFFICIENCY: f64 = 0.6;
pub const DEFAULT_OUTPUT_DET_EFFICIENCY: f64 = 0.25;
pub const DEFAULT_N_CYCLES: u64 = 1_000_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_REP_RATE_HZ: f64 = 5.0e6;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub mux: MuxSection,
    #[serde(default)]
    pub detectors: DetectorsSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub clock: ClockSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub mean_pairs: Option<f64>,
    pub herald_efficiency: Option<f64>,
    pub idler_efficiency: Option<f64>,
    pub distribution: Option<PairDistribution>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuxSection {
    pub depth: Option<u32>,
    pub eta_loop: Option<f64>,
    pub loss_db: Option<f64>,
    pub eta_simplex: Option<f64>,
    pub eta_gate: Option<f64>,
    pub herald_windows: Option<Vec<f64>>,
    pub policy: Option<OverwritePolicy>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorsSection {
    #[serde(default)]
    pub herald: DetectorSection,
    #[serde(default)]
    pub output: DetectorSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub efficiency: Option<f64>,
    pub dark_click_probability: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_cycles: Option<u64>,
    pub seed: Option<u64>,
    pub mode: Option<SimMode>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    pub rep_rate_hz: Option<f64>,
}

/// A fully resolved run: simulation inputs plus the pump clock used to turn
/// per-bin fractions into rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub sim: SimConfig,
    pub rep_rate_hz: f64,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::ConfigIo {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Apply defaults, resolve the loss specification, and validate.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let depth = self.mux.depth.unwrap_or(DEFAULT_DEPTH);
        let loop_efficiency = match (self.mux.eta_loop, self.mux.loss_db) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "mux.eta_loop and mux.loss_db are mutually exclusive".into(),
                ))
            }
            (Some(eta), None) => eta,
            (None, Some(db)) => db_to_efficiency(db)
                .map_err(|e| Error::InvalidConfig(format!("mux.loss_db: {e}")))?,
            (None, None) => db_to_efficiency(DEFAULT_LOSS_DB).expect("default loss"),
        };
        let simplex_efficiency = match self.mux.eta_simplex {
            Some(eta) => eta,
            None => db_to_efficiency(DEFAULT_LOSS_DB).expect("default loss"),
        };
        let herald_windows = self
            .mux
            .herald_windows
            .clone()
            .unwrap_or_else(|| vec![1.0; depth as usize]);
        let sim = SimConfig {
            source: PairSourceSpec {
                mean_pairs: self.source.mean_pairs.unwrap_or(DEFAULT_MEAN_PAIRS),
                herald_efficiency: self
                    .source
                    .herald_efficiency
                    .unwrap_or(DEFAULT_HERALD_EFFICIENCY),
                idler_efficiency: self
                    .source
                    .idler_efficiency
                    .unwrap_or(DEFAULT_IDLER_EFFICIENCY),
                distribution: self.source.distribution.unwrap_or_default(),
            },
            mux: MuxSpec {
                depth,
                loop_efficiency,
                simplex_efficiency,
                gate_efficiency: self.mux.eta_gate.unwrap_or(DEFAULT_GATE_EFFICIENCY),
                herald_windows,
                policy: self.mux.policy.unwrap_or_default(),
            },
            herald_detector: DetectorSpec {
                efficiency: self
                    .detectors
                    .herald
                    .efficiency
                    .unwrap_or(DEFAULT_HERALD_DET_EFFICIENCY),
                dark_click_probability: self
                    .detectors
                    .herald
                    .dark_click_probability
                    .unwrap_or(0.0),
            },
            output_detector: DetectorSpec {
                efficiency: self
                    .detectors
                    .output
                    .efficiency
                    .unwrap_or(DEFAULT_OUTPUT_DET_EFFICIENCY),
                dark_click_probability: self
                    .detectors
                    .output
                    .dark_click_probability
                    .unwrap_or(0.0),
            },
            n_cycles: self.run.n_cycles.unwrap_or(DEFAULT_N_CYCLES),
            seed: self.run.seed.unwrap_or(DEFAULT_SEED),
            mode: self.run.mode.unwrap_or(SimMode::Multiplexed),
        };
        sim.validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let rep_rate_hz = self.clock.rep_rate_hz.unwrap_or(DEFAULT_REP_RATE_HZ);
        if !(rep_rate_hz.is_finite() && rep_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "clock.rep_rate_hz must be positive, got {rep_rate_hz}"
            )));
        }
        Ok(ResolvedConfig { sim, rep_rate_hz })
    }
}

/// Which knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKey {
    MeanPairs,
    EtaLoop,
    Depth,
}

impl SweepKey {
    pub fn label(self) -> &'static str {
        match self {
            SweepKey::MeanPairs => "mean_pairs",
            SweepKey::EtaLoop => "eta_loop",
            SweepKey::Depth => "depth",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub sweep: SweepSection,
    #[serde(default)]
    pub config: RunConfigFile,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub key: SweepKey,
    pub values: Vec<f64>,
}

/// A validated sweep: the base run plus the grid to scan.
#[derive(Debug, Clone)]
pub struct ResolvedSweep {
    pub key: SweepKey,
    pub values: Vec<f64>,
    pub base: ResolvedConfig,
}

impl SweepFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::ConfigIo {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn resolve(&self) -> Result<ResolvedSweep> {
        let base = self.config.resolve()?;
        if self.sweep.values.is_empty() {
            return Err(Error::InvalidConfig("sweep.values is empty".into()));
        }
        for &v in &self.sweep.values {
            match self.sweep.key {
                SweepKey::MeanPairs => {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "sweep mean_pairs value must be >= 0, got {v}"
                        )));
                    }
                }
                SweepKey::EtaLoop => {
                    if !(v.is_finite() && v > 0.0 && v <= 1.0) {
                        return Err(Error::InvalidConfig(format!(
                            "sweep eta_loop value must be in (0, 1], got {v}"
                        )));
                    }
                }
                SweepKey::Depth => {
                    if !(v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= 4096.0) {
                        return Err(Error::InvalidConfig(format!(
                            "sweep depth value must be a small positive integer, got {v}"
                        )));
                    }
                }
            }
        }
        if self.sweep.key == SweepKey::Depth {
            let windows = &base.sim.mux.herald_windows;
            if windows.windows(2).any(|w| w[0] != w[1]) {
                return Err(Error::InvalidConfig(
                    "sweeping depth requires uniform herald_windows".into(),
                ));
            }
        }
        Ok(ResolvedSweep {
            key: self.sweep.key,
            values: self.sweep.values.clone(),
            base,
        })
    }
}

/// Apply one sweep value to a copy of the base simulation config.
pub fn apply_sweep_value(base: &SimConfig, key: SweepKey, value: f64) -> SimConfig {
    let mut config = base.clone();
    match key {
        SweepKey::MeanPairs => config.source.mean_pairs = value,
        SweepKey::EtaLoop => config.mux.loop_efficiency = value,
        SweepKey::Depth => {
            let depth = value as u32;
            let fill = base.mux.herald_windows.first().copied().unwrap_or(1.0);
            config.mux.depth = depth;
            config.mux.herald_windows = vec![fill; depth as usize];
        }
    }
    config
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_to_documented_defaults() {
        let resolved = RunConfigFile::parse("").unwrap().resolve().unwrap();
        assert_eq!(resolved.sim.mux.depth, 4);
        assert_eq!(resolved.sim.source.mean_pairs, 0.05);
        assert_eq!(resolved.sim.source.distribution, PairDistribution::Thermal);
        assert_eq!(resolved.sim.mux.policy, OverwritePolicy::KeepLast);
        assert_eq!(resolved.sim.mux.herald_windows, vec![1.0; 4]);
        assert!((resolved.sim.mux.loop_efficiency - 0.7943282347242815).abs() < 1e-12);
        assert!((resolved.sim.mux.simplex_efficiency - 0.7943282347242815).abs() < 1e-12);
        assert_eq!(resolved.sim.herald_detector.dark_click_probability, 0.0);
        assert_eq!(resolved.sim.output_detector.dark_click_probability, 0.0);
        assert_eq!(resolved.sim.mode, SimMode::Multiplexed);
        assert_eq!(resolved.rep_rate_hz, 5.0e6);
    }

    #[test]
    fn sections_override_defaults() {
        let text = r#"
[source]
mean_pairs = 0.02
distribution = "poisson"

[mux]
depth = 2
eta_loop = 0.9
herald_windows = [0.5, 1.0]
policy = "keep_first"

[detectors.output]
efficiency = 1.0
dark_click_probability = 1e-5

[run]
n_cycles = 123
seed = 9
mode = "simplex"

[clock]
rep_rate_hz = 1e6
"#;
        let resolved = RunConfigFile::parse(text).unwrap().resolve().unwrap();
        assert_eq!(resolved.sim.source.distribution, PairDistribution::Poisson);
        assert_eq!(resolved.sim.mux.depth, 2);
        assert_eq!(resolved.sim.mux.loop_efficiency, 0.9);
        assert_eq!(resolved.sim.mux.herald_windows, vec![0.5, 1.0]);
        assert_eq!(resolved.sim.mux.policy, OverwritePolicy::KeepFirst);
        assert_eq!(resolved.sim.output_detector.dark_click_probability, 1e-5);
        assert_eq!(resolved.sim.n_cycles, 123);
        assert_eq!(resolved.sim.mode, SimMode::Simplex);
        assert_eq!(resolved.rep_rate_hz, 1e6);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfigFile::parse("[source]\ntypo_key = 1.0\n").is_err());
        assert!(RunConfigFile::parse("[unknown_section]\nx = 1\n").is_err());
    }

    #[test]
    fn loss_specifications_are_mutually_exclusive() {
        let text = "[mux]\neta_loop = 0.8\nloss_db = 1.0\n";
        let err = RunConfigFile::parse(text).unwrap().resolve().unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));

        let resolved = RunConfigFile::parse("[mux]\nloss_db = 3.0103\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert!((resolved.sim.mux.loop_efficiency - 0.5).abs() < 1e-4);
    }

    #[test]
    fn invalid_values_fail_validation_not_parsing() {
        let parsed = RunConfigFile::parse("[source]\nmean_pairs = -0.5\n").unwrap();
        assert!(matches!(parsed.resolve(), Err(Error::InvalidConfig(_))));
        let parsed = RunConfigFile::parse("[mux]\nherald_windows = [1.0]\n").unwrap();
        assert!(matches!(parsed.resolve(), Err(Error::InvalidConfig(_))));
        let parsed = RunConfigFile::parse("[run]\nn_cycles = 0\n").unwrap();
        assert!(matches!(parsed.resolve(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn sweep_file_round_trip() {
        let text = r#"
[sweep]
key = "mean_pairs"
values = [0.01, 0.02, 0.05]

[config.run]
n_cycles = 1000
"#;
        let sweep = SweepFile::parse(text).unwrap().resolve().unwrap();
        assert_eq!(sweep.key, SweepKey::MeanPairs);
        assert_eq!(sweep.values.len(), 3);
        assert_eq!(sweep.base.sim.n_cycles, 1000);
    }

    #[test]
    fn sweep_validation_rejects_bad_grids() {
        let empty = r#"
[sweep]
key = "eta_loop"
values = []
"#;
        assert!(SweepFile::parse(empty).unwrap().resolve().is_err());
        let out_of_range = r#"
[sweep]
key = "eta_loop"
values = [0.5, 1.5]
"#;
        assert!(SweepFile::parse(out_of_range).unwrap().resolve().is_err());
        let fractional_depth = r#"
[sweep]
key = "depth"
values = [2.5]
"#;
        assert!(SweepFile::parse(fractional_depth).unwrap().resolve().is_err());
        let bad_key = r#"
[sweep]
key = "rep_rate"
values = [1.0]
"#;
        assert!(SweepFile::parse(bad_key).is_err());
    }

    #[test]
    fn depth_sweep_regenerates_windows() {
        let base = RunConfigFile::parse("").unwrap().resolve().unwrap();
        let patched = apply_sweep_value(&base.sim, SweepKey::Depth, 8.0);
        assert_eq!(patched.mux.depth, 8);
        assert_eq!(patched.mux.herald_windows, vec![1.0; 8]);
        patched.validate().unwrap();
    }
}
