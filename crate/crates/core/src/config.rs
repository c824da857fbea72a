//! TOML run configuration.
//!
//! Sections: `[absorption]`, `[noise]`, `[channel]`, `[schedule]`, `[sweep]`
//! and `[limits]`. Only `schedule.kind`, `schedule.c_f` and `sweep.n_list`
//! are required. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{AbsorptionProfile, FrequencySchedule, ScheduleKind};
use crate::cutset::DEFAULT_MEMORY_CAP;
use crate::error::{Error, Result};
use crate::scaling::{SweepConfig, SweepMode, DEFAULT_MODES};

/// The shipped configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbsorptionSection {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub b1: f64,
    pub b2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub a4: f64,
    pub a5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub alpha: f64,
    pub c0: f64,
    pub unit_km: f64,
}

impl Default for AbsorptionSection {
    fn default() -> Self {
        let p = AbsorptionProfile::default();
        AbsorptionSection {
            a0: p.a0,
            a1: p.a1,
            a2: p.a2,
            a3: p.a3,
            b1: p.b1,
            b2: p.b2,
        }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        let p = AbsorptionProfile::default();
        NoiseSection { a4: p.a4, a5: p.a5 }
    }
}

impl Default for ChannelSection {
    fn default() -> Self {
        let p = AbsorptionProfile::default();
        ChannelSection {
            alpha: p.alpha,
            c0: p.c0,
            unit_km: p.unit_km,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    pub c_f: f64,
    #[serde(default)]
    pub gamma_f: f64,
}

fn default_power() -> f64 {
    1.0
}
fn default_trials() -> usize {
    8
}
fn default_modes() -> Vec<SweepMode> {
    DEFAULT_MODES.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n_list: Vec<usize>,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_modes")]
    pub modes: Vec<SweepMode>,
    #[serde(default)]
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsSection {
    pub memory_cap_bytes: u64,
}

impl Default for LimitsSection {
    fn default() -> Self {
        LimitsSection {
            memory_cap_bytes: DEFAULT_MEMORY_CAP,
        }
    }
}

/// Configuration file with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub absorption: AbsorptionSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub channel: ChannelSection,
    pub schedule: ScheduleSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub limits: LimitsSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn profile(&self) -> AbsorptionProfile {
        AbsorptionProfile {
            a0: self.absorption.a0,
            a1: self.absorption.a1,
            a2: self.absorption.a2,
            a3: self.absorption.a3,
            b1: self.absorption.b1,
            b2: self.absorption.b2,
            a4: self.noise.a4,
            a5: self.noise.a5,
            alpha: self.channel.alpha,
            c0: self.channel.c0,
            unit_km: self.channel.unit_km,
        }
    }

    pub fn schedule(&self) -> FrequencySchedule {
        FrequencySchedule {
            kind: self.schedule.kind,
            c_f: self.schedule.c_f,
            gamma_f: self.schedule.gamma_f,
        }
    }

    /// Validated sweep configuration.
    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let c = SweepConfig {
            n_list: self.sweep.n_list.clone(),
            schedule: self.schedule(),
            profile: self.profile(),
            power: self.sweep.power,
            trials: self.sweep.trials,
            seed: self.sweep.seed,
            modes: self.sweep.modes.clone(),
            eps: self.sweep.eps,
            memory_cap_bytes: self.limits.memory_cap_bytes,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn from_sweep_config(c: &SweepConfig) -> Self {
        let p = &c.profile;
        ConfigFile {
            absorption: AbsorptionSection {
                a0: p.a0,
                a1: p.a1,
                a2: p.a2,
                a3: p.a3,
                b1: p.b1,
                b2: p.b2,
            },
            noise: NoiseSection { a4: p.a4, a5: p.a5 },
            channel: ChannelSection {
                alpha: p.alpha,
                c0: p.c0,
                unit_km: p.unit_km,
            },
            schedule: ScheduleSection {
                kind: c.schedule.kind,
                c_f: c.schedule.c_f,
                gamma_f: c.schedule.gamma_f,
            },
            sweep: SweepSection {
                n_list: c.n_list.clone(),
                power: c.power,
                trials: c.trials,
                seed: c.seed,
                modes: c.modes.clone(),
                eps: c.eps,
            },
            limits: LimitsSection {
                memory_cap_bytes: c.memory_cap_bytes,
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config sections serialize to TOML")
    }
}

pub fn parse_config_str(text: &str) -> Result<SweepConfig> {
    ConfigFile::parse(text)?.sweep_config()
}

pub fn parse_config(path: &Path) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn default_config() -> SweepConfig {
    parse_config_str(DEFAULT_CONFIG).expect("shipped configuration is valid")
}

/// SHA-256 of the resolved configuration as JSON with sorted keys.
pub fn config_hash(c: &SweepConfig) -> String {
    let value = serde_json::to_value(ConfigFile::from_sweep_config(c)).expect("config serializes");
    let canonical = serde_json::to_string(&value).expect("json value serializes");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[schedule]\nkind = \"constant\"\nc_f = 10.0\n[sweep]\nn_list = [16, 64]\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.profile, AbsorptionProfile::default());
        assert_eq!(c.power, 1.0);
        assert_eq!(c.trials, 8);
        assert_eq!(c.seed, 0);
        assert_eq!(c.modes, DEFAULT_MODES.to_vec());
        assert_eq!(c.memory_cap_bytes, DEFAULT_MEMORY_CAP);
        let echo = ConfigFile::from_sweep_config(&c).to_toml();
        assert!(echo.contains("alpha = 1.5"));
        assert_eq!(parse_config_str(&echo).unwrap(), c);
    }

    #[test]
    fn alpha_out_of_range() {
        let text = format!("{MINIMAL}[channel]\nalpha = 3.0\n");
        let err = parse_config_str(&text).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("[1, 2]"), "{err}");
    }

    #[test]
    fn duplicate_key_is_named() {
        let text = "[schedule]\nkind = \"constant\"\nc_f = 10.0\nc_f = 20.0\n[sweep]\nn_list = [16]\n";
        let err = parse_config_str(text).unwrap_err();
        assert!(err.to_string().contains("c_f"), "{err}");
    }

    #[test]
    fn unknown_and_missing_keys() {
        let err = parse_config_str(&format!("{MINIMAL}[noise]\na6 = 1.0\n")).unwrap_err();
        assert!(err.to_string().contains("a6"), "{err}");
        let err = parse_config_str("[schedule]\nkind = \"constant\"\nc_f = 10.0\n").unwrap_err();
        assert!(err.to_string().contains("sweep"), "{err}");
        let err = parse_config_str("[schedule]\nkind = \"constant\"\n[sweep]\nn_list = [16]\n").unwrap_err();
        assert!(err.to_string().contains("c_f"), "{err}");
        let err = parse_config_str("[schedule]\nkind = \"constant\"\nc_f = \"x\"\n[sweep]\nn_list = [16]\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn hash_ignores_key_order() {
        let a = "[sweep]\nn_list = [16]\nseed = 3\n[schedule]\nc_f = 10.0\nkind = \"constant\"\n";
        let b = "[schedule]\nkind = \"constant\"\nc_f = 10.0\n[sweep]\nseed = 3\nn_list = [16]\n";
        let ha = config_hash(&parse_config_str(a).unwrap());
        assert_eq!(ha, config_hash(&parse_config_str(b).unwrap()));
        assert_eq!(ha.len(), 64);
        let mut c = parse_config_str(a).unwrap();
        c.seed = 4;
        assert_ne!(ha, config_hash(&c));
    }

    #[test]
    fn shipped_config_is_tight() {
        let c = default_config();
        assert_eq!(c.n_list, vec![64, 256, 1024, 4096]);
        assert_eq!(c.schedule.gamma_f, 0.25);
    }
}
