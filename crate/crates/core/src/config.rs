//! Run configuration: one JSON document with a section per subsystem.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::atom::{AtomConfig, AtomParams};
use crate::dynamics::comb::OracleSettings;
use crate::dynamics::{PopulationState, ProtocolConfig, PumpProtocol};
use crate::error::{Error, Result};
use crate::measurement::{ReadoutModel, ScanConfig};
use crate::spectrum::{CalibrationConfig, NoiseChainConfig, RateCalibration};

/// Decibel values that may be infinite. JSON has no infinity literal, so the
/// strings `"inf"` / `"-inf"` are accepted alongside plain numbers.
pub mod db_value {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;
    use std::fmt;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct DbVisitor;
        impl Visitor<'_> for DbVisitor {
            type Value = f64;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"inf\" / \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v {
                    "inf" | "+inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(DbVisitor)
    }
}

/// Initial population before pumping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    UniformF3,
    /// Explicit 16 populations in canonical order (F=3 m=-3..3, then F=4 m=-4..4).
    Populations(Vec<f64>),
}

impl InitialState {
    pub fn to_state(&self) -> Result<PopulationState> {
        match self {
            InitialState::UniformF3 => Ok(PopulationState::uniform_f3()),
            InitialState::Populations(p) => PopulationState::from_slice(p),
        }
    }
}

/// On-disk form of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub atom: AtomConfig,
    #[serde(default)]
    pub noise_chain: NoiseChainConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub readout: ReadoutModel,
    #[serde(default)]
    pub oracle: OracleSettings,
    #[serde(default)]
    pub initial_state: InitialState,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Validated configuration with all derived quantities in internal units.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub atom: AtomParams,
    pub noise_chain: NoiseChainConfig,
    pub calibration: RateCalibration,
    pub protocol: PumpProtocol,
    pub scan: ScanConfig,
    pub readout: ReadoutModel,
    pub oracle: OracleSettings,
    pub initial_state: PopulationState,
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
}

impl RunConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Validate every section and convert to internal units.
    pub fn resolve(&self) -> Result<RunConfig> {
        let atom = self.atom.to_params()?;
        let noise_chain = self.noise_chain;
        noise_chain.validate()?;
        let calibration = self.calibration.to_calibration()?;
        let protocol = self.protocol.to_protocol()?;
        self.scan.validate()?;
        self.readout.validate()?;
        self.oracle.validate()?;
        let initial_state = self.initial_state.to_state()?;
        Ok(RunConfig {
            atom,
            noise_chain,
            calibration,
            protocol,
            scan: self.scan.clone(),
            readout: self.readout,
            oracle: self.oracle.clone(),
            initial_state,
            output_dir: self.output_dir.clone(),
            seed: self.seed,
        })
    }
}

impl RunConfig {
    /// Retarget the protocol on transition `m`, moving the carrier and notch with it.
    pub fn retarget(&mut self, m: i32) -> Result<()> {
        crate::atom::check_transition_m(m)?;
        self.protocol.target_m = m;
        self.noise_chain = self.noise_chain.targeting(m, &self.atom);
        self.noise_chain.validate()
    }

    /// Seed for stochastic steps; error when none was configured.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::invalid("seed", "a seed is required for stochastic runs"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg =
            RunConfigFile::from_json(r#"{"atom": {"omega_b_hz": 910000, "omega_0_hz": 120000}}"#)
                .unwrap()
                .resolve()
                .unwrap();
        assert_eq!(cfg.noise_chain, NoiseChainConfig::default());
        assert_eq!(cfg.protocol.iterations, 40);
        assert_eq!(cfg.scan.detunings_hz().len(), 161);
        assert!(cfg.seed.is_none());
        assert!(cfg.require_seed().is_err());
    }

    #[test]
    fn infinite_depth_round_trips() {
        let text = r#"{"atom": {"omega_b_hz": 910000, "omega_0_hz": 120000},
                       "noise_chain": {"notch_depth_db": "inf"}}"#;
        let file = RunConfigFile::from_json(text).unwrap();
        assert_eq!(file.noise_chain.notch_depth_db, f64::INFINITY);
        let back = serde_json::to_string(&file).unwrap();
        assert_eq!(RunConfigFile::from_json(&back).unwrap(), file);
        assert!(RunConfigFile::from_json(
            r#"{"atom": {"omega_b_hz": 1, "omega_0_hz": 1}, "noise_chain": {"notch_depth_db": "deep"}}"#
        )
        .is_err());
    }

    #[test]
    fn unknown_keys_and_bad_sections_are_rejected() {
        assert!(RunConfigFile::from_json(
            r#"{"atom": {"omega_b_hz": 1, "omega_0_hz": 1}, "bogus": 1}"#
        )
        .is_err());
        let bad = RunConfigFile::from_json(
            r#"{"atom": {"omega_b_hz": 910000, "omega_0_hz": 120000}, "protocol": {"target_m": 5}}"#,
        )
        .unwrap();
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn retarget_moves_notch_and_carrier() {
        let mut cfg =
            RunConfigFile::from_json(r#"{"atom": {"omega_b_hz": 910000, "omega_0_hz": 120000}}"#)
                .unwrap()
                .resolve()
                .unwrap();
        cfg.retarget(1).unwrap();
        assert_eq!(cfg.protocol.target_m, 1);
        assert!((cfg.noise_chain.notch_center_hz - 910e3).abs() < 1e-6);
        assert!((cfg.noise_chain.carrier_offset_hz - 910e3).abs() < 1e-6);
        assert!(cfg.retarget(-4).is_err());
    }
}
