//! Raman spectroscopy: transfer probability versus Raman detuning, binary
//! hyperfine readout, and seeded shot-noise sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::atom::{hz_to_angular, transition_ms, AtomConfig, AtomParams};
use crate::dynamics::{coherent_transfer_probability, PopulationState};
use crate::error::{Error, Result};

/// Binary F=3 / F=4 readout with symmetric misclassification and an additive
/// false-transfer background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutModel {
    pub accuracy: f64,
    pub background_p4: f64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        ReadoutModel {
            accuracy: 0.98,
            background_p4: 0.006,
        }
    }
}

impl ReadoutModel {
    /// Perfect discrimination, background only.
    pub fn ideal(background_p4: f64) -> Self {
        ReadoutModel {
            accuracy: 1.0,
            background_p4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.accuracy > 0.5 && self.accuracy <= 1.0) {
            return Err(Error::invalid(
                "readout.accuracy",
                format!("must lie in (0.5, 1], got {}", self.accuracy),
            ));
        }
        if !(self.background_p4 >= 0.0 && self.background_p4 < 1.0) {
            return Err(Error::invalid(
                "readout.background_p4",
                format!("must lie in [0, 1), got {}", self.background_p4),
            ));
        }
        Ok(())
    }

    /// Probability of reporting F=4 when the atom is in F=4 with probability `p`.
    pub fn report(&self, p: f64) -> f64 {
        self.accuracy * p + (1.0 - self.accuracy) * (1.0 - p)
    }
}

/// Pulse model used for the per-transition transfer probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseModel {
    /// Time-averaged Lorentzian envelope.
    Decohered,
    /// Two-level Rabi formula at the given duration (s).
    Coherent(f64),
}

/// Reported p4 at Raman detuning `delta_r` (rad/s) using decohered pulses.
pub fn true_transfer_probability(
    state: &PopulationState,
    delta_r: f64,
    params: &AtomParams,
    readout: &ReadoutModel,
) -> Result<f64> {
    transfer_probability(state, delta_r, params, readout, PulseModel::Decohered)
}

/// Reported p4: background plus the per-transition transfer of each |3,m>
/// population, folded through the readout accuracy. F=4 populations are not
/// driven by the pulse.
pub fn transfer_probability(
    state: &PopulationState,
    delta_r: f64,
    params: &AtomParams,
    readout: &ReadoutModel,
    pulse: PulseModel,
) -> Result<f64> {
    let (duration, decohered) = match pulse {
        PulseModel::Decohered => (1.0, true),
        PulseModel::Coherent(d) => (d, false),
    };
    let mut p = readout.background_p4;
    for m in transition_ms() {
        let pop = state.f3(m);
        if pop > 0.0 {
            p += pop * coherent_transfer_probability(m, delta_r, duration, params, decohered)?;
        }
    }
    Ok(readout.report(p.clamp(0.0, 1.0)))
}

/// Shots per detuning point: a positive count, or `"analytic"` for the
/// infinite-statistics limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shots {
    Count(u64),
    Analytic,
}

impl Serialize for Shots {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Shots::Count(n) => s.serialize_u64(*n),
            Shots::Analytic => s.serialize_str("analytic"),
        }
    }
}

impl<'de> Deserialize<'de> for Shots {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(Shots::Count(n)),
            Raw::Word(w) if w == "analytic" => Ok(Shots::Analytic),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "shots_per_point must be a count or \"analytic\", got {w:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Explicit detuning list (Hz); overrides `span_hz` / `points`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detunings_hz: Option<Vec<f64>>,
    /// Symmetric grid from -span_hz to +span_hz.
    pub span_hz: f64,
    pub points: usize,
    /// s
    pub pulse_duration: f64,
    pub shots_per_point: Shots,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    /// Use the time-dependent Rabi formula instead of the decohered envelope.
    pub coherent: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            detunings_hz: None,
            span_hz: 3.3e6,
            points: 161,
            pulse_duration: 25e-6,
            shots_per_point: Shots::Count(100),
            rng_seed: None,
            coherent: false,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.detunings_hz {
            Some(d) if d.is_empty() => {
                return Err(Error::invalid("scan.detunings_hz", "must not be empty"))
            }
            Some(d) if d.iter().any(|x| !x.is_finite()) => {
                return Err(Error::invalid("scan.detunings_hz", "must be finite"))
            }
            Some(_) => {}
            None => {
                if self.points == 0 {
                    return Err(Error::invalid("scan.points", "must be >= 1"));
                }
                if !(self.span_hz.is_finite() && self.span_hz >= 0.0) {
                    return Err(Error::invalid("scan.span_hz", "must be finite and >= 0"));
                }
            }
        }
        if !(self.pulse_duration.is_finite() && self.pulse_duration > 0.0) {
            return Err(Error::invalid(
                "scan.pulse_duration",
                "must be finite and > 0",
            ));
        }
        if self.shots_per_point == Shots::Count(0) {
            return Err(Error::invalid("scan.shots_per_point", "must be >= 1"));
        }
        Ok(())
    }

    pub fn detunings_hz(&self) -> Vec<f64> {
        if let Some(d) = &self.detunings_hz {
            return d.clone();
        }
        if self.points == 1 {
            return vec![0.0];
        }
        let n = self.points - 1;
        (0..self.points)
            .map(|i| -self.span_hz + 2.0 * self.span_hz * i as f64 / n as f64)
            .collect()
    }

    fn pulse(&self) -> PulseModel {
        if self.coherent {
            PulseModel::Coherent(self.pulse_duration)
        } else {
            PulseModel::Decohered
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub delta_r_hz: f64,
    pub p4: f64,
    /// Zero in analytic mode.
    pub shots: u64,
    pub successes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMetadata {
    pub atom: AtomConfig,
    pub seed: Option<u64>,
    pub pulse_duration: f64,
    pub readout: ReadoutModel,
    pub coherent: bool,
    pub analytic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamanScan {
    pub points: Vec<ScanPoint>,
    pub metadata: Option<ScanMetadata>,
}

impl RamanScan {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::invalid("scan", "no points"));
        }
        for pt in &self.points {
            if !pt.delta_r_hz.is_finite() {
                return Err(Error::invalid("scan", "detunings must be finite"));
            }
            if !(0.0..=1.0).contains(&pt.p4) {
                return Err(Error::invalid(
                    "scan",
                    format!("p4 = {} outside [0, 1]", pt.p4),
                ));
            }
            if pt.successes > pt.shots {
                return Err(Error::invalid(
                    "scan",
                    format!("{} successes out of {} shots", pt.successes, pt.shots),
                ));
            }
        }
        Ok(())
    }

    pub fn is_analytic(&self) -> bool {
        self.points.iter().all(|p| p.shots == 0)
    }
}

/// Stream of randomness for point `index`: independent of evaluation order.
fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Simulate a Raman scan of `state`. Every shot starts from the same state.
pub fn acquire_scan(
    state: &PopulationState,
    config: &ScanConfig,
    params: &AtomParams,
    readout: &ReadoutModel,
) -> Result<RamanScan> {
    config.validate()?;
    readout.validate()?;
    let pulse = config.pulse();
    let seed = match config.shots_per_point {
        Shots::Analytic => None,
        Shots::Count(_) => Some(config.rng_seed.ok_or_else(|| {
            Error::invalid("scan.rng_seed", "a seed is required when sampling shots")
        })?),
    };
    let mut points = Vec::new();
    for (i, delta_hz) in config.detunings_hz().into_iter().enumerate() {
        let p = transfer_probability(state, hz_to_angular(delta_hz), params, readout, pulse)?;
        let point = match config.shots_per_point {
            Shots::Analytic => ScanPoint {
                delta_r_hz: delta_hz,
                p4: p,
                shots: 0,
                successes: 0,
            },
            Shots::Count(n) => {
                let dist = Binomial::new(n, p).map_err(|e| Error::invalid("p4", e.to_string()))?;
                let successes = dist.sample(&mut point_rng(seed.unwrap(), i));
                ScanPoint {
                    delta_r_hz: delta_hz,
                    p4: successes as f64 / n as f64,
                    shots: n,
                    successes,
                }
            }
        };
        points.push(point);
    }
    Ok(RamanScan {
        points,
        metadata: Some(ScanMetadata {
            atom: AtomConfig::from(params),
            seed,
            pulse_duration: config.pulse_duration,
            readout: *readout,
            coherent: config.coherent,
            analytic: seed.is_none(),
        }),
    })
}
