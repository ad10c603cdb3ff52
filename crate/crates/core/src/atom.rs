//! Cesium 6S1/2 ground-state level structure and the Δm = 0 Raman coupling laws.
//!
//! All frequencies are angular (rad/s) in this module. Conversions to and from
//! ordinary frequency happen at the configuration boundary.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-state hyperfine splitting of Cesium, in Hz.
pub const HYPERFINE_SPLITTING_HZ: f64 = 9.2e9;

/// Differential Zeeman shift of the |3,m> <-> |4,m> transition per unit m, in Hz per Gauss.
/// Follows from g4 - g3 = 1/2 times the Bohr magneton.
pub const ZEEMAN_HZ_PER_GAUSS: f64 = 700e3;

/// Largest |m| shared by both manifolds; only these sublevels have a Raman partner.
pub const MAX_TRANSITION_M: i32 = 3;

/// Number of Zeeman sublevels in F=3 plus F=4.
pub const NUM_STATES: usize = 16;

/// Number of |3,m> <-> |4,m> transitions.
pub const NUM_TRANSITIONS: usize = 7;

// Documentation constants for the apparatus; no implemented formula uses them.
/// FORT well depth, Hz.
pub const FORT_DEPTH_HZ: f64 = 45e6;
/// Atom-cavity coupling g, Hz.
pub const CAVITY_COUPLING_HZ: f64 = 34e6;
/// Cavity field decay rate kappa, Hz.
pub const CAVITY_DECAY_HZ: f64 = 3.8e6;
/// Atomic dipole decay rate gamma, Hz.
pub const ATOMIC_DECAY_HZ: f64 = 2.6e6;

#[inline]
pub fn hz_to_angular(hz: f64) -> f64 {
    2.0 * PI * hz
}

#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Manifold {
    F3,
    F4,
}

impl Manifold {
    pub fn f(self) -> i32 {
        match self {
            Manifold::F3 => 3,
            Manifold::F4 => 4,
        }
    }
}

/// A ground-state sublevel |F, m>.
///
/// The derived ordering is the canonical one used everywhere in the crate:
/// all of F=3 (m ascending) followed by all of F=4 (m ascending).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ZeemanState {
    manifold: Manifold,
    m: i32,
}

impl ZeemanState {
    pub fn new(manifold: Manifold, m: i32) -> Result<Self> {
        let f = manifold.f();
        if m.abs() > f {
            return Err(Error::ZeemanIndex { m, max: f });
        }
        Ok(ZeemanState { manifold, m })
    }

    pub fn f3(m: i32) -> Result<Self> {
        Self::new(Manifold::F3, m)
    }

    pub fn f4(m: i32) -> Result<Self> {
        Self::new(Manifold::F4, m)
    }

    pub fn manifold(self) -> Manifold {
        self.manifold
    }

    pub fn m(self) -> i32 {
        self.m
    }

    /// Position in the canonical ordering, 0..16.
    pub fn index(self) -> usize {
        match self.manifold {
            Manifold::F3 => (self.m + 3) as usize,
            Manifold::F4 => NUM_TRANSITIONS + (self.m + 4) as usize,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0..=6 => Some(ZeemanState {
                manifold: Manifold::F3,
                m: index as i32 - 3,
            }),
            7..=15 => Some(ZeemanState {
                manifold: Manifold::F4,
                m: index as i32 - 7 - 4,
            }),
            _ => None,
        }
    }

    /// All 16 states in canonical order.
    pub fn all() -> impl Iterator<Item = ZeemanState> {
        (0..NUM_STATES).filter_map(Self::from_index)
    }
}

impl fmt::Display for ZeemanState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{},{}>", self.manifold.f(), self.m)
    }
}

/// Index of transition m (|m| <= 3) into 7-element per-transition arrays.
#[inline]
pub fn transition_index(m: i32) -> usize {
    (m + MAX_TRANSITION_M) as usize
}

/// Transition quantum numbers -3..=3 in array order.
pub fn transition_ms() -> impl Iterator<Item = i32> + Clone {
    -MAX_TRANSITION_M..=MAX_TRANSITION_M
}

pub(crate) fn check_transition_m(m: i32) -> Result<()> {
    if m.abs() > MAX_TRANSITION_M {
        Err(Error::ZeemanIndex {
            m,
            max: MAX_TRANSITION_M,
        })
    } else {
        Ok(())
    }
}

/// Relative squared coupling strength 1 - m²/16 of the |3,m> <-> |4,m> transition.
#[inline]
pub fn coupling_factor(m: i32) -> f64 {
    1.0 - (m * m) as f64 / 16.0
}

/// Physical constants and drive settings, angular units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomParams {
    pub hyperfine_splitting: f64,
    pub omega_b: f64,
    pub omega_0: f64,
    /// Axial bias field in Gauss, when omega_b was derived from it.
    pub axial_field: Option<f64>,
}

impl AtomParams {
    pub fn new(omega_b: f64, omega_0: f64) -> Result<Self> {
        let params = AtomParams {
            hyperfine_splitting: hz_to_angular(HYPERFINE_SPLITTING_HZ),
            omega_b,
            omega_0,
            axial_field: None,
        };
        params.validate()?;
        Ok(params)
    }

    /// Derive the Zeeman splitting from an axial bias field in Gauss.
    pub fn from_axial_field(axial_field_gauss: f64, omega_0: f64) -> Result<Self> {
        if !(axial_field_gauss.is_finite() && axial_field_gauss >= 0.0) {
            return Err(Error::invalid(
                "axial_field_gauss",
                format!("must be finite and >= 0, got {axial_field_gauss}"),
            ));
        }
        let params = AtomParams {
            hyperfine_splitting: hz_to_angular(HYPERFINE_SPLITTING_HZ),
            omega_b: hz_to_angular(ZEEMAN_HZ_PER_GAUSS * axial_field_gauss),
            omega_0,
            axial_field: Some(axial_field_gauss),
        };
        params.validate()?;
        Ok(params)
    }

    /// Typical operating point: omega_B = 2π·910 kHz, Omega_0 = 2π·120 kHz.
    pub fn typical() -> Self {
        AtomParams {
            hyperfine_splitting: hz_to_angular(HYPERFINE_SPLITTING_HZ),
            omega_b: hz_to_angular(910e3),
            omega_0: hz_to_angular(120e3),
            axial_field: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hyperfine_splitting", self.hyperfine_splitting),
            ("omega_b", self.omega_b),
            ("omega_0", self.omega_0),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn require_coherent_drive(&self) -> Result<()> {
        if self.omega_0 > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(
                "omega_0",
                "must be > 0 for coherent dynamics",
            ))
        }
    }
}

/// Serialized form of [`AtomParams`], ordinary frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    #[serde(default = "default_hyperfine_hz")]
    pub hyperfine_splitting_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_b_hz: Option<f64>,
    pub omega_0_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axial_field_gauss: Option<f64>,
}

fn default_hyperfine_hz() -> f64 {
    HYPERFINE_SPLITTING_HZ
}

impl AtomConfig {
    pub fn to_params(&self) -> Result<AtomParams> {
        let omega_0 = hz_to_angular(self.omega_0_hz);
        let mut params = match (self.omega_b_hz, self.axial_field_gauss) {
            (Some(b), None) => AtomParams::new(hz_to_angular(b), omega_0)?,
            (None, Some(g)) => AtomParams::from_axial_field(g, omega_0)?,
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "atom",
                    "give exactly one of `omega_b_hz` and `axial_field_gauss`, not both",
                ))
            }
            (None, None) => {
                return Err(Error::invalid(
                    "atom",
                    "one of `omega_b_hz` or `axial_field_gauss` is required",
                ))
            }
        };
        params.hyperfine_splitting = hz_to_angular(self.hyperfine_splitting_hz);
        params.validate()?;
        Ok(params)
    }
}

impl From<&AtomParams> for AtomConfig {
    fn from(p: &AtomParams) -> Self {
        AtomConfig {
            hyperfine_splitting_hz: angular_to_hz(p.hyperfine_splitting),
            omega_b_hz: match p.axial_field {
                Some(_) => None,
                None => Some(angular_to_hz(p.omega_b)),
            },
            omega_0_hz: angular_to_hz(p.omega_0),
            axial_field_gauss: p.axial_field,
        }
    }
}

/// Shift of the |3,m> <-> |4,m> transition frequency due to the axial field.
pub fn zeeman_shift(m: i32, params: &AtomParams) -> Result<f64> {
    check_transition_m(m)?;
    Ok(params.omega_b * m as f64)
}

/// Effective Rabi frequency Ω0·(1 - m²/16)^½.
pub fn effective_rabi(m: i32, params: &AtomParams) -> Result<f64> {
    check_transition_m(m)?;
    Ok(params.omega_0 * coupling_factor(m).sqrt())
}

/// Effective detuning of transition m for Raman detuning `delta_r`.
pub fn effective_detuning(delta_r: f64, m: i32, params: &AtomParams) -> Result<f64> {
    check_transition_m(m)?;
    Ok(delta_r - params.omega_b * m as f64)
}
