//! Population dynamics of the 16 ground sublevels under incoherent Raman drive,
//! repumping, and coherent spectroscopy pulses.

pub mod comb;

use serde::{Deserialize, Serialize};

use crate::atom::{
    check_transition_m, effective_detuning, effective_rabi, transition_index, transition_ms,
    AtomParams, Manifold, ZeemanState, NUM_STATES, NUM_TRANSITIONS,
};
use crate::error::{Error, Result};
use crate::spectrum::{rate_table, PowerSpectrum, RateCalibration};

/// Allowed drift of the total population, and of any population outside [0, 1].
pub const TRACE_TOLERANCE: f64 = 1e-9;

/// Populations of the 16 ground sublevels in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    populations: [f64; NUM_STATES],
}

impl PopulationState {
    pub fn new(populations: [f64; NUM_STATES]) -> Result<Self> {
        for (i, &p) in populations.iter().enumerate() {
            if !(p.is_finite() && (-TRACE_TOLERANCE..=1.0 + TRACE_TOLERANCE).contains(&p)) {
                let state = ZeemanState::from_index(i).unwrap();
                return Err(Error::invalid(
                    "populations",
                    format!("population of {state} is {p}, outside [0, 1]"),
                ));
            }
        }
        let total: f64 = populations.iter().sum();
        if (total - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::invalid(
                "populations",
                format!("populations sum to {total}, not 1"),
            ));
        }
        Ok(PopulationState { populations })
    }

    pub fn from_slice(populations: &[f64]) -> Result<Self> {
        let array: [f64; NUM_STATES] = populations.try_into().map_err(|_| {
            Error::invalid(
                "populations",
                format!("expected {NUM_STATES} values, got {}", populations.len()),
            )
        })?;
        Self::new(array)
    }

    /// 1/7 in every F=3 sublevel.
    pub fn uniform_f3() -> Self {
        let mut populations = [0.0; NUM_STATES];
        populations[..NUM_TRANSITIONS].fill(1.0 / NUM_TRANSITIONS as f64);
        PopulationState { populations }
    }

    /// Everything in one sublevel.
    pub fn pure(state: ZeemanState) -> Self {
        let mut populations = [0.0; NUM_STATES];
        populations[state.index()] = 1.0;
        PopulationState { populations }
    }

    pub fn get(&self, state: ZeemanState) -> f64 {
        self.populations[state.index()]
    }

    /// Population of |3,m>; zero for |m| > 3.
    pub fn f3(&self, m: i32) -> f64 {
        if m.abs() > 3 {
            0.0
        } else {
            self.populations[transition_index(m)]
        }
    }

    /// Population of |4,m>; zero for |m| > 4.
    pub fn f4(&self, m: i32) -> f64 {
        if m.abs() > 4 {
            0.0
        } else {
            self.populations[NUM_TRANSITIONS + (m + 4) as usize]
        }
    }

    pub fn f3_populations(&self) -> [f64; NUM_TRANSITIONS] {
        let mut out = [0.0; NUM_TRANSITIONS];
        out.copy_from_slice(&self.populations[..NUM_TRANSITIONS]);
        out
    }

    pub fn as_array(&self) -> &[f64; NUM_STATES] {
        &self.populations
    }

    pub fn total(&self) -> f64 {
        self.populations.iter().sum()
    }

    pub fn manifold_total(&self, manifold: Manifold) -> f64 {
        ZeemanState::all()
            .filter(|s| s.manifold() == manifold)
            .map(|s| self.get(s))
            .sum()
    }
}

/// Exact solution of the symmetric two-state rate equations
/// dp_g/dt = -γ p_g + γ p_e, dp_e/dt = γ p_g - γ p_e.
///
/// Both populations relax toward their mean with time constant 1/(2γ).
pub fn incoherent_pair_evolve(p_g: f64, p_e: f64, gamma: f64, t: f64) -> (f64, f64) {
    debug_assert!(gamma >= 0.0 && t >= 0.0);
    if gamma * t == 0.0 {
        return (p_g, p_e);
    }
    let mean = 0.5 * (p_g + p_e);
    let half_diff = 0.5 * (p_g - p_e) * (-2.0 * gamma * t).exp();
    (mean + half_diff, mean - half_diff)
}

/// Evolve every |3,m> <-> |4,m> pair for time `t` with the given per-transition rates.
/// The F=4 edge states |4,±4> are untouched.
pub fn evolve_with_rates(
    state: &PopulationState,
    rates: &[f64; NUM_TRANSITIONS],
    t: f64,
) -> PopulationState {
    let mut populations = state.populations;
    for m in transition_ms() {
        let g = transition_index(m);
        let e = NUM_TRANSITIONS + (m + 4) as usize;
        let (pg, pe) = incoherent_pair_evolve(
            populations[g],
            populations[e],
            rates[transition_index(m)],
            t,
        );
        populations[g] = pg;
        populations[e] = pe;
    }
    PopulationState { populations }
}

/// Incoherent Raman drive for time `t` with rates taken from `spectrum`.
pub fn incoherent_step(
    state: &PopulationState,
    spectrum: &PowerSpectrum,
    cal: &RateCalibration,
    params: &AtomParams,
    t: f64,
) -> Result<PopulationState> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid(
            "t",
            format!("must be finite and >= 0, got {t}"),
        ));
    }
    let rates = rate_table(spectrum, cal, params)?;
    Ok(evolve_with_rates(state, &rates, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepumpMode {
    IdealUniform,
    Partial,
}

/// Repumping to F=3 as a single stochastic map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RepumpModelFile", into = "RepumpModelFile")]
pub struct RepumpModel {
    pub mode: RepumpMode,
    /// Fraction of F=4 population moved to F=3 per application.
    pub completeness: f64,
    /// Where the moved population lands, indexed by `transition_index(m)`.
    pub distribution: [f64; NUM_TRANSITIONS],
}

impl RepumpModel {
    pub fn ideal_uniform() -> Self {
        RepumpModel {
            mode: RepumpMode::IdealUniform,
            completeness: 1.0,
            distribution: [1.0 / NUM_TRANSITIONS as f64; NUM_TRANSITIONS],
        }
    }

    pub fn partial(completeness: f64, distribution: [f64; NUM_TRANSITIONS]) -> Result<Self> {
        let model = RepumpModel {
            mode: RepumpMode::Partial,
            completeness,
            distribution,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.completeness) {
            return Err(Error::invalid(
                "repump.completeness",
                format!("must lie in [0, 1], got {}", self.completeness),
            ));
        }
        if self
            .distribution
            .iter()
            .any(|d| !(d.is_finite() && *d >= 0.0))
        {
            return Err(Error::invalid(
                "repump.distribution",
                "entries must be >= 0",
            ));
        }
        let sum: f64 = self.distribution.iter().sum();
        if (sum - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::invalid(
                "repump.distribution",
                format!("entries sum to {sum}, not 1"),
            ));
        }
        Ok(())
    }
}

impl Default for RepumpModel {
    fn default() -> Self {
        Self::ideal_uniform()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RepumpModelFile {
    mode: RepumpMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    completeness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distribution: Option<Vec<f64>>,
}

impl TryFrom<RepumpModelFile> for RepumpModel {
    type Error = Error;

    fn try_from(file: RepumpModelFile) -> Result<Self> {
        match file.mode {
            RepumpMode::IdealUniform => {
                if file.completeness.is_some() || file.distribution.is_some() {
                    return Err(Error::invalid(
                        "repump",
                        "ideal_uniform takes no completeness or distribution",
                    ));
                }
                Ok(RepumpModel::ideal_uniform())
            }
            RepumpMode::Partial => {
                let distribution = match file.distribution {
                    None => RepumpModel::ideal_uniform().distribution,
                    Some(d) => d.as_slice().try_into().map_err(|_| {
                        Error::invalid(
                            "repump.distribution",
                            format!("expected {NUM_TRANSITIONS} entries, got {}", d.len()),
                        )
                    })?,
                };
                RepumpModel::partial(file.completeness.unwrap_or(1.0), distribution)
            }
        }
    }
}

impl From<RepumpModel> for RepumpModelFile {
    fn from(model: RepumpModel) -> Self {
        match model.mode {
            RepumpMode::IdealUniform => RepumpModelFile {
                mode: model.mode,
                completeness: None,
                distribution: None,
            },
            RepumpMode::Partial => RepumpModelFile {
                mode: model.mode,
                completeness: Some(model.completeness),
                distribution: Some(model.distribution.to_vec()),
            },
        }
    }
}

/// Move `completeness` of all F=4 population (edge states included) into F=3.
pub fn apply_repump(state: &PopulationState, model: &RepumpModel) -> PopulationState {
    let mut populations = state.populations;
    let moved: f64 = populations[NUM_TRANSITIONS..].iter().sum::<f64>() * model.completeness;
    for p in &mut populations[NUM_TRANSITIONS..] {
        *p *= 1.0 - model.completeness;
    }
    for (p, d) in populations[..NUM_TRANSITIONS]
        .iter_mut()
        .zip(&model.distribution)
    {
        *p += moved * d;
    }
    PopulationState { populations }
}

/// Depolarize the dark state: a fraction `1 - exp(-rate·t)` of |3,target> is spread
/// uniformly over F=3.
pub fn apply_leak(state: &PopulationState, target_m: i32, rate: f64, t: f64) -> PopulationState {
    let mut populations = state.populations;
    let i = transition_index(target_m);
    let lost = populations[i] * -(-rate * t).exp_m1();
    populations[i] -= lost;
    for p in &mut populations[..NUM_TRANSITIONS] {
        *p += lost / NUM_TRANSITIONS as f64;
    }
    PopulationState { populations }
}

/// 14 repump pulses of 300 ns.
pub const DEFAULT_REPUMP_DURATION: f64 = 14.0 * 300e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpProtocol {
    pub target_m: i32,
    /// s
    pub raman_duration: f64,
    pub iterations: usize,
    pub repump: RepumpModel,
    /// s⁻¹
    pub leak_rate: f64,
    /// s
    pub repump_duration: f64,
}

impl Default for PumpProtocol {
    fn default() -> Self {
        PumpProtocol {
            target_m: 0,
            raman_duration: 10e-6,
            iterations: 40,
            repump: RepumpModel::ideal_uniform(),
            leak_rate: 0.0,
            repump_duration: DEFAULT_REPUMP_DURATION,
        }
    }
}

impl PumpProtocol {
    pub fn validate(&self) -> Result<()> {
        check_transition_m(self.target_m)?;
        if !(self.raman_duration.is_finite() && self.raman_duration > 0.0) {
            return Err(Error::invalid(
                "protocol.raman_duration",
                "must be finite and > 0",
            ));
        }
        if !(self.leak_rate.is_finite() && self.leak_rate >= 0.0) {
            return Err(Error::invalid(
                "protocol.leak_rate",
                "must be finite and >= 0",
            ));
        }
        if !(self.repump_duration.is_finite() && self.repump_duration >= 0.0) {
            return Err(Error::invalid(
                "protocol.repump_duration",
                "must be finite and >= 0",
            ));
        }
        self.repump.validate()
    }

    /// Wall time of one Raman + repump iteration, over which the leak acts.
    pub fn iteration_time(&self) -> f64 {
        self.raman_duration + self.repump_duration
    }
}

/// JSON form of [`PumpProtocol`]; durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub target_m: i32,
    pub raman_duration: f64,
    pub iterations: usize,
    pub repump: RepumpModel,
    pub leak_rate: f64,
    pub repump_duration: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        let p = PumpProtocol::default();
        ProtocolConfig {
            target_m: p.target_m,
            raman_duration: p.raman_duration,
            iterations: p.iterations,
            repump: p.repump,
            leak_rate: p.leak_rate,
            repump_duration: p.repump_duration,
        }
    }
}

impl ProtocolConfig {
    pub fn to_protocol(&self) -> Result<PumpProtocol> {
        let p = PumpProtocol {
            target_m: self.target_m,
            raman_duration: self.raman_duration,
            iterations: self.iterations,
            repump: self.repump,
            leak_rate: self.leak_rate,
            repump_duration: self.repump_duration,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<&PumpProtocol> for ProtocolConfig {
    fn from(p: &PumpProtocol) -> Self {
        ProtocolConfig {
            target_m: p.target_m,
            raman_duration: p.raman_duration,
            iterations: p.iterations,
            repump: p.repump,
            leak_rate: p.leak_rate,
            repump_duration: p.repump_duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub p3_target: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct PumpOutcome {
    pub final_state: PopulationState,
    /// Row 0 is the initial state; row k follows iteration k.
    pub trace: Vec<TraceRow>,
}

/// Iterate [incoherent drive; repump; leak] `protocol.iterations` times.
pub fn run_pump_protocol(
    initial: &PopulationState,
    protocol: &PumpProtocol,
    spectrum: &PowerSpectrum,
    cal: &RateCalibration,
    params: &AtomParams,
) -> Result<PumpOutcome> {
    protocol.validate()?;
    let rates = rate_table(spectrum, cal, params)?;
    Ok(run_pump_with_rates(initial, protocol, &rates))
}

/// [`run_pump_protocol`] with a precomputed rate table.
pub fn run_pump_with_rates(
    initial: &PopulationState,
    protocol: &PumpProtocol,
    rates: &[f64; NUM_TRANSITIONS],
) -> PumpOutcome {
    let target = protocol.target_m;
    let row = |iteration, s: &PopulationState| TraceRow {
        iteration,
        p3_target: s.f3(target),
        total: s.total(),
    };
    let mut state = initial.clone();
    let mut trace = Vec::with_capacity(protocol.iterations + 1);
    trace.push(row(0, &state));
    let wall = protocol.iteration_time();
    for k in 1..=protocol.iterations {
        state = evolve_with_rates(&state, rates, protocol.raman_duration);
        state = apply_repump(&state, &protocol.repump);
        if protocol.leak_rate > 0.0 {
            state = apply_leak(&state, target, protocol.leak_rate, wall);
        }
        trace.push(row(k, &state));
    }
    PumpOutcome {
        final_state: state,
        trace,
    }
}

/// Probability that a Raman pulse moves |3,m> to |4,m>.
///
/// With `decohered` set, the Rabi oscillation is replaced by its time average,
/// the Lorentzian ½·Ω²/(Ω² + δ²); otherwise the two-level Rabi formula is used.
pub fn coherent_transfer_probability(
    m: i32,
    delta_r: f64,
    duration: f64,
    params: &AtomParams,
    decohered: bool,
) -> Result<f64> {
    params.require_coherent_drive()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid("duration", "must be finite and > 0"));
    }
    let rabi = effective_rabi(m, params)?;
    let detuning = effective_detuning(delta_r, m, params)?;
    let rabi_sq = rabi * rabi;
    let general_sq = rabi_sq + detuning * detuning;
    let envelope = rabi_sq / general_sq;
    if decohered {
        Ok(0.5 * envelope)
    } else {
        let s = (0.5 * general_sq.sqrt() * duration).sin();
        Ok(envelope * s * s)
    }
}
