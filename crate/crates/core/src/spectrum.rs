//! Beat-note power spectra and their conversion into incoherent Raman rates.
//!
//! Spectra live on a grid of offsets (Hz) from the hyperfine splitting and carry
//! power in dBm per reference bandwidth, the way a spectrum analyzer reports them.
//! A rate computation converts to linear power exactly once.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::atom::{
    angular_to_hz, check_transition_m, coupling_factor, hz_to_angular, transition_index,
    transition_ms, AtomParams, NUM_TRANSITIONS,
};
use crate::error::{Error, Result};

/// Reference bandwidth of the spectrum analyzer traces, Hz.
pub const DEFAULT_REF_BANDWIDTH_HZ: f64 = 3e3;

/// Upper bound on synthesized grid size.
const MAX_GRID_POINTS: usize = 20_000_001;

/// Convert dBm to milliwatts; `-inf` maps to exactly zero.
#[inline]
pub fn dbm_to_mw(dbm: f64) -> f64 {
    if dbm == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(dbm / 10.0)
    }
}

/// Convert milliwatts to dBm; zero maps to `-inf`.
#[inline]
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// RF power versus beat-note offset, in dBm per `ref_bandwidth_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    offsets_hz: Vec<f64>,
    power_dbm: Vec<f64>,
    ref_bandwidth_hz: f64,
}

impl PowerSpectrum {
    pub fn new(offsets_hz: Vec<f64>, power_dbm: Vec<f64>, ref_bandwidth_hz: f64) -> Result<Self> {
        if offsets_hz.len() != power_dbm.len() {
            return Err(Error::invalid(
                "spectrum",
                format!(
                    "{} offsets but {} power values",
                    offsets_hz.len(),
                    power_dbm.len()
                ),
            ));
        }
        if offsets_hz.len() < 2 {
            return Err(Error::invalid("spectrum", "need at least two grid points"));
        }
        if !(ref_bandwidth_hz.is_finite() && ref_bandwidth_hz > 0.0) {
            return Err(Error::invalid(
                "ref_bandwidth_hz",
                format!("must be finite and > 0, got {ref_bandwidth_hz}"),
            ));
        }
        if offsets_hz.iter().any(|f| !f.is_finite()) {
            return Err(Error::invalid("spectrum", "offsets must be finite"));
        }
        if let Some(w) = offsets_hz.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "spectrum",
                format!("offsets not strictly increasing at {} -> {}", w[0], w[1]),
            ));
        }
        if let Some(p) = power_dbm
            .iter()
            .find(|p| p.is_nan() || **p == f64::INFINITY)
        {
            return Err(Error::invalid(
                "spectrum",
                format!("power {p} dBm is not a finite value or -inf"),
            ));
        }
        Ok(PowerSpectrum {
            offsets_hz,
            power_dbm,
            ref_bandwidth_hz,
        })
    }

    /// Flat spectrum at `level_dbm` on the grid `start_hz, start_hz + step_hz, ..., <= stop_hz`.
    pub fn flat(
        start_hz: f64,
        stop_hz: f64,
        step_hz: f64,
        level_dbm: f64,
        ref_bandwidth_hz: f64,
    ) -> Result<Self> {
        if !(step_hz > 0.0 && stop_hz > start_hz) {
            return Err(Error::invalid(
                "spectrum",
                "flat grid needs step > 0 and stop > start",
            ));
        }
        let n = ((stop_hz - start_hz) / step_hz + 1e-9).floor() as usize + 1;
        let offsets: Vec<f64> = (0..n).map(|k| start_hz + k as f64 * step_hz).collect();
        let power = vec![level_dbm; n];
        Self::new(offsets, power, ref_bandwidth_hz)
    }

    pub fn offsets_hz(&self) -> &[f64] {
        &self.offsets_hz
    }

    pub fn power_dbm(&self) -> &[f64] {
        &self.power_dbm
    }

    pub fn ref_bandwidth_hz(&self) -> f64 {
        self.ref_bandwidth_hz
    }

    pub fn len(&self) -> usize {
        self.offsets_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets_hz.is_empty()
    }

    pub fn range_hz(&self) -> (f64, f64) {
        (self.offsets_hz[0], *self.offsets_hz.last().unwrap())
    }

    /// Largest spacing between adjacent grid points.
    pub fn max_step_hz(&self) -> f64 {
        self.offsets_hz
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Same grid with every bin shifted by `delta_db`.
    pub fn shifted_db(&self, delta_db: f64) -> Self {
        PowerSpectrum {
            offsets_hz: self.offsets_hz.clone(),
            power_dbm: self.power_dbm.iter().map(|p| p + delta_db).collect(),
            ref_bandwidth_hz: self.ref_bandwidth_hz,
        }
    }

    /// Power at `offset_hz`, linear in dB between grid points, exact on them.
    ///
    /// An interval with a `-inf` endpoint reads `-inf` everywhere strictly inside it.
    pub fn power_at(&self, offset_hz: f64) -> Result<f64> {
        let (lo, hi) = self.range_hz();
        if !(offset_hz >= lo && offset_hz <= hi) {
            return Err(Error::OutOfRange {
                offset_hz,
                min_hz: lo,
                max_hz: hi,
            });
        }
        let i = self.offsets_hz.partition_point(|&f| f <= offset_hz);
        // i >= 1 because offsets[0] <= offset_hz.
        let left = i - 1;
        if self.offsets_hz[left] == offset_hz {
            return Ok(self.power_dbm[left]);
        }
        let right = i;
        let (f0, f1) = (self.offsets_hz[left], self.offsets_hz[right]);
        let (p0, p1) = (self.power_dbm[left], self.power_dbm[right]);
        if p0 == f64::NEG_INFINITY || p1 == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let t = (offset_hz - f0) / (f1 - f0);
        Ok(p0 + t * (p1 - p0))
    }
}

/// Parameters of the synthesized noise chain: flat source, high-pass and low-pass
/// filters with asymptotic log-linear skirts, and a rectangular notch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseChainConfig {
    #[serde(default = "defaults::source_level_dbm")]
    pub source_level_dbm: f64,
    #[serde(default = "defaults::source_band_hz")]
    pub source_band_hz: f64,
    /// 0 disables the high-pass.
    #[serde(default = "defaults::highpass_cutoff_hz")]
    pub highpass_cutoff_hz: f64,
    #[serde(default = "defaults::lowpass_cutoff_hz")]
    pub lowpass_cutoff_hz: f64,
    #[serde(default = "defaults::rolloff_db_per_octave")]
    pub rolloff_db_per_octave: f64,
    /// Offset at which the filtered baseband noise is centered (the mixing carrier).
    /// The filter skirts are mirrored about this point.
    #[serde(default)]
    pub carrier_offset_hz: f64,
    #[serde(default)]
    pub notch_center_hz: f64,
    #[serde(default = "defaults::notch_width_hz")]
    pub notch_width_hz: f64,
    #[serde(default = "defaults::notch_depth_db", with = "crate::config::db_value")]
    pub notch_depth_db: f64,
    #[serde(default = "defaults::grid_step_hz")]
    pub grid_step_hz: f64,
    #[serde(default = "defaults::ref_bandwidth_hz")]
    pub ref_bandwidth_hz: f64,
}

mod defaults {
    pub fn source_level_dbm() -> f64 {
        -63.0
    }
    pub fn source_band_hz() -> f64 {
        10e6
    }
    pub fn highpass_cutoff_hz() -> f64 {
        500e3
    }
    pub fn lowpass_cutoff_hz() -> f64 {
        5e6
    }
    pub fn rolloff_db_per_octave() -> f64 {
        60.0
    }
    pub fn notch_width_hz() -> f64 {
        400e3
    }
    pub fn notch_depth_db() -> f64 {
        40.0
    }
    pub fn grid_step_hz() -> f64 {
        1e3
    }
    pub fn ref_bandwidth_hz() -> f64 {
        super::DEFAULT_REF_BANDWIDTH_HZ
    }
}

impl Default for NoiseChainConfig {
    fn default() -> Self {
        NoiseChainConfig {
            source_level_dbm: defaults::source_level_dbm(),
            source_band_hz: defaults::source_band_hz(),
            highpass_cutoff_hz: defaults::highpass_cutoff_hz(),
            lowpass_cutoff_hz: defaults::lowpass_cutoff_hz(),
            rolloff_db_per_octave: defaults::rolloff_db_per_octave(),
            carrier_offset_hz: 0.0,
            notch_center_hz: 0.0,
            notch_width_hz: defaults::notch_width_hz(),
            notch_depth_db: defaults::notch_depth_db(),
            grid_step_hz: defaults::grid_step_hz(),
            ref_bandwidth_hz: defaults::ref_bandwidth_hz(),
        }
    }
}

impl NoiseChainConfig {
    /// Place both the carrier and the notch on transition `m`.
    pub fn targeting(mut self, m: i32, params: &AtomParams) -> Self {
        let offset = angular_to_hz(params.omega_b * m as f64);
        self.carrier_offset_hz = offset;
        self.notch_center_hz = offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("source_level_dbm", self.source_level_dbm),
            ("source_band_hz", self.source_band_hz),
            ("highpass_cutoff_hz", self.highpass_cutoff_hz),
            ("lowpass_cutoff_hz", self.lowpass_cutoff_hz),
            ("rolloff_db_per_octave", self.rolloff_db_per_octave),
            ("carrier_offset_hz", self.carrier_offset_hz),
            ("notch_center_hz", self.notch_center_hz),
            ("notch_width_hz", self.notch_width_hz),
            ("grid_step_hz", self.grid_step_hz),
            ("ref_bandwidth_hz", self.ref_bandwidth_hz),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite, got {v}")));
            }
        }
        if !(0.0 <= self.highpass_cutoff_hz
            && self.highpass_cutoff_hz < self.lowpass_cutoff_hz
            && self.lowpass_cutoff_hz <= self.source_band_hz)
        {
            return Err(Error::invalid(
                "noise_chain",
                format!(
                    "need 0 <= highpass ({}) < lowpass ({}) <= source band ({})",
                    self.highpass_cutoff_hz, self.lowpass_cutoff_hz, self.source_band_hz
                ),
            ));
        }
        if self.rolloff_db_per_octave <= 0.0 {
            return Err(Error::invalid("rolloff_db_per_octave", "must be > 0"));
        }
        if self.notch_width_hz <= 0.0 {
            return Err(Error::invalid("notch_width_hz", "must be > 0"));
        }
        if self.notch_depth_db.is_nan() || self.notch_depth_db < 0.0 {
            return Err(Error::invalid("notch_depth_db", "must be >= 0"));
        }
        if self.ref_bandwidth_hz <= 0.0 {
            return Err(Error::invalid("ref_bandwidth_hz", "must be > 0"));
        }
        if self.grid_step_hz <= 0.0 {
            return Err(Error::invalid("grid_step_hz", "must be > 0"));
        }
        if self.grid_step_hz > self.notch_width_hz {
            return Err(Error::UnderResolved(format!(
                "grid step {} Hz exceeds notch width {} Hz",
                self.grid_step_hz, self.notch_width_hz
            )));
        }
        let half_points = (self.source_band_hz / self.grid_step_hz).floor();
        if 2.0 * half_points + 1.0 > MAX_GRID_POINTS as f64 {
            return Err(Error::invalid(
                "grid_step_hz",
                format!("grid of {} points is too large", 2.0 * half_points + 1.0),
            ));
        }
        Ok(())
    }

    /// Filter-chain level (no notch) at baseband distance `u_hz >= 0` from the carrier.
    fn chain_level_dbm(&self, u_hz: f64) -> f64 {
        if u_hz > self.source_band_hz {
            return f64::NEG_INFINITY;
        }
        let mut level = self.source_level_dbm;
        if u_hz < self.highpass_cutoff_hz {
            // log2(fc / 0) = inf gives -inf at the carrier itself.
            level -= self.rolloff_db_per_octave * (self.highpass_cutoff_hz / u_hz).log2();
        }
        if u_hz > self.lowpass_cutoff_hz {
            level -= self.rolloff_db_per_octave * (u_hz / self.lowpass_cutoff_hz).log2();
        }
        level
    }
}

/// Synthesize the tailored noise spectrum on a grid symmetric about the carrier.
pub fn synthesize_noise_spectrum(config: &NoiseChainConfig) -> Result<PowerSpectrum> {
    config.validate()?;
    let half = (config.source_band_hz / config.grid_step_hz + 1e-9).floor() as i64;
    let half_width = 0.5 * config.notch_width_hz;
    let n = (2 * half + 1) as usize;
    let mut offsets = Vec::with_capacity(n);
    let mut power = Vec::with_capacity(n);
    for k in -half..=half {
        let u = k.unsigned_abs() as f64 * config.grid_step_hz;
        let offset = config.carrier_offset_hz + k as f64 * config.grid_step_hz;
        let mut level = config.chain_level_dbm(u);
        if (offset - config.notch_center_hz).abs() <= half_width {
            level -= config.notch_depth_db;
        }
        offsets.push(offset);
        power.push(level);
    }
    PowerSpectrum::new(offsets, power, config.ref_bandwidth_hz)
}

/// Coherent-drive calibration eliminating the photodetector scale factor:
/// a monochromatic beat spike of integrated power `coherent_power_dbm` drives
/// Rabi frequency `coherent_rabi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCalibration {
    pub coherent_power_dbm: f64,
    /// rad/s
    pub coherent_rabi: f64,
    pub ref_bandwidth_hz: f64,
}

impl RateCalibration {
    pub fn new(coherent_power_dbm: f64, coherent_rabi: f64, ref_bandwidth_hz: f64) -> Result<Self> {
        let cal = RateCalibration {
            coherent_power_dbm,
            coherent_rabi,
            ref_bandwidth_hz,
        };
        cal.validate()?;
        Ok(cal)
    }

    /// P_c = -36 dBm at Omega_0 = 2π·120 kHz, 3 kHz bandwidth.
    pub fn typical() -> Self {
        RateCalibration {
            coherent_power_dbm: -36.0,
            coherent_rabi: hz_to_angular(120e3),
            ref_bandwidth_hz: DEFAULT_REF_BANDWIDTH_HZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.coherent_power_dbm.is_finite() {
            return Err(Error::invalid("coherent_power_dbm", "must be finite"));
        }
        if !(self.coherent_rabi.is_finite() && self.coherent_rabi > 0.0) {
            return Err(Error::invalid("coherent_rabi", "must be finite and > 0"));
        }
        if !(self.ref_bandwidth_hz.is_finite() && self.ref_bandwidth_hz > 0.0) {
            return Err(Error::invalid("ref_bandwidth_hz", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Calibration factor alpha = Omega_c² / P_c for transition m, in (rad/s)² per mW.
    pub fn alpha(&self, m: i32) -> f64 {
        coupling_factor(m) * self.coherent_rabi.powi(2) / dbm_to_mw(self.coherent_power_dbm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub coherent_power_dbm: f64,
    pub coherent_rabi_hz: f64,
    #[serde(default = "defaults::ref_bandwidth_hz")]
    pub ref_bandwidth_hz: f64,
}

impl CalibrationConfig {
    pub fn to_calibration(&self) -> Result<RateCalibration> {
        RateCalibration::new(
            self.coherent_power_dbm,
            hz_to_angular(self.coherent_rabi_hz),
            self.ref_bandwidth_hz,
        )
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            coherent_power_dbm: -36.0,
            coherent_rabi_hz: 120e3,
            ref_bandwidth_hz: DEFAULT_REF_BANDWIDTH_HZ,
        }
    }
}

/// Offset (Hz) of transition m from the hyperfine splitting.
pub fn transition_offset_hz(m: i32, params: &AtomParams) -> f64 {
    angular_to_hz(params.omega_b * m as f64)
}

/// Incoherent |3,m> <-> |4,m> rate (s⁻¹), equal in both directions, using the
/// delta-function limit of the finite-time kernel:
/// (1/4)(1 - m²/16)(Ω0²/B)·P_i/P_c with P_i read at the transition offset.
pub fn incoherent_rate(
    spectrum: &PowerSpectrum,
    cal: &RateCalibration,
    m: i32,
    params: &AtomParams,
) -> Result<f64> {
    check_transition_m(m)?;
    let p_i = spectrum.power_at(transition_offset_hz(m, params))?;
    let ratio = dbm_to_mw(p_i - cal.coherent_power_dbm);
    Ok(0.25 * coupling_factor(m) * cal.coherent_rabi.powi(2) / cal.ref_bandwidth_hz * ratio)
}

/// All seven incoherent rates, indexed by `transition_index(m)`.
pub fn rate_table(
    spectrum: &PowerSpectrum,
    cal: &RateCalibration,
    params: &AtomParams,
) -> Result<[f64; NUM_TRANSITIONS]> {
    let mut rates = [0.0; NUM_TRANSITIONS];
    for m in transition_ms() {
        rates[transition_index(m)] = incoherent_rate(spectrum, cal, m, params)?;
    }
    Ok(rates)
}

/// Finite-time line-shape kernel D(x) = sin²x / (π x²), unit area.
#[inline]
pub fn sinc_kernel(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        // sin²x/x² = 1 - x²/3 + O(x⁴)
        (1.0 - x * x / 3.0) / PI
    } else {
        let s = x.sin();
        s * s / (PI * x * x)
    }
}

/// Grid points per 1/t required by [`rate_via_sinc_integral`].
pub const SINC_POINTS_PER_INVERSE_T: f64 = 8.0;

/// Rate from the finite-time kernel integrated against the power spectral density
/// over the spectrum grid (trapezoid rule). Power outside the grid counts as zero.
pub fn rate_via_sinc_integral(
    spectrum: &PowerSpectrum,
    cal: &RateCalibration,
    m: i32,
    params: &AtomParams,
    t: f64,
) -> Result<f64> {
    check_transition_m(m)?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(
            "t",
            format!("must be finite and > 0, got {t}"),
        ));
    }
    let step = spectrum.max_step_hz();
    if step * SINC_POINTS_PER_INVERSE_T * t > 1.0 {
        return Err(Error::UnderResolved(format!(
            "grid step {step} Hz does not resolve 1/t = {} Hz",
            1.0 / t
        )));
    }
    let center = transition_offset_hz(m, params);
    // gamma = (π/4) α t ∫ S(ω) D((ω-ω_A)t/2) dω with S(ω) = P(ν)/(2πB), dω = 2π dν.
    let integrand = |f: f64, p_dbm: f64| dbm_to_mw(p_dbm) * sinc_kernel(PI * (f - center) * t);
    let offsets = spectrum.offsets_hz();
    let power = spectrum.power_dbm();
    let mut integral = 0.0;
    let mut prev = integrand(offsets[0], power[0]);
    for i in 1..offsets.len() {
        let cur = integrand(offsets[i], power[i]);
        integral += 0.5 * (prev + cur) * (offsets[i] - offsets[i - 1]);
        prev = cur;
    }
    Ok(0.25 * PI * cal.alpha(m) * t * integral / spectrum.ref_bandwidth_hz())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat(level: f64) -> PowerSpectrum {
        PowerSpectrum::flat(-10e6, 10e6, 1e3, level, 3e3).unwrap()
    }

    #[test]
    fn filter_skirts_and_passband() {
        let cfg = NoiseChainConfig {
            notch_center_hz: 2730e3,
            ..NoiseChainConfig::default()
        };
        let s = synthesize_noise_spectrum(&cfg).unwrap();
        let level = cfg.source_level_dbm;
        assert_relative_eq!(s.power_at(250e3).unwrap(), level - 60.0, epsilon = 1e-12);
        assert_relative_eq!(s.power_at(-250e3).unwrap(), level - 60.0, epsilon = 1e-12);
        assert_eq!(s.power_at(2e6).unwrap(), level);
        assert_eq!(s.power_at(-2e6).unwrap(), level);
        assert_relative_eq!(s.power_at(10e6).unwrap(), level - 60.0, epsilon = 1e-12);
        assert_eq!(s.power_at(2730e3).unwrap(), level - cfg.notch_depth_db);
        // the notch is not mirrored
        assert_eq!(s.power_at(-2730e3).unwrap(), level);
        assert_eq!(s.power_at(0.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn notch_at_zero_attenuates_at_least_depth() {
        let cfg = NoiseChainConfig::default();
        let s = synthesize_noise_spectrum(&cfg).unwrap();
        assert!(s.power_at(0.0).unwrap() <= cfg.source_level_dbm - cfg.notch_depth_db);
        assert_relative_eq!(
            s.power_at(150e3).unwrap(),
            cfg.source_level_dbm - 60.0 * (500.0f64 / 150.0).log2() - cfg.notch_depth_db,
            epsilon = 1e-9
        );
    }

    #[test]
    fn zero_highpass_leaves_carrier_lit() {
        let cfg = NoiseChainConfig {
            highpass_cutoff_hz: 0.0,
            notch_depth_db: 0.0,
            ..NoiseChainConfig::default()
        };
        let s = synthesize_noise_spectrum(&cfg).unwrap();
        assert_eq!(s.power_at(0.0).unwrap(), -63.0);
        assert_eq!(s.power_at(4e6).unwrap(), -63.0);
    }

    #[test]
    fn carrier_shift_moves_whole_chain() {
        let cfg = NoiseChainConfig::default().targeting(1, &AtomParams::typical());
        let s = synthesize_noise_spectrum(&cfg).unwrap();
        assert_eq!(s.power_at(910e3).unwrap(), f64::NEG_INFINITY);
        assert_relative_eq!(s.power_at(910e3 + 250e3).unwrap(), -123.0, epsilon = 1e-9);
        for m in [-3, -2, -1, 0, 2, 3] {
            let f = transition_offset_hz(m, &AtomParams::typical());
            assert_relative_eq!(s.power_at(f).unwrap(), -63.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = NoiseChainConfig::default();
        let a = synthesize_noise_spectrum(&cfg).unwrap();
        let b = synthesize_noise_spectrum(&cfg).unwrap();
        assert_eq!(a.len(), 20001);
        for (x, y) in a.power_dbm().iter().zip(b.power_dbm()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn synthesis_rejects_bad_configs() {
        let coarse = NoiseChainConfig {
            grid_step_hz: 500e3,
            ..NoiseChainConfig::default()
        };
        assert!(matches!(
            synthesize_noise_spectrum(&coarse),
            Err(Error::UnderResolved(_))
        ));
        let inverted = NoiseChainConfig {
            highpass_cutoff_hz: 6e6,
            ..NoiseChainConfig::default()
        };
        assert!(synthesize_noise_spectrum(&inverted).is_err());
        let no_rolloff = NoiseChainConfig {
            rolloff_db_per_octave: 0.0,
            ..NoiseChainConfig::default()
        };
        assert!(synthesize_noise_spectrum(&no_rolloff).is_err());
    }

    #[test]
    fn power_at_interpolates_in_db() {
        let s = PowerSpectrum::new(
            vec![0.0, 1e3, 2e3],
            vec![-60.0, -66.0, f64::NEG_INFINITY],
            3e3,
        )
        .unwrap();
        assert_eq!(s.power_at(1e3).unwrap(), -66.0);
        assert_eq!(s.power_at(500.0).unwrap(), -63.0);
        assert_eq!(s.power_at(1.5e3).unwrap(), f64::NEG_INFINITY);
        assert_eq!(s.power_at(2e3).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(s.power_at(2001.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(s.power_at(-1.0), Err(Error::OutOfRange { .. })));
        assert!(s.power_at(f64::NAN).is_err());
    }

    #[test]
    fn spectrum_constructor_invariants() {
        assert!(PowerSpectrum::new(vec![0.0, 0.0], vec![0.0, 0.0], 3e3).is_err());
        assert!(PowerSpectrum::new(vec![0.0, 1.0], vec![0.0], 3e3).is_err());
        assert!(PowerSpectrum::new(vec![0.0, 1.0], vec![0.0, f64::NAN], 3e3).is_err());
        assert!(PowerSpectrum::new(vec![0.0, 1.0], vec![0.0, f64::INFINITY], 3e3).is_err());
        assert!(PowerSpectrum::new(vec![0.0, 1.0], vec![0.0, 0.0], 0.0).is_err());
    }

    // Frozen from direct evaluation: 0.25 * (2π·120e3)² / 3e3 * 10^(-27/10).
    const GAMMA_M0: f64 = 94_523.758_680_694;

    #[test]
    fn incoherent_rate_examples() {
        let p = AtomParams::typical();
        let cal = RateCalibration::typical();
        let s = flat(-63.0);
        assert_relative_eq!(
            incoherent_rate(&s, &cal, 0, &p).unwrap(),
            GAMMA_M0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            incoherent_rate(&s, &cal, 2, &p).unwrap(),
            0.75 * GAMMA_M0,
            max_relative = 1e-12
        );
        assert!((incoherent_rate(&s, &cal, 2, &p).unwrap() - 7.09e4).abs() < 0.01e4);
        let dark = flat(f64::NEG_INFINITY);
        assert_eq!(incoherent_rate(&dark, &cal, 1, &p).unwrap(), 0.0);
        assert!(incoherent_rate(&s, &cal, 4, &p).is_err());
        let narrow = PowerSpectrum::flat(-1e6, 1e6, 1e3, -63.0, 3e3).unwrap();
        assert!(matches!(
            incoherent_rate(&narrow, &cal, 3, &p),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn rates_scale_linearly_and_symmetrically() {
        let p = AtomParams::typical();
        let cal = RateCalibration::typical();
        let s = synthesize_noise_spectrum(&NoiseChainConfig::default()).unwrap();
        let louder = s.shifted_db(10.0);
        let base = rate_table(&s, &cal, &p).unwrap();
        let up = rate_table(&louder, &cal, &p).unwrap();
        for (b, u) in base.iter().zip(&up) {
            assert_relative_eq!(*u, 10.0 * b, max_relative = 1e-12);
        }
        for m in 1..=3 {
            assert_eq!(base[transition_index(m)], base[transition_index(-m)]);
        }
        assert_eq!(base[transition_index(0)], 0.0);
    }

    #[test]
    fn kernel_has_unit_area() {
        // Simpson over [-X, X]; the neglected tails carry about 1/(πX).
        let x_max = 2000.0;
        let n = 400_000usize;
        let h = 2.0 * x_max / n as f64;
        let mut sum = sinc_kernel(-x_max) + sinc_kernel(x_max);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * sinc_kernel(-x_max + i as f64 * h);
        }
        let area = sum * h / 3.0;
        assert!((area - 1.0).abs() < 1e-3, "area = {area}");
        assert_relative_eq!(sinc_kernel(0.0), 1.0 / PI);
        assert_eq!(sinc_kernel(PI), sinc_kernel(PI).abs());
        assert!(sinc_kernel(PI) < 1e-30);
    }

    #[test]
    fn sinc_integral_examples() {
        let p = AtomParams::typical();
        let cal = RateCalibration::typical();
        let s = flat(-63.0);
        for t in [2e-6, 5e-6, 10e-6] {
            let closed = incoherent_rate(&s, &cal, 0, &p).unwrap();
            let integral = rate_via_sinc_integral(&s, &cal, 0, &p, t).unwrap();
            assert!(
                (integral / closed - 1.0).abs() < 0.01,
                "t={t}: {integral} vs {closed}"
            );
        }
        let zero = flat(f64::NEG_INFINITY);
        assert_eq!(
            rate_via_sinc_integral(&zero, &cal, 1, &p, 5e-6).unwrap(),
            0.0
        );
        let half = s.shifted_db(-10.0 * 2f64.log10());
        let full_rate = rate_via_sinc_integral(&s, &cal, 2, &p, 5e-6).unwrap();
        let half_rate = rate_via_sinc_integral(&half, &cal, 2, &p, 5e-6).unwrap();
        assert_relative_eq!(half_rate, 0.5 * full_rate, max_relative = 1e-12);
    }

    #[test]
    fn sinc_integral_flags_coarse_grid() {
        let p = AtomParams::typical();
        let cal = RateCalibration::typical();
        let coarse = PowerSpectrum::flat(-10e6, 10e6, 100e3, -63.0, 3e3).unwrap();
        assert!(matches!(
            rate_via_sinc_integral(&coarse, &cal, 0, &p, 10e-6),
            Err(Error::UnderResolved(_))
        ));
        assert!(rate_via_sinc_integral(&coarse, &cal, 0, &p, 0.0).is_err());
    }
}
