//! Brute-force check of the incoherent rate: the noise is replaced by a comb of
//! classical lines with random phases, and the two-level amplitude equations are
//! integrated directly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atom::{check_transition_m, AtomParams};
use crate::error::{Error, Result};
use crate::spectrum::{dbm_to_mw, transition_offset_hz, PowerSpectrum, RateCalibration};

/// One comb line: detuning from the transition and its Rabi frequency, both rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombLine {
    pub detuning: f64,
    pub rabi: f64,
}

/// Integrate i·dc_e/dt = E(t)·c_g, i·dc_g/dt = E*(t)·c_e from c_g = 1 with
/// E(t) = Σ_k (Ω_k/2)·exp(-i(δ_k t + φ_k)), fourth-order Runge-Kutta.
///
/// Returns (c_g, c_e) at time `t`.
pub fn evolve_comb(
    lines: &[CombLine],
    phases: &[f64],
    t: f64,
    steps: usize,
) -> (Complex64, Complex64) {
    assert_eq!(lines.len(), phases.len());
    let steps = steps.max(1);
    let h = t / steps as f64;

    // Each line's phasor advances by exp(-iδ h/2) per half step.
    let mut phasors: Vec<Complex64> = lines
        .iter()
        .zip(phases)
        .map(|(l, &phi)| Complex64::from_polar(0.5 * l.rabi, -phi))
        .collect();
    let rotors: Vec<Complex64> = lines
        .iter()
        .map(|l| Complex64::from_polar(1.0, -0.5 * l.detuning * h))
        .collect();
    let advance = |phasors: &mut [Complex64]| -> Complex64 {
        let mut field = Complex64::new(0.0, 0.0);
        for (z, r) in phasors.iter_mut().zip(&rotors) {
            *z *= r;
            field += *z;
        }
        field
    };

    let minus_i = Complex64::new(0.0, -1.0);
    let deriv = |field: Complex64, cg: Complex64, ce: Complex64| {
        (minus_i * field.conj() * ce, minus_i * field * cg)
    };

    let mut cg = Complex64::new(1.0, 0.0);
    let mut ce = Complex64::new(0.0, 0.0);
    let mut field_start: Complex64 = phasors.iter().sum();
    for _ in 0..steps {
        let field_mid = advance(&mut phasors);
        let field_end = advance(&mut phasors);
        let (k1g, k1e) = deriv(field_start, cg, ce);
        let (k2g, k2e) = deriv(field_mid, cg + 0.5 * h * k1g, ce + 0.5 * h * k1e);
        let (k3g, k3e) = deriv(field_mid, cg + 0.5 * h * k2g, ce + 0.5 * h * k2e);
        let (k4g, k4e) = deriv(field_end, cg + h * k3g, ce + h * k3e);
        cg += h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g);
        ce += h / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e);
        field_start = field_end;
    }
    (cg, ce)
}

/// Discretization and sampling settings for [`comb_oracle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSettings {
    /// Interaction times, s.
    pub times: Vec<f64>,
    /// Transition to probe.
    pub m: i32,
    /// Number of random-phase realizations; seeds are `base_seed + k`.
    pub num_seeds: usize,
    /// Comb lines per 1/t of bandwidth.
    pub lines_per_inverse_t: f64,
    /// Total comb bandwidth in units of 1/t, clipped to the spectrum grid.
    pub window_inverse_t: f64,
    /// Runge-Kutta steps over the interaction time.
    pub steps: usize,
    /// Mean transferred population above which the run is flagged non-perturbative.
    pub perturbative_limit: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            times: vec![0.03e-6, 0.1e-6, 0.3e-6],
            m: 0,
            num_seeds: 4096,
            lines_per_inverse_t: 2.0,
            window_inverse_t: 40.0,
            steps: 1000,
            perturbative_limit: 0.1,
        }
    }
}

impl OracleSettings {
    pub fn validate(&self) -> Result<()> {
        check_transition_m(self.m)?;
        if self.times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::invalid(
                "oracle.times",
                "all times must be finite and > 0",
            ));
        }
        if self.num_seeds == 0 {
            return Err(Error::invalid("oracle.num_seeds", "must be >= 1"));
        }
        if self.lines_per_inverse_t.is_nan() || self.lines_per_inverse_t < 1.0 {
            return Err(Error::invalid(
                "oracle.lines_per_inverse_t",
                "must be >= 1 so the comb samples the kernel faithfully",
            ));
        }
        if !(self.window_inverse_t > 0.0 && self.window_inverse_t.is_finite()) {
            return Err(Error::invalid(
                "oracle.window_inverse_t",
                "must be finite and > 0",
            ));
        }
        if self.steps == 0 {
            return Err(Error::invalid("oracle.steps", "must be >= 1"));
        }
        if !(self.perturbative_limit > 0.0 && self.perturbative_limit < 1.0) {
            return Err(Error::invalid(
                "oracle.perturbative_limit",
                "must lie in (0, 1)",
            ));
        }
        Ok(())
    }
}

/// Seed-averaged comb result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    /// Mean of |c_e(t)|²/t over seeds, s⁻¹.
    pub rate: f64,
    /// Standard error of `rate`.
    pub rate_std_error: f64,
    /// Mean |c_e(t)|².
    pub mean_population: f64,
    pub num_lines: usize,
    pub num_seeds: usize,
    pub non_perturbative: bool,
}

/// Comb lines for transition m: spacing 1/(lines_per_inverse_t·t), centred on the
/// transition, spanning `window_inverse_t / t` or the spectrum grid, whichever is
/// narrower. Ω_k² = α·S(ω_k)·δω with α from the coherent calibration.
pub fn comb_lines(
    spectrum: &PowerSpectrum,
    cal: &RateCalibration,
    m: i32,
    params: &AtomParams,
    t: f64,
    settings: &OracleSettings,
) -> Result<Vec<CombLine>> {
    check_transition_m(m)?;
    let spacing_hz = 1.0 / (settings.lines_per_inverse_t * t);
    if spectrum.max_step_hz() > spacing_hz {
        return Err(Error::UnderResolved(format!(
            "spectrum grid step {} Hz is coarser than comb spacing {spacing_hz} Hz",
            spectrum.max_step_hz()
        )));
    }
    let center = transition_offset_hz(m, params);
    let (lo, hi) = spectrum.range_hz();
    let half_window = 0.5 * settings.window_inverse_t / t;
    let k_lo = ((lo.max(center - half_window) - center) / spacing_hz).ceil() as i64;
    let k_hi = ((hi.min(center + half_window) - center) / spacing_hz).floor() as i64;
    let alpha = cal.alpha(m);
    // S(ω) = P(ν) / (2πB), δω = 2π·spacing
    let scale = alpha * spacing_hz / spectrum.ref_bandwidth_hz();
    let mut lines = Vec::new();
    for k in k_lo..=k_hi {
        let detuning_hz = k as f64 * spacing_hz;
        let power = dbm_to_mw(spectrum.power_at(center + detuning_hz)?);
        if power > 0.0 {
            lines.push(CombLine {
                detuning: 2.0 * PI * detuning_hz,
                rabi: (scale * power).sqrt(),
            });
        }
    }
    Ok(lines)
}

/// Average |c_e(t)|²/t over random-phase realizations of the comb.
pub fn comb_oracle(
    spectrum: &PowerSpectrum,
    cal: &RateCalibration,
    m: i32,
    params: &AtomParams,
    t: f64,
    seeds: &[u64],
    settings: &OracleSettings,
) -> Result<OracleEstimate> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid("t", "must be finite and > 0"));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "need at least one seed"));
    }
    let lines = comb_lines(spectrum, cal, m, params, t, settings)?;
    if lines.is_empty() {
        return Ok(OracleEstimate {
            rate: 0.0,
            rate_std_error: 0.0,
            mean_population: 0.0,
            num_lines: 0,
            num_seeds: seeds.len(),
            non_perturbative: false,
        });
    }
    let mut phases = vec![0.0; lines.len()];
    let populations: Vec<f64> = seeds
        .iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for phi in phases.iter_mut() {
                *phi = rng.random_range(0.0..2.0 * PI);
            }
            evolve_comb(&lines, &phases, t, settings.steps).1.norm_sqr()
        })
        .collect();
    let n = populations.len() as f64;
    let mean = populations.iter().sum::<f64>() / n;
    let var = if populations.len() > 1 {
        populations.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(OracleEstimate {
        rate: mean / t,
        rate_std_error: (var / n).sqrt() / t,
        mean_population: mean,
        num_lines: lines.len(),
        num_seeds: seeds.len(),
        non_perturbative: mean > settings.perturbative_limit,
    })
}

/// Seed-averaged comb rate (s⁻¹); an error if the mean transferred population
/// leaves the perturbative regime.
pub fn comb_oracle_rate(
    spectrum: &PowerSpectrum,
    cal: &RateCalibration,
    m: i32,
    params: &AtomParams,
    t: f64,
    seeds: &[u64],
) -> Result<f64> {
    let settings = OracleSettings::default();
    let est = comb_oracle(spectrum, cal, m, params, t, seeds, &settings)?;
    if est.non_perturbative {
        return Err(Error::NonPerturbative {
            population: est.mean_population,
            limit: settings.perturbative_limit,
        });
    }
    Ok(est.rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::incoherent_rate;
    use approx::assert_relative_eq;

    #[test]
    fn single_resonant_line_rabi_flops() {
        let rabi = 2.0 * PI * 50e3;
        let line = [CombLine {
            detuning: 0.0,
            rabi,
        }];
        let t = 0.2e-6;
        let (cg, ce) = evolve_comb(&line, &[1.3], t, 200);
        assert_relative_eq!(
            ce.norm_sqr(),
            (0.5 * rabi * t).sin().powi(2),
            max_relative = 1e-9
        );
        // small-t limit
        assert_relative_eq!(ce.norm_sqr(), (0.5 * rabi * t).powi(2), max_relative = 1e-3);
        assert_relative_eq!(cg.norm_sqr() + ce.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_detuned_line_matches_first_order_amplitude() {
        let (rabi, detuning) = (2.0 * PI * 10e3, 2.0 * PI * 3e6);
        let t = 1.1e-6;
        let (_, ce) = evolve_comb(&[CombLine { detuning, rabi }], &[0.0], t, 4000);
        let first_order = (rabi / (2.0 * detuning)).powi(2) * 2.0 * (1.0 - (detuning * t).cos());
        assert_relative_eq!(ce.norm_sqr(), first_order, max_relative = 1e-3);
    }

    #[test]
    fn empty_spectrum_gives_zero() {
        let p = AtomParams::typical();
        let cal = RateCalibration::typical();
        let dark = PowerSpectrum::flat(-10e6, 10e6, 10e3, f64::NEG_INFINITY, 3e3).unwrap();
        let r = comb_oracle_rate(&dark, &cal, 1, &p, 0.3e-6, &[1, 2, 3]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn flat_spectrum_agrees_with_closed_form() {
        let p = AtomParams::typical();
        let cal = RateCalibration::typical();
        let flat = PowerSpectrum::flat(-200e6, 200e6, 10e3, -63.0, 3e3).unwrap();
        let t = 0.1e-6;
        let seeds: Vec<u64> = (0..512).collect();
        let settings = OracleSettings::default();
        let est = comb_oracle(&flat, &cal, 0, &p, t, &seeds, &settings).unwrap();
        let closed = incoherent_rate(&flat, &cal, 0, &p).unwrap();
        assert!(!est.non_perturbative);
        assert!(
            (est.rate / closed - 1.0).abs() < 4.0 * est.rate_std_error / closed + 0.02,
            "{} ± {} vs {closed}",
            est.rate,
            est.rate_std_error
        );
    }

    #[test]
    fn long_times_are_flagged() {
        let p = AtomParams::typical();
        let cal = RateCalibration::typical();
        let loud = PowerSpectrum::flat(-20e6, 20e6, 10e3, -43.0, 3e3).unwrap();
        let settings = OracleSettings {
            steps: 400,
            ..OracleSettings::default()
        };
        let est = comb_oracle(&loud, &cal, 0, &p, 1e-6, &[7, 8, 9, 10], &settings).unwrap();
        assert!(est.non_perturbative);
        assert!(matches!(
            comb_oracle_rate(&loud, &cal, 0, &p, 1e-6, &[7, 8, 9, 10]),
            Err(Error::NonPerturbative { .. })
        ));
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let p = AtomParams::typical();
        let cal = RateCalibration::typical();
        let coarse = PowerSpectrum::flat(-10e6, 10e6, 1e6, -63.0, 3e3).unwrap();
        assert!(matches!(
            comb_oracle_rate(&coarse, &cal, 0, &p, 1e-6, &[1]),
            Err(Error::UnderResolved(_))
        ));
    }
}
