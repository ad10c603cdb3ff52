//! End-to-end runs: noise chain → rates → pumping → scan → fit.

use crate::atom::NUM_TRANSITIONS;
use crate::config::RunConfig;
use crate::dynamics::{run_pump_with_rates, PopulationState, PumpOutcome};
use crate::error::Result;
use crate::fit::{default_initial_guess, fit_scan, FitResult, InitialGuess};
use crate::measurement::{acquire_scan, RamanScan, ScanConfig};
use crate::spectrum::{rate_table, synthesize_noise_spectrum, PowerSpectrum};

#[derive(Debug, Clone)]
pub struct PumpRun {
    pub spectrum: PowerSpectrum,
    /// Incoherent rates for m = -3..=3, s⁻¹.
    pub rates: [f64; NUM_TRANSITIONS],
    pub outcome: PumpOutcome,
}

/// Synthesize the configured spectrum and run the pumping protocol on it.
pub fn pump(cfg: &RunConfig) -> Result<PumpRun> {
    cfg.protocol.validate()?;
    let spectrum = synthesize_noise_spectrum(&cfg.noise_chain)?;
    let rates = rate_table(&spectrum, &cfg.calibration, &cfg.atom)?;
    let outcome = run_pump_with_rates(&cfg.initial_state, &cfg.protocol, &rates);
    Ok(PumpRun {
        spectrum,
        rates,
        outcome,
    })
}

/// Scan settings with the run seed filled in when the scan section has none.
pub fn seeded_scan_config(cfg: &RunConfig) -> ScanConfig {
    let mut scan = cfg.scan.clone();
    if scan.rng_seed.is_none() {
        scan.rng_seed = cfg.seed;
    }
    scan
}

/// Background level the fit should hold fixed: the configured background as it
/// appears after the readout error.
pub fn fit_background(cfg: &RunConfig) -> f64 {
    cfg.readout.report(cfg.readout.background_p4)
}

/// Scan `state` and fit the result.
pub fn scan_and_fit(
    cfg: &RunConfig,
    state: &PopulationState,
) -> Result<(RamanScan, InitialGuess, FitResult)> {
    let scan = acquire_scan(state, &seeded_scan_config(cfg), &cfg.atom, &cfg.readout)?;
    let p_b = fit_background(cfg);
    let guess = default_initial_guess(&scan, &cfg.atom, p_b)?;
    let fit = fit_scan(&scan, &guess.model, p_b)?;
    Ok((scan, guess, fit))
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub pump: PumpRun,
    pub scan: RamanScan,
    pub guess: InitialGuess,
    pub fit: FitResult,
}

/// Pump, scan and fit with one configuration.
pub fn pump_scan_fit(cfg: &RunConfig) -> Result<PipelineRun> {
    let pump = pump(cfg)?;
    let (scan, guess, fit) = scan_and_fit(cfg, &pump.outcome.final_state)?;
    Ok(PipelineRun {
        pump,
        scan,
        guess,
        fit,
    })
}
