//! Subcommand bodies. Each one computes everything in memory and hands back the
//! files to write, so a failure never leaves half an output directory behind.

use std::path::{Path, PathBuf};

use serde::Serialize;
use zps_core::atom::{angular_to_hz, hz_to_angular, transition_ms};
use zps_core::config::RunConfig;
use zps_core::dynamics::comb::comb_oracle;
use zps_core::dynamics::run_pump_with_rates;
use zps_core::fit::{default_initial_guess, fit_scan, model_p4, FitReport};
use zps_core::io::{self, StateFile};
use zps_core::measurement::acquire_scan;
use zps_core::pipeline::{fit_background, seeded_scan_config};
use zps_core::spectrum::{incoherent_rate, rate_table, synthesize_noise_spectrum, PowerSpectrum};

use crate::error::CliError;

pub struct OutputFile {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

#[derive(Default)]
pub struct Outcome {
    pub files: Vec<OutputFile>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn file(&mut self, name: &'static str, bytes: Vec<u8>) {
        self.files.push(OutputFile { name, bytes });
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(zps_core::Error::from)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input {
        path: path.to_owned(),
        source: e.into(),
    })
}

fn load_spectrum(cfg: &RunConfig, path: Option<&Path>) -> Result<PowerSpectrum, CliError> {
    match path {
        Some(path) => {
            let text = read_input(path)?;
            io::read_spectrum(text.as_bytes(), cfg.noise_chain.ref_bandwidth_hz).map_err(|source| {
                CliError::Input {
                    path: path.to_owned(),
                    source,
                }
            })
        }
        None => Ok(synthesize_noise_spectrum(&cfg.noise_chain)?),
    }
}

pub fn synth(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spectrum = synthesize_noise_spectrum(&cfg.noise_chain)?;
    let mut buf = Vec::new();
    io::write_spectrum(&mut buf, &spectrum)?;
    let mut out = Outcome::default();
    out.file("spectrum.csv", buf);
    Ok(out)
}

pub fn rates(cfg: &RunConfig, spectrum: Option<&Path>) -> Result<Outcome, CliError> {
    let spectrum = load_spectrum(cfg, spectrum)?;
    let mut out = Outcome::default();
    let rows: Vec<_> = transition_ms()
        .map(|m| {
            let rate = incoherent_rate(&spectrum, &cfg.calibration, m, &cfg.atom)
                .map_err(|e| e.to_string());
            if let Err(msg) = &rate {
                out.warnings.push(format!("m = {m}: {msg}"));
            }
            (m, rate)
        })
        .collect();
    let mut buf = Vec::new();
    io::write_rates(&mut buf, &rows)?;
    out.file("rates.csv", buf);
    Ok(out)
}

#[derive(Serialize)]
struct PumpState {
    target_m: i32,
    p3_target: f64,
    #[serde(flatten)]
    state: StateFile,
}

pub fn pump(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let spectrum = synthesize_noise_spectrum(&cfg.noise_chain)?;
    let rates = rate_table(&spectrum, &cfg.calibration, &cfg.atom)?;
    let outcome = run_pump_with_rates(&cfg.initial_state, &cfg.protocol, &rates);
    let target = cfg.protocol.target_m;
    let state = PumpState {
        target_m: target,
        p3_target: outcome.final_state.f3(target),
        state: StateFile::from(&outcome.final_state),
    };
    let mut trace = Vec::new();
    io::write_trace(&mut trace, &outcome.trace)?;
    let mut out = Outcome::default();
    out.file("state.json", json_bytes(&state)?);
    out.file("trace.csv", trace);
    Ok(out)
}

pub fn scan(cfg: &RunConfig, state: Option<&Path>) -> Result<Outcome, CliError> {
    let initial = match state {
        Some(path) => {
            io::parse_state_json(&read_input(path)?).map_err(|source| CliError::Input {
                path: path.to_owned(),
                source,
            })?
        }
        None => cfg.initial_state.clone(),
    };
    let scan = acquire_scan(&initial, &seeded_scan_config(cfg), &cfg.atom, &cfg.readout)?;
    let mut buf = Vec::new();
    io::write_scan(&mut buf, &scan)?;
    let mut out = Outcome::default();
    out.file("scan.csv", buf);
    out.file("scan.json", json_bytes(&scan.metadata)?);
    Ok(out)
}

#[derive(Serialize)]
struct FitOutput {
    #[serde(flatten)]
    report: FitReport,
    initial_peaks_hz: Vec<f64>,
    used_fallback_guess: bool,
}

/// Points in the emitted model curve per scan point.
const CURVE_OVERSAMPLING: usize = 4;

pub fn fit(cfg: &RunConfig, scan_path: &Path) -> Result<Outcome, CliError> {
    let scan =
        io::read_scan(read_input(scan_path)?.as_bytes()).map_err(|source| CliError::Input {
            path: scan_path.to_owned(),
            source,
        })?;
    let p_b = fit_background(cfg);
    let guess = default_initial_guess(&scan, &cfg.atom, p_b)?;
    let mut out = Outcome::default();
    if guess.used_fallback {
        out.warnings.push(format!(
            "found {} peak(s); starting from the configured field {} Hz",
            guess.peaks_hz.len(),
            angular_to_hz(cfg.atom.omega_b)
        ));
    }
    let result = fit_scan(&scan, &guess.model, p_b)?;
    if !result.converged {
        return Err(CliError::NotConverged {
            iterations: result.iterations,
        });
    }

    let (lo, hi) = scan
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.delta_r_hz), hi.max(p.delta_r_hz))
        });
    let n = (scan.points.len() * CURVE_OVERSAMPLING).max(2);
    let curve: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let f = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            (f, model_p4(hz_to_angular(f), &result.parameters))
        })
        .collect();
    let mut buf = Vec::new();
    io::write_model_curve(&mut buf, &curve)?;

    let report = FitOutput {
        report: FitReport::from(&result),
        initial_peaks_hz: guess.peaks_hz,
        used_fallback_guess: guess.used_fallback,
    };
    out.file("fit.json", json_bytes(&report)?);
    out.file("model.csv", buf);
    Ok(out)
}

#[derive(Serialize)]
struct OracleRow {
    t_us: f64,
    oracle_rate_per_us: f64,
    std_error_per_us: f64,
    /// Oracle over closed form; absent when the closed form is zero.
    ratio: Option<f64>,
    mean_population: f64,
    num_lines: usize,
    num_seeds: usize,
    non_perturbative: bool,
}

#[derive(Serialize)]
struct OracleReport {
    m: i32,
    closed_form_rate_per_us: f64,
    base_seed: u64,
    non_perturbative: bool,
    points: Vec<OracleRow>,
}

pub fn oracle(cfg: &RunConfig, spectrum: Option<&Path>) -> Result<Outcome, CliError> {
    let settings = &cfg.oracle;
    let base_seed = cfg.require_seed()?;
    let spectrum = load_spectrum(cfg, spectrum)?;
    let closed = incoherent_rate(&spectrum, &cfg.calibration, settings.m, &cfg.atom)?;
    let seeds: Vec<u64> = (0..settings.num_seeds as u64)
        .map(|k| base_seed.wrapping_add(k))
        .collect();
    let mut out = Outcome::default();
    let mut points = Vec::new();
    for &t in &settings.times {
        let est = comb_oracle(
            &spectrum,
            &cfg.calibration,
            settings.m,
            &cfg.atom,
            t,
            &seeds,
            settings,
        )?;
        if est.non_perturbative {
            out.warnings.push(format!(
                "t = {} us: mean transferred population {:.4} exceeds {}",
                t * 1e6,
                est.mean_population,
                settings.perturbative_limit
            ));
        }
        points.push(OracleRow {
            t_us: t * 1e6,
            oracle_rate_per_us: est.rate * 1e-6,
            std_error_per_us: est.rate_std_error * 1e-6,
            ratio: (closed > 0.0).then(|| est.rate / closed),
            mean_population: est.mean_population,
            num_lines: est.num_lines,
            num_seeds: est.num_seeds,
            non_perturbative: est.non_perturbative,
        });
    }
    let report = OracleReport {
        m: settings.m,
        closed_form_rate_per_us: closed * 1e-6,
        base_seed,
        non_perturbative: points.iter().any(|p| p.non_perturbative),
        points,
    };
    out.file("oracle.json", json_bytes(&report)?);
    Ok(out)
}

/// Write every file, creating the directory first.
pub fn write_all(dir: &Path, files: &[OutputFile]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_owned(),
        source,
    })?;
    files
        .iter()
        .map(|f| {
            let path = dir.join(f.name);
            std::fs::write(&path, &f.bytes).map_err(|source| CliError::Output {
                path: path.clone(),
                source,
            })?;
            Ok(path)
        })
        .collect()
}
