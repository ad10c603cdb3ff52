//! Plain-text file formats: spectra, scans, traces, rate tables, model curves and
//! population-state JSON.
//!
//! CSV floats carry 10 significant digits; `-inf` dBm is written literally.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::atom::{ZeemanState, NUM_STATES};
use crate::dynamics::{PopulationState, TraceRow};
use crate::error::{Error, Result};
use crate::measurement::{RamanScan, ScanPoint};
use crate::spectrum::PowerSpectrum;

/// Round to `digits` significant digits and print the shortest representation
/// of the rounded value.
pub fn format_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), x)
        .parse()
        .expect("scientific notation parses");
    // normalise -0
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

/// CSV float formatting.
pub fn csv_float(x: f64) -> String {
    format_sig(x, 10)
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    i: usize,
    name: &str,
    line: u64,
) -> Result<T> {
    let raw = record
        .get(i)
        .ok_or_else(|| Error::Parse(format!("line {line}: missing column `{name}`")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad `{name}` value {raw:?}")))
}

fn reader<R: Read>(input: R, expected: &[&str]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?;
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(Error::Parse(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            found.join(",")
        )));
    }
    Ok(rdr)
}

fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + '_ {
    rdr.records().map(|r| {
        let rec = r.map_err(|e| Error::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        Ok((line, rec))
    })
}

pub const SPECTRUM_HEADER: [&str; 2] = ["offset_hz", "power_dbm"];

pub fn write_spectrum<W: Write>(mut out: W, spectrum: &PowerSpectrum) -> Result<()> {
    writeln!(out, "{}", SPECTRUM_HEADER.join(","))?;
    for (f, p) in spectrum.offsets_hz().iter().zip(spectrum.power_dbm()) {
        writeln!(out, "{},{}", csv_float(*f), csv_float(*p))?;
    }
    Ok(())
}

/// Parse a spectrum CSV; the reference bandwidth is not stored in the file.
pub fn read_spectrum<R: Read>(input: R, ref_bandwidth_hz: f64) -> Result<PowerSpectrum> {
    let mut rdr = reader(input, &SPECTRUM_HEADER)?;
    let mut offsets = Vec::new();
    let mut power = Vec::new();
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        if rec.len() != 2 {
            return Err(Error::Parse(format!(
                "line {line}: expected 2 columns, got {}",
                rec.len()
            )));
        }
        offsets.push(parse_field::<f64>(&rec, 0, "offset_hz", line)?);
        power.push(parse_field::<f64>(&rec, 1, "power_dbm", line)?);
    }
    PowerSpectrum::new(offsets, power, ref_bandwidth_hz).map_err(|e| Error::Parse(e.to_string()))
}

pub const SCAN_HEADER: [&str; 4] = ["delta_r_hz", "p4", "shots", "successes"];

pub fn write_scan<W: Write>(mut out: W, scan: &RamanScan) -> Result<()> {
    writeln!(out, "{}", SCAN_HEADER.join(","))?;
    for p in &scan.points {
        writeln!(
            out,
            "{},{},{},{}",
            csv_float(p.delta_r_hz),
            csv_float(p.p4),
            p.shots,
            p.successes
        )?;
    }
    Ok(())
}

/// Parse a scan CSV. Metadata lives in the JSON sidecar and is not read here.
pub fn read_scan<R: Read>(input: R) -> Result<RamanScan> {
    let mut rdr = reader(input, &SCAN_HEADER)?;
    let mut points = Vec::new();
    for rec in records(&mut rdr) {
        let (line, rec) = rec?;
        if rec.len() != 4 {
            return Err(Error::Parse(format!(
                "line {line}: expected 4 columns, got {}",
                rec.len()
            )));
        }
        points.push(ScanPoint {
            delta_r_hz: parse_field(&rec, 0, "delta_r_hz", line)?,
            p4: parse_field(&rec, 1, "p4", line)?,
            shots: parse_field(&rec, 2, "shots", line)?,
            successes: parse_field(&rec, 3, "successes", line)?,
        });
    }
    let scan = RamanScan {
        points,
        metadata: None,
    };
    scan.validate().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(scan)
}

pub fn write_trace<W: Write>(mut out: W, trace: &[TraceRow]) -> Result<()> {
    writeln!(out, "iteration,p3_target,total")?;
    for row in trace {
        writeln!(
            out,
            "{},{},{}",
            row.iteration,
            csv_float(row.p3_target),
            csv_float(row.total)
        )?;
    }
    Ok(())
}

/// Rate table rows: m and rate in µs⁻¹, or an error message for that row.
pub fn write_rates<W: Write>(
    mut out: W,
    rows: &[(i32, std::result::Result<f64, String>)],
) -> Result<()> {
    writeln!(out, "m,gamma_per_us")?;
    for (m, rate) in rows {
        match rate {
            Ok(r) => writeln!(out, "{m},{}", csv_float(r * 1e-6))?,
            Err(msg) => writeln!(out, "{m},error: {}", msg.replace(',', ";"))?,
        }
    }
    Ok(())
}

pub fn write_model_curve<W: Write>(mut out: W, curve: &[(f64, f64)]) -> Result<()> {
    writeln!(out, "delta_r_hz,p4_model")?;
    for (f, p) in curve {
        writeln!(out, "{},{}", csv_float(*f), csv_float(*p))?;
    }
    Ok(())
}

/// JSON form of a [`PopulationState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    /// Canonical order: F=3 m=-3..3, then F=4 m=-4..4.
    pub populations: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
}

impl From<&PopulationState> for StateFile {
    fn from(s: &PopulationState) -> Self {
        StateFile {
            populations: s.as_array().to_vec(),
            labels: ZeemanState::all().map(|z| z.to_string()).collect(),
        }
    }
}

impl StateFile {
    pub fn to_state(&self) -> Result<PopulationState> {
        if self.populations.len() != NUM_STATES {
            return Err(Error::Parse(format!(
                "state file has {} populations, expected {NUM_STATES}",
                self.populations.len()
            )));
        }
        PopulationState::from_slice(&self.populations)
    }
}

pub fn parse_state_json(text: &str) -> Result<PopulationState> {
    let file: StateFile = serde_json::from_str(text)?;
    file.to_state()
}
