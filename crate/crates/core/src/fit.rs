//! Population recovery from a Raman scan by weighted nonlinear least squares on
//! the Lorentzian-sum model
//!
//! p4(δ) = p_b + ½ Σ_m p_m / (1 + (δ - ω_B m)² / ((1 - m²/16) Ω0²)).
//!
//! Populations, Ω0 and ω_B are free; p_b is fixed. The populations are not
//! constrained to sum to one, so their sum is a consistency check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::atom::{
    angular_to_hz, coupling_factor, hz_to_angular, transition_index, transition_ms, AtomParams,
    NUM_TRANSITIONS,
};
use crate::error::{Error, Result};
use crate::measurement::RamanScan;

/// Number of free parameters: seven populations, Ω0, ω_B.
pub const NUM_PARAMS: usize = NUM_TRANSITIONS + 2;
const IDX_OMEGA_0: usize = NUM_TRANSITIONS;
const IDX_OMEGA_B: usize = NUM_TRANSITIONS + 1;

/// Frequencies are handled in units of 2π·1 MHz inside the solver.
const FREQ_SCALE: f64 = 2.0 * std::f64::consts::PI * 1e6;

pub const MAX_ITERATIONS: usize = 500;
pub const OBJECTIVE_TOLERANCE: f64 = 1e-10;
pub const STEP_TOLERANCE: f64 = 1e-8;
pub const MIN_SCAN_POINTS: usize = 10;

/// Parameters of the Lorentzian-sum model, angular frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitModel {
    /// p_{3,m}, indexed by `transition_index(m)`.
    pub populations: [f64; NUM_TRANSITIONS],
    pub omega_0: f64,
    pub omega_b: f64,
    /// Fixed background.
    pub p_b: f64,
    /// Fixed origin of the Raman detuning axis (rad/s); zero unless the data were
    /// taken relative to a shifted reference.
    pub origin: f64,
}

impl FitModel {
    pub fn new(populations: [f64; NUM_TRANSITIONS], omega_0: f64, omega_b: f64, p_b: f64) -> Self {
        FitModel {
            populations,
            omega_0,
            omega_b,
            p_b,
            origin: 0.0,
        }
    }

    pub fn population_sum(&self) -> f64 {
        self.populations.iter().sum()
    }

    fn to_scaled(self) -> [f64; NUM_PARAMS] {
        let mut theta = [0.0; NUM_PARAMS];
        theta[..NUM_TRANSITIONS].copy_from_slice(&self.populations);
        theta[IDX_OMEGA_0] = self.omega_0 / FREQ_SCALE;
        theta[IDX_OMEGA_B] = self.omega_b / FREQ_SCALE;
        theta
    }

    fn from_scaled(theta: &[f64; NUM_PARAMS], p_b: f64, origin: f64) -> Self {
        let mut populations = [0.0; NUM_TRANSITIONS];
        populations.copy_from_slice(&theta[..NUM_TRANSITIONS]);
        FitModel {
            populations,
            omega_0: theta[IDX_OMEGA_0] * FREQ_SCALE,
            omega_b: theta[IDX_OMEGA_B] * FREQ_SCALE,
            p_b,
            origin,
        }
    }
}

/// Evaluate the Lorentzian-sum model at Raman detuning `delta_r` (rad/s).
pub fn model_p4(delta_r: f64, model: &FitModel) -> f64 {
    let mut p = model.p_b;
    for m in transition_ms() {
        let pop = model.populations[transition_index(m)];
        let offset = delta_r - model.origin - model.omega_b * m as f64;
        let width_sq = coupling_factor(m) * model.omega_0 * model.omega_0;
        p += 0.5 * pop / (1.0 + offset * offset / width_sq);
    }
    p
}

/// Partial derivatives of [`model_p4`] with respect to
/// (p_{-3}, ..., p_3, Ω0, ω_B), the last two per rad/s.
pub fn model_gradient(delta_r: f64, model: &FitModel) -> [f64; NUM_PARAMS] {
    let mut grad = [0.0; NUM_PARAMS];
    let omega_0 = model.omega_0;
    for m in transition_ms() {
        let i = transition_index(m);
        let pop = model.populations[i];
        let width_sq = coupling_factor(m) * omega_0 * omega_0;
        let offset = delta_r - model.origin - model.omega_b * m as f64;
        let u = offset * offset / width_sq;
        let l = 1.0 / (1.0 + u);
        grad[i] = 0.5 * l;
        // dL/du = -L², du/dΩ0 = -2u/Ω0, du/dω_B = -2 m offset / width²
        grad[IDX_OMEGA_0] += 0.5 * pop * l * l * 2.0 * u / omega_0;
        grad[IDX_OMEGA_B] += 0.5 * pop * l * l * 2.0 * m as f64 * offset / width_sq;
    }
    grad
}

/// One standard deviation per fitted parameter, angular units for frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitErrors {
    pub populations: [f64; NUM_TRANSITIONS],
    pub omega_0: f64,
    pub omega_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub parameters: FitModel,
    pub std_errors: FitErrors,
    pub population_sum: f64,
    pub population_sum_std_error: f64,
    /// Weighted sum of squared residuals at the optimum.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// JSON form of [`FitResult`], frequencies in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub populations: Vec<f64>,
    pub omega_0_hz: f64,
    pub omega_b_hz: f64,
    pub p_b: f64,
    pub std_errors: FitReportErrors,
    pub population_sum: f64,
    pub population_sum_std_error: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReportErrors {
    pub populations: Vec<f64>,
    pub omega_0_hz: f64,
    pub omega_b_hz: f64,
}

impl From<&FitResult> for FitReport {
    fn from(r: &FitResult) -> Self {
        FitReport {
            populations: r.parameters.populations.to_vec(),
            omega_0_hz: angular_to_hz(r.parameters.omega_0),
            omega_b_hz: angular_to_hz(r.parameters.omega_b),
            p_b: r.parameters.p_b,
            std_errors: FitReportErrors {
                populations: r.std_errors.populations.to_vec(),
                omega_0_hz: angular_to_hz(r.std_errors.omega_0),
                omega_b_hz: angular_to_hz(r.std_errors.omega_b),
            },
            population_sum: r.population_sum,
            population_sum_std_error: r.population_sum_std_error,
            residual_norm: r.residual_norm,
            converged: r.converged,
            iterations: r.iterations,
        }
    }
}

/// Weight of one scan point: inverse binomial variance with p̂(1-p̂) floored at
/// 0.5/shots; analytic points (zero shots) get unit weight.
pub fn point_weight(p4: f64, shots: u64) -> f64 {
    if shots == 0 {
        return 1.0;
    }
    let n = shots as f64;
    let spread = (p4 * (1.0 - p4)).max(0.5 / n);
    n / spread
}

struct Problem {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    p_b: f64,
    origin: f64,
}

impl Problem {
    /// Model in the solver's scaled frequency units.
    fn model(&self, theta: &[f64; NUM_PARAMS]) -> FitModel {
        let mut populations = [0.0; NUM_TRANSITIONS];
        populations.copy_from_slice(&theta[..NUM_TRANSITIONS]);
        FitModel {
            populations,
            omega_0: theta[IDX_OMEGA_0],
            omega_b: theta[IDX_OMEGA_B],
            p_b: self.p_b,
            origin: self.origin,
        }
    }

    fn objective(&self, theta: &[f64; NUM_PARAMS]) -> f64 {
        let model = self.model(theta);
        self.x
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((&x, &y), &w)| {
                let r = y - model_p4(x, &model);
                w * r * r
            })
            .sum()
    }

    /// Weighted normal equations: (JᵀWJ, JᵀWr).
    fn normal_equations(&self, theta: &[f64; NUM_PARAMS]) -> (DMatrix<f64>, DVector<f64>) {
        let model = self.model(theta);
        let mut a = DMatrix::zeros(NUM_PARAMS, NUM_PARAMS);
        let mut g = DVector::zeros(NUM_PARAMS);
        for ((&x, &y), &w) in self.x.iter().zip(&self.y).zip(&self.w) {
            let row = model_gradient(x, &model);
            let r = y - model_p4(x, &model);
            for i in 0..NUM_PARAMS {
                g[i] += w * row[i] * r;
                for j in 0..=i {
                    a[(i, j)] += w * row[i] * row[j];
                }
            }
        }
        for i in 0..NUM_PARAMS {
            for j in 0..i {
                a[(j, i)] = a[(i, j)];
            }
        }
        (a, g)
    }
}

/// Keep populations nonnegative and the frequencies strictly positive.
fn project(theta: &mut [f64; NUM_PARAMS]) {
    for p in &mut theta[..NUM_TRANSITIONS] {
        *p = p.max(0.0);
    }
    for i in [IDX_OMEGA_0, IDX_OMEGA_B] {
        theta[i] = theta[i].max(1e-9);
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Reciprocal condition number of the correlation form of a normal matrix.
fn reciprocal_condition(a: &DMatrix<f64>) -> f64 {
    let d: Vec<f64> = (0..a.nrows()).map(|i| a[(i, i)].max(0.0).sqrt()).collect();
    if d.contains(&0.0) {
        return 0.0;
    }
    let corr = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(corr).eigenvalues;
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if max <= 0.0 {
        0.0
    } else {
        (min / max).max(0.0)
    }
}

/// Below this reciprocal condition number the fit is reported as ill-posed.
pub const ILL_POSED_RCOND: f64 = 1e-12;

/// Maximum number of refits with model-derived weights.
const MAX_REWEIGHTS: usize = 20;
const REWEIGHT_TOLERANCE: f64 = 1e-8;

struct LmSolution {
    theta: [f64; NUM_PARAMS],
    chi2: f64,
    converged: bool,
    iterations: usize,
}

fn levenberg_marquardt(problem: &Problem, start: [f64; NUM_PARAMS]) -> LmSolution {
    let mut theta = start;
    let mut chi2 = problem.objective(&theta);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (a, g) = problem.normal_equations(&theta);
        if g.iter().all(|&v| v == 0.0) {
            converged = true;
            break;
        }
        let mut accepted = false;
        // Inner damping loop: raise lambda until the step decreases the objective.
        while lambda < 1e16 {
            let mut damped = a.clone();
            for i in 0..NUM_PARAMS {
                damped[(i, i)] += lambda * a[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&g)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = theta;
            for i in 0..NUM_PARAMS {
                trial[i] += step[i];
            }
            project(&mut trial);
            let taken: Vec<f64> = trial.iter().zip(&theta).map(|(t, o)| t - o).collect();
            let rel_step = norm(&taken) / (norm(&theta) + 1e-12);
            let trial_chi2 = problem.objective(&trial);
            if trial_chi2 <= chi2 {
                let decrease = if chi2 > 0.0 {
                    (chi2 - trial_chi2) / chi2
                } else {
                    0.0
                };
                theta = trial;
                chi2 = trial_chi2;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if decrease < OBJECTIVE_TOLERANCE || rel_step < STEP_TOLERANCE {
                    converged = true;
                }
                break;
            }
            if rel_step < STEP_TOLERANCE {
                // No representable improvement left.
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            break;
        }
    }

    LmSolution {
        theta,
        chi2,
        converged,
        iterations,
    }
}

/// Weighted Levenberg-Marquardt fit of the Lorentzian-sum model to `scan`.
///
/// Damping adapts ×10 / ÷10 on rejected / accepted steps; populations are projected
/// onto [0, ∞) after every step. Stops when the objective's relative decrease falls
/// below 1e-10 or the relative step below 1e-8, or after 500 iterations.
///
/// Sampled scans start from binomial weights built on the measured p̂ (variance
/// floored at 0.5/shots) and are then refitted with weights evaluated on the fitted
/// curve until the parameters stop moving.
pub fn fit_scan(scan: &RamanScan, initial_guess: &FitModel, fixed_p_b: f64) -> Result<FitResult> {
    scan.validate()?;
    if scan.points.len() < MIN_SCAN_POINTS {
        return Err(Error::IllPosed(format!(
            "scan has {} points, need at least {MIN_SCAN_POINTS}",
            scan.points.len()
        )));
    }
    let guess_ok = initial_guess.populations.iter().all(|p| p.is_finite())
        && initial_guess.omega_0.is_finite()
        && initial_guess.omega_0 > 0.0
        && initial_guess.omega_b.is_finite()
        && initial_guess.omega_b > 0.0
        && initial_guess.origin.is_finite();
    if !guess_ok {
        return Err(Error::invalid(
            "initial_guess",
            "must be finite with positive Ω0 and ω_B",
        ));
    }
    if !(0.0..1.0).contains(&fixed_p_b) {
        return Err(Error::invalid("p_b", "must lie in [0, 1)"));
    }

    let problem = Problem {
        x: scan
            .points
            .iter()
            .map(|p| hz_to_angular(p.delta_r_hz) / FREQ_SCALE)
            .collect(),
        y: scan.points.iter().map(|p| p.p4).collect(),
        w: scan
            .points
            .iter()
            .map(|p| point_weight(p.p4, p.shots))
            .collect(),
        p_b: fixed_p_b,
        origin: initial_guess.origin / FREQ_SCALE,
    };

    let mut problem = problem;
    let mut theta = initial_guess.to_scaled();
    project(&mut theta);
    let mut solve = levenberg_marquardt(&problem, theta);
    let mut iterations = solve.iterations;
    // The data-derived weights favour points that fluctuated low, which biases the
    // peak areas downwards at low shot counts. Re-derive the weights from the
    // fitted curve and refit until the parameters settle.
    if scan.points.iter().any(|p| p.shots > 0) {
        for _ in 0..MAX_REWEIGHTS {
            let model = problem.model(&solve.theta);
            problem.w = problem
                .x
                .iter()
                .zip(&scan.points)
                .map(|(&x, p)| point_weight(model_p4(x, &model), p.shots))
                .collect();
            let next = levenberg_marquardt(&problem, solve.theta);
            iterations += next.iterations;
            let moved: Vec<f64> = next
                .theta
                .iter()
                .zip(&solve.theta)
                .map(|(a, b)| a - b)
                .collect();
            let settled = norm(&moved) <= REWEIGHT_TOLERANCE * norm(&solve.theta);
            solve = next;
            if settled {
                break;
            }
        }
    }
    let LmSolution {
        theta,
        chi2,
        converged,
        ..
    } = solve;

    let (a, _) = problem.normal_equations(&theta);
    let rcond = reciprocal_condition(&a);
    if rcond < ILL_POSED_RCOND {
        return Err(Error::IllPosed(format!(
            "normal matrix is rank deficient (reciprocal condition {rcond:.3e}); \
             does the scan cover every transition?"
        )));
    }
    let cov = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::IllPosed("normal matrix is singular".into()))?;
    let sd = |i: usize| cov[(i, i)].max(0.0).sqrt();
    let mut pop_err = [0.0; NUM_TRANSITIONS];
    for (i, e) in pop_err.iter_mut().enumerate() {
        *e = sd(i);
    }
    let mut sum_var = 0.0;
    for i in 0..NUM_TRANSITIONS {
        for j in 0..NUM_TRANSITIONS {
            sum_var += cov[(i, j)];
        }
    }
    let mut parameters = FitModel::from_scaled(&theta, fixed_p_b, initial_guess.origin);
    parameters.p_b = fixed_p_b;
    Ok(FitResult {
        parameters,
        std_errors: FitErrors {
            populations: pop_err,
            omega_0: sd(IDX_OMEGA_0) * FREQ_SCALE,
            omega_b: sd(IDX_OMEGA_B) * FREQ_SCALE,
        },
        population_sum: parameters.population_sum(),
        population_sum_std_error: sum_var.max(0.0).sqrt(),
        residual_norm: chi2,
        converged,
        iterations,
    })
}

/// Starting point for [`fit_scan`] derived from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialGuess {
    pub model: FitModel,
    /// Detected peak positions, Hz.
    pub peaks_hz: Vec<f64>,
    /// Set when too few peaks were found to estimate ω_B from the data.
    pub used_fallback: bool,
}

/// Minimum peak height above background for peak detection.
const MIN_PROMINENCE: f64 = 0.02;

/// Heuristic guess: ω_B from the median spacing of detected peaks (falling back to
/// `fallback.omega_b`), Ω0 from `fallback`, and populations from twice the
/// background-subtracted signal at each predicted line centre, clipped to [0, 1].
pub fn default_initial_guess(
    scan: &RamanScan,
    fallback: &AtomParams,
    p_b: f64,
) -> Result<InitialGuess> {
    if scan.points.is_empty() {
        return Err(Error::invalid("scan", "no points"));
    }
    let mut pts: Vec<(f64, f64)> = scan.points.iter().map(|p| (p.delta_r_hz, p.p4)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pts.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            pts[lo..=hi].iter().map(|p| p.1).sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();

    let fallback_b_hz = angular_to_hz(fallback.omega_b);
    let top = smooth.iter().cloned().fold(f64::MIN, f64::max);
    let mut peaks_hz = Vec::new();
    if top - p_b > MIN_PROMINENCE && n >= 3 {
        let threshold = p_b + 0.5 * (top - p_b);
        let mut candidates: Vec<(f64, f64)> = (1..n - 1)
            .filter(|&i| {
                smooth[i] >= threshold && smooth[i] > smooth[i - 1] && smooth[i] >= smooth[i + 1]
            })
            .map(|i| (pts[i].0, smooth[i]))
            .collect();
        // Keep the tallest candidate within half a line spacing.
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (f, _) in candidates {
            if peaks_hz
                .iter()
                .all(|&g: &f64| (g - f).abs() > 0.5 * fallback_b_hz)
            {
                peaks_hz.push(f);
            }
        }
        peaks_hz.sort_by(f64::total_cmp);
    }

    let (omega_b, used_fallback) = if peaks_hz.len() >= 2 {
        // Neighbouring peaks need not be adjacent lines: divide each gap by the
        // number of line spacings it spans, judged against the fallback.
        let mut spacings: Vec<f64> = peaks_hz
            .windows(2)
            .map(|w| {
                let gap = w[1] - w[0];
                gap / (gap / fallback_b_hz).round().max(1.0)
            })
            .collect();
        spacings.sort_by(f64::total_cmp);
        let median = if spacings.len() % 2 == 1 {
            spacings[spacings.len() / 2]
        } else {
            0.5 * (spacings[spacings.len() / 2 - 1] + spacings[spacings.len() / 2])
        };
        (hz_to_angular(median), false)
    } else {
        (fallback.omega_b, true)
    };

    let signal_at = |f: f64| -> f64 {
        let i = pts.partition_point(|p| p.0 < f);
        if i == 0 {
            return if pts[0].0 == f { pts[0].1 } else { f64::NAN };
        }
        if i == n {
            return f64::NAN;
        }
        let (f0, y0) = pts[i - 1];
        let (f1, y1) = pts[i];
        if f1 == f0 {
            y1
        } else {
            y0 + (y1 - y0) * (f - f0) / (f1 - f0)
        }
    };
    let mut populations = [0.0; NUM_TRANSITIONS];
    for m in transition_ms() {
        let v = signal_at(angular_to_hz(omega_b) * m as f64);
        populations[transition_index(m)] = if v.is_finite() {
            (2.0 * (v - p_b)).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
    Ok(InitialGuess {
        model: FitModel::new(populations, fallback.omega_0, omega_b, p_b),
        peaks_hz,
        used_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::PopulationState;
    use crate::measurement::{acquire_scan, ReadoutModel, ScanConfig, ScanPoint, Shots};
    use approx::assert_relative_eq;

    fn truth() -> FitModel {
        let p = AtomParams::typical();
        FitModel::new([1.0 / 7.0; 7], p.omega_0, p.omega_b, 0.006)
    }

    fn analytic_scan(model: &FitModel) -> RamanScan {
        let points = (0..161)
            .map(|i| {
                let f = -3.3e6 + 6.6e6 * i as f64 / 160.0;
                ScanPoint {
                    delta_r_hz: f,
                    p4: model_p4(hz_to_angular(f), model),
                    shots: 0,
                    successes: 0,
                }
            })
            .collect();
        RamanScan {
            points,
            metadata: None,
        }
    }

    #[test]
    fn model_examples() {
        let p = AtomParams::typical();
        let mut pops = [0.0; 7];
        pops[transition_index(2)] = 1.0;
        let single = FitModel::new(pops, p.omega_0, p.omega_b, 0.0);
        assert_relative_eq!(model_p4(2.0 * p.omega_b, &single), 0.5, epsilon = 1e-15);
        let half_width = p.omega_0 * (0.75f64).sqrt();
        assert_relative_eq!(
            model_p4(2.0 * p.omega_b + half_width, &single),
            0.25,
            epsilon = 1e-15
        );
        let empty = FitModel::new([0.0; 7], p.omega_0, p.omega_b, 0.006);
        for f in [-3e6, 0.0, 1.234e6] {
            assert_eq!(model_p4(hz_to_angular(f), &empty), 0.006);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let base = truth();
        let pops = [0.1, 0.05, 0.2, 0.3, 0.0, 0.15, 0.12];
        let model = FitModel {
            populations: pops,
            ..base
        };
        for f in [-2.9e6, -1.0e6, -0.3e6, 0.0, 0.11e6, 0.95e6, 2.5e6] {
            let x = hz_to_angular(f);
            let g = model_gradient(x, &model);
            #[allow(clippy::needless_range_loop)]
            for k in 0..NUM_PARAMS {
                let mut hi = model;
                let mut lo = model;
                let h = match k {
                    IDX_OMEGA_0 => 1e-6 * model.omega_0,
                    IDX_OMEGA_B => 1e-6 * model.omega_b,
                    _ => 1e-6,
                };
                match k {
                    IDX_OMEGA_0 => {
                        hi.omega_0 += h;
                        lo.omega_0 -= h;
                    }
                    IDX_OMEGA_B => {
                        hi.omega_b += h;
                        lo.omega_b -= h;
                    }
                    i => {
                        hi.populations[i] += h;
                        lo.populations[i] -= h;
                    }
                }
                let fd = (model_p4(x, &hi) - model_p4(x, &lo)) / (2.0 * h);
                assert!(
                    (g[k] - fd).abs() <= 1e-6 * fd.abs().max(1e-9),
                    "f={f} k={k}: {} vs {fd}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn exact_guess_is_a_fixed_point() {
        let t = truth();
        let scan = analytic_scan(&t);
        let r = fit_scan(&scan, &t, 0.006).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 2, "{}", r.iterations);
        assert!(r.residual_norm < 1e-25);
        for (a, b) in r.parameters.populations.iter().zip(&t.populations) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn recovers_truth_from_perturbed_guess() {
        let t = truth();
        let scan = analytic_scan(&t);
        let guess = FitModel {
            populations: [0.3, 0.0, 0.1, 0.2, 0.05, 0.2, 0.1],
            omega_0: t.omega_0 * 1.1,
            omega_b: t.omega_b * 0.97,
            ..t
        };
        let r = fit_scan(&scan, &guess, 0.006).unwrap();
        assert!(r.converged);
        for (a, b) in r.parameters.populations.iter().zip(&t.populations) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        assert_relative_eq!(r.parameters.omega_b, t.omega_b, max_relative = 1e-7);
        assert_relative_eq!(r.parameters.omega_0, t.omega_0, max_relative = 1e-7);
        assert_relative_eq!(r.population_sum, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn background_only_scan_fits_zero_populations() {
        let p = AtomParams::typical();
        let scan = analytic_scan(&FitModel::new([0.0; 7], p.omega_0, p.omega_b, 0.006));
        let r = fit_scan(&scan, &truth(), 0.006).unwrap();
        for pop in r.parameters.populations {
            assert!(pop.abs() < 1e-6, "{pop}");
        }
    }

    #[test]
    fn narrow_scan_is_ill_posed() {
        let t = truth();
        let points = (0..41)
            .map(|i| {
                let f = -100e3 + 5e3 * i as f64;
                ScanPoint {
                    delta_r_hz: f,
                    p4: model_p4(hz_to_angular(f), &t),
                    shots: 0,
                    successes: 0,
                }
            })
            .collect();
        let scan = RamanScan {
            points,
            metadata: None,
        };
        assert!(matches!(
            fit_scan(&scan, &t, 0.006),
            Err(Error::IllPosed(_))
        ));
        let tiny = RamanScan {
            points: analytic_scan(&t).points[..5].to_vec(),
            metadata: None,
        };
        assert!(matches!(
            fit_scan(&tiny, &t, 0.006),
            Err(Error::IllPosed(_))
        ));
    }

    #[test]
    fn origin_shift_leaves_populations_unchanged() {
        let p = AtomParams::typical();
        let state = PopulationState::uniform_f3();
        let cfg = ScanConfig {
            rng_seed: Some(11),
            ..ScanConfig::default()
        };
        let scan = acquire_scan(&state, &cfg, &p, &ReadoutModel::ideal(0.006)).unwrap();
        let guess = truth();
        let base = fit_scan(&scan, &guess, 0.006).unwrap();
        let shift_hz = 137.5e3;
        let shifted = RamanScan {
            points: scan
                .points
                .iter()
                .map(|pt| ScanPoint {
                    delta_r_hz: pt.delta_r_hz + shift_hz,
                    ..*pt
                })
                .collect(),
            metadata: None,
        };
        let shifted_guess = FitModel {
            origin: hz_to_angular(shift_hz),
            ..guess
        };
        let moved = fit_scan(&shifted, &shifted_guess, 0.006).unwrap();
        for (a, b) in base
            .parameters
            .populations
            .iter()
            .zip(&moved.parameters.populations)
        {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn guess_from_seven_peaks() {
        let p = AtomParams::typical();
        let scan = analytic_scan(&truth());
        let other = AtomParams::new(hz_to_angular(850e3), p.omega_0).unwrap();
        let g = default_initial_guess(&scan, &other, 0.006).unwrap();
        assert!(!g.used_fallback);
        assert_eq!(g.peaks_hz.len(), 7);
        assert!((g.model.omega_b / p.omega_b - 1.0).abs() < 0.05);
    }

    #[test]
    fn guess_spacing_from_outer_peaks_only() {
        let p = AtomParams::typical();
        let mut pops = [0.05; 7];
        pops[transition_index(-3)] = 0.3;
        pops[transition_index(3)] = 0.45;
        let scan = analytic_scan(&FitModel::new(pops, p.omega_0, p.omega_b, 0.006));
        let g = default_initial_guess(&scan, &p, 0.006).unwrap();
        assert_eq!(g.peaks_hz.len(), 2);
        assert!(!g.used_fallback);
        assert!((g.model.omega_b / p.omega_b - 1.0).abs() < 0.01);
    }

    #[test]
    fn guess_falls_back_on_flat_scan() {
        let p = AtomParams::typical();
        let scan = analytic_scan(&FitModel::new([0.0; 7], p.omega_0, p.omega_b, 0.006));
        let g = default_initial_guess(&scan, &p, 0.006).unwrap();
        assert!(g.used_fallback);
        assert!(g.peaks_hz.is_empty());
        assert_eq!(g.model.omega_b, p.omega_b);
        assert_eq!(g.model.populations, [0.0; 7]);
    }

    #[test]
    fn guess_inverts_single_resonant_peak() {
        let p = AtomParams::typical();
        let mut pops = [0.0; 7];
        pops[transition_index(0)] = 0.6;
        let scan = analytic_scan(&FitModel::new(pops, p.omega_0, p.omega_b, 0.006));
        let g = default_initial_guess(&scan, &p, 0.006).unwrap();
        assert!(g.used_fallback);
        assert_eq!(g.peaks_hz, vec![0.0]);
        let peak = scan.points[80].p4;
        assert_relative_eq!(
            g.model.populations[transition_index(0)],
            2.0 * (peak - 0.006)
        );
        assert_relative_eq!(
            g.model.populations[transition_index(0)],
            0.6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn weights_floor_variance() {
        assert_eq!(point_weight(0.3, 0), 1.0);
        assert_relative_eq!(point_weight(0.5, 100), 400.0);
        assert_relative_eq!(point_weight(0.0, 100), 100.0 / 0.005);
        assert_relative_eq!(point_weight(1.0, 100), 100.0 / 0.005);
    }

    #[test]
    fn sampled_scan_recovery() {
        let p = AtomParams::typical();
        let cfg = ScanConfig {
            rng_seed: Some(7),
            shots_per_point: Shots::Count(100),
            ..ScanConfig::default()
        };
        let scan = acquire_scan(
            &PopulationState::uniform_f3(),
            &cfg,
            &p,
            &ReadoutModel::ideal(0.006),
        )
        .unwrap();
        let guess = default_initial_guess(&scan, &p, 0.006).unwrap();
        let r = fit_scan(&scan, &guess.model, 0.006).unwrap();
        assert!(r.converged);
        assert!((r.population_sum - 1.0).abs() < 0.1, "{}", r.population_sum);
        assert!((r.parameters.omega_b / p.omega_b - 1.0).abs() < 0.05);
        assert!((r.parameters.omega_0 / p.omega_0 - 1.0).abs() < 0.14);
        assert!(r.std_errors.populations.iter().all(|e| *e > 0.0));
    }
}
