//! Spectral estimation of trajectories and least-squares fits of the damped
//! harmonic-oscillator spectral density
//!
//! `S_x(ω) = S0 Γ0 / ((Ω_x² − ω²)² + ω² Γ0²)`, with `ω = 2πf`.
//!
//! Spectra are one-sided, in m²/Hz, so that `∫ S df` over `[0, f_Nyquist]`
//! is the variance of the position. On that footing a thermal spectrum has
//! `S0 = 4 k_B T / m`, twice the two-sided `2 k_B T / m`; see
//! [`thermal_s0`].

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{require_positive, Error, Result};
use crate::lsq::{self, LeastSquares, LmOptions};
use crate::stats;
use crate::units::BOLTZMANN;

/// Fits with `Γ0 > LOW_CONFIDENCE_RATIO · Ω_x` are flagged.
pub const LOW_CONFIDENCE_RATIO: f64 = 3.0;
pub const MAX_OVERLAP: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    /// Hz, ascending and uniformly spaced.
    pub frequencies: Vec<f64>,
    /// m²/Hz.
    pub values: Vec<f64>,
    pub n_averages: usize,
}

impl PsdEstimate {
    pub fn new(frequencies: Vec<f64>, values: Vec<f64>, n_averages: usize) -> Result<Self> {
        if frequencies.len() != values.len() {
            return Err(Error::domain("frequency and value lengths differ"));
        }
        if frequencies.len() < 2 {
            return Err(Error::domain("spectrum needs at least 2 bins"));
        }
        if frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("frequencies must be strictly increasing"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("spectral values must be finite and >= 0"));
        }
        Ok(Self {
            frequencies,
            values,
            n_averages,
        })
    }

    pub fn bin_width(&self) -> f64 {
        self.frequencies[1] - self.frequencies[0]
    }

    /// Rectangle-rule integral over the frequency axis.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.bin_width()
    }
}

fn hann(n: usize) -> Vec<f64> {
    // periodic Hann, the usual choice for spectral averaging
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Averaged-periodogram estimate of a uniformly sampled series.
///
/// Segments of `segment_length` samples overlap by `overlap` (a fraction in
/// `[0, 0.9]`); each is mean-subtracted and Hann windowed.
pub fn estimate_psd_series(
    samples: &[f64],
    dt: f64,
    segment_length: usize,
    overlap: f64,
) -> Result<PsdEstimate> {
    require_positive("dt", dt)?;
    if !(0.0..=MAX_OVERLAP).contains(&overlap) {
        return Err(Error::domain(format!("overlap must lie in [0, {MAX_OVERLAP}], got {overlap}")));
    }
    if segment_length < 4 {
        return Err(Error::domain("segment_length must be at least 4"));
    }
    if samples.len() < segment_length {
        return Err(Error::domain(format!(
            "series of {} samples is shorter than one segment of {segment_length}",
            samples.len()
        )));
    }
    let hop = ((segment_length as f64 * (1.0 - overlap)).round() as usize).max(1);
    let n_segments = (samples.len() - segment_length) / hop + 1;
    let window = hann(segment_length);
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let fft = FftPlanner::new().plan_fft_forward(segment_length);
    let n_bins = segment_length / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); segment_length];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for seg in 0..n_segments {
        let chunk = &samples[seg * hop..seg * hop + segment_length];
        let m = stats::mean(chunk);
        for ((b, &x), &w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex::new((x - m) * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let scale = dt / (window_power * n_segments as f64);
    let nyquist_bin = if segment_length % 2 == 0 { Some(n_bins - 1) } else { None };
    let values = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || Some(k) == nyquist_bin { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    let df = 1.0 / (segment_length as f64 * dt);
    let frequencies = (0..n_bins).map(|k| k as f64 * df).collect();
    PsdEstimate::new(frequencies, values, n_segments)
}

/// Position spectrum of a trajectory.
pub fn estimate_psd(traj: &Trajectory, segment_length: usize, overlap: f64) -> Result<PsdEstimate> {
    estimate_psd_series(&traj.positions, traj.dt, segment_length, overlap)
}

/// `S0` of a one-sided thermal spectrum at `temperature` (K) for a particle
/// of `mass` (kg).
pub fn thermal_s0(temperature: f64, mass: f64) -> f64 {
    4.0 * BOLTZMANN * temperature / mass
}

/// Model spectral density at one ordinary frequency `f` (Hz).
#[inline]
pub fn model_psd_at(s0: f64, gamma0: f64, omega_x: f64, f: f64) -> f64 {
    let w = 2.0 * PI * f;
    let d = omega_x * omega_x - w * w;
    s0 * gamma0 / (d * d + w * w * gamma0 * gamma0)
}

pub fn model_psd(s0: f64, gamma0: f64, omega_x: f64, frequencies: &[f64]) -> Result<Vec<f64>> {
    require_positive("s0", s0)?;
    require_positive("gamma0", gamma0)?;
    require_positive("omega_x", omega_x)?;
    Ok(frequencies
        .iter()
        .map(|&f| model_psd_at(s0, gamma0, omega_x, f))
        .collect())
}

/// Angular frequency of the spectral maximum, or `None` when the response is
/// overdamped enough that the maximum sits at zero frequency.
pub fn peak_angular_frequency(gamma0: f64, omega_x: f64) -> Option<f64> {
    let w2 = omega_x * omega_x - 0.5 * gamma0 * gamma0;
    (w2 > 0.0).then(|| w2.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdParams {
    pub s0: f64,
    /// rad/s.
    pub gamma0: f64,
    /// rad/s.
    pub omega_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdFitResult {
    pub s0: f64,
    #[serde(rename = "gamma0_rad_s")]
    pub gamma0: f64,
    #[serde(rename = "omega_x_rad_s")]
    pub omega_x: f64,
    pub stderr_s0: f64,
    #[serde(rename = "stderr_gamma0_rad_s")]
    pub stderr_gamma0: f64,
    #[serde(rename = "stderr_omega_x_rad_s")]
    pub stderr_omega_x: f64,
    /// Root-mean-square relative residual over the fitted bins.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub low_confidence: bool,
}

impl PsdFitResult {
    pub fn params(&self) -> PsdParams {
        PsdParams {
            s0: self.s0,
            gamma0: self.gamma0,
            omega_x: self.omega_x,
        }
    }
}

/// Controls for [`fit_psd_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PsdFitOptions {
    pub initial_guess: Option<PsdParams>,
    /// Lowest frequency used, Hz. Defaults to two bins above DC.
    pub f_min: Option<f64>,
    /// Highest frequency used, Hz. Defaults to 40% of the highest bin,
    /// keeping clear of aliasing near Nyquist.
    pub f_max: Option<f64>,
}

/// Relative residuals `(data - model) / model` in log parameters.
struct PsdProblem<'a> {
    freqs: &'a [f64],
    data: &'a [f64],
}

impl PsdProblem<'_> {
    fn unpack(p: &[f64]) -> (f64, f64, f64) {
        (p[0].exp(), p[1].exp(), p[2].exp())
    }
}

impl LeastSquares for PsdProblem<'_> {
    fn n_params(&self) -> usize {
        3
    }
    fn n_residuals(&self) -> usize {
        self.freqs.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (s0, g, w0) = Self::unpack(p);
        for ((o, &f), &d) in out.iter_mut().zip(self.freqs).zip(self.data) {
            *o = d / model_psd_at(s0, g, w0, f) - 1.0;
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let (s0, g, w0) = Self::unpack(p);
        for (i, (&f, &d)) in self.freqs.iter().zip(self.data).enumerate() {
            let w = 2.0 * PI * f;
            let diff = w0 * w0 - w * w;
            let den = diff * diff + w * w * g * g;
            let m = s0 * g / den;
            // ∂ln m / ∂ln θ
            let dln_s0 = 1.0;
            let dln_g = 1.0 - 2.0 * w * w * g * g / den;
            let dln_w0 = -4.0 * diff * w0 * w0 / den;
            let ratio = -d / m;
            out[(i, 0)] = ratio * dln_s0;
            out[(i, 1)] = ratio * dln_g;
            out[(i, 2)] = ratio * dln_w0;
        }
    }
}

/// Seed values from the shape of the spectrum: Ω_x at the peak, Γ0 from the
/// full width at half maximum and S0 from the peak height.
pub fn initial_guess(freqs: &[f64], values: &[f64]) -> Result<PsdParams> {
    let (i_peak, &peak) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::domain("empty spectrum"))?;
    if !(peak > 0.0) {
        return Err(Error::domain("spectrum has no positive values"));
    }
    let half = 0.5 * peak;
    let right = (i_peak..values.len())
        .find(|&i| values[i] < half)
        .map(|i| freqs[i]);
    let left = (0..=i_peak).rev().find(|&i| values[i] < half).map(|i| freqs[i]);
    let f_peak = freqs[i_peak].max(freqs[1] - freqs[0]);
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => r - l,
        (None, Some(r)) => 2.0 * (r - freqs[i_peak]).max(freqs[1] - freqs[0]),
        (Some(l), None) => 2.0 * (freqs[i_peak] - l),
        (None, None) => freqs[freqs.len() - 1] - freqs[0],
    };
    let mut omega_x = 2.0 * PI * f_peak;
    let gamma0 = (2.0 * PI * fwhm).max(1e-6 * omega_x);
    if left.is_none() {
        // peak at the low edge: overdamped; Ω_x ≈ sqrt(Γ0 · ω_corner)
        let corner = right.unwrap_or(freqs[freqs.len() - 1]) * 2.0 * PI;
        omega_x = (gamma0 * corner).sqrt().max(omega_x);
    }
    let s0 = model_psd_at(1.0, gamma0, omega_x, freqs[i_peak]).recip() * peak;
    Ok(PsdParams { s0, gamma0, omega_x })
}

pub fn fit_psd(psd: &PsdEstimate, initial_guess: Option<PsdParams>) -> Result<PsdFitResult> {
    fit_psd_with(
        psd,
        &PsdFitOptions {
            initial_guess,
            ..Default::default()
        },
    )
}

pub fn fit_psd_with(psd: &PsdEstimate, opts: &PsdFitOptions) -> Result<PsdFitResult> {
    let df = psd.bin_width();
    let f_last = psd.frequencies[psd.frequencies.len() - 1];
    let f_min = opts.f_min.unwrap_or(psd.frequencies[0] + 1.5 * df);
    let f_max = opts.f_max.unwrap_or(0.4 * f_last);
    let (freqs, data): (Vec<f64>, Vec<f64>) = psd
        .frequencies
        .iter()
        .zip(&psd.values)
        .filter(|(&f, &v)| f >= f_min && f <= f_max && f > 0.0 && v > 0.0)
        .map(|(&f, &v)| (f, v))
        .unzip();
    if freqs.len() < 8 {
        return Err(Error::domain(format!(
            "only {} usable bins in [{f_min}, {f_max}] Hz",
            freqs.len()
        )));
    }
    let guess = match opts.initial_guess {
        Some(g) => g,
        None => initial_guess(&freqs, &data)?,
    };
    require_positive("initial s0", guess.s0)?;
    require_positive("initial gamma0", guess.gamma0)?;
    require_positive("initial omega_x", guess.omega_x)?;
    if freqs[freqs.len() - 1] < 2.0 * guess.omega_x / (2.0 * PI) {
        return Err(Error::domain(format!(
            "spectrum ends at {} Hz, below twice the resonance guess {} Hz",
            freqs[freqs.len() - 1],
            guess.omega_x / (2.0 * PI)
        )));
    }

    let problem = PsdProblem {
        freqs: &freqs,
        data: &data,
    };
    let start = [guess.s0.ln(), guess.gamma0.ln(), guess.omega_x.ln()];
    let report = lsq::minimize(&problem, &start, &LmOptions::default());
    let (s0, gamma0, omega_x) = PsdProblem::unpack(&report.params);
    let se = report.standard_errors();
    let result = PsdFitResult {
        s0,
        gamma0,
        omega_x,
        stderr_s0: s0 * se[0],
        stderr_gamma0: gamma0 * se[1],
        stderr_omega_x: omega_x * se[2],
        residual_norm: (2.0 * report.cost / freqs.len() as f64).sqrt(),
        iterations: report.iterations,
        converged: report.converged,
        low_confidence: gamma0 > LOW_CONFIDENCE_RATIO * omega_x,
    };
    if report.converged {
        Ok(result)
    } else {
        Err(Error::FitNotConverged {
            iterations: report.iterations,
            best: serde_json::to_value(result)?,
        })
    }
}
