//! Zero-field-splitting thermometry.
//!
//! `D(T) = a0 + a1 T + a2 T² + a3 T³ + κ_p P + Δ_strain`, with the cubic
//! strictly decreasing over the valid range so that a measured `D` maps to a
//! unique temperature.

use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::roots::bisect;
use crate::stats::{fit_line, LineFit};
use crate::units::PA_PER_BAR;

/// Bracket searched for the strain offset during calibration, Hz.
pub const STRAIN_BRACKET: (f64, f64) = (-20e6, 20e6);

/// Temperature resolution of the inversion, K.
const INVERSION_TOL_K: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvThermometer {
    /// Polynomial coefficients in Hz, Hz/K, Hz/K², Hz/K³.
    pub coefficients: [f64; 4],
    /// Hz per Pa.
    pub pressure_coeff: f64,
    /// Hz.
    pub strain_shift: f64,
    /// K.
    pub valid_range: (f64, f64),
}

impl Default for NvThermometer {
    fn default() -> Self {
        Self {
            coefficients: [2.8697e9, 9.7e-5 * 1e9, -3.7e-7 * 1e9, 1.7e-10 * 1e9],
            pressure_coeff: 1.5e3 / PA_PER_BAR,
            strain_shift: 0.0,
            valid_range: (250.0, 700.0),
        }
    }
}

impl NvThermometer {
    /// Build a thermometer, checking that `D(T)` falls strictly over the
    /// valid range.
    pub fn new(
        coefficients: [f64; 4],
        pressure_coeff: f64,
        strain_shift: f64,
        valid_range: (f64, f64),
    ) -> Result<Self> {
        for c in coefficients {
            require_finite("polynomial coefficient", c)?;
        }
        require_finite("pressure_coeff", pressure_coeff)?;
        require_finite("strain_shift", strain_shift)?;
        require_positive("valid_range start", valid_range.0)?;
        if !(valid_range.1 > valid_range.0) {
            return Err(Error::domain("valid_range must be increasing"));
        }
        let t = Self {
            coefficients,
            pressure_coeff,
            strain_shift,
            valid_range,
        };
        let n = 1000;
        let (lo, hi) = valid_range;
        for i in 0..=n {
            let temp = lo + (hi - lo) * i as f64 / n as f64;
            if t.slope(temp) >= 0.0 {
                return Err(Error::domain(format!(
                    "D(T) is not decreasing at {temp} K; inversion would be ambiguous"
                )));
            }
        }
        Ok(t)
    }

    pub fn with_strain(self, strain_shift: f64) -> Self {
        Self {
            strain_shift,
            ..self
        }
    }

    /// Temperature-only part of `D`, Hz.
    pub fn polynomial(&self, t: f64) -> f64 {
        let [a0, a1, a2, a3] = self.coefficients;
        a0 + t * (a1 + t * (a2 + t * a3))
    }

    /// `dD/dT`, Hz/K.
    pub fn slope(&self, t: f64) -> f64 {
        let [_, a1, a2, a3] = self.coefficients;
        a1 + t * (2.0 * a2 + 3.0 * a3 * t)
    }

    fn shifts(&self, gas_pressure: f64) -> f64 {
        self.pressure_coeff * gas_pressure + self.strain_shift
    }

    /// Interval of `D` values (Hz) reachable at `gas_pressure`.
    pub fn splitting_band(&self, gas_pressure: f64) -> (f64, f64) {
        let s = self.shifts(gas_pressure);
        (
            self.polynomial(self.valid_range.1) + s,
            self.polynomial(self.valid_range.0) + s,
        )
    }

    pub fn temperature_to_splitting(&self, t: f64, gas_pressure: f64) -> Result<f64> {
        let (lo, hi) = self.valid_range;
        if !(lo..=hi).contains(&t) {
            return Err(Error::OutOfRange {
                quantity: "temperature (K)",
                value: t,
                lo,
                hi,
            });
        }
        check_pressure(gas_pressure)?;
        Ok(self.polynomial(t) + self.shifts(gas_pressure))
    }

    pub fn splitting_to_temperature(&self, d_measured: f64, gas_pressure: f64) -> Result<f64> {
        require_finite("d_measured", d_measured)?;
        check_pressure(gas_pressure)?;
        let (d_lo, d_hi) = self.splitting_band(gas_pressure);
        if !(d_lo..=d_hi).contains(&d_measured) {
            return Err(Error::OutOfRange {
                quantity: "zero-field splitting (Hz)",
                value: d_measured,
                lo: d_lo,
                hi: d_hi,
            });
        }
        let target = d_measured - self.shifts(gas_pressure);
        let (t_lo, t_hi) = self.valid_range;
        bisect(|t| self.polynomial(t) - target, t_lo, t_hi, 0.0, INVERSION_TOL_K)
    }
}

fn check_pressure(p: f64) -> Result<()> {
    if p.is_finite() && p >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("gas pressure must be finite and >= 0, got {p}")))
    }
}

pub fn temperature_to_splitting(t: f64, thermometer: &NvThermometer, gas_pressure: f64) -> Result<f64> {
    thermometer.temperature_to_splitting(t, gas_pressure)
}

pub fn splitting_to_temperature(
    d_measured: f64,
    thermometer: &NvThermometer,
    gas_pressure: f64,
) -> Result<f64> {
    thermometer.splitting_to_temperature(d_measured, gas_pressure)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainCalibration {
    /// Hz.
    pub strain_shift: f64,
    /// The input thermometer with `strain_shift` applied.
    pub thermometer: NvThermometer,
    /// Inferred temperature at each input power, K.
    pub temperatures: Vec<f64>,
    /// Temperature against trap power with the calibrated strain.
    pub line: LineFit,
    /// Set when temperature does not rise with power.
    pub slope_warning: bool,
}

/// Find the strain offset for which the straight line through
/// `(power, T(D; strain))` meets `room_temperature` at zero power.
///
/// `observations` are `(trap power in W, measured D in Hz)` pairs.
pub fn calibrate_strain(
    observations: &[(f64, f64)],
    thermometer: &NvThermometer,
    gas_pressure: f64,
    room_temperature: f64,
) -> Result<StrainCalibration> {
    require_positive("room_temperature", room_temperature)?;
    check_pressure(gas_pressure)?;
    let powers: Vec<f64> = observations.iter().map(|o| o.0).collect();
    let ds: Vec<f64> = observations.iter().map(|o| o.1).collect();
    if let Some(bad) = powers.iter().chain(&ds).find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("non-finite observation {bad}")));
    }
    let mut distinct = powers.clone();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Calibration("need at least two distinct trap powers".into()));
    }

    // strains for which every observation inverts inside the valid range
    let base = thermometer.with_strain(0.0);
    let (d_min, d_max) = base.splitting_band(gas_pressure);
    let lo = ds.iter().map(|d| d - d_max).fold(STRAIN_BRACKET.0, f64::max);
    let hi = ds.iter().map(|d| d - d_min).fold(STRAIN_BRACKET.1, f64::min);
    if !(lo < hi) {
        return Err(Error::Calibration(format!(
            "no strain in [{:e}, {:e}] Hz maps all observations into the valid temperature range",
            STRAIN_BRACKET.0, STRAIN_BRACKET.1
        )));
    }

    let temperatures_for = |strain: f64| -> Result<Vec<f64>> {
        let th = base.with_strain(strain);
        // bracket ends sit exactly on the band edge; clamp away rounding
        let (band_lo, band_hi) = th.splitting_band(gas_pressure);
        ds.iter()
            .map(|&d| th.splitting_to_temperature(d.clamp(band_lo, band_hi), gas_pressure))
            .collect()
    };
    let intercept_gap = |strain: f64| -> f64 {
        match temperatures_for(strain).and_then(|t| fit_line(&powers, &t)) {
            Ok(line) => line.intercept - room_temperature,
            Err(_) => f64::NAN,
        }
    };
    let strain = bisect(intercept_gap, lo, hi, 0.0, 1e-3).map_err(|e| {
        Error::Calibration(format!("zero-power intercept cannot reach {room_temperature} K: {e}"))
    })?;

    let temperatures = temperatures_for(strain)?;
    let line = fit_line(&powers, &temperatures)?;
    Ok(StrainCalibration {
        strain_shift: strain,
        thermometer: thermometer.with_strain(strain),
        temperatures,
        slope_warning: line.slope <= 0.0,
        line,
    })
}
