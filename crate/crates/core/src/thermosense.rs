//! Macroscopic sensing models: the inverse-pressure heating law, the oxygen
//! photon-count calibration, and the quenched surface-shell estimate.

use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::stats::{fit_line, LineFit};
use crate::units::PA_PER_TORR;

/// `T(P) = t0 + alpha / P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureTempModel {
    /// K.
    pub t0: f64,
    /// K·Pa.
    pub alpha: f64,
}

impl PressureTempModel {
    pub fn new(t0: f64, alpha: f64) -> Result<Self> {
        require_positive("t0", t0)?;
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::domain(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        Ok(Self { t0, alpha })
    }

    /// Predicted temperature at `pressure` (Pa); `t0` as pressure → ∞.
    pub fn predict(&self, pressure: f64) -> f64 {
        if pressure.is_infinite() {
            self.t0
        } else {
            self.t0 + self.alpha / pressure
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureTempFit {
    pub model: PressureTempModel,
    pub stderr_t0: f64,
    pub stderr_alpha: f64,
    /// Largest `|T_fit - T| / T` over the input points.
    pub max_relative_residual: f64,
    pub rms_residual: f64,
}

/// Least squares of temperature against `1/P`. Points are `(Pa, K)`.
pub fn fit_pressure_temperature(points: &[(f64, f64)]) -> Result<PressureTempFit> {
    if points.len() < 2 {
        return Err(Error::Rank(format!("need at least 2 points, got {}", points.len())));
    }
    for &(p, t) in points {
        require_positive("pressure", p)?;
        require_positive("temperature", t)?;
    }
    let inv_p: Vec<f64> = points.iter().map(|p| 1.0 / p.0).collect();
    let temps: Vec<f64> = points.iter().map(|p| p.1).collect();
    let line = fit_line(&inv_p, &temps).map_err(|e| match e {
        Error::Rank(_) => Error::Rank("all pressures are identical".into()),
        other => other,
    })?;
    // a negative alpha or t0 means the data show no heating in vacuum
    let model = PressureTempModel::new(line.intercept, line.slope)?;
    let max_relative_residual = points
        .iter()
        .map(|&(p, t)| (model.predict(p) - t).abs() / t)
        .fold(0.0, f64::max);
    Ok(PressureTempFit {
        model,
        stderr_t0: line.stderr_intercept,
        stderr_alpha: line.stderr_slope,
        max_relative_residual,
        rms_residual: line.rms_residual,
    })
}

/// Linear map from oxygen pressure to the fluorescence count difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct O2Calibration {
    /// photons / s / Pa.
    pub slope: f64,
    /// photons / s.
    pub intercept: f64,
}

impl O2Calibration {
    pub fn new(slope: f64, intercept: f64) -> Result<Self> {
        require_finite("slope", slope)?;
        require_finite("intercept", intercept)?;
        if slope == 0.0 {
            return Err(Error::domain("slope must be non-zero"));
        }
        Ok(Self { slope, intercept })
    }

    /// Calibration with the slope given per Torr and zero intercept.
    pub fn per_torr(slope_per_torr: f64) -> Result<Self> {
        Self::new(slope_per_torr / PA_PER_TORR, 0.0)
    }

    pub fn slope_per_torr(&self) -> f64 {
        self.slope * PA_PER_TORR
    }
}

/// Count difference (photons/s) at `pressure` (Pa).
pub fn o2_count_difference(calib: &O2Calibration, pressure: f64) -> Result<f64> {
    if !(pressure.is_finite() && pressure >= 0.0) {
        return Err(Error::domain(format!("pressure must be finite and >= 0, got {pressure}")));
    }
    Ok(calib.slope * pressure + calib.intercept)
}

/// Oxygen pressure (Pa) that produces `counts` photons/s.
pub fn infer_pressure(calib: &O2Calibration, counts: f64) -> Result<f64> {
    require_finite("counts", counts)?;
    let p = (counts - calib.intercept) / calib.slope;
    if p < 0.0 {
        return Err(Error::OutOfRange {
            quantity: "inferred pressure (Pa)",
            value: p,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(p)
}

/// Fit slope and intercept to `(pressure Pa, count difference)` pairs.
pub fn fit_o2_calibration(points: &[(f64, f64)]) -> Result<(O2Calibration, LineFit)> {
    let p: Vec<f64> = points.iter().map(|x| x.0).collect();
    let c: Vec<f64> = points.iter().map(|x| x.1).collect();
    let line = fit_line(&p, &c)?;
    Ok((O2Calibration::new(line.slope, line.intercept)?, line))
}

/// Thickness of the surface shell whose NV centres no longer fluoresce,
/// assuming uniformly distributed centres: the count ratio equals the
/// volume ratio of the bright core to the whole particle.
pub fn surface_shell_thickness(count_ratio: f64, radius: f64) -> Result<f64> {
    require_positive("radius", radius)?;
    if !(count_ratio > 0.0 && count_ratio <= 1.0) {
        return Err(Error::domain(format!("count ratio must lie in (0, 1], got {count_ratio}")));
    }
    Ok(radius - radius * count_ratio.cbrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_recovery() {
        let truth = PressureTempModel::new(296.0, 5e5).unwrap();
        let pts: Vec<(f64, f64)> = [4e3, 1e4, 3e4, 1e5].iter().map(|&p| (p, truth.predict(p))).collect();
        let fit = fit_pressure_temperature(&pts).unwrap();
        assert!((fit.model.t0 - 296.0).abs() < 1e-9 * 296.0);
        assert!((fit.model.alpha / 5e5 - 1.0).abs() < 1e-9);
        assert!(fit.max_relative_residual < 1e-9);
    }

    #[test]
    fn infinite_pressure_limit() {
        let m = PressureTempModel::new(296.0, 5e5).unwrap();
        assert_eq!(m.predict(f64::INFINITY), 296.0);
        assert!((m.predict(1e12) - 296.0).abs() < 1e-6);
    }

    #[test]
    fn duplicate_pressures_rank_error() {
        let res = fit_pressure_temperature(&[(1e4, 300.0), (1e4, 310.0)]);
        assert!(matches!(res, Err(Error::Rank(_))));
    }

    #[test]
    fn o2_forward() {
        let c = O2Calibration::per_torr(100.0).unwrap();
        let counts = o2_count_difference(&c, 200.0 * PA_PER_TORR).unwrap();
        assert!((counts - 20_000.0).abs() < 1e-9);
        assert_eq!(o2_count_difference(&c, 0.0).unwrap(), 0.0);
        let c2 = O2Calibration::new(0.5, 42.0).unwrap();
        assert_eq!(o2_count_difference(&c2, 0.0).unwrap(), 42.0);
    }

    #[test]
    fn negative_inferred_pressure() {
        let c = O2Calibration::new(0.75, 100.0).unwrap();
        assert!(matches!(infer_pressure(&c, 50.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn shell_thickness_cases() {
        assert_eq!(surface_shell_thickness(1.0, 50e-9).unwrap(), 0.0);
        let t = surface_shell_thickness(0.512, 50e-9).unwrap();
        assert!((t - 10e-9).abs() < 1e-20);
        let t = surface_shell_thickness(0.343, 50e-9).unwrap();
        assert!((t - 15e-9).abs() < 1e-20);
        assert!(surface_shell_thickness(0.0, 50e-9).is_err());
        assert!(surface_shell_thickness(1.5, 50e-9).is_err());
    }
}
