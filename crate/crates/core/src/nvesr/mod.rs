//! NV-centre ESR spectra and zero-field-splitting thermometry.
//!
//! [`esr`] fits the two fluorescence dips at `D ± E` with Gaussians;
//! [`thermometry`] converts the fitted `D` into an absolute temperature and
//! calibrates the per-particle strain offset from a power series.

pub mod esr;
pub mod thermometry;

pub use esr::{fit_esr, model_esr, EsrFitResult, EsrLine, EsrSpectrum, EsrStdErrors};
pub use thermometry::{
    calibrate_strain, splitting_to_temperature, temperature_to_splitting, NvThermometer,
    StrainCalibration,
};
