//! Simulation and parameter estimation for optically levitated nanodiamonds
//! carrying NV centers.
//!
//! The crate is organised by physical layer:
//!
//! - [`gaskin`]: gas viscosity, mean free path, Knudsen-corrected damping and
//!   the inverse problem of sizing a particle from its damping rate.
//! - [`dynamics`]: seeded Langevin simulation of the centre-of-mass motion in a
//!   harmonic or finite-depth Gaussian trap, including escape experiments.
//! - [`psdfit`]: averaged-periodogram spectra and weighted least-squares fits
//!   of the damped-oscillator spectral density.
//! - [`nvesr`]: double-Gaussian ESR line fits, zero-field-splitting thermometry
//!   and zero-power strain calibration.
//! - [`thermosense`]: pressure-temperature law, oxygen count calibration and
//!   the quenched-shell geometry estimate.
//! - [`io`]: CSV and JSON file formats shared with the command-line tool.
//!
//! All quantities are SI internally. Torr, GHz and nm appear only in the
//! conversion helpers in [`units`].

pub mod dynamics;
pub mod error;
pub mod gaskin;
pub mod io;
pub mod lsq;
pub mod nvesr;
pub mod psdfit;
pub mod roots;
pub mod stats;
pub mod thermosense;
pub mod units;

pub use dynamics::{EscapeStats, TrapModel, Trajectory};
pub use error::{Error, Result};
pub use gaskin::{GasEnvironment, GasSpecies, ParticleModel};
pub use nvesr::{EsrFitResult, EsrSpectrum, NvThermometer, StrainCalibration};
pub use psdfit::{PsdEstimate, PsdFitResult};
pub use thermosense::{O2Calibration, PressureTempModel};
