//! Physical constants and unit conversions used at I/O boundaries.

/// Boltzmann constant, J/K (exact, SI 2019).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Avogadro constant, 1/mol (exact, SI 2019).
pub const AVOGADRO: f64 = 6.022_140_76e23;

/// Pascal per Torr, fixed conversion used across the toolkit.
pub const PA_PER_TORR: f64 = 133.322;
/// Pascal per bar.
pub const PA_PER_BAR: f64 = 1.0e5;
/// One standard atmosphere in pascal.
pub const ATMOSPHERE_PA: f64 = 101_325.0;

/// Reference temperature for the tabulated viscosities, K.
pub const REFERENCE_TEMPERATURE: f64 = 296.0;

pub fn torr_to_pa(torr: f64) -> f64 {
    torr * PA_PER_TORR
}

pub fn pa_to_torr(pa: f64) -> f64 {
    pa / PA_PER_TORR
}

pub fn ghz_to_hz(ghz: f64) -> f64 {
    ghz * 1e9
}

pub fn hz_to_ghz(hz: f64) -> f64 {
    hz * 1e-9
}

/// Angular frequency (rad/s) from an ordinary frequency (Hz).
pub fn hz_to_rad_s(hz: f64) -> f64 {
    2.0 * std::f64::consts::PI * hz
}

pub fn rad_s_to_hz(rad_s: f64) -> f64 {
    rad_s / (2.0 * std::f64::consts::PI)
}
