//! Gas kinetics: viscosity, mean free path, Knudsen-corrected viscous damping
//! of a sphere, and the inverse problem of sizing a particle from its damping.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::roots::bisect;
use crate::units::{AVOGADRO, BOLTZMANN, REFERENCE_TEMPERATURE};

/// Density of diamond, kg/m³.
pub const DIAMOND_DENSITY: f64 = 3510.0;

/// Temperature window in which the viscosity laws are trusted, K.
pub const VISCOSITY_VALID_RANGE: (f64, f64) = (100.0, 1000.0);

/// Radius bracket for the damping inversion, m.
pub const RADIUS_BRACKET: (f64, f64) = (1e-9, 10e-6);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GasSpecies {
    Air,
    Oxygen,
    Helium,
}

impl GasSpecies {
    /// Molar mass, kg/mol.
    pub fn molar_mass(self) -> f64 {
        match self {
            GasSpecies::Air => 28.97e-3,
            GasSpecies::Oxygen => 32.00e-3,
            GasSpecies::Helium => 4.003e-3,
        }
    }

    /// Dynamic viscosity at 296 K, Pa·s.
    pub fn reference_viscosity(self) -> f64 {
        match self {
            GasSpecies::Air => 18.52e-6,
            GasSpecies::Oxygen => 20.48e-6,
            GasSpecies::Helium => 19.6e-6,
        }
    }

    fn temperature_law(self) -> ViscosityLaw {
        match self {
            GasSpecies::Air => ViscosityLaw::Sutherland(110.4),
            GasSpecies::Oxygen => ViscosityLaw::Sutherland(127.0),
            // Sutherland fits helium poorly
            GasSpecies::Helium => ViscosityLaw::Power(0.647),
        }
    }
}

impl std::str::FromStr for GasSpecies {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "air" => Ok(GasSpecies::Air),
            "oxygen" | "o2" => Ok(GasSpecies::Oxygen),
            "helium" | "he" => Ok(GasSpecies::Helium),
            other => Err(Error::domain(format!("unknown gas species '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum ViscosityLaw {
    /// Sutherland constant, K.
    Sutherland(f64),
    /// Exponent of η ∝ T^n.
    Power(f64),
}

/// A gas bath: species, pressure and temperature, with per-species defaults
/// for molar mass and reference viscosity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasEnvironment {
    pub species: GasSpecies,
    /// Pa.
    pub pressure: f64,
    /// K.
    pub bath_temperature: f64,
    /// kg/mol.
    pub molar_mass: f64,
    /// Pa·s at 296 K.
    pub viscosity_ref: f64,
}

impl GasEnvironment {
    pub fn new(species: GasSpecies, pressure: f64, bath_temperature: f64) -> Result<Self> {
        Self::with_properties(
            species,
            pressure,
            bath_temperature,
            species.molar_mass(),
            species.reference_viscosity(),
        )
    }

    pub fn with_properties(
        species: GasSpecies,
        pressure: f64,
        bath_temperature: f64,
        molar_mass: f64,
        viscosity_ref: f64,
    ) -> Result<Self> {
        require_positive("pressure", pressure)?;
        require_positive("bath_temperature", bath_temperature)?;
        require_positive("molar_mass", molar_mass)?;
        require_positive("viscosity_ref", viscosity_ref)?;
        Ok(Self {
            species,
            pressure,
            bath_temperature,
            molar_mass,
            viscosity_ref,
        })
    }

    /// Same gas at a different pressure.
    pub fn at_pressure(&self, pressure: f64) -> Result<Self> {
        Self::with_properties(
            self.species,
            pressure,
            self.bath_temperature,
            self.molar_mass,
            self.viscosity_ref,
        )
    }

    /// Mass of a single gas molecule, kg.
    pub fn molecule_mass(&self) -> f64 {
        self.molar_mass / AVOGADRO
    }
}

/// Spherical particle with hydrodynamic radius and material density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleModel {
    /// m.
    pub radius: f64,
    /// kg/m³.
    pub density: f64,
}

impl ParticleModel {
    pub fn new(radius: f64, density: f64) -> Result<Self> {
        require_positive("radius", radius)?;
        require_positive("density", density)?;
        Ok(Self { radius, density })
    }

    pub fn diamond(radius: f64) -> Result<Self> {
        Self::new(radius, DIAMOND_DENSITY)
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius.powi(3)
    }

    /// kg.
    pub fn mass(&self) -> f64 {
        self.density * self.volume()
    }
}

/// Dynamic viscosity, Pa·s. Pressure independent.
pub fn viscosity(env: &GasEnvironment) -> Result<f64> {
    let t = env.bath_temperature;
    let (lo, hi) = VISCOSITY_VALID_RANGE;
    if !(lo..=hi).contains(&t) {
        return Err(Error::domain(format!(
            "viscosity law valid for {lo}..{hi} K, got {t} K"
        )));
    }
    let t_ref = REFERENCE_TEMPERATURE;
    let ratio = match env.species.temperature_law() {
        ViscosityLaw::Sutherland(s) => (t / t_ref).powf(1.5) * (t_ref + s) / (t + s),
        ViscosityLaw::Power(n) => (t / t_ref).powf(n),
    };
    Ok(env.viscosity_ref * ratio)
}

/// Mean free path of gas molecules, m: `s = (η/P)·sqrt(π k_B T / (2 m_gas))`.
pub fn mean_free_path(env: &GasEnvironment) -> Result<f64> {
    let eta = viscosity(env)?;
    let kt = BOLTZMANN * env.bath_temperature;
    Ok(eta / env.pressure * (PI * kt / (2.0 * env.molecule_mass())).sqrt())
}

pub fn knudsen_number(radius: f64, env: &GasEnvironment) -> Result<f64> {
    Ok(mean_free_path(env)? / radius)
}

/// Slip-regime correction `c_K(Kn) = 0.31 Kn / (0.785 + 1.152 Kn + Kn²)`.
pub fn slip_correction(kn: f64) -> f64 {
    0.31 * kn / (0.785 + 1.152 * kn + kn * kn)
}

/// Combined rarefaction factor multiplying the Stokes rate.
pub fn rarefaction_factor(kn: f64) -> f64 {
    0.619 / (0.619 + kn) * (1.0 + slip_correction(kn))
}

/// Stokes damping rate `6πηr / m`, rad/s, without rarefaction.
pub fn stokes_damping(p: &ParticleModel, env: &GasEnvironment) -> Result<f64> {
    Ok(6.0 * PI * viscosity(env)? * p.radius / p.mass())
}

/// Viscous damping factor Γ0, rad/s.
pub fn damping_factor(p: &ParticleModel, env: &GasEnvironment) -> Result<f64> {
    let kn = knudsen_number(p.radius, env)?;
    Ok(stokes_damping(p, env)? * rarefaction_factor(kn))
}

/// Whether the particle shares the gas temperature. The damping law only
/// holds in equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermalState {
    Equilibrium,
    Heated,
}

/// Hydrodynamic radius whose damping factor equals `gamma0` (rad/s).
///
/// Refuses particles marked [`ThermalState::Heated`]: a hot particle in a
/// cold gas violates the assumptions of the damping law.
pub fn radius_from_damping(
    gamma0: f64,
    density: f64,
    env: &GasEnvironment,
    state: ThermalState,
) -> Result<f64> {
    require_positive("gamma0", gamma0)?;
    require_positive("density", density)?;
    if state == ThermalState::Heated {
        return Err(Error::domain(
            "radius inversion requires the particle to be in thermal equilibrium with the gas",
        ));
    }
    // log-damping mismatch; Γ0 falls monotonically with r
    let s = mean_free_path(env)?;
    let eta = viscosity(env)?;
    let residual = |r: f64| {
        let stokes = 6.0 * PI * eta * r / (density * 4.0 / 3.0 * PI * r.powi(3));
        (stokes * rarefaction_factor(s / r)).ln() - gamma0.ln()
    };
    let (lo, hi) = RADIUS_BRACKET;
    bisect(residual, lo, hi, 1e-10, 0.0).map_err(|_| {
        Error::Inversion(format!(
            "no radius in [{lo:e}, {hi:e}] m reproduces gamma0 = {gamma0:e} rad/s"
        ))
    })
}
