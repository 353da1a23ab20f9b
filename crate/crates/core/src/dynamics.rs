//! Seeded Langevin simulation of the centre-of-mass motion along one axis.
//!
//! The particle obeys `m dv = F(x) dt - m Γ0 v dt + sqrt(2 m Γ0 k_B T) dW`.
//! For a harmonic trap the linear system is propagated exactly: position and
//! velocity are advanced with the matrix exponential and the jointly
//! Gaussian noise increment has the exact discrete-time covariance, so the
//! sampled process has the stationary statistics of the continuous one at any
//! admissible step. A finite-depth Gaussian well is integrated with a
//! symmetric O-B-A-B-O splitting whose O half-steps are exact
//! Ornstein-Uhlenbeck updates of the velocity.
//!
//! Random numbers come from ChaCha8 seeded from a `u64`. Escape trials use
//! the same seed with one ChaCha stream per trial, so results do not depend
//! on how trials are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, Error, Result};
use crate::gaskin::ParticleModel;
use crate::units::BOLTZMANN;

/// Largest admissible `dt` as a fraction of `min(2π/Ω_x, 1/Γ0)`.
pub const MAX_STEP_FRACTION: f64 = 0.05;
/// Largest admissible `dt` for the Gaussian well, as a fraction of the period.
pub const MAX_SPLITTING_STEP_FRACTION: f64 = 0.02;
/// Escape boundary in units of the beam waist.
pub const ESCAPE_RADIUS_WAISTS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrapShape {
    /// Pure harmonic well of unbounded depth.
    Harmonic,
    /// `U(x) = -depth · exp(-2x²/waist²)`; depth in J, waist in m.
    Gaussian { depth: f64, waist: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapModel {
    /// Trap frequency, rad/s.
    pub omega_x: f64,
    pub shape: TrapShape,
}

impl TrapModel {
    pub fn harmonic(omega_x: f64) -> Result<Self> {
        require_positive("omega_x", omega_x)?;
        Ok(Self {
            omega_x,
            shape: TrapShape::Harmonic,
        })
    }

    pub fn gaussian(omega_x: f64, depth: f64, waist: f64) -> Result<Self> {
        require_positive("omega_x", omega_x)?;
        require_positive("depth", depth)?;
        require_positive("waist", waist)?;
        Ok(Self {
            omega_x,
            shape: TrapShape::Gaussian { depth, waist },
        })
    }

    /// Gaussian well whose curvature at the bottom reproduces `omega_x` for a
    /// particle of mass `mass`: `waist = sqrt(4 depth / (m Ω²))`.
    pub fn gaussian_matched(omega_x: f64, depth: f64, mass: f64) -> Result<Self> {
        require_positive("mass", mass)?;
        require_positive("omega_x", omega_x)?;
        require_positive("depth", depth)?;
        let waist = (4.0 * depth / (mass * omega_x * omega_x)).sqrt();
        Self::gaussian(omega_x, depth, waist)
    }

    pub fn depth(&self) -> Option<f64> {
        match self.shape {
            TrapShape::Harmonic => None,
            TrapShape::Gaussian { depth, .. } => Some(depth),
        }
    }

    pub fn is_finite_depth(&self) -> bool {
        matches!(self.shape, TrapShape::Gaussian { .. })
    }

    /// Potential energy, J.
    pub fn potential(&self, x: f64, mass: f64) -> f64 {
        match self.shape {
            TrapShape::Harmonic => 0.5 * mass * self.omega_x * self.omega_x * x * x,
            TrapShape::Gaussian { depth, waist } => -depth * (-2.0 * x * x / (waist * waist)).exp(),
        }
    }

    /// Force per unit mass, m/s².
    fn acceleration(&self, x: f64, mass: f64) -> f64 {
        match self.shape {
            TrapShape::Harmonic => -self.omega_x * self.omega_x * x,
            TrapShape::Gaussian { depth, waist } => {
                let w2 = waist * waist;
                -4.0 * depth * x / (mass * w2) * (-2.0 * x * x / w2).exp()
            }
        }
    }

    /// Small-oscillation angular frequency at the bottom of the well.
    pub fn curvature_frequency(&self, mass: f64) -> f64 {
        match self.shape {
            TrapShape::Harmonic => self.omega_x,
            TrapShape::Gaussian { depth, waist } => (4.0 * depth / (mass * waist * waist)).sqrt(),
        }
    }
}

/// A sampled realization of the motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// s.
    pub dt: f64,
    /// m.
    pub positions: Vec<f64>,
    /// m/s.
    pub velocities: Vec<f64>,
    pub seed: u64,
}

impl Trajectory {
    pub fn new(dt: f64, positions: Vec<f64>, velocities: Vec<f64>, seed: u64) -> Result<Self> {
        require_positive("dt", dt)?;
        if positions.len() != velocities.len() {
            return Err(Error::domain("positions and velocities differ in length"));
        }
        if positions.len() < 2 {
            return Err(Error::domain("trajectory needs at least 2 samples"));
        }
        Ok(Self {
            dt,
            positions,
            velocities,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }
}

fn validate_common(p: &ParticleModel, trap: &TrapModel, gamma0: f64, temperature: f64) -> Result<()> {
    require_positive("radius", p.radius)?;
    require_positive("density", p.density)?;
    require_positive("omega_x", trap.omega_x)?;
    require_positive("gamma0", gamma0)?;
    require_positive("temperature", temperature)?;
    if let TrapShape::Gaussian { depth, waist } = trap.shape {
        require_positive("depth", depth)?;
        require_positive("waist", waist)?;
    }
    Ok(())
}

/// Exact one-step propagator of the damped harmonic oscillator with thermal
/// forcing: `u' = M u + L ξ` with `ξ ~ N(0, I₂)`.
#[derive(Debug, Clone, Copy)]
pub struct ExactPropagator {
    m: [[f64; 2]; 2],
    l00: f64,
    l10: f64,
    l11: f64,
}

impl ExactPropagator {
    pub fn new(omega: f64, gamma: f64, kt_over_m: f64, dt: f64) -> Self {
        let w2 = omega * omega;
        let disc = w2 - 0.25 * gamma * gamma;
        let (c, s) = if disc > 1e-12 * w2 {
            let w1 = disc.sqrt();
            ((w1 * dt).cos(), (w1 * dt).sin() / w1)
        } else if disc < -1e-12 * w2 {
            let k = (-disc).sqrt();
            ((k * dt).cosh(), (k * dt).sinh() / k)
        } else {
            (1.0, dt)
        };
        let decay = (-0.5 * gamma * dt).exp();
        let m = [
            [decay * (c + 0.5 * gamma * s), decay * s],
            [-decay * w2 * s, decay * (c - 0.5 * gamma * s)],
        ];
        let sxx_inf = kt_over_m / w2;
        let svv_inf = kt_over_m;
        let sxx = sxx_inf - (m[0][0] * m[0][0] * sxx_inf + m[0][1] * m[0][1] * svv_inf);
        let sxv = -(m[0][0] * m[1][0] * sxx_inf + m[0][1] * m[1][1] * svv_inf);
        let svv = svv_inf - (m[1][0] * m[1][0] * sxx_inf + m[1][1] * m[1][1] * svv_inf);
        let l00 = sxx.max(0.0).sqrt();
        let l10 = if l00 > 0.0 { sxv / l00 } else { 0.0 };
        let l11 = (svv - l10 * l10).max(0.0).sqrt();
        Self { m, l00, l10, l11 }
    }

    #[inline]
    pub fn step(&self, x: f64, v: f64, xi1: f64, xi2: f64) -> (f64, f64) {
        let m = &self.m;
        (
            m[0][0] * x + m[0][1] * v + self.l00 * xi1,
            m[1][0] * x + m[1][1] * v + self.l10 * xi1 + self.l11 * xi2,
        )
    }
}

/// Exact Ornstein-Uhlenbeck velocity update over `h`.
#[derive(Debug, Clone, Copy)]
struct OuHalfStep {
    decay: f64,
    kick: f64,
}

impl OuHalfStep {
    fn new(gamma: f64, kt_over_m: f64, h: f64) -> Self {
        let decay = (-gamma * h).exp();
        Self {
            decay,
            kick: ((1.0 - decay * decay) * kt_over_m).sqrt(),
        }
    }

    #[inline]
    fn apply(&self, v: f64, xi: f64) -> f64 {
        self.decay * v + self.kick * xi
    }
}

/// One O-B-A-B-O step in a general potential.
#[inline]
fn splitting_step<R: Rng>(
    trap: &TrapModel,
    mass: f64,
    ou: &OuHalfStep,
    dt: f64,
    x: f64,
    v: f64,
    rng: &mut R,
) -> (f64, f64) {
    let mut v = ou.apply(v, rng.sample(StandardNormal));
    v += 0.5 * dt * trap.acceleration(x, mass);
    let x = x + dt * v;
    v += 0.5 * dt * trap.acceleration(x, mass);
    let v = ou.apply(v, rng.sample(StandardNormal));
    (x, v)
}

/// Simulate `n_steps` samples of the motion starting from the stationary
/// distribution of the harmonic approximation.
pub fn simulate(
    p: &ParticleModel,
    trap: &TrapModel,
    gamma0: f64,
    temperature: f64,
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    validate_common(p, trap, gamma0, temperature)?;
    require_positive("dt", dt)?;
    if n_steps < 2 {
        return Err(Error::domain("n_steps must be at least 2"));
    }
    let mass = p.mass();
    let omega = trap.curvature_frequency(mass);
    let limit = MAX_STEP_FRACTION * (2.0 * std::f64::consts::PI / omega).min(1.0 / gamma0);
    if dt >= limit {
        return Err(Error::domain(format!(
            "dt = {dt:e} s too large; must be < {limit:e} s"
        )));
    }
    if trap.is_finite_depth() {
        let split_limit = MAX_SPLITTING_STEP_FRACTION * 2.0 * std::f64::consts::PI / omega;
        if dt > split_limit {
            return Err(Error::domain(format!(
                "dt = {dt:e} s too large for the anharmonic well; must be <= {split_limit:e} s"
            )));
        }
    }

    let kt_over_m = BOLTZMANN * temperature / mass;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(n_steps);
    let mut velocities = Vec::with_capacity(n_steps);
    let mut x = (kt_over_m / (omega * omega)).sqrt() * rng.sample::<f64, _>(StandardNormal);
    let mut v = kt_over_m.sqrt() * rng.sample::<f64, _>(StandardNormal);
    positions.push(x);
    velocities.push(v);

    match trap.shape {
        TrapShape::Harmonic => {
            let prop = ExactPropagator::new(omega, gamma0, kt_over_m, dt);
            for _ in 1..n_steps {
                let xi1: f64 = rng.sample(StandardNormal);
                let xi2: f64 = rng.sample(StandardNormal);
                (x, v) = prop.step(x, v, xi1, xi2);
                positions.push(x);
                velocities.push(v);
            }
        }
        TrapShape::Gaussian { .. } => {
            let ou = OuHalfStep::new(gamma0, kt_over_m, 0.5 * dt);
            for _ in 1..n_steps {
                (x, v) = splitting_step(trap, mass, &ou, dt, x, v, &mut rng);
                positions.push(x);
                velocities.push(v);
            }
        }
    }
    if positions.iter().chain(&velocities).any(|v| !v.is_finite()) {
        return Err(Error::domain("simulation produced non-finite values"));
    }
    Trajectory::new(dt, positions, velocities, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeTrial {
    /// First-passage time, or the censoring time when `escaped` is false. s.
    pub time: f64,
    pub escaped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeStats {
    /// Total observed time over escapes, s (exponential-law estimate that
    /// accounts for censored trials). `None` when nothing escaped.
    pub mean_escape_time: Option<f64>,
    /// Escapes per unit observed time, 1/s.
    pub escape_rate: f64,
    /// Poisson standard error of `escape_rate`.
    pub escape_rate_stderr: f64,
    pub escape_fraction: f64,
    pub n_escaped: usize,
    pub dt: f64,
    pub trials: Vec<EscapeTrial>,
}

/// Step used by [`escape_experiment`] for a given well and damping.
pub fn escape_step(p: &ParticleModel, trap: &TrapModel, gamma0: f64) -> f64 {
    let mass = p.mass();
    let omega = trap.curvature_frequency(mass).max(trap.omega_x);
    let period = 2.0 * std::f64::consts::PI / omega;
    (MAX_SPLITTING_STEP_FRACTION * period).min(MAX_STEP_FRACTION / gamma0)
}

/// Release the particle at rest at the bottom of a finite-depth well and
/// record when `|x|` first exceeds three waists, for `n_trials` independent
/// trials. Trials that reach `max_time` are reported as censored.
pub fn escape_experiment(
    p: &ParticleModel,
    trap: &TrapModel,
    gamma0: f64,
    temperature: f64,
    max_time: f64,
    n_trials: usize,
    seed: u64,
) -> Result<EscapeStats> {
    validate_common(p, trap, gamma0, temperature)?;
    require_positive("max_time", max_time)?;
    require_finite("max_time", max_time)?;
    let TrapShape::Gaussian { waist, .. } = trap.shape else {
        return Err(Error::domain("escape experiment needs a finite-depth trap"));
    };
    if n_trials == 0 {
        return Err(Error::domain("n_trials must be at least 1"));
    }
    let mass = p.mass();
    let dt = escape_step(p, trap, gamma0);
    let max_steps = (max_time / dt).ceil() as u64;
    let boundary = ESCAPE_RADIUS_WAISTS * waist;
    let kt_over_m = BOLTZMANN * temperature / mass;
    let ou = OuHalfStep::new(gamma0, kt_over_m, 0.5 * dt);

    let trials: Vec<EscapeTrial> = (0..n_trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let (mut x, mut v) = (0.0, 0.0);
            for step in 1..=max_steps {
                (x, v) = splitting_step(trap, mass, &ou, dt, x, v, &mut rng);
                if x.abs() > boundary {
                    return EscapeTrial {
                        time: step as f64 * dt,
                        escaped: true,
                    };
                }
            }
            EscapeTrial {
                time: max_steps as f64 * dt,
                escaped: false,
            }
        })
        .collect();

    let n_escaped = trials.iter().filter(|t| t.escaped).count();
    let total_time: f64 = trials.iter().map(|t| t.time).sum();
    let escape_rate = n_escaped as f64 / total_time;
    Ok(EscapeStats {
        mean_escape_time: (n_escaped > 0).then(|| total_time / n_escaped as f64),
        escape_rate,
        escape_rate_stderr: escape_rate / (n_escaped.max(1) as f64).sqrt(),
        escape_fraction: n_escaped as f64 / n_trials as f64,
        n_escaped,
        dt,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::hz_to_rad_s;

    fn particle() -> ParticleModel {
        ParticleModel::diamond(47e-9).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let trap = TrapModel::harmonic(hz_to_rad_s(100e3)).unwrap();
        let g = hz_to_rad_s(40e3);
        let a = simulate(&particle(), &trap, g, 296.0, 1e-7, 5000, 42).unwrap();
        let b = simulate(&particle(), &trap, g, 296.0, 1e-7, 5000, 42).unwrap();
        let c = simulate(&particle(), &trap, g, 296.0, 1e-7, 5000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn rejects_large_step() {
        let trap = TrapModel::harmonic(hz_to_rad_s(100e3)).unwrap();
        let g = hz_to_rad_s(40e3);
        let res = simulate(&particle(), &trap, g, 296.0, 1e-6, 100, 1);
        assert!(matches!(res, Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_bad_inputs() {
        let trap = TrapModel::harmonic(hz_to_rad_s(100e3)).unwrap();
        assert!(simulate(&particle(), &trap, f64::NAN, 296.0, 1e-8, 10, 1).is_err());
        assert!(simulate(&particle(), &trap, 1e5, 0.0, 1e-8, 10, 1).is_err());
        assert!(simulate(&particle(), &trap, 1e5, 296.0, 1e-8, 1, 1).is_err());
        assert!(TrapModel::harmonic(-1.0).is_err());
        assert!(TrapModel::gaussian(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn propagator_preserves_stationary_covariance() {
        // M Σ∞ Mᵀ + L Lᵀ = Σ∞ for all damping regimes
        for &(w, g) in &[(1.0, 0.1), (1.0, 2.0), (1.0, 5.0), (2.0, 1e-4)] {
            let kt_m = 0.7;
            let dt = 0.03;
            let prop = ExactPropagator::new(w, g, kt_m, dt);
            let m = prop.m;
            let sx = kt_m / (w * w);
            let sv = kt_m;
            let cxx = m[0][0].powi(2) * sx + m[0][1].powi(2) * sv + prop.l00.powi(2);
            let cxv = m[0][0] * m[1][0] * sx + m[0][1] * m[1][1] * sv + prop.l00 * prop.l10;
            let cvv = m[1][0].powi(2) * sx + m[1][1].powi(2) * sv + prop.l10.powi(2) + prop.l11.powi(2);
            assert!((cxx / sx - 1.0).abs() < 1e-10);
            assert!(cxv.abs() < 1e-10 * (sx * sv).sqrt());
            assert!((cvv / sv - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn propagator_matches_free_oscillation() {
        // zero temperature, undamped limit: rotation in phase space
        let prop = ExactPropagator::new(2.0, 1e-12, 0.0, 0.1);
        let (x, v) = prop.step(1.0, 0.0, 0.0, 0.0);
        assert!((x - (0.2f64).cos()).abs() < 1e-10);
        assert!((v + 2.0 * (0.2f64).sin()).abs() < 1e-10);
    }

    #[test]
    fn matched_gaussian_has_requested_curvature() {
        let m = particle().mass();
        let w = hz_to_rad_s(100e3);
        let trap = TrapModel::gaussian_matched(w, 7.0 * BOLTZMANN * 296.0, m).unwrap();
        assert!((trap.curvature_frequency(m) / w - 1.0).abs() < 1e-12);
        // finite-difference check of the force
        let x = 0.3 * match trap.shape {
            TrapShape::Gaussian { waist, .. } => waist,
            _ => unreachable!(),
        };
        let h = x * 1e-6;
        let fd = -(trap.potential(x + h, m) - trap.potential(x - h, m)) / (2.0 * h) / m;
        assert!((trap.acceleration(x, m) / fd - 1.0).abs() < 1e-6);
    }

    #[test]
    fn escape_requires_finite_trap() {
        let trap = TrapModel::harmonic(1e5).unwrap();
        let res = escape_experiment(&particle(), &trap, 1e5, 296.0, 1e-3, 4, 1);
        assert!(matches!(res, Err(Error::Domain(_))));
    }

    #[test]
    fn cold_particle_never_escapes() {
        let m = particle().mass();
        let w = hz_to_rad_s(100e3);
        let trap = TrapModel::gaussian_matched(w, 7.0 * BOLTZMANN * 296.0, m).unwrap();
        let stats = escape_experiment(&particle(), &trap, w, 1e-3, 2e-4, 8, 5).unwrap();
        assert_eq!(stats.escape_fraction, 0.0);
        assert!(stats.mean_escape_time.is_none());
        assert!(stats.trials.iter().all(|t| !t.escaped));
    }

    #[test]
    fn escape_is_schedule_independent() {
        let m = particle().mass();
        let w = hz_to_rad_s(100e3);
        let trap = TrapModel::gaussian_matched(w, 2.0 * BOLTZMANN * 296.0, m).unwrap();
        let a = escape_experiment(&particle(), &trap, w, 296.0, 2e-3, 16, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| escape_experiment(&particle(), &trap, w, 296.0, 2e-3, 16, 9).unwrap());
        assert_eq!(a, b);
    }
}
