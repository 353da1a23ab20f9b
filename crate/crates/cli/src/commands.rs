use std::f64::consts::PI;
use std::path::PathBuf;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use levnv::dynamics::{escape_experiment, simulate, MAX_STEP_FRACTION};
use levnv::gaskin::{
    damping_factor, knudsen_number, mean_free_path, radius_from_damping, viscosity, ThermalState,
    DIAMOND_DENSITY,
};
use levnv::io::file;
use levnv::nvesr::{calibrate_strain, fit_esr, NvThermometer};
use levnv::psdfit::{estimate_psd, fit_psd_with, initial_guess, PsdFitOptions, PsdParams};
use levnv::thermosense::{
    fit_o2_calibration, fit_pressure_temperature, infer_pressure, o2_count_difference,
    surface_shell_thickness, O2Calibration,
};
use levnv::units::{ghz_to_hz, hz_to_rad_s, pa_to_torr, rad_s_to_hz, torr_to_pa, BOLTZMANN};
use levnv::{GasEnvironment, GasSpecies, ParticleModel, TrapModel};

use crate::{usage, CliError, Context};

pub trait Run: Args + Serialize + DeserializeOwned {
    fn run(&self, ctx: &Context) -> Result<Value, CliError>;
}

fn parse_gas(s: &str) -> Result<GasSpecies, String> {
    s.parse().map_err(|e: levnv::Error| e.to_string())
}

fn input_or(path: &Option<PathBuf>, ctx: &Context, fallback: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| ctx.path(fallback))
}

fn required<T: Copy>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| usage(format!("--{flag} is required")))
}

fn required_path(v: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    v.clone().ok_or_else(|| usage(format!("--{flag} is required")))
}

/// Validate a user-facing quantity before unit conversion so errors quote
/// the value as given.
fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(levnv::Error::Domain(format!("{name} must be finite and > 0, got {v}")).into())
    }
}

fn display(p: &std::path::Path) -> String {
    p.display().to_string()
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Particle radius, nm.
    #[arg(long, default_value_t = 47.0)]
    pub radius_nm: f64,
    /// Particle density, kg/m³.
    #[arg(long, alias = "density", default_value_t = DIAMOND_DENSITY)]
    pub density_kg_m3: f64,
    /// Trap frequency Ω_x/2π, Hz.
    #[arg(long, default_value_t = 100e3)]
    pub omega_hz: f64,
    /// Damping rate Γ0/2π, Hz. Computed from the gas when omitted.
    #[arg(long)]
    pub gamma0_hz: Option<f64>,
    #[arg(long, default_value = "air", value_parser = parse_gas)]
    pub gas: GasSpecies,
    /// Gas pressure used when the damping is computed, Torr.
    #[arg(long, default_value_t = 31.0)]
    pub pressure_torr: f64,
    /// Gas temperature used when the damping is computed, K.
    #[arg(long, default_value_t = 296.0)]
    pub gas_temp_k: f64,
    /// Effective temperature of the thermal force, K.
    #[arg(long, default_value_t = 296.0)]
    pub temp_k: f64,
    /// Time step, s. Defaults to a fifth of the stability limit.
    #[arg(long)]
    pub dt_s: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub steps: usize,
    /// Depth of a Gaussian well as E_b/k_B, K. Harmonic when omitted.
    #[arg(long)]
    pub depth_k: Option<f64>,
}

fn particle(radius_nm: f64, density: f64) -> Result<ParticleModel, CliError> {
    Ok(ParticleModel::new(radius_nm * 1e-9, density)?)
}

impl Run for SimulateArgs {
    fn run(&self, ctx: &Context) -> Result<Value, CliError> {
        let p = particle(self.radius_nm, self.density_kg_m3)?;
        let gamma0 = match self.gamma0_hz {
            Some(g) => hz_to_rad_s(positive("gamma0_hz", g)?),
            None => {
                let env = GasEnvironment::new(self.gas, torr_to_pa(self.pressure_torr), self.gas_temp_k)?;
                damping_factor(&p, &env)?
            }
        };
        let omega = hz_to_rad_s(positive("omega_hz", self.omega_hz)?);
        let trap = match self.depth_k {
            Some(d) => TrapModel::gaussian_matched(omega, d * BOLTZMANN, p.mass())?,
            None => TrapModel::harmonic(omega)?,
        };
        let dt = self
            .dt_s
            .unwrap_or(0.2 * MAX_STEP_FRACTION * (2.0 * PI / omega).min(1.0 / gamma0));
        let traj = simulate(&p, &trap, gamma0, self.temp_k, dt, self.steps, ctx.seed)?;
        let path = ctx.path("trajectory.csv");
        file::write_trajectory(&path, &traj)?;
        let n = traj.len() as f64;
        let var_x = traj.positions.iter().map(|x| x * x).sum::<f64>() / n;
        let var_v = traj.velocities.iter().map(|v| v * v).sum::<f64>() / n;
        Ok(json!({
            "trajectory_csv": display(&path),
            "n_samples": traj.len(),
            "dt_s": dt,
            "gamma0_hz": rad_s_to_hz(gamma0),
            "mass_kg": p.mass(),
            "mean_x2_m2": var_x,
            "mean_v2_m2_per_s2": var_v,
            "equipartition_x2_m2": BOLTZMANN * self.temp_k / (p.mass() * omega * omega),
            "equipartition_v2_m2_per_s2": BOLTZMANN * self.temp_k / p.mass(),
        }))
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct PsdArgs {
    /// Trajectory CSV [default: <out>/trajectory.csv]
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Samples per segment.
    #[arg(long, default_value_t = 4096)]
    pub segment: usize,
    /// Fractional segment overlap.
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
}

impl Run for PsdArgs {
    fn run(&self, ctx: &Context) -> Result<Value, CliError> {
        let input = input_or(&self.input, ctx, "trajectory.csv");
        let traj = file::read_trajectory(&input)?;
        let psd = estimate_psd(&traj, self.segment, self.overlap)?;
        let path = ctx.path("psd.csv");
        file::write_psd(&path, &psd)?;
        let n = traj.len() as f64;
        let mean = traj.positions.iter().sum::<f64>() / n;
        let var = traj.positions.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(json!({
            "psd_csv": display(&path),
            "n_bins": psd.frequencies.len(),
            "n_averages": psd.n_averages,
            "bin_width_hz": psd.bin_width(),
            "integral_m2": psd.integral(),
            "sample_variance_m2": var,
        }))
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct FitPsdArgs {
    /// Spectrum CSV [default: <out>/psd.csv]
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Starting Ω_x/2π, Hz.
    #[arg(long)]
    pub guess_omega_hz: Option<f64>,
    /// Starting Γ0/2π, Hz.
    #[arg(long)]
    pub guess_gamma0_hz: Option<f64>,
    /// Starting S0.
    #[arg(long)]
    pub guess_s0: Option<f64>,
    /// Lowest fitted frequency, Hz.
    #[arg(long)]
    pub f_min_hz: Option<f64>,
    /// Highest fitted frequency, Hz.
    #[arg(long)]
    pub f_max_hz: Option<f64>,
}

impl Run for FitPsdArgs {
    fn run(&self, ctx: &Context) -> Result<Value, CliError> {
        let input = input_or(&self.input, ctx, "psd.csv");
        let psd = file::read_psd(&input)?;
        let guess = if self.guess_omega_hz.is_some() || self.guess_gamma0_hz.is_some() || self.guess_s0.is_some() {
            let auto = initial_guess(&psd.frequencies, &psd.values)?;
            Some(PsdParams {
                s0: self.guess_s0.unwrap_or(auto.s0),
                gamma0: self.guess_gamma0_hz.map(hz_to_rad_s).unwrap_or(auto.gamma0),
                omega_x: self.guess_omega_hz.map(hz_to_rad_s).unwrap_or(auto.omega_x),
            })
        } else {
            None
        };
        let opts = PsdFitOptions {
            initial_guess: guess,
            f_min: self.f_min_hz,
            f_max: self.f_max_hz,
        };
        let fit = fit_psd_with(&psd, &opts)?;
        let path = ctx.path("psd_fit.json");
        file::write_json(&path, &fit)?;
        let mut out = serde_json::to_value(fit).expect("fit serializes");
        let map = out.as_object_mut().expect("object");
        map.insert("gamma0_hz".into(), json!(rad_s_to_hz(fit.gamma0)));
        map.insert("omega_x_hz".into(), json!(rad_s_to_hz(fit.omega_x)));
        map.insert("fit_json".into(), json!(display(&path)));
        Ok(out)
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct SizeArgs {
    /// Damping rate Γ0/2π, Hz.
    #[arg(long)]
    pub gamma0_hz: Option<f64>,
    /// Particle density, kg/m³.
    #[arg(long, alias = "density", default_value_t = DIAMOND_DENSITY)]
    pub density_kg_m3: f64,
    #[arg(long, default_value = "air", value_parser = parse_gas)]
    pub gas: GasSpecies,
    #[arg(long, default_value_t = 760.0)]
    pub pressure_torr: f64,
    /// Gas temperature, K.
    #[arg(long, default_value_t = 296.0)]
    pub temp_k: f64,
    /// Mark the particle as hotter than the gas; the inversion then refuses.
    #[arg(long)]
    pub heated: bool,
}

impl Run for SizeArgs {
    fn run(&self, _ctx: &Context) -> Result<Value, CliError> {
        let gamma0_hz = positive("gamma0_hz", required(self.gamma0_hz, "gamma0-hz")?)?;
        let env = GasEnvironment::new(self.gas, torr_to_pa(self.pressure_torr), self.temp_k)?;
        let state = if self.heated {
            ThermalState::Heated
        } else {
            ThermalState::Equilibrium
        };
        let r = radius_from_damping(hz_to_rad_s(gamma0_hz), self.density_kg_m3, &env, state)?;
        let p = ParticleModel::new(r, self.density_kg_m3)?;
        Ok(json!({
            "radius_nm": r * 1e9,
            "diameter_nm": 2.0 * r * 1e9,
            "mass_kg": p.mass(),
            "knudsen_number": knudsen_number(r, &env)?,
            "mean_free_path_nm": mean_free_path(&env)? * 1e9,
            "viscosity_pa_s": viscosity(&env)?,
        }))
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct FitEsrArgs {
    /// ESR scan CSV (freq_hz, i_pl[, sigma]).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Strain shift for converting D to temperature, Hz. No conversion when omitted.
    #[arg(long)]
    pub strain_hz: Option<f64>,
    /// Gas pressure during the scan, Torr.
    #[arg(long, default_value_t = 760.0)]
    pub pressure_torr: f64,
}

impl Run for FitEsrArgs {
    fn run(&self, ctx: &Context) -> Result<Value, CliError> {
        let input = required_path(&self.input, "input")?;
        let spec = file::read_esr(&input)?;
        let fit = fit_esr(&spec)?;
        let path = ctx.path("esr_fit.json");
        file::write_json(&path, &fit)?;
        let mut out = json!({
            "d_ghz": fit.d_splitting * 1e-9,
            "e_mhz": fit.e_splitting * 1e-6,
            "stderr_d_mhz": fit.standard_errors.d * 1e-6,
            "stderr_e_mhz": fit.standard_errors.e * 1e-6,
            "a1": fit.a1,
            "a2": fit.a2,
            "sigma1_mhz": fit.sigma1 * 1e-6,
            "sigma2_mhz": fit.sigma2 * 1e-6,
            "baseline": fit.baseline,
            "contrast": fit.contrast,
            "degenerate": fit.degenerate,
            "converged": fit.converged,
            "residual_rms": fit.residual_rms,
            "fit_json": display(&path),
        });
        if let Some(strain) = self.strain_hz {
            let th = NvThermometer::default().with_strain(strain);
            let t = th.splitting_to_temperature(fit.d_splitting, torr_to_pa(self.pressure_torr))?;
            out["temperature_k"] = json!(t);
        }
        Ok(out)
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct TempArgs {
    /// Measured zero-field splitting, GHz.
    #[arg(long, conflicts_with = "temp_k")]
    pub d_ghz: Option<f64>,
    /// Temperature to convert to a splitting, K.
    #[arg(long)]
    pub temp_k: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub strain_hz: f64,
    #[arg(long, default_value_t = 760.0)]
    pub pressure_torr: f64,
}

impl Run for TempArgs {
    fn run(&self, _ctx: &Context) -> Result<Value, CliError> {
        let th = NvThermometer::default().with_strain(self.strain_hz);
        let p = torr_to_pa(self.pressure_torr);
        let (t, d) = match (self.d_ghz, self.temp_k) {
            (Some(d), None) => {
                let d = ghz_to_hz(d);
                (th.splitting_to_temperature(d, p)?, d)
            }
            (None, Some(t)) => (t, th.temperature_to_splitting(t, p)?),
            _ => return Err(usage("exactly one of --d-ghz and --temp-k is required")),
        };
        Ok(json!({
            "temperature_k": t,
            "d_ghz": d * 1e-9,
            "slope_khz_per_k": th.slope(t) * 1e-3,
        }))
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct CalibrateStrainArgs {
    /// Power series CSV (power_w, d_hz).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 760.0)]
    pub pressure_torr: f64,
    /// Temperature the zero-power intercept must match, K.
    #[arg(long, default_value_t = 296.0)]
    pub room_temp_k: f64,
}

impl Run for CalibrateStrainArgs {
    fn run(&self, ctx: &Context) -> Result<Value, CliError> {
        let input = required_path(&self.input, "input")?;
        let obs = file::read_calibration(&input)?;
        let cal = calibrate_strain(&obs, &NvThermometer::default(), torr_to_pa(self.pressure_torr), self.room_temp_k)?;
        let path = ctx.path("strain_calibration.json");
        file::write_json(&path, &cal)?;
        Ok(json!({
            "strain_hz": cal.strain_shift,
            "strain_mhz": cal.strain_shift * 1e-6,
            "slope_k_per_mw": cal.line.slope * 1e-3,
            "intercept_k": cal.line.intercept,
            "r_squared": cal.line.r_squared,
            "temperatures_k": cal.temperatures,
            "slope_warning": cal.slope_warning,
            "calibration_json": display(&path),
        }))
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct FitTpArgs {
    /// Heating series CSV (pressure_torr, temperature_k).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Also report the fitted temperature at this pressure, Torr.
    #[arg(long)]
    pub predict_torr: Option<f64>,
}

impl Run for FitTpArgs {
    fn run(&self, _ctx: &Context) -> Result<Value, CliError> {
        let input = required_path(&self.input, "input")?;
        let pts = file::read_pressure_temperature(&input)?;
        let fit = fit_pressure_temperature(&pts)?;
        let mut out = json!({
            "t0_k": fit.model.t0,
            "alpha_k_torr": pa_to_torr(fit.model.alpha),
            "alpha_k_pa": fit.model.alpha,
            "stderr_t0_k": fit.stderr_t0,
            "stderr_alpha_k_torr": pa_to_torr(fit.stderr_alpha),
            "max_relative_residual": fit.max_relative_residual,
            "rms_residual_k": fit.rms_residual,
        });
        if let Some(torr) = self.predict_torr {
            if !(torr > 0.0) {
                return Err(levnv::Error::Domain(format!("predict pressure must be > 0, got {torr}")).into());
            }
            out["predicted_temperature_k"] = json!(fit.model.predict(torr_to_pa(torr)));
        }
        Ok(out)
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct O2Args {
    /// Calibration CSV (pressure_torr, delta_counts_per_s) to fit.
    #[arg(long, conflicts_with = "slope_counts_per_torr_s")]
    pub input: Option<PathBuf>,
    /// Known calibration slope, photons/Torr/s.
    #[arg(long)]
    pub slope_counts_per_torr_s: Option<f64>,
    /// Known calibration intercept, photons/s.
    #[arg(long, default_value_t = 0.0)]
    pub intercept_counts_per_s: f64,
    /// Predict the count difference at this oxygen pressure, Torr.
    #[arg(long)]
    pub pressure_torr: Option<f64>,
    /// Infer the oxygen pressure from this count difference, photons/s.
    #[arg(long)]
    pub counts_per_s: Option<f64>,
    /// Bright-core count ratio for the quenched-shell estimate.
    #[arg(long)]
    pub count_ratio: Option<f64>,
    /// Particle radius for the quenched-shell estimate, nm.
    #[arg(long, default_value_t = 50.0)]
    pub radius_nm: f64,
}

impl Run for O2Args {
    fn run(&self, _ctx: &Context) -> Result<Value, CliError> {
        let mut out = serde_json::Map::new();
        let calib = match (&self.input, self.slope_counts_per_torr_s) {
            (Some(path), _) => {
                let (c, line) = fit_o2_calibration(&file::read_o2_counts(path)?)?;
                out.insert("r_squared".into(), json!(line.r_squared));
                out.insert("stderr_slope_counts_per_torr_s".into(), json!(line.stderr_slope * levnv::units::PA_PER_TORR));
                Some(c)
            }
            (None, Some(s)) => Some(O2Calibration::new(s / levnv::units::PA_PER_TORR, self.intercept_counts_per_s)?),
            (None, None) => None,
        };
        if let Some(c) = &calib {
            out.insert("slope_counts_per_torr_s".into(), json!(c.slope_per_torr()));
            out.insert("intercept_counts_per_s".into(), json!(c.intercept));
        }
        let need = |what: &str| usage(format!("{what} needs --input or --slope-counts-per-torr-s"));
        if let Some(torr) = self.pressure_torr {
            let c = calib.as_ref().ok_or_else(|| need("--pressure-torr"))?;
            out.insert("counts_per_s".into(), json!(o2_count_difference(c, torr_to_pa(torr))?));
        }
        if let Some(counts) = self.counts_per_s {
            let c = calib.as_ref().ok_or_else(|| need("--counts-per-s"))?;
            out.insert("inferred_pressure_torr".into(), json!(pa_to_torr(infer_pressure(c, counts)?)));
        }
        if let Some(ratio) = self.count_ratio {
            out.insert(
                "shell_thickness_nm".into(),
                json!(surface_shell_thickness(ratio, self.radius_nm * 1e-9)? * 1e9),
            );
        }
        if out.is_empty() {
            return Err(usage("nothing to do: give --input, --slope-counts-per-torr-s or --count-ratio"));
        }
        Ok(Value::Object(out))
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct EscapeArgs {
    /// Particle radius, nm.
    #[arg(long, default_value_t = 47.0)]
    pub radius_nm: f64,
    /// Particle density, kg/m³.
    #[arg(long, alias = "density", default_value_t = DIAMOND_DENSITY)]
    pub density_kg_m3: f64,
    /// Small-amplitude trap frequency Ω_x/2π, Hz.
    #[arg(long, default_value_t = 100e3)]
    pub omega_hz: f64,
    /// Well depth as E_b/k_B, K.
    #[arg(long, default_value_t = 2072.0)]
    pub depth_k: f64,
    /// Damping rate Γ0/2π, Hz [default: the trap frequency]
    #[arg(long)]
    pub gamma0_hz: Option<f64>,
    /// Effective temperature, K.
    #[arg(long, default_value_t = 296.0)]
    pub temp_k: f64,
    /// Observation window per trial, s.
    #[arg(long, default_value_t = 0.1)]
    pub max_time_s: f64,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
}

impl Run for EscapeArgs {
    fn run(&self, ctx: &Context) -> Result<Value, CliError> {
        let p = particle(self.radius_nm, self.density_kg_m3)?;
        let omega = hz_to_rad_s(positive("omega_hz", self.omega_hz)?);
        let gamma0 = hz_to_rad_s(positive("gamma0_hz", self.gamma0_hz.unwrap_or(self.omega_hz))?);
        let trap = TrapModel::gaussian_matched(omega, self.depth_k * BOLTZMANN, p.mass())?;
        let stats = escape_experiment(&p, &trap, gamma0, self.temp_k, self.max_time_s, self.trials, ctx.seed)?;
        let path = ctx.path("escape_trials.csv");
        file::write_escape_trials(&path, &stats.trials)?;
        Ok(json!({
            "escape_rate_per_s": stats.escape_rate,
            "stderr_escape_rate_per_s": stats.escape_rate_stderr,
            "mean_escape_time_s": stats.mean_escape_time,
            "escape_fraction": stats.escape_fraction,
            "n_escaped": stats.n_escaped,
            "barrier_over_kt": self.depth_k / self.temp_k,
            "dt_s": stats.dt,
            "trials_csv": display(&path),
        }))
    }
}
