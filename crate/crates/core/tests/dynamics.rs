use std::f64::consts::PI;

use levnv::dynamics::{escape_experiment, simulate};
use levnv::psdfit::{estimate_psd, fit_psd, thermal_s0};
use levnv::stats::fit_line;
use levnv::units::BOLTZMANN;
use levnv::{ParticleModel, TrapModel};

fn particle() -> ParticleModel {
    ParticleModel::diamond(47e-9).unwrap()
}

fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    (0..=max_lag)
        .map(|k| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / (n - k) as f64)
        .collect()
}

#[test]
fn envelope_decays_at_half_gamma() {
    let omega = 2.0 * PI * 100e3;
    let gamma = 2.0 * PI * 5e3;
    let dt = 0.25e-6;
    let trap = TrapModel::harmonic(omega).unwrap();
    let traj = simulate(&particle(), &trap, gamma, 296.0, dt, 6_000_000, 11).unwrap();
    let max_lag = (100e-6 / dt) as usize;
    let c = autocorrelation(&traj.positions, max_lag);

    // extrema of C(τ), refined by a parabola through three samples
    let mut taus = Vec::new();
    let mut logs = Vec::new();
    for k in 1..max_lag {
        let (a, b, d) = (c[k - 1].abs(), c[k].abs(), c[k + 1].abs());
        if b > a && b >= d {
            let denom = a - 2.0 * b + d;
            let shift = if denom != 0.0 { 0.5 * (a - d) / denom } else { 0.0 };
            let peak = b - 0.25 * (a - d) * shift;
            taus.push((k as f64 + shift) * dt);
            logs.push(peak.ln());
        }
    }
    assert!(taus.len() > 10);
    let line = fit_line(&taus, &logs).unwrap();
    let rate = -line.slope;
    assert!(
        (rate / (0.5 * gamma) - 1.0).abs() < 0.1,
        "envelope rate {rate} vs {}",
        0.5 * gamma
    );
}

#[test]
fn escape_rate_increases_with_temperature() {
    let p = particle();
    let omega = 2.0 * PI * 100e3;
    let depth = 6.0 * BOLTZMANN * 296.0;
    let trap = TrapModel::gaussian_matched(omega, depth, p.mass()).unwrap();
    let rates: Vec<f64> = [250.0, 296.0, 350.0]
        .iter()
        .map(|&t| {
            escape_experiment(&p, &trap, omega, t, 0.05, 500, 5)
                .unwrap()
                .escape_rate
        })
        .collect();
    assert!(rates[0] < rates[1] && rates[1] < rates[2], "{rates:?}");
}

#[test]
fn cold_particle_never_escapes() {
    let p = particle();
    let omega = 2.0 * PI * 100e3;
    let trap = TrapModel::gaussian_matched(omega, 5.0 * BOLTZMANN * 296.0, p.mass()).unwrap();
    let stats = escape_experiment(&p, &trap, omega, 1e-6, 1e-3, 16, 0).unwrap();
    assert_eq!(stats.escape_fraction, 0.0);
    assert!(stats.mean_escape_time.is_none());
}

#[test]
fn escape_independent_of_thread_count() {
    let p = particle();
    let omega = 2.0 * PI * 100e3;
    let trap = TrapModel::gaussian_matched(omega, 4.0 * BOLTZMANN * 296.0, p.mass()).unwrap();
    let run = || escape_experiment(&p, &trap, omega, 296.0, 2e-3, 64, 9).unwrap();
    let parallel = run();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(parallel, single);
}

#[test]
fn simulated_spectrum_fit_recovers_parameters() {
    let omega = 2.0 * PI * 100e3;
    let gamma = 2.0 * PI * 40e3;
    let trap = TrapModel::harmonic(omega).unwrap();
    let traj = simulate(&particle(), &trap, gamma, 296.0, 0.1e-6, 10_000_000, 3).unwrap();
    let psd = estimate_psd(&traj, 16384, 0.5).unwrap();
    let fit = fit_psd(&psd, None).unwrap();
    assert!(fit.converged);
    assert!((fit.gamma0 / gamma - 1.0).abs() < 0.05, "Γ0 {}", fit.gamma0 / (2.0 * PI));
    assert!((fit.omega_x / omega - 1.0).abs() < 0.02, "Ω {}", fit.omega_x / (2.0 * PI));
    let s0 = thermal_s0(296.0, particle().mass());
    assert!((fit.s0 / s0 - 1.0).abs() < 0.05, "S0 {} vs {s0}", fit.s0);
}
