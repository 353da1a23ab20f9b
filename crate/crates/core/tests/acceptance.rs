//! Acceptance checks. Run with `--nocapture` to see one PASS/FAIL line per
//! criterion.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use levnv::dynamics::{escape_experiment, simulate};
use levnv::gaskin::{mean_free_path, radius_from_damping, ThermalState, DIAMOND_DENSITY};
use levnv::nvesr::{calibrate_strain, fit_esr, EsrLine, NvThermometer};
use levnv::psdfit::{estimate_psd, fit_psd, model_psd, model_psd_at, thermal_s0, PsdEstimate};
use levnv::stats::{fit_line, mean};
use levnv::thermosense::{
    fit_o2_calibration, fit_pressure_temperature, infer_pressure, o2_count_difference,
    surface_shell_thickness, O2Calibration, PressureTempModel,
};
use levnv::units::{torr_to_pa, BOLTZMANN, PA_PER_BAR, PA_PER_TORR};
use levnv::{EsrSpectrum, GasEnvironment, GasSpecies, ParticleModel, TrapModel};

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id:>2} {name}: {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn atmosphere() -> GasEnvironment {
    GasEnvironment::new(GasSpecies::Air, torr_to_pa(760.0), 296.0).unwrap()
}

#[test]
fn criterion_01_mean_free_path() {
    let s = mean_free_path(&atmosphere()).unwrap();
    let rel = s / 67e-9 - 1.0;
    report(1, "mean free path", rel.abs() < 0.02, format!("s = {:.2} nm ({:+.2}% vs 67 nm)", s * 1e9, rel * 100.0));
}

#[test]
fn criterion_02_size_inversion() {
    let r = radius_from_damping(2.0 * PI * 500e3, DIAMOND_DENSITY, &atmosphere(), ThermalState::Equilibrium).unwrap();
    let d_nm = 2.0 * r * 1e9;
    report(
        2,
        "size inversion",
        (87.0..=101.0).contains(&d_nm),
        format!("diameter = {d_nm:.1} nm, required [87, 101] nm"),
    );
}

#[test]
fn criterion_03_psd_round_trip() {
    let omega = 2.0 * PI * 100e3;
    let gamma = 2.0 * PI * 40e3;
    let freqs: Vec<f64> = (0..=1000).map(|i| i as f64 * 1e3).collect();
    let clean = model_psd(1e3, gamma, omega, &freqs).unwrap();
    let mut converged = 0;
    let mut worst_g: f64 = 0.0;
    let mut worst_w: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0f64, 0.05).unwrap();
        let values: Vec<f64> = clean.iter().map(|v| v * (1.0 + noise.sample(&mut rng)).max(1e-3)).collect();
        let psd = PsdEstimate::new(freqs.clone(), values, 100).unwrap();
        match fit_psd(&psd, None) {
            Ok(fit) => {
                if fit.converged {
                    converged += 1;
                }
                worst_g = worst_g.max((fit.gamma0 / gamma - 1.0).abs());
                worst_w = worst_w.max((fit.omega_x / omega - 1.0).abs());
            }
            Err(_) => worst_g = f64::INFINITY,
        }
    }
    report(
        3,
        "PSD round trip",
        worst_g < 0.05 && worst_w < 0.02 && converged >= 19,
        format!(
            "worst |ΔΓ0| = {:.2}%, worst |ΔΩ| = {:.3}%, converged {converged}/20",
            worst_g * 100.0,
            worst_w * 100.0
        ),
    );
}

#[test]
fn criterion_04_simulator_physics() {
    let p = ParticleModel::diamond(47e-9).unwrap();
    let omega = 2.0 * PI * 100e3;
    let gamma = 2.0 * PI * 40e3;
    let t = 296.0;
    let trap = TrapModel::harmonic(omega).unwrap();
    let traj = simulate(&p, &trap, gamma, t, 0.1e-6, 10_000_000, 2024).unwrap();
    let x2 = traj.positions.iter().map(|x| x * x).sum::<f64>() / traj.len() as f64;
    let expected = BOLTZMANN * t / (p.mass() * omega * omega);
    let equi = x2 / expected - 1.0;

    let psd = estimate_psd(&traj, 16384, 0.5).unwrap();
    let s0 = thermal_s0(t, p.mass());
    let (lo, hi) = (omega / (2.0 * PI) / 10.0, 3.0 * omega / (2.0 * PI));
    let devs: Vec<f64> = psd
        .frequencies
        .iter()
        .zip(&psd.values)
        .filter(|(f, _)| (lo..=hi).contains(*f))
        .map(|(&f, &v)| {
            let d = v / model_psd_at(s0, gamma, omega, f) - 1.0;
            d * d
        })
        .collect();
    let rms = mean(&devs).sqrt();
    report(
        4,
        "simulator physics",
        equi.abs() < 0.02 && rms < 0.10,
        format!("<x²> off by {:+.2}%, PSD RMS deviation {:.2}% over {} bins", equi * 100.0, rms * 100.0, devs.len()),
    );
}

#[test]
fn criterion_05_thermometry() {
    let th = NvThermometer::default();
    let d296 = th.temperature_to_splitting(296.0, 0.0).unwrap();
    let hand = 2.870403e9;
    let poly_ok = (d296 - hand).abs() < 1e3;

    let mut worst: f64 = 0.0;
    let mut t = 296.0;
    while t <= 600.0 {
        let d = th.temperature_to_splitting(t, 0.0).unwrap();
        worst = worst.max((th.splitting_to_temperature(d, 0.0).unwrap() - t).abs());
        t += 0.25;
    }
    let d_bar = th.temperature_to_splitting(296.0, PA_PER_BAR).unwrap();
    let shift = (th.splitting_to_temperature(d_bar, 0.0).unwrap() - 296.0).abs();
    report(
        5,
        "thermometry",
        poly_ok && worst < 1e-3 && (shift - 0.020).abs() <= 0.002,
        format!(
            "D(296 K) = {:.6} GHz ({:+.0} Hz vs hand value), worst round trip {:.1e} K, 1 bar shift {:.1} mK",
            d296 * 1e-9,
            d296 - hand,
            worst,
            shift * 1e3
        ),
    );
}

#[test]
fn criterion_06_strain_calibration() {
    let th = NvThermometer::default();
    let powers: Vec<f64> = (1..=10).map(|i| 0.05 * i as f64).collect();
    let mut worst_clean: f64 = 0.0;
    let mut worst_noisy: f64 = 0.0;
    for (k, &strain) in [-5e6, 0.0, 4e6].iter().enumerate() {
        let truth = th.with_strain(strain);
        let clean: Vec<(f64, f64)> = powers
            .iter()
            .map(|&w| (w, truth.temperature_to_splitting(296.0 + 120.0 * w, 0.0).unwrap()))
            .collect();
        let cal = calibrate_strain(&clean, &th, 0.0, 296.0).unwrap();
        worst_clean = worst_clean.max((cal.strain_shift - strain).abs());

        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let noise = Normal::new(0.0, 0.2e6).unwrap();
        let noisy: Vec<(f64, f64)> = clean.iter().map(|&(w, d)| (w, d + noise.sample(&mut rng))).collect();
        let cal = calibrate_strain(&noisy, &th, 0.0, 296.0).unwrap();
        worst_noisy = worst_noisy.max((cal.strain_shift - strain).abs());
    }
    report(
        6,
        "strain calibration",
        worst_clean < 50e3 && worst_noisy < 0.5e6,
        format!("worst error {:.3} kHz noiseless, {:.1} kHz with 0.2 MHz noise", worst_clean * 1e-3, worst_noisy * 1e-3),
    );
}

#[test]
fn criterion_07_pressure_temperature() {
    let truth = PressureTempModel::new(296.0, 4.0e5).unwrap();
    let clean: Vec<(f64, f64)> = [5e2, 1e3, 4e3, 2e4, 1e5].iter().map(|&p| (p, truth.predict(p))).collect();
    let exact = fit_pressure_temperature(&clean).unwrap();
    let exact_ok = exact.max_relative_residual < 1e-9
        && (exact.model.t0 / 296.0 - 1.0).abs() < 1e-9
        && (exact.model.alpha / 4e5 - 1.0).abs() < 1e-9;

    // the law through 300 K at 760 Torr and 450 K at 31 Torr
    let (p1, p2) = (torr_to_pa(760.0), torr_to_pa(31.0));
    let alpha = (450.0 - 300.0) / (1.0 / p2 - 1.0 / p1);
    let anchored = PressureTempModel::new(300.0 - alpha / p1, alpha).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 0.002).unwrap();
    let data: Vec<(f64, f64)> = [31.0, 50.0, 100.0, 200.0, 400.0, 760.0]
        .iter()
        .map(|&torr| {
            let p = torr_to_pa(torr);
            (p, anchored.predict(p) * (1.0 + noise.sample(&mut rng)))
        })
        .collect();
    let fit = fit_pressure_temperature(&data).unwrap();
    report(
        7,
        "pressure-temperature",
        exact_ok && fit.max_relative_residual < 0.01,
        format!(
            "noiseless residual {:.1e}; anchored fit T0 = {:.1} K, T(31 Torr) = {:.1} K, max residual {:.2}%",
            exact.max_relative_residual,
            fit.model.t0,
            fit.model.predict(p2),
            fit.max_relative_residual * 100.0
        ),
    );
}

#[test]
fn criterion_08_kramers_scaling() {
    let p = ParticleModel::diamond(47e-9).unwrap();
    let omega = 2.0 * PI * 100e3;
    let depth = 7.0 * BOLTZMANN * 296.0;
    let trap = TrapModel::gaussian_matched(omega, depth, p.mass()).unwrap();
    let mut inv_t = Vec::new();
    let mut ln_rate = Vec::new();
    let mut summary = Vec::new();
    for barrier in [6.0, 7.0, 8.0] {
        let t = depth / (BOLTZMANN * barrier);
        let stats = escape_experiment(&p, &trap, omega, t, 0.5, 500, 8).unwrap();
        inv_t.push(1.0 / t);
        ln_rate.push(stats.escape_rate.ln());
        summary.push(format!("{barrier}: {:.0}/s ({} esc)", stats.escape_rate, stats.n_escaped));
    }
    let line = fit_line(&inv_t, &ln_rate).unwrap();
    let target = -depth / BOLTZMANN;
    let rel = line.slope / target - 1.0;
    report(
        8,
        "Kramers scaling",
        line.r_squared > 0.95 && rel.abs() < 0.2,
        format!(
            "R² = {:.4}, slope = {:.0} K vs {:.0} K ({:+.1}%); rates {}",
            line.r_squared,
            line.slope,
            target,
            rel * 100.0,
            summary.join(", ")
        ),
    );
}

fn esr_scan(line: EsrLine, noise: f64, seed: u64) -> EsrSpectrum {
    let f: Vec<f64> = (0..=600).map(|i| 2.840e9 + i as f64 * 0.1e6).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nd = Normal::new(0.0, noise).unwrap();
    let y = f.iter().map(|&x| line.eval(x) + nd.sample(&mut rng)).collect();
    EsrSpectrum::new(f, y, None).unwrap()
}

#[test]
fn criterion_09_esr_fitting() {
    let line = |a: f64| EsrLine {
        d: 2.870e9,
        e: 5e6,
        a1: a,
        a2: a,
        sigma1: 2.5e6,
        sigma2: 2.5e6,
        baseline: 1.0,
    };
    let mut worst_d: f64 = 0.0;
    let mut worst_e: f64 = 0.0;
    for seed in 0..10 {
        let fit = fit_esr(&esr_scan(line(0.05), 0.01, seed)).unwrap();
        worst_d = worst_d.max((fit.d_splitting - 2.870e9).abs());
        worst_e = worst_e.max(if fit.degenerate { f64::INFINITY } else { (fit.e_splitting - 5e6).abs() });
    }
    let (atm, low) = (line(0.02), line(0.05));
    let construct = |l: &EsrLine| l.baseline - l.minimum_on(2.840e9, 2.900e9).1;
    let by_construction = construct(&low) / construct(&atm);
    let fit_atm = fit_esr(&esr_scan(atm, 0.01, 42)).unwrap();
    let fit_low = fit_esr(&esr_scan(low, 0.01, 43)).unwrap();
    let by_fit = fit_low.contrast / fit_atm.contrast;
    report(
        9,
        "ESR fitting",
        worst_d < 0.2e6 && worst_e < 0.5e6 && by_construction > 2.0 && by_fit > 2.0,
        format!(
            "worst |ΔD| = {:.1} kHz, worst |ΔE| = {:.1} kHz over 10 scans; contrast ratio {by_construction:.2} constructed, {by_fit:.2} fitted",
            worst_d * 1e-3,
            worst_e * 1e-3
        ),
    );
}

#[test]
fn criterion_10_surface_shell() {
    let r = 50e-9;
    let t = surface_shell_thickness(0.512, r).unwrap();
    let exact = (t - 10e-9).abs() < 1e-21;
    let t_thick = surface_shell_thickness(0.343, r).unwrap();
    let band = (0..=100).all(|i| {
        let ratio = 0.343 + (0.512 - 0.343) * i as f64 / 100.0;
        let s = surface_shell_thickness(ratio, r).unwrap();
        (10e-9 - 1e-15..=15e-9 + 1e-15).contains(&s)
    });
    report(
        10,
        "surface shell",
        exact && band && (t_thick - 15e-9).abs() < 1e-15,
        format!("ratio 0.512 → {:.6} nm, ratio 0.343 → {:.6} nm", t * 1e9, t_thick * 1e9),
    );
}

#[test]
fn criterion_11_o2_sensing() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0f64, 0.05).unwrap();
    let pts: Vec<(f64, f64)> = (1..=12)
        .map(|i| {
            let torr = 20.0 * i as f64;
            (torr_to_pa(torr), 100.0 * torr * (1.0 + noise.sample(&mut rng)))
        })
        .collect();
    let (cal, _) = fit_o2_calibration(&pts).unwrap();
    let slope = cal.slope_per_torr();

    let exact = O2Calibration::per_torr(100.0).unwrap();
    // worst error in units of the last place of the input pressure
    let worst_ulps = (1..=5000)
        .map(|i| {
            let p = i as f64 * 0.05 * PA_PER_TORR;
            let back = infer_pressure(&exact, o2_count_difference(&exact, p).unwrap()).unwrap();
            (back - p).abs() / (p * f64::EPSILON)
        })
        .fold(0.0, f64::max);
    let round_trip = worst_ulps <= 1.0;
    report(
        11,
        "O2 sensing",
        (slope / 100.0 - 1.0).abs() < 0.1 && round_trip,
        format!("fitted slope {slope:.2} photon/Torr/s, worst round trip error {worst_ulps:.2} ulp"),
    );
}
