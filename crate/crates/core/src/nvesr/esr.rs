use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::lsq::{self, LeastSquares, LmOptions};
use crate::stats;

/// Upper bound on normalized fluorescence accepted in a scan.
pub const MAX_I_PL: f64 = 1.2;

/// A continuous-wave ESR scan: microwave frequency against normalized
/// fluorescence (with / without microwave).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsrSpectrum {
    /// Hz, strictly increasing.
    pub frequencies: Vec<f64>,
    pub i_pl: Vec<f64>,
    /// Optional per-point standard deviation of `i_pl`.
    pub sigma: Option<Vec<f64>>,
}

impl EsrSpectrum {
    pub fn new(frequencies: Vec<f64>, i_pl: Vec<f64>, sigma: Option<Vec<f64>>) -> Result<Self> {
        if frequencies.len() != i_pl.len() {
            return Err(Error::domain("frequency and i_pl lengths differ"));
        }
        if frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("frequencies must be strictly increasing"));
        }
        if let Some(&bad) = i_pl.iter().find(|v| !(**v > 0.0 && **v <= MAX_I_PL)) {
            return Err(Error::domain(format!("i_pl value {bad} outside (0, {MAX_I_PL}]")));
        }
        if let Some(s) = &sigma {
            if s.len() != i_pl.len() {
                return Err(Error::domain("sigma length differs from i_pl"));
            }
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::domain("sigma values must be finite and > 0"));
            }
        }
        Ok(Self {
            frequencies,
            i_pl,
            sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// Parameters of the double-Gaussian line shape
/// `I(f) = baseline − a1 g(f; d−e, σ1) − a2 g(f; d+e, σ2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsrLine {
    /// Hz.
    pub d: f64,
    /// Hz, half the dip separation.
    pub e: f64,
    pub a1: f64,
    pub a2: f64,
    /// Hz.
    pub sigma1: f64,
    /// Hz.
    pub sigma2: f64,
    pub baseline: f64,
}

impl EsrLine {
    #[inline]
    pub fn eval(&self, f: f64) -> f64 {
        let g1 = (-(f - (self.d - self.e)).powi(2) / (2.0 * self.sigma1 * self.sigma1)).exp();
        let g2 = (-(f - (self.d + self.e)).powi(2) / (2.0 * self.sigma2 * self.sigma2)).exp();
        self.baseline - self.a1 * g1 - self.a2 * g2
    }

    /// Lowest value of the curve: dense scan over `[lo, hi]` then golden
    /// section refinement around the best sample.
    pub fn minimum_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let n = 4000;
        let step = (hi - lo) / n as f64;
        let mut best = (lo, self.eval(lo));
        for i in 1..=n {
            let f = lo + i as f64 * step;
            let v = self.eval(f);
            if v < best.1 {
                best = (f, v);
            }
        }
        let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if self.eval(c) < self.eval(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let f = 0.5 * (a + b);
        let v = self.eval(f);
        if v < best.1 {
            (f, v)
        } else {
            best
        }
    }
}

/// Evaluate the double-Gaussian line shape. Widths must be positive.
#[allow(clippy::too_many_arguments)]
pub fn model_esr(
    d: f64,
    e: f64,
    a1: f64,
    a2: f64,
    sigma1: f64,
    sigma2: f64,
    baseline: f64,
    frequencies: &[f64],
) -> Result<Vec<f64>> {
    require_positive("sigma1", sigma1)?;
    require_positive("sigma2", sigma2)?;
    let line = EsrLine {
        d,
        e,
        a1,
        a2,
        sigma1,
        sigma2,
        baseline,
    };
    Ok(frequencies.iter().map(|&f| line.eval(f)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EsrStdErrors {
    pub d: f64,
    pub e: f64,
    pub a1: f64,
    pub a2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsrFitResult {
    /// Centre of the two dips, Hz.
    pub d_splitting: f64,
    /// Half the dip separation, Hz.
    pub e_splitting: f64,
    pub a1: f64,
    pub a2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub baseline: f64,
    /// Baseline minus the minimum of the fitted curve.
    pub contrast: f64,
    pub standard_errors: EsrStdErrors,
    /// Fewer than two dips could be resolved; `e_splitting` is 0 and the
    /// line is a single Gaussian.
    pub degenerate: bool,
    pub converged: bool,
    pub residual_rms: f64,
}

impl EsrFitResult {
    pub fn line(&self) -> EsrLine {
        EsrLine {
            d: self.d_splitting,
            e: self.e_splitting,
            a1: self.a1,
            a2: self.a2,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            baseline: self.baseline,
        }
    }
}

/// Least-squares problem in MHz offsets from a reference frequency.
///
/// Double layout: `[c1, c2, a1, a2, ln σ1, ln σ2, b]`.
/// Single layout: `[c, a, ln σ, b]`.
struct EsrProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
    double: bool,
}

#[inline]
fn gauss(x: f64, c: f64, s: f64) -> f64 {
    (-(x - c).powi(2) / (2.0 * s * s)).exp()
}

impl LeastSquares for EsrProblem<'_> {
    fn n_params(&self) -> usize {
        if self.double {
            7
        } else {
            4
        }
    }
    fn n_residuals(&self) -> usize {
        self.x.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (i, &x) in self.x.iter().enumerate() {
            let model = if self.double {
                p[6] - p[2] * gauss(x, p[0], p[4].exp()) - p[3] * gauss(x, p[1], p[5].exp())
            } else {
                p[3] - p[1] * gauss(x, p[0], p[2].exp())
            };
            out[i] = (model - self.y[i]) * self.w[i];
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let dips: &[(usize, usize, usize)] = if self.double {
            &[(0, 2, 4), (1, 3, 5)]
        } else {
            &[(0, 1, 2)]
        };
        let base = if self.double { 6 } else { 3 };
        for (i, &x) in self.x.iter().enumerate() {
            let w = self.w[i];
            for &(ic, ia, is) in dips {
                let s = p[is].exp();
                let g = gauss(x, p[ic], s);
                let u = (x - p[ic]) / s;
                out[(i, ic)] = -p[ia] * g * u / s * w;
                out[(i, ia)] = -g * w;
                out[(i, is)] = -p[ia] * g * u * u * w;
            }
            out[(i, base)] = w;
        }
    }
}

fn moving_average(v: &[f64], half: usize) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            stats::mean(&v[lo..hi])
        })
        .collect()
}

/// Robust standard deviation of white noise from first differences.
fn noise_level(v: &[f64]) -> f64 {
    if v.len() < 3 {
        return 0.0;
    }
    let diffs: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let med = stats::median(&diffs);
    let mad = stats::median(&diffs.iter().map(|d| (d - med).abs()).collect::<Vec<_>>());
    1.4826 * mad / std::f64::consts::SQRT_2
}

struct DipGuess {
    index: usize,
    depth: f64,
    /// Half width at half depth, in samples.
    hwhm: f64,
}

/// Walk outward from a minimum until the smoothed curve recovers half the depth.
fn half_depth_width(s: &[f64], i: usize, baseline: f64, depth: f64, dir: isize) -> f64 {
    let target = baseline - 0.5 * depth;
    let mut j = i as isize;
    while j >= 0 && (j as usize) < s.len() {
        if s[j as usize] >= target {
            return (j - i as isize).unsigned_abs() as f64;
        }
        j += dir;
    }
    (j - i as isize).unsigned_abs() as f64
}

fn find_dips(y: &[f64], baseline: f64) -> Vec<DipGuess> {
    let n = y.len();
    let half = (n / 60).max(1);
    let s = moving_average(y, half);
    let noise_s = noise_level(y) / ((2 * half + 1) as f64).sqrt();
    let threshold = (4.0 * noise_s).max(1e-6);

    let mut minima: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| s[i] <= s[i - 1] && s[i] < s[i + 1])
        .filter(|&i| baseline - s[i] > threshold)
        .collect();
    minima.sort_by(|&a, &b| s[a].total_cmp(&s[b]));

    let Some(&first) = minima.first() else {
        return Vec::new();
    };
    let mut dips = vec![first];
    for &m in &minima[1..] {
        let (lo, hi) = if m < first { (m, first) } else { (first, m) };
        let ridge = s[lo..=hi].iter().cloned().fold(f64::MIN, f64::max);
        let comparable = baseline - s[m] > 0.25 * (baseline - s[first]);
        if comparable && ridge - s[m].max(s[first]) > 4.0 * noise_s.max(1e-9) && hi - lo > 2 * half {
            dips.push(m);
            break;
        }
    }
    dips.sort_unstable();
    dips.iter()
        .enumerate()
        .map(|(k, &i)| {
            let depth = baseline - s[i];
            // measure on the outer flank, away from the other dip
            let dir = if dips.len() == 2 && k == 1 { 1 } else { -1 };
            let dir = if dips.len() == 1 { 1 } else { dir };
            let hwhm = half_depth_width(&s, i, baseline, depth, dir)
                .max(half_depth_width(&s, i, baseline, depth, -dir).min(1.0));
            DipGuess { index: i, depth, hwhm }
        })
        .collect()
}

/// Fit one or two Gaussian dips to an ESR scan.
///
/// The baseline starts at the median of the upper quartile of the data and
/// the dips at the deepest resolvable minima of a smoothed copy. When fewer
/// than two dips can be resolved a single Gaussian is fitted and the result
/// is flagged `degenerate` with `e_splitting = 0`.
pub fn fit_esr(spec: &EsrSpectrum) -> Result<EsrFitResult> {
    let n = spec.len();
    if n < 8 {
        return Err(Error::domain(format!("ESR scan needs at least 8 points, got {n}")));
    }
    let f_ref = 0.5 * (spec.frequencies[0] + spec.frequencies[n - 1]);
    let x: Vec<f64> = spec.frequencies.iter().map(|f| (f - f_ref) * 1e-6).collect();
    let y = &spec.i_pl;
    let weights: Vec<f64> = match &spec.sigma {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; n],
    };
    let mut sorted = y.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let baseline0 = stats::median(&sorted[(3 * n) / 4..]);
    let step = (x[n - 1] - x[0]) / (n - 1) as f64;
    let span = x[n - 1] - x[0];

    let dips = find_dips(y, baseline0);
    if dips.is_empty() {
        return Ok(flat_result(spec, f_ref));
    }

    let to_sigma = |hwhm: f64| (hwhm * step / 1.1774).max(2.0 * step);
    let opts = LmOptions::default();

    if dips.len() == 2 {
        let (d1, d2) = (&dips[0], &dips[1]);
        let sep = x[d2.index] - x[d1.index];
        let cap = 0.6 * sep;
        let start = [
            x[d1.index],
            x[d2.index],
            d1.depth,
            d2.depth,
            to_sigma(d1.hwhm).min(cap).ln(),
            to_sigma(d2.hwhm).min(cap).ln(),
            baseline0,
        ];
        let problem = EsrProblem {
            x: &x,
            y,
            w: &weights,
            double: true,
        };
        let rep = lsq::minimize(&problem, &start, &opts);
        let p = &rep.params;
        let amplitudes_ok = p[2] > 0.0 && p[3] > 0.0;
        let centres_inside = p[0] > x[0] - span && p[1] < x[n - 1] + span;
        if amplitudes_ok && centres_inside && p.iter().all(|v| v.is_finite()) {
            return finish_double(spec, f_ref, &rep);
        }
    }

    // single-Gaussian fallback
    let d = dips.iter().max_by(|a, b| a.depth.total_cmp(&b.depth)).unwrap();
    let start = [x[d.index], d.depth, to_sigma(d.hwhm).ln(), baseline0];
    let problem = EsrProblem {
        x: &x,
        y,
        w: &weights,
        double: false,
    };
    let rep = lsq::minimize(&problem, &start, &opts);
    finish_single(spec, f_ref, &rep)
}

fn rms(rep: &lsq::LmReport) -> f64 {
    (2.0 * rep.cost / rep.residuals.len() as f64).sqrt()
}

fn not_converged(rep: &lsq::LmReport, best: EsrFitResult) -> Result<EsrFitResult> {
    if rep.converged {
        Ok(best)
    } else {
        Err(Error::FitNotConverged {
            iterations: rep.iterations,
            best: serde_json::to_value(best)?,
        })
    }
}

fn contrast_of(line: &EsrLine, spec: &EsrSpectrum) -> f64 {
    let lo = spec.frequencies[0];
    let hi = spec.frequencies[spec.len() - 1];
    let (_, min) = line.minimum_on(lo, hi);
    (line.baseline - min).clamp(0.0, 1.0 - f64::EPSILON)
}

fn finish_double(spec: &EsrSpectrum, f_ref: f64, rep: &lsq::LmReport) -> Result<EsrFitResult> {
    let mut p = rep.params.clone();
    let cov = rep.covariance();
    let var = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)]);
    let cv = |i: usize, j: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, j)]);
    // order dips by frequency
    let (i1, i2) = if p[0] <= p[1] { (0, 1) } else { (1, 0) };
    let (a1, a2) = (p[2 + i1], p[2 + i2]);
    let (s1, s2) = (p[4 + i1].exp(), p[4 + i2].exp());
    let (c1, c2) = (p[i1], p[i2]);
    p.truncate(7);
    let centre_var_sum = var(0) + var(1);
    let mhz = 1e6;
    let se = EsrStdErrors {
        d: 0.5 * (centre_var_sum + 2.0 * cv(0, 1)).max(0.0).sqrt() * mhz,
        e: 0.5 * (centre_var_sum - 2.0 * cv(0, 1)).max(0.0).sqrt() * mhz,
        a1: var(2 + i1).max(0.0).sqrt(),
        a2: var(2 + i2).max(0.0).sqrt(),
        sigma1: s1 * var(4 + i1).max(0.0).sqrt() * mhz,
        sigma2: s2 * var(4 + i2).max(0.0).sqrt() * mhz,
        baseline: var(6).max(0.0).sqrt(),
    };
    let line = EsrLine {
        d: f_ref + 0.5 * (c1 + c2) * mhz,
        e: 0.5 * (c2 - c1) * mhz,
        a1,
        a2,
        sigma1: s1 * mhz,
        sigma2: s2 * mhz,
        baseline: p[6],
    };
    let result = EsrFitResult {
        d_splitting: line.d,
        e_splitting: line.e,
        a1,
        a2,
        sigma1: line.sigma1,
        sigma2: line.sigma2,
        baseline: line.baseline,
        contrast: contrast_of(&line, spec),
        standard_errors: se,
        degenerate: false,
        converged: rep.converged,
        residual_rms: rms(rep),
    };
    not_converged(rep, result)
}

fn finish_single(spec: &EsrSpectrum, f_ref: f64, rep: &lsq::LmReport) -> Result<EsrFitResult> {
    let p = &rep.params;
    let se = rep.standard_errors();
    let mhz = 1e6;
    let sigma = p[2].exp() * mhz;
    let amp = p[1].max(0.0);
    let line = EsrLine {
        d: f_ref + p[0] * mhz,
        e: 0.0,
        a1: amp,
        a2: 0.0,
        sigma1: sigma,
        sigma2: sigma,
        baseline: p[3],
    };
    let result = EsrFitResult {
        d_splitting: line.d,
        e_splitting: 0.0,
        a1: amp,
        a2: 0.0,
        sigma1: sigma,
        sigma2: sigma,
        baseline: line.baseline,
        contrast: contrast_of(&line, spec),
        standard_errors: EsrStdErrors {
            d: se[0] * mhz,
            e: 0.0,
            a1: se[1],
            a2: 0.0,
            sigma1: sigma * se[2],
            sigma2: sigma * se[2],
            baseline: se[3],
        },
        degenerate: true,
        converged: rep.converged,
        residual_rms: rms(rep),
    };
    not_converged(rep, result)
}

/// No dip at all: the best model is a constant.
fn flat_result(spec: &EsrSpectrum, f_ref: f64) -> EsrFitResult {
    let n = spec.len() as f64;
    let mean = stats::mean(&spec.i_pl);
    let sd = if spec.len() > 1 { stats::variance(&spec.i_pl).sqrt() } else { 0.0 };
    let width = 0.25 * (spec.frequencies[spec.len() - 1] - spec.frequencies[0]);
    EsrFitResult {
        d_splitting: f_ref,
        e_splitting: 0.0,
        a1: 0.0,
        a2: 0.0,
        sigma1: width,
        sigma2: width,
        baseline: mean,
        contrast: 0.0,
        standard_errors: EsrStdErrors {
            baseline: sd / n.sqrt(),
            ..Default::default()
        },
        degenerate: true,
        converged: true,
        residual_rms: sd * ((n - 1.0) / n).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const D0: f64 = 2.870e9;

    fn scan() -> Vec<f64> {
        (0..=600).map(|i| 2.840e9 + i as f64 * 0.1e6).collect()
    }

    fn synth(line: EsrLine, noise: f64, seed: u64) -> EsrSpectrum {
        let f = scan();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let y = f
            .iter()
            .map(|&x| line.eval(x) + if noise > 0.0 { nd.sample(&mut rng) } else { 0.0 })
            .collect();
        EsrSpectrum::new(f, y, None).unwrap()
    }

    fn line(a: f64) -> EsrLine {
        EsrLine {
            d: D0,
            e: 5e6,
            a1: a,
            a2: a,
            sigma1: 2.5e6,
            sigma2: 2.5e6,
            baseline: 1.0,
        }
    }

    #[test]
    fn zero_amplitude_is_flat() {
        let v = model_esr(D0, 5e6, 0.0, 0.0, 1e6, 1e6, 0.98, &scan()).unwrap();
        assert!(v.iter().all(|x| *x == 0.98));
    }

    #[test]
    fn symmetric_about_d() {
        let l = line(0.04);
        for k in 0..50 {
            let df = k as f64 * 0.37e6;
            assert!((l.eval(D0 + df) - l.eval(D0 - df)).abs() < 1e-15);
        }
    }

    #[test]
    fn dip_minima_near_d_plus_minus_e() {
        let l = line(0.04);
        // numeric minimization on each half
        let (f1, _) = l.minimum_on(2.850e9, D0);
        let (f2, _) = l.minimum_on(D0, 2.890e9);
        // the neighbouring dip's tail pulls each minimum inward by about
        // 2e·exp(-(2e)²/(2σ²)) to first order
        let pull = 10e6 * (-(10.0f64).powi(2) / 12.5).exp();
        assert!(((f1 - 2.865e9) / pull - 1.0).abs() < 0.1, "{f1}");
        assert!(((2.875e9 - f2) / pull - 1.0).abs() < 0.1, "{f2}");
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(model_esr(D0, 0.0, 0.1, 0.1, 0.0, 1.0, 1.0, &[D0]).is_err());
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let truth = EsrLine {
            a2: 0.03,
            sigma2: 2.5e6,
            baseline: 0.995,
            ..line(0.05)
        };
        let fit = fit_esr(&synth(truth, 0.0, 0)).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.d_splitting - truth.d).abs() < 1.0);
        assert!((fit.e_splitting - truth.e).abs() < 1.0);
        assert!((fit.a2 - 0.03).abs() < 1e-8);
        assert!((fit.sigma2 - 2.5e6).abs() < 1.0);
    }

    #[test]
    fn noisy_round_trip() {
        for seed in 0..5 {
            let fit = fit_esr(&synth(line(0.05), 0.01, seed)).unwrap();
            assert!(!fit.degenerate);
            assert!((fit.d_splitting - D0).abs() < 0.2e6, "D off by {}", fit.d_splitting - D0);
            assert!((fit.e_splitting - 5e6).abs() < 0.5e6);
            assert!(fit.standard_errors.d > 0.0 && fit.standard_errors.d < 0.2e6);
        }
    }

    #[test]
    fn flat_spectrum_is_degenerate() {
        let f = scan();
        let spec = EsrSpectrum::new(f.clone(), vec![1.0; f.len()], None).unwrap();
        let fit = fit_esr(&spec).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.contrast, 0.0);
    }

    #[test]
    fn single_dip_falls_back() {
        let l = EsrLine { e: 0.0, ..line(0.05) };
        let fit = fit_esr(&synth(l, 0.002, 1)).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.e_splitting, 0.0);
        assert!((fit.d_splitting - D0).abs() < 0.1e6);
    }

    #[test]
    fn contrast_invariant_under_offset() {
        let spec = synth(line(0.05), 0.005, 2);
        let shifted = EsrSpectrum::new(
            spec.frequencies.clone(),
            spec.i_pl.iter().map(|v| v + 0.1).collect(),
            None,
        )
        .unwrap();
        let a = fit_esr(&spec).unwrap();
        let b = fit_esr(&shifted).unwrap();
        assert!((a.contrast - b.contrast).abs() < 1e-8);
        assert!((b.baseline - a.baseline - 0.1).abs() < 1e-8);
    }

    #[test]
    fn sigma_weights_accepted() {
        let s = synth(line(0.05), 0.01, 3);
        let n = s.len();
        let w = EsrSpectrum::new(s.frequencies, s.i_pl, Some(vec![0.01; n])).unwrap();
        let fit = fit_esr(&w).unwrap();
        assert!((fit.d_splitting - D0).abs() < 0.2e6);
    }

    #[test]
    fn invalid_spectra() {
        assert!(EsrSpectrum::new(vec![1.0, 2.0], vec![1.0, 1.3], None).is_err());
        assert!(EsrSpectrum::new(vec![1.0, 2.0], vec![1.0, 0.0], None).is_err());
        assert!(EsrSpectrum::new(vec![2.0, 1.0], vec![1.0, 1.0], None).is_err());
        assert!(EsrSpectrum::new(vec![1.0, 2.0], vec![1.0, 1.0], Some(vec![1.0])).is_err());
    }
}
