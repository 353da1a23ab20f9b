//! Damped Gauss-Newton (Levenberg-Marquardt) solver for small dense problems.
//!
//! Minimizes `0.5 * ||r(p)||^2` given residuals and an analytic Jacobian.
//! Steps solve `(JᵀJ + λ·diag(JᵀJ)) δ = -Jᵀr`; λ shrinks after an accepted
//! step and grows after a rejected one.

use nalgebra::{DMatrix, DVector};

/// A least-squares problem with an analytic Jacobian.
pub trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, p: &[f64], out: &mut [f64]);
    /// Row-major `n_residuals × n_params` Jacobian of the residuals.
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative step tolerance.
    pub xtol: f64,
    /// Relative cost-reduction tolerance.
    pub ftol: f64,
    /// Gradient tolerance, scaled by the cost.
    pub gtol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            xtol: 1e-10,
            ftol: 1e-15,
            gtol: 1e-14,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// `0.5 * ||r||^2` at `params`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `(JᵀJ)⁻¹` at the solution, unscaled. `None` when singular.
    pub inverse_normal: Option<DMatrix<f64>>,
    pub residuals: Vec<f64>,
}

impl LmReport {
    /// Standard errors from `s² (JᵀJ)⁻¹` with `s² = RSS / (n - p)`.
    ///
    /// Parameters whose covariance cannot be computed get `NaN`.
    pub fn standard_errors(&self) -> Vec<f64> {
        let n = self.residuals.len();
        let p = self.params.len();
        let dof = n.saturating_sub(p).max(1) as f64;
        let s2 = 2.0 * self.cost / dof;
        match &self.inverse_normal {
            Some(inv) => (0..p).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect(),
            None => vec![f64::NAN; p],
        }
    }

    /// Scaled covariance matrix `s² (JᵀJ)⁻¹`.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let n = self.residuals.len();
        let p = self.params.len();
        let dof = n.saturating_sub(p).max(1) as f64;
        let s2 = 2.0 * self.cost / dof;
        self.inverse_normal.as_ref().map(|inv| inv * s2)
    }
}

fn half_norm_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

pub fn minimize<P: LeastSquares + ?Sized>(problem: &P, initial: &[f64], opts: &LmOptions) -> LmReport {
    let np = problem.n_params();
    let nr = problem.n_residuals();
    assert_eq!(initial.len(), np, "parameter vector length mismatch");

    let mut p = initial.to_vec();
    let mut r = vec![0.0; nr];
    problem.residuals(&p, &mut r);
    let mut cost = half_norm_sq(&r);
    let mut jac = DMatrix::zeros(nr, np);
    let mut trial = vec![0.0; np];
    let mut r_trial = vec![0.0; nr];
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    if !cost.is_finite() {
        return LmReport {
            params: p,
            cost,
            iterations,
            converged: false,
            inverse_normal: None,
            residuals: r,
        };
    }

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        problem.jacobian(&p, &mut jac);
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &rv;

        let g_inf = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if g_inf <= opts.gtol * cost.max(f64::MIN_POSITIVE).sqrt() || cost == 0.0 {
            converged = true;
            break;
        }

        // inner loop: raise λ until a step lowers the cost
        loop {
            let mut a = jtj.clone();
            for i in 0..np {
                let d = jtj[(i, i)].max(1e-300);
                a[(i, i)] += lambda * d;
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e30 {
                        break 'outer;
                    }
                    continue;
                }
            };
            for i in 0..np {
                trial[i] = p[i] + step[i];
            }
            problem.residuals(&trial, &mut r_trial);
            let trial_cost = half_norm_sq(&r_trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let step_norm = step.norm();
                let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let reduction = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                p.copy_from_slice(&trial);
                std::mem::swap(&mut r, &mut r_trial);
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                if step_norm <= opts.xtol * (p_norm + opts.xtol) || reduction <= opts.ftol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e30 {
                // no downhill step at any damping: stationary to working precision
                converged = g_inf <= 1e-8 * cost.max(f64::MIN_POSITIVE).sqrt();
                break 'outer;
            }
        }
    }

    problem.jacobian(&p, &mut jac);
    let jtj = jac.transpose() * &jac;
    let inverse_normal = jtj.try_inverse().filter(|m| m.iter().all(|v| v.is_finite()));
    LmReport {
        params: p,
        cost,
        iterations,
        converged,
        inverse_normal,
        residuals: r,
    }
}
