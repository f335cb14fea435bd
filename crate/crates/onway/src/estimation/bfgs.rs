//! BFGS minimizer with backtracking line search.
//!
//! Minimizes a smooth objective given value-and-gradient evaluations. The
//! inverse Hessian approximation starts at the identity, is rescaled after
//! the first update, and curvature-violating updates are skipped. The run
//! is fully deterministic for a given starting point.

use nalgebra::{DMatrix, DVector};

#[derive(Copy, Clone, Debug)]
pub struct BfgsOptions {
    /// Convergence threshold on the gradient infinity norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Clone, Debug)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm_inf: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value at every accepted iterate, starting point included.
    pub f_history: Vec<f64>,
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// Minimizes `objective` from `x0`. The objective returns `(f, grad)`.
pub fn minimize<F>(mut objective: F, x0: &[f64], options: &BfgsOptions) -> BfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut f, g) = objective(x.as_slice());
    let mut g = DVector::from_vec(g);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut f_history = vec![f];
    let mut iterations = 0;

    if !f.is_finite() {
        return BfgsOutcome {
            x: x.as_slice().to_vec(),
            f,
            grad_norm_inf: f64::INFINITY,
            converged: false,
            iterations,
            f_history,
        };
    }

    while iterations < options.max_iter {
        let gnorm = g.amax();
        if gnorm <= options.tol {
            break;
        }
        let mut direction = -(&h * &g);
        let mut slope = direction.dot(&g);
        if !(slope < 0.0) || !slope.is_finite() {
            // not a descent direction; restart from steepest descent
            h = DMatrix::identity(n, n);
            scaled = false;
            direction = -g.clone();
            slope = direction.dot(&g);
            if slope == 0.0 {
                break;
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &direction * step;
            let (ft, gt) = objective(trial.as_slice());
            if ft.is_finite() && ft <= f + ARMIJO_C1 * step * slope {
                accepted = Some((trial, ft, DVector::from_vec(gt)));
                break;
            }
            step *= BACKTRACK;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break; // line search exhausted; gradient check below decides the flag
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                let yy = y.dot(&y);
                if yy > 0.0 {
                    h = DMatrix::identity(n, n) * (sy / yy);
                }
                scaled = true;
            }
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            let shy = &s * hy.transpose();
            h = h - (&shy + shy.transpose()) * rho + (&s * s.transpose()) * (rho * rho * yhy + rho);
        }

        x = x_new;
        f = f_new;
        g = g_new;
        f_history.push(f);
        iterations += 1;
    }

    let grad_norm_inf = g.amax();
    BfgsOutcome {
        x: x.as_slice().to_vec(),
        f,
        grad_norm_inf,
        converged: grad_norm_inf <= options.tol,
        iterations,
        f_history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_bowl() {
        let out = minimize(
            |x| {
                let f = 2.0 * x[0] * x[0] + 3.0 * x[1] * x[1] + x[0] * x[1];
                (f, vec![4.0 * x[0] + x[1], 6.0 * x[1] + x[0]])
            },
            &[5.0, -3.0],
            &BfgsOptions::default(),
        );
        assert!(out.converged);
        assert_relative_eq!(out.x[0], 0.0, epsilon = 1e-6);
        assert_relative_eq!(out.x[1], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn rosenbrock() {
        let out = minimize(
            |x| {
                let (a, b) = (x[0], x[1]);
                let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                let g = vec![
                    -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                    200.0 * (b - a * a),
                ];
                (f, g)
            },
            &[-1.2, 1.0],
            &BfgsOptions { tol: 1e-8, max_iter: 1000 },
        );
        assert!(out.converged, "grad norm {}", out.grad_norm_inf);
        assert_relative_eq!(out.x[0], 1.0, epsilon = 1e-5);
        assert_relative_eq!(out.x[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn objective_never_increases() {
        let out = minimize(
            |x| {
                let f = (x[0] - 2.0).powi(4) + (x[1] + 1.0).powi(2);
                (f, vec![4.0 * (x[0] - 2.0).powi(3), 2.0 * (x[1] + 1.0)])
            },
            &[10.0, 10.0],
            &BfgsOptions::default(),
        );
        for w in out.f_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn max_iter_reports_not_converged() {
        let out = minimize(
            |x| ((x[0] * x[0] + 1.0).ln(), vec![2.0 * x[0] / (x[0] * x[0] + 1.0)]),
            &[1e6],
            &BfgsOptions { tol: 1e-14, max_iter: 2 },
        );
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }
}
