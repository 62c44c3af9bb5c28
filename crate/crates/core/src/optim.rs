//! Quasi-Newton minimisation with finite-difference derivatives.
//!
//! Objectives return `f64::INFINITY` (or NaN) for inadmissible points; the
//! line search backs off from them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the relative objective decrease of an iteration falls below this.
    pub f_rel_tol: f64,
    /// Stop when `max |g_i| <= g_tol * max(1, |f|)`.
    pub g_tol: f64,
    /// Relative step of the central-difference gradient.
    pub grad_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 500, f_rel_tol: 1e-10, g_tol: 1e-9, grad_step: 1e-5 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub gradient_norm: f64,
}

/// Central-difference gradient with step `h·max(1, |x_i|)`.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * x[i].abs().max(1.0);
            xp[i] = x[i] + step;
            let fp = f(&xp);
            xp[i] = x[i] - step;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

/// Central-difference Hessian with per-coordinate steps `steps[i]`.
pub fn central_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], steps: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut h = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    for i in 0..n {
        let hi = steps[i];
        xp[i] = x[i] + hi;
        let fp = f(&xp);
        xp[i] = x[i] - hi;
        let fm = f(&xp);
        xp[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut eval = |si: f64, sj: f64| {
                xp[i] = x[i] + si * hi;
                xp[j] = x[j] + sj * hj;
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Minimises `f` from `x0` by BFGS with an Armijo backtracking line search.
///
/// Returns [`Error::Convergence`] carrying the best point if the iteration
/// cap is reached first or the start point is inadmissible.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> Result<Minimum> {
    let n = x0.len();
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let grad = |x: &[f64], evals: &mut usize| {
        *evals += 2 * x.len();
        DVector::from_vec(central_gradient(&|p: &[f64]| f(p), x, opts.grad_step))
    };

    let mut x = DVector::from_column_slice(x0);
    let mut fx = eval(x.as_slice(), &mut evals);
    if !fx.is_finite() {
        return Err(Error::Convergence {
            iterations: 0,
            best_value: fx,
            best_params: x0.to_vec(),
            message: "objective is not finite at the starting point".into(),
        });
    }
    if n == 0 {
        return Ok(Minimum { x: Vec::new(), value: fx, iterations: 0, evaluations: evals, gradient_norm: 0.0 });
    }
    let mut g = grad(x.as_slice(), &mut evals);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut restarted = false;

    for iter in 0..opts.max_iter {
        if max_abs(&g) <= opts.g_tol * fx.abs().max(1.0) || !g.iter().all(|v| v.is_finite()) {
            return Ok(Minimum { x: x.as_slice().to_vec(), value: fx, iterations: iter, evaluations: evals, gradient_norm: max_abs(&g) });
        }
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        if first {
            // keep the first trial step moderate
            let norm = dir.norm();
            if norm > 1.0 {
                dir /= norm;
                slope /= norm;
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + step * &dir;
            let fnew = eval(xn.as_slice(), &mut evals);
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if !restarted {
                // retry once along steepest descent before giving up
                hinv = DMatrix::identity(n, n);
                first = true;
                restarted = true;
                continue;
            }
            return Ok(Minimum { x: x.as_slice().to_vec(), value: fx, iterations: iter, evaluations: evals, gradient_norm: max_abs(&g) });
        };
        restarted = false;
        let gn = grad(xn.as_slice(), &mut evals);
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first {
                hinv *= sy / y.dot(&y);
                first = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (rho * rho * yhy + rho) * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
        }
        let rel = (fx - fnew).abs() / fx.abs().max(1e-300);
        x = xn;
        g = gn;
        let prev = fx;
        fx = fnew;
        if rel < opts.f_rel_tol && prev - fnew >= 0.0 {
            return Ok(Minimum { x: x.as_slice().to_vec(), value: fx, iterations: iter + 1, evaluations: evals, gradient_norm: max_abs(&g) });
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        best_value: fx,
        best_params: x.as_slice().to_vec(),
        message: format!("gradient max-norm {} above tolerance", max_abs(&g)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |p: &[f64]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let m = minimize(f, &[-1.2, 1.0], &BfgsOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5, "{:?}", m);
        assert!((m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn quadratic_with_barrier() {
        let f = |p: &[f64]| if p[0] <= 0.0 { f64::INFINITY } else { p[0] - p[0].ln() + (p[1] - 3.0).powi(2) };
        let m = minimize(f, &[5.0, 0.0], &BfgsOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6);
        assert!((m.x[1] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_start_is_an_error() {
        let r = minimize(|_p: &[f64]| f64::INFINITY, &[0.0], &BfgsOptions::default());
        assert!(matches!(r, Err(Error::Convergence { .. })));
    }

    #[test]
    fn iteration_cap_reports_best_point() {
        let f = |p: &[f64]| (1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2);
        let opts = BfgsOptions { max_iter: 2, ..Default::default() };
        match minimize(f, &[-1.2, 1.0], &opts) {
            Err(Error::Convergence { best_params, iterations, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(best_params.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hessian_of_quadratic() {
        let f = |p: &[f64]| 3.0 * p[0] * p[0] + 2.0 * p[0] * p[1] + p[1] * p[1];
        let h = central_hessian(&f, &[0.3, -0.2], &[1e-4, 1e-4]);
        assert!((h[(0, 0)] - 6.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 2.0).abs() < 1e-5);
        assert!((h[(1, 1)] - 2.0).abs() < 1e-5);
    }
}
