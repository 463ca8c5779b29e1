//! Quasi-Newton minimization.
//!
//! A compact L-BFGS with a strong Wolfe line search, plus a central
//! finite-difference gradient for objectives without analytic derivatives.
//! Everything here is deterministic: same inputs, same iterates.

use crate::error::{OakError, Result};

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MAX_LINE_SEARCH_STEPS: usize = 25;
const MAX_ZOOM_STEPS: usize = 30;

#[derive(Debug, Clone)]
pub struct OptimizeConfig {
    pub max_iters: usize,
    /// Stop when the infinity norm of the gradient falls below this.
    pub grad_tol: f64,
    /// Number of curvature pairs kept for the inverse-Hessian estimate.
    pub memory: usize,
    /// Stop when the relative objective decrease falls below this.
    pub f_tol: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
            memory: 10,
            f_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f`, which returns the objective value and its gradient.
///
/// Objective failures away from the starting point are treated as infinite
/// values and backed away from by the line search; a failure at the starting
/// point is propagated.
pub fn minimize<F>(mut f: F, x0: &[f64], config: &OptimizeConfig) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut gx) = f(&x)?;
    if !fx.is_finite() {
        return Err(OakError::Numerical(
            "objective is not finite at the initial point".into(),
        ));
    }

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    let mut iterations = 0;
    let mut converged = inf_norm(&gx) <= config.grad_tol;

    while !converged && iterations < config.max_iters {
        iterations += 1;

        let mut direction = two_loop_direction(&gx, &s_hist, &y_hist, &rho_hist);
        let mut slope = dot(&direction, &gx);
        if !slope.is_finite() || slope >= 0.0 {
            // Curvature information is stale; fall back to steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            direction = gx.iter().map(|g| -g).collect();
            slope = dot(&direction, &gx);
            if slope >= 0.0 {
                break; // zero gradient
            }
        }

        let Some(step) = wolfe_line_search(&mut f, &x, fx, &direction, slope)? else {
            // No decrease found along a descent direction: numerically done.
            break;
        };

        let x_new: Vec<f64> = x
            .iter()
            .zip(&direction)
            .map(|(xi, di)| xi + step.alpha * di)
            .collect();
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let s_norm = dot(&s, &s).sqrt();
        let y_norm = dot(&y, &y).sqrt();
        if sy > 1e-10 * s_norm * y_norm {
            if s_hist.len() == config.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
        }

        let f_prev = fx;
        x = x_new;
        fx = step.value;
        gx = step.grad;

        let grad_small = inf_norm(&gx) <= config.grad_tol;
        let f_stalled = (f_prev - fx).abs() <= config.f_tol * (1.0 + fx.abs());
        converged = grad_small || f_stalled;
        let _ = n;
    }

    Ok(OptimizeResult {
        grad_norm: inf_norm(&gx),
        x,
        value: fx,
        iterations,
        converged,
    })
}

fn two_loop_direction(
    grad: &[f64],
    s_hist: &[Vec<f64>],
    y_hist: &[Vec<f64>],
    rho_hist: &[f64],
) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let k = s_hist.len();
    let mut alphas = vec![0.0; k];
    for i in (0..k).rev() {
        let a = rho_hist[i] * dot(&s_hist[i], &q);
        alphas[i] = a;
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= a * yj;
        }
    }
    if let Some(i) = k.checked_sub(1) {
        let gamma = dot(&s_hist[i], &y_hist[i]) / dot(&y_hist[i], &y_hist[i]);
        if gamma.is_finite() && gamma > 0.0 {
            for qj in q.iter_mut() {
                *qj *= gamma;
            }
        }
    }
    for i in 0..k {
        let beta = rho_hist[i] * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alphas[i] - beta) * sj;
        }
    }
    for qj in q.iter_mut() {
        *qj = -*qj;
    }
    q
}

struct LineSearchStep {
    alpha: f64,
    value: f64,
    grad: Vec<f64>,
}

struct Trial {
    value: f64,
    grad: Option<Vec<f64>>,
}

/// Strong Wolfe search (bracket then zoom). Returns `None` when no step with
/// sufficient decrease exists within the evaluation budget.
fn wolfe_line_search<F>(
    f: &mut F,
    x: &[f64],
    f0: f64,
    direction: &[f64],
    slope0: f64,
) -> Result<Option<LineSearchStep>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let point_at = |alpha: f64| -> Vec<f64> {
        x.iter()
            .zip(direction)
            .map(|(xi, di)| xi + alpha * di)
            .collect()
    };
    // Failed or non-finite evaluations act as +inf so the search backs off.
    let mut eval = |alpha: f64| -> Trial {
        match f(&point_at(alpha)) {
            Ok((v, g)) if v.is_finite() => Trial {
                value: v,
                grad: Some(g),
            },
            _ => Trial {
                value: f64::INFINITY,
                grad: None,
            },
        }
    };

    let armijo = |alpha: f64, value: f64| value <= f0 + WOLFE_C1 * alpha * slope0;

    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut alpha = 1.0;
    for i in 0..MAX_LINE_SEARCH_STEPS {
        let trial = eval(alpha);
        if !armijo(alpha, trial.value) || (i > 0 && trial.value >= f_prev) {
            return zoom(&mut eval, f0, slope0, direction, alpha_prev, f_prev, alpha);
        }
        let grad = trial.grad.expect("finite trial has gradient");
        let slope = dot(&grad, direction);
        if slope.abs() <= -WOLFE_C2 * slope0 {
            return Ok(Some(LineSearchStep {
                alpha,
                value: trial.value,
                grad,
            }));
        }
        if slope >= 0.0 {
            return zoom(
                &mut eval,
                f0,
                slope0,
                direction,
                alpha,
                trial.value,
                alpha_prev,
            );
        }
        alpha_prev = alpha;
        f_prev = trial.value;
        alpha = (alpha * 2.0).min(1e3);
    }
    Ok(None)
}

/// Bisect `[lo, hi]` until a strong Wolfe point is found, falling back to the
/// best sufficient-decrease point seen.
fn zoom<E>(
    eval: &mut E,
    f0: f64,
    slope0: f64,
    direction: &[f64],
    mut lo: f64,
    mut f_lo: f64,
    mut hi: f64,
) -> Result<Option<LineSearchStep>>
where
    E: FnMut(f64) -> Trial,
{
    let armijo = |alpha: f64, value: f64| value <= f0 + WOLFE_C1 * alpha * slope0;
    let mut best: Option<LineSearchStep> = None;

    for _ in 0..MAX_ZOOM_STEPS {
        let alpha = 0.5 * (lo + hi);
        if alpha <= 0.0 || (hi - lo).abs() < 1e-16 * (1.0 + lo.abs()) {
            break;
        }
        let trial = eval(alpha);
        if !armijo(alpha, trial.value) || trial.value >= f_lo {
            hi = alpha;
            continue;
        }
        let grad = trial.grad.expect("finite trial has gradient");
        let slope = dot(&grad, direction);
        let step = LineSearchStep {
            alpha,
            value: trial.value,
            grad,
        };
        if slope.abs() <= -WOLFE_C2 * slope0 {
            return Ok(Some(step));
        }
        if best.as_ref().is_none_or(|b| step.value < b.value) {
            best = Some(step);
        }
        if slope * (hi - lo) >= 0.0 {
            hi = lo;
        }
        lo = alpha;
        f_lo = trial.value;
    }

    // Sufficient decrease without the curvature condition still makes
    // progress; take it rather than stall.
    if best.is_none() && armijo(lo, f_lo) && lo > 0.0 {
        let trial = eval(lo);
        if let Some(grad) = trial.grad {
            best = Some(LineSearchStep {
                alpha: lo,
                value: trial.value,
                grad,
            });
        }
    }
    Ok(best)
}

/// Central finite-difference gradient with per-coordinate relative step.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], rel_step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = rel_step * (1.0 + x[j].abs());
        probe[j] = x[j] + h;
        let plus = f(&probe)?;
        probe[j] = x[j] - h;
        let minus = f(&probe)?;
        probe[j] = x[j];
        grad[j] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Minimize a value-only objective using finite-difference gradients.
pub fn minimize_with_fd<F>(mut f: F, x0: &[f64], config: &OptimizeConfig) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let fd_step = 1e-6;
    minimize(
        |x| {
            let value = f(x)?;
            let grad = finite_difference_gradient(&mut f, x, fd_step)?;
            Ok((value, grad))
        },
        x0,
        config,
    )
}
