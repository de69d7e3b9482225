//! Starting values and BFGS ascent on the four unconstrained parameters.

use log::{debug, warn};

use crate::error::{PrError, Result};
use crate::objective::{regularized_objective, ObjectiveConfig};
use crate::params::{Eta, Theta};

/// Spread of a standard normal's interquartile range.
const IQR_TO_SD: f64 = 1.349;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialGuess {
    pub eta: Eta,
    /// Set when the sample had zero interquartile range and `sigma` fell back to 1.
    pub degenerate_spread: bool,
}

/// Linear-interpolation sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Robust start: median for `mu`, IQR / 1.349 clamped to `[0.5, 2]` for
/// `sigma`, `tau = 2`, `pi0 = 0.95`.
pub fn default_init(zs: &[f64]) -> Result<InitialGuess> {
    if zs.len() < 10 {
        return Err(PrError::InvalidConfig(format!("need at least 10 observations, got {}", zs.len())));
    }
    if zs.iter().any(|z| !z.is_finite()) {
        return Err(PrError::NonFinite("observations must be finite".into()));
    }
    let mut sorted = zs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mu = quantile_sorted(&sorted, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let degenerate_spread = iqr <= 0.0;
    let sigma = if degenerate_spread {
        warn!("data have zero interquartile range; starting from sigma = 1");
        1.0
    } else {
        (iqr / IQR_TO_SD).clamp(0.5, 2.0)
    };
    let eta = Theta::new(mu, sigma, 2.0, 0.95)?.to_eta();
    Ok(InitialGuess { eta, degenerate_spread })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    /// Armijo sufficient-increase constant.
    pub c1: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 200, grad_tol: 1e-5, step_tol: 1e-10, c1: 1e-4, max_backtracks: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    StepTolerance,
    MaxIterations,
    LineSearchFailed,
}

/// Outcome of a maximization. `point` is the best iterate seen.
#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub point: [f64; 4],
    pub value: f64,
    pub grad: [f64; 4],
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    pub trace: Vec<IterRecord>,
}

impl Maximum {
    pub fn grad_norm(&self) -> f64 {
        norm(&self.grad)
    }
}

fn norm(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

type Mat4 = [[f64; 4]; 4];

fn scaled_identity(s: f64) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = s;
    }
    m
}

fn mat_vec(m: &Mat4, v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = dot(&m[i], v);
    }
    out
}

/// BFGS update of the inverse Hessian `h` of the negated objective.
fn bfgs_update(h: &mut Mat4, s: &[f64; 4], y: &[f64; 4]) {
    let rho = 1.0 / dot(y, s);
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..4 {
        for j in 0..4 {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Maximizes `f`, which returns value and gradient. Evaluation errors and
/// non-finite values at trial points are treated as `-inf` so the line
/// search backs off.
pub fn maximize<F>(mut f: F, x0: [f64; 4], opts: &BfgsOptions) -> Result<Maximum>
where
    F: FnMut(&[f64; 4]) -> Result<(f64, [f64; 4])>,
{
    let (mut fx, mut gx) = f(&x0)?;
    if !fx.is_finite() || gx.iter().any(|g| !g.is_finite()) {
        return Err(PrError::NonFiniteStart);
    }
    let mut x = x0;
    let mut evaluations = 1;
    let g0 = norm(&gx);
    // First trial step has length at most one.
    let mut h = scaled_identity(if g0 > 1.0 { 1.0 / g0 } else { 1.0 });
    let mut scaled = false;
    let mut trace = vec![IterRecord { iteration: 0, value: fx, grad_norm: g0, step: 0.0 }];
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if norm(&gx) < opts.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        let mut d = mat_vec(&h, &gx);
        let mut slope = dot(&gx, &d);
        if !(slope > 0.0) {
            h = scaled_identity(1.0 / norm(&gx).max(1.0));
            d = mat_vec(&h, &gx);
            slope = dot(&gx, &d);
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial: [f64; 4] = std::array::from_fn(|i| x[i] + alpha * d[i]);
            evaluations += 1;
            if let Ok((ft, gt)) = f(&trial) {
                if ft.is_finite()
                    && gt.iter().all(|g| g.is_finite())
                    && ft >= fx + opts.c1 * alpha * slope
                {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        iterations += 1;

        let s: [f64; 4] = std::array::from_fn(|i| x_new[i] - x[i]);
        // Gradient difference of the negated objective.
        let y: [f64; 4] = std::array::from_fn(|i| gx[i] - g_new[i]);
        x = x_new;
        fx = f_new;
        gx = g_new;
        let step = norm(&s);
        trace.push(IterRecord { iteration: iterations, value: fx, grad_norm: norm(&gx), step });
        debug!("bfgs iter {iterations}: value {fx:.10e} |grad| {:.3e} step {step:.3e}", norm(&gx));

        if step < opts.step_tol {
            stop = if norm(&gx) < opts.grad_tol {
                StopReason::GradientTolerance
            } else {
                StopReason::StepTolerance
            };
            break;
        }
        let ys = dot(&y, &s);
        if ys > 1e-12 {
            if !scaled {
                h = scaled_identity(ys / dot(&y, &y));
                scaled = true;
            }
            bfgs_update(&mut h, &s, &y);
        }
    }
    if stop == StopReason::MaxIterations && norm(&gx) < opts.grad_tol {
        stop = StopReason::GradientTolerance;
    }

    Ok(Maximum { point: x, value: fx, grad: gx, iterations, evaluations, stop, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub eta_hat: Eta,
    pub theta_hat: Theta,
    pub objective_value: f64,
    pub gradient_norm_at_opt: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub trace: Vec<IterRecord>,
}

/// Maximizes the regularized objective from `e0`.
pub fn bfgs_maximize(zs: &[f64], cfg: &ObjectiveConfig, e0: &Eta, opts: &BfgsOptions) -> Result<OptResult> {
    let start = regularized_objective(e0, zs, cfg);
    match start {
        Ok((v, _)) if v.is_finite() => {}
        _ => return Err(PrError::NonFiniteStart),
    }
    let m = maximize(|x| regularized_objective(&Eta(*x), zs, cfg), e0.0, opts)?;
    let eta_hat = Eta(m.point);
    let gradient_norm_at_opt = m.grad_norm();
    Ok(OptResult {
        eta_hat,
        theta_hat: eta_hat.to_theta()?,
        objective_value: m.value,
        gradient_norm_at_opt,
        iterations: m.iterations,
        evaluations: m.evaluations,
        converged: m.stop == StopReason::GradientTolerance,
        stop: m.stop,
        trace: m.trace,
    })
}
