//! Gradient-augmented predictive recursion.
//!
//! Alongside the primal recursion this tracks `grad pi_i` and the pointwise
//! `grad psi_i(u_k)` with respect to `eta = (mu, log sigma, log(tau-1), logit pi0)`,
//! so one pass yields both `log L_n` and its gradient. With
//!
//! ```text
//! A0    = 1 + w (G0 / lambda - 1)
//! A1(u) = 1 + w (G1(u) / lambda - 1)
//! B     = (1 - pi) / (1 - A0 pi)
//! ```
//!
//! the updates are `pi' = A0 pi`, `psi'(u) = B A1(u) psi(u)`, and the
//! gradients follow by the product rule:
//!
//! ```text
//! grad log lambda = (grad pi G0 + pi grad G0 + (1 - pi) grad h - h grad pi) / lambda
//! grad A0    = w (grad G0 - G0 grad log lambda) / lambda
//! grad A1(u) = w (grad G1(u) - G1(u) grad log lambda) / lambda
//! grad B     = ((B A0 - 1) grad pi + B grad A0 pi) / (1 - A0 pi)
//! ```
//!
//! `B` is computed as the reciprocal of the discrete mass of `A1 psi`, which
//! equals the closed form above under the grid quadrature and avoids the
//! cancellation in `1 - A0 pi` when `pi` is close to one. For the same reason
//! `1 - A0 pi` is evaluated as `(1 - pi) / B`.

use std::sync::Arc;

use crate::error::{PrError, Result};
use crate::mixing::{Grid, MixingState};
use crate::params::{Eta, Theta};
use crate::recursion::{
    atom_factor, kernel_factor, normalizer, fill_kernels, underflow, StepEval, DENSITY_FLOOR,
    LN_SQRT_2PI,
};
use crate::weights::WeightSchedule;

/// Atom mass is kept inside `[PI_CLAMP, 1 - PI_CLAMP]` during gradient runs.
pub const PI_CLAMP: f64 = 1e-12;

/// Kernels and their eta-gradients at one `(z, u)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelGrads {
    pub g0: f64,
    pub g1: f64,
    pub dg0: [f64; 4],
    pub dg1: [f64; 4],
}

/// `G0 = N(z | mu, sigma^2)`, `G1 = N(z | mu + sigma tau u, sigma^2)` and
/// their gradients in eta. With `z0 = (z - mu) / sigma` and
/// `z1 = z0 - tau u`:
///
/// ```text
/// grad G0 = (z0 / sigma, z0^2 - 1, 0, 0) G0
/// grad G1 = (z1 / sigma, z1 tau u + z1^2 - 1, z1 u (tau - 1), 0) G1
/// ```
pub fn kernel_grads(z: f64, t: &Theta, u: f64) -> KernelGrads {
    let sigma = t.sigma();
    let tau = t.tau();
    let log_norm = sigma.ln() + LN_SQRT_2PI;
    let z0 = (z - t.mu()) / sigma;
    let z1 = z0 - tau * u;
    let g0 = (-0.5 * z0 * z0 - log_norm).exp();
    let g1 = (-0.5 * z1 * z1 - log_norm).exp();
    KernelGrads {
        g0,
        g1,
        dg0: [z0 / sigma * g0, (z0 * z0 - 1.0) * g0, 0.0, 0.0],
        dg1: [
            z1 / sigma * g1,
            (z1 * tau * u + z1 * z1 - 1.0) * g1,
            z1 * u * (tau - 1.0) * g1,
            0.0,
        ],
    }
}

/// Mixing state plus its eta-gradients and the running log-likelihood.
#[derive(Debug, Clone)]
pub struct GradState {
    pub pi: f64,
    pub grad_pi: [f64; 4],
    pub psi: Vec<f64>,
    pub grad_psi: Vec<[f64; 4]>,
    pub log_likelihood: f64,
    pub grad: [f64; 4],
    grid: Arc<Grid>,
    // Sign applied to the tau component of grad G1; only ever -1 for
    // mutation testing of the gradient checker.
    tau_sign: f64,
    g1: Vec<f64>,
    dg1: Vec<[f64; 3]>,
    steps: usize,
}

impl GradState {
    /// Initial state: `grad pi0 = (0, 0, 0, pi0 (1 - pi0))`, `grad psi0 = 0`.
    pub fn new(init: &MixingState) -> Self {
        let pi = init.pi();
        let k = init.grid().len();
        Self {
            pi,
            grad_pi: [0.0, 0.0, 0.0, pi * (1.0 - pi)],
            psi: init.psi().to_vec(),
            grad_psi: vec![[0.0; 4]; k],
            log_likelihood: 0.0,
            grad: [0.0; 4],
            grid: init.grid().clone(),
            tau_sign: 1.0,
            g1: vec![0.0; k],
            dg1: vec![[0.0; 3]; k],
            steps: 0,
        }
    }

    #[doc(hidden)]
    pub fn with_flipped_tau_gradient(mut self) -> Self {
        self.tau_sign = -1.0;
        self
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Snapshot of the primal part.
    pub fn mixing_state(&self) -> MixingState {
        MixingState { pi: self.pi, grid: self.grid.clone(), psi: self.psi.clone() }
    }

    /// Processes one observation and returns `(lambda, grad log lambda)`.
    pub fn step(&mut self, z: f64, w: f64, t: &Theta) -> Result<(f64, [f64; 4])> {
        let index = self.steps;
        let grid = self.grid.clone();
        let sigma = t.sigma();
        let tau = t.tau();
        let tau_m1 = tau - 1.0;
        let log_norm = sigma.ln() + LN_SQRT_2PI;
        let z0 = (z - t.mu()) / sigma;

        // Kernels, h = int G1 psi, and grad h = int { G1 grad psi + grad G1 psi }.
        // The primal sums use the same expressions and order as `evaluate`.
        let kk = grid.len();
        let nodes = &grid.nodes()[..kk];
        let weights = &grid.weights()[..kk];
        let psi = &self.psi[..kk];
        fill_kernels(z0, tau, log_norm, &grid, &mut self.g1);
        let g1 = &self.g1[..kk];
        let dg1 = &mut self.dg1[..kk];
        let grad_psi = &self.grad_psi[..kk];
        let inv_sigma = 1.0 / sigma;
        let c2 = self.tau_sign * tau_m1;
        let mut h = 0.0;
        let (mut gh0, mut gh1, mut gh2, mut gh3) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..kk {
            let u = nodes[k];
            let q = weights[k];
            let p = psi[k];
            let g = g1[k];
            h += g * p * q;
            let z1 = z0 - tau * u;
            let d = [z1 * inv_sigma * g, (z1 * tau * u + z1 * z1 - 1.0) * g, c2 * z1 * u * g];
            dg1[k] = d;
            let gp = grad_psi[k];
            let gq = g * q;
            let pq = p * q;
            gh0 += gq * gp[0] + d[0] * pq;
            gh1 += gq * gp[1] + d[1] * pq;
            gh2 += gq * gp[2] + d[2] * pq;
            gh3 += gq * gp[3];
        }
        let grad_h = [gh0, gh1, gh2, gh3];
        let g0 = (-0.5 * z0 * z0 - log_norm).exp();
        let pi = self.pi;
        let lambda = pi * g0 + (1.0 - pi) * h;
        if !(lambda > DENSITY_FLOOR) {
            return Err(underflow(index, z, t));
        }
        let ev = StepEval { g0, h, lambda };
        let dg0 = [z0 / sigma * g0, (z0 * z0 - 1.0) * g0, 0.0, 0.0];

        let gpi = self.grad_pi;
        let mut dlog_lambda = [0.0; 4];
        for j in 0..4 {
            dlog_lambda[j] = (gpi[j] * g0 + pi * dg0[j] + (1.0 - pi) * grad_h[j] - h * gpi[j]) / lambda;
        }
        for (j, v) in dlog_lambda.iter().enumerate() {
            if !v.is_finite() {
                return Err(PrError::NonFiniteGradient { index, component: j });
            }
        }

        self.log_likelihood += lambda.ln();
        for j in 0..4 {
            self.grad[j] += dlog_lambda[j];
        }

        if w != 0.0 {
            let b = normalizer(w, &ev, &self.psi, &grid, &self.g1);
            let inv_lambda = 1.0 / lambda;
            let a0 = atom_factor(w, &ev);
            let mut grad_a0 = [0.0; 4];
            for j in 0..4 {
                grad_a0[j] = w * (dg0[j] - g0 * dlog_lambda[j]) * inv_lambda;
            }
            // 1 - A0 pi, written as (1 - pi) / B.
            let denom = (1.0 - pi) / b;
            let mut grad_b = [0.0; 4];
            for j in 0..4 {
                grad_b[j] = ((b * a0 - 1.0) * gpi[j] + b * grad_a0[j] * pi) / denom;
            }
            let wl = w * inv_lambda;
            let kk = grid.len();
            let g1 = &self.g1[..kk];
            let dg1 = &self.dg1[..kk];
            let psi = &mut self.psi[..kk];
            let grad_psi = &mut self.grad_psi[..kk];
            let bwl = b * wl;
            let c = [
                bwl * dlog_lambda[0],
                bwl * dlog_lambda[1],
                bwl * dlog_lambda[2],
                bwl * dlog_lambda[3],
            ];
            for k in 0..kk {
                let g = g1[k];
                let p = psi[k];
                let d = dg1[k];
                let a1 = kernel_factor(w, g, inv_lambda);
                let ba1 = b * a1;
                let gp = &mut grad_psi[k];
                gp[0] = (grad_b[0] * a1 + bwl * d[0] - c[0] * g) * p + ba1 * gp[0];
                gp[1] = (grad_b[1] * a1 + bwl * d[1] - c[1] * g) * p + ba1 * gp[1];
                gp[2] = (grad_b[2] * a1 + bwl * d[2] - c[2] * g) * p + ba1 * gp[2];
                gp[3] = (grad_b[3] * a1 - c[3] * g) * p + ba1 * gp[3];
                // Same expression as `apply_update`.
                psi[k] = p * a1 * b;
            }
            for j in 0..4 {
                self.grad_pi[j] = a0 * gpi[j] + grad_a0[j] * pi;
            }
            self.pi = pi * a0;
        }
        self.pi = self.pi.clamp(PI_CLAMP, 1.0 - PI_CLAMP);
        self.steps += 1;
        Ok((lambda, dlog_lambda))
    }
}

/// Result of a gradient-augmented pass.
#[derive(Debug, Clone)]
pub struct GradRun {
    pub log_likelihood: f64,
    pub grad: [f64; 4],
    pub final_state: GradState,
}

/// `log L_n(eta)` and its gradient in one sequential pass over `zs`.
pub fn pr_run_with_grad(
    zs: &[f64],
    e: &Eta,
    sched: &WeightSchedule,
    init: GradState,
) -> Result<GradRun> {
    if zs.len() != sched.len() {
        return Err(PrError::LengthMismatch { expected: sched.len(), actual: zs.len() });
    }
    let t = e.to_theta()?;
    let mut state = init;
    for (&z, &w) in zs.iter().zip(sched.values()) {
        state.step(z, w, &t)?;
    }
    Ok(GradRun { log_likelihood: state.log_likelihood, grad: state.grad, final_state: state })
}

/// Convenience wrapper that seeds the run from `init_mixing_state(grid, pi0(e))`.
pub fn log_lik_and_grad(
    zs: &[f64],
    e: &Eta,
    sched: &WeightSchedule,
    grid: &Arc<Grid>,
) -> Result<(f64, [f64; 4])> {
    let t = e.to_theta()?;
    let init = crate::mixing::init_on_grid(grid.clone(), t.pi0())?;
    let run = pr_run_with_grad(zs, e, sched, GradState::new(&init))?;
    Ok((run.log_likelihood, run.grad))
}
