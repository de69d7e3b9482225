//! Predictive recursion: sequential updates of the mixing measure and the
//! resulting marginal likelihood `L_n(theta) = prod_i f_{i-1}(Z_i)`.
//!
//! For each observation the nu-density `pi <0> + (1 - pi) psi` is blended
//! with its data-reweighted version,
//!
//! ```text
//! Psi_i = (1 - w_i) Psi_{i-1} + w_i p(Z_i | theta, u) Psi_{i-1} / f_{i-1}(Z_i),
//! ```
//!
//! and stored back in `(pi, psi)` form with `psi` integrating to one.

use crate::error::{PrError, Result};
use crate::mixing::{Grid, MixingState};
use crate::params::Theta;
use crate::weights::WeightSchedule;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Densities at or below this value are treated as underflow.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// `N(z | mu + tau sigma u, sigma^2)`.
pub fn kernel_eval(z: f64, t: &Theta, u: f64) -> f64 {
    let z1 = (z - t.mu()) / t.sigma() - t.tau() * u;
    (-0.5 * z1 * z1 - (t.sigma().ln() + LN_SQRT_2PI)).exp()
}

/// Predictive density `pi N(z | mu, sigma^2) + (1 - pi) int p(z | theta, u) psi(u) du`
/// under the grid quadrature, floored at [`DENSITY_FLOOR`].
pub fn mixture_density(z: f64, t: &Theta, s: &MixingState) -> f64 {
    let mut buf = vec![0.0; s.grid.len()];
    let ev = evaluate(z, t, s.pi, &s.psi, &s.grid, &mut buf);
    ev.lambda.max(DENSITY_FLOOR)
}

/// Continuous-part density `int p(z | theta, u) psi(u) du`.
pub fn continuous_density(z: f64, t: &Theta, grid: &Grid, psi: &[f64]) -> f64 {
    let mut buf = vec![0.0; grid.len()];
    evaluate(z, t, 0.0, psi, grid, &mut buf).h
}

#[inline(always)]
pub(crate) fn shifted_kernel(z0: f64, tau: f64, u: f64, log_norm: f64) -> f64 {
    let z1 = z0 - tau * u;
    (-0.5 * z1 * z1 - log_norm).exp()
}

const KERNEL_BLOCK: usize = 16;

/// `g1[k] = shifted_kernel(z0, tau, u_k, log_norm)` on the uniform grid.
///
/// Within each block of nodes the Gaussian is anchored (one `exp`) at the
/// node nearest its peak and propagated outward by the ratio recurrence
/// `g_{k+1} / g_k = exp(z1_k d - d^2 / 2)`, `d = tau h`, which needs no
/// further `exp`. Moving away from the peak the values only shrink, so
/// underflow is harmless, and short blocks keep the accumulated rounding at
/// a few dozen ulps.
pub(crate) fn fill_kernels(z0: f64, tau: f64, log_norm: f64, grid: &Grid, g1: &mut [f64]) {
    let nodes = grid.nodes();
    let k = nodes.len();
    let g1 = &mut g1[..k];
    let spacing = 2.0 / k as f64;
    let d = tau * spacing;
    let half = 0.5 * d * d;
    let decay = (-d * d).exp();
    // Fractional index of the peak u = z0 / tau.
    let peak = (z0 / tau + 1.0) / spacing - 0.5;
    let mut start = 0;
    while start < k {
        let end = (start + KERNEL_BLOCK).min(k);
        let a = if peak.is_nan() {
            start
        } else {
            peak.round().clamp(start as f64, (end - 1) as f64) as usize
        };
        let ga = shifted_kernel(z0, tau, nodes[a], log_norm);
        g1[a] = ga;
        if ga == 0.0 {
            g1[start..end].fill(0.0);
        } else {
            let z1 = z0 - tau * nodes[a];
            if a + 1 < end {
                let mut r = (z1 * d - half).exp();
                let mut g = ga;
                for v in &mut g1[a + 1..end] {
                    g *= r;
                    r *= decay;
                    *v = g;
                }
            }
            if a > start {
                let mut r = (-z1 * d - half).exp();
                let mut g = ga;
                for v in g1[start..a].iter_mut().rev() {
                    g *= r;
                    r *= decay;
                    *v = g;
                }
            }
        }
        start = end;
    }
}

/// Kernel values for one observation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepEval {
    pub g0: f64,
    pub h: f64,
    pub lambda: f64,
}

/// Fills `g1` with `N(z | mu + tau sigma u_k, sigma^2)` and returns the atom
/// kernel, the continuous integral and the predictive density. Shared by the
/// plain and the gradient-augmented recursion so both produce bitwise
/// identical primal values.
#[inline]
pub(crate) fn evaluate(
    z: f64,
    t: &Theta,
    pi: f64,
    psi: &[f64],
    grid: &Grid,
    g1: &mut [f64],
) -> StepEval {
    let sigma = t.sigma();
    let log_norm = sigma.ln() + LN_SQRT_2PI;
    let z0 = (z - t.mu()) / sigma;
    let g0 = (-0.5 * z0 * z0 - log_norm).exp();
    fill_kernels(z0, t.tau(), log_norm, grid, g1);
    let mut h = 0.0;
    for ((&g, &q), &p) in g1.iter().zip(grid.weights()).zip(psi) {
        h += g * p * q;
    }
    let lambda = pi * g0 + (1.0 - pi) * h;
    StepEval { g0, h, lambda }
}

#[inline(always)]
pub(crate) fn atom_factor(w: f64, ev: &StepEval) -> f64 {
    1.0 + w * (ev.g0 / ev.lambda - 1.0)
}

#[inline(always)]
pub(crate) fn kernel_factor(w: f64, g: f64, inv_lambda: f64) -> f64 {
    1.0 + w * (g * inv_lambda - 1.0)
}

/// `1 / sum_k A_1(u_k) psi_k q_k`: the factor that renormalizes the updated
/// continuous part.
#[inline]
pub(crate) fn normalizer(w: f64, ev: &StepEval, psi: &[f64], grid: &Grid, g1: &[f64]) -> f64 {
    if w == 0.0 {
        return 1.0;
    }
    let inv_lambda = 1.0 / ev.lambda;
    let mut norm = 0.0;
    for ((&p, &g), &q) in psi.iter().zip(g1).zip(grid.weights()) {
        norm += p * kernel_factor(w, g, inv_lambda) * q;
    }
    1.0 / norm
}

/// Applies one update in place given the kernel values from [`evaluate`] and
/// the factor from [`normalizer`].
#[inline]
pub(crate) fn apply_update(w: f64, ev: &StepEval, b: f64, pi: &mut f64, psi: &mut [f64], g1: &[f64]) {
    if w == 0.0 {
        return;
    }
    let inv_lambda = 1.0 / ev.lambda;
    *pi *= atom_factor(w, ev);
    for (p, &g) in psi.iter_mut().zip(g1) {
        *p = *p * kernel_factor(w, g, inv_lambda) * b;
    }
}

/// One recursion step. Returns the updated state and `f_{i-1}(z)`.
pub fn pr_step(s: &MixingState, z: f64, w: f64, t: &Theta) -> Result<(MixingState, f64)> {
    if !(0.0..1.0).contains(&w) {
        return Err(PrError::InvalidParameter(format!("weight must be in [0, 1), got {w}")));
    }
    let mut next = s.clone();
    let mut g1 = vec![0.0; s.grid.len()];
    let f = step_in_place(&mut next.pi, &mut next.psi, &s.grid, z, w, t, &mut g1, 0)?;
    Ok((next, f))
}

#[allow(clippy::too_many_arguments)]
fn step_in_place(
    pi: &mut f64,
    psi: &mut [f64],
    grid: &Grid,
    z: f64,
    w: f64,
    t: &Theta,
    g1: &mut [f64],
    index: usize,
) -> Result<f64> {
    let ev = evaluate(z, t, *pi, psi, grid, g1);
    if !(ev.lambda > DENSITY_FLOOR) {
        return Err(underflow(index, z, t));
    }
    let b = normalizer(w, &ev, psi, grid, g1);
    apply_update(w, &ev, b, pi, psi, g1);
    Ok(ev.lambda)
}

pub(crate) fn underflow(index: usize, z: f64, t: &Theta) -> PrError {
    PrError::DensityUnderflow { index, z, mu: t.mu(), sigma: t.sigma(), tau: t.tau() }
}

/// Output of a full recursion pass.
#[derive(Debug, Clone)]
pub struct PrTrace {
    pub final_state: MixingState,
    pub log_likelihood: f64,
    pub per_obs_density: Option<Vec<f64>>,
}

/// Runs the recursion over `zs` in the order given.
pub fn pr_run(zs: &[f64], t: &Theta, sched: &WeightSchedule, init: &MixingState) -> Result<PrTrace> {
    run(zs, t, sched, init, false)
}

/// Like [`pr_run`] but also keeps every one-step-ahead density.
pub fn pr_run_with_densities(
    zs: &[f64],
    t: &Theta,
    sched: &WeightSchedule,
    init: &MixingState,
) -> Result<PrTrace> {
    run(zs, t, sched, init, true)
}

fn run(
    zs: &[f64],
    t: &Theta,
    sched: &WeightSchedule,
    init: &MixingState,
    keep: bool,
) -> Result<PrTrace> {
    if zs.len() != sched.len() {
        return Err(PrError::LengthMismatch { expected: sched.len(), actual: zs.len() });
    }
    let grid = init.grid.clone();
    let mut pi = init.pi;
    let mut psi = init.psi.clone();
    let mut g1 = vec![0.0; grid.len()];
    let mut dens = keep.then(|| Vec::with_capacity(zs.len()));
    let mut loglik = 0.0;
    for (i, (&z, &w)) in zs.iter().zip(sched.values()).enumerate() {
        let f = step_in_place(&mut pi, &mut psi, &grid, z, w, t, &mut g1, i)?;
        loglik += f.ln();
        if let Some(d) = dens.as_mut() {
            d.push(f);
        }
    }
    Ok(PrTrace {
        final_state: MixingState { pi, grid, psi },
        log_likelihood: loglik,
        per_obs_density: dens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::init_mixing_state;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn theta(mu: f64, sigma: f64, tau: f64, pi0: f64) -> Theta {
        Theta::new(mu, sigma, tau, pi0).unwrap()
    }

    #[test]
    fn kernel_recurrence_matches_direct_exp() {
        for &k in &[2usize, 8, 17, 200, 333] {
            let grid = Grid::midpoint(k).unwrap();
            let mut g1 = vec![0.0; k];
            for &tau in &[1.0001, 1.7, 3.0, 12.0] {
                for &z0 in &[-40.0, -9.3, -1.0, 0.0, 0.2, 2.5, 7.0, 35.0] {
                    let log_norm = 0.3f64.ln() + LN_SQRT_2PI;
                    fill_kernels(z0, tau, log_norm, &grid, &mut g1);
                    for (&g, &u) in g1.iter().zip(grid.nodes()) {
                        let want = shifted_kernel(z0, tau, u, log_norm);
                        // exp amplifies rounding in its argument by |argument|.
                        let z1 = z0 - tau * u;
                        let tol = 1e-14 * (1.0 + 0.5 * z1 * z1);
                        if want > 1e-290 {
                            assert!(((g - want) / want).abs() < tol, "k={k} tau={tau} z0={z0} u={u}");
                        } else {
                            assert!(g <= 1e-280);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn kernel_mode_height() {
        let t = theta(0.3, 1.7, 2.5, 0.9);
        let v = kernel_eval(0.3, &t, 0.0);
        assert!((v - 1.0 / (1.7 * (2.0 * PI).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn kernel_reflection_symmetry() {
        let t = theta(0.4, 1.3, 3.0, 0.9);
        for d in [-3.0, -0.5, 0.0, 1.2, 4.0] {
            for u in [-1.0, -0.3, 0.0, 0.7, 1.0] {
                let a = kernel_eval(0.4 + d, &t, u);
                let b = kernel_eval(0.4 - d, &t, -u);
                assert!((a - b).abs() <= 1e-13 * a.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn kernel_standard_case() {
        let t = theta(0.0, 1.0, 2.0, 0.5);
        assert!((kernel_eval(2.0, &t, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn atom_only_density_is_null_normal() {
        let t = theta(0.2, 1.1, 2.0, 0.5);
        let s = init_mixing_state(50, 0.5).unwrap();
        let s = MixingState { pi: 1.0, ..s };
        for z in [-2.0, 0.0, 0.2, 3.5] {
            assert_eq!(mixture_density(z, &t, &s), kernel_eval(z, &t, 0.0));
        }
    }

    #[test]
    fn uniform_psi_converges_to_refined_grid() {
        // Midpoint rule: coarse - exact = -(h^2 / 24) (f'(1) - f'(-1)) + O(h^4),
        // with f(u) = N(z | tau u, 1) / 2.
        let tau = 2.0;
        let t = theta(0.0, 1.0, tau, 0.5);
        let coarse = Arc::new(Grid::midpoint(200).unwrap());
        let fine = Arc::new(Grid::midpoint(100_000).unwrap());
        let s_c = MixingState::from_parts(0.0, coarse, vec![0.5; 200]).unwrap();
        let s_f = MixingState::from_parts(0.0, fine, vec![0.5; 100_000]).unwrap();
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let h = 2.0 / 200.0;
        for i in 0..=160 {
            let z = -8.0 + 0.1 * i as f64;
            let a = mixture_density(z, &t, &s_c);
            let b = mixture_density(z, &t, &s_f);
            let df = |u: f64| 0.5 * tau * (z - tau * u) * phi(z - tau * u);
            let predicted = -(h * h / 24.0) * (df(1.0) - df(-1.0));
            assert!((a - b - predicted).abs() < 1e-9, "z = {z}: {a} vs {b}");
            assert!((a - b).abs() < 1.1e-6, "z = {z}: {a} vs {b}");
        }
    }

    #[test]
    fn predictive_density_integrates_to_one() {
        let t = theta(0.1, 1.2, 2.5, 0.8);
        let s = init_mixing_state(200, 0.8).unwrap();
        let (lo, hi, m) = (-30.0, 30.0, 60_000);
        let h = (hi - lo) / m as f64;
        let mut acc = 0.5 * (mixture_density(lo, &t, &s) + mixture_density(hi, &t, &s));
        for i in 1..m {
            acc += mixture_density(lo + i as f64 * h, &t, &s);
        }
        assert!((acc * h - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_weight_leaves_state_unchanged() {
        let t = theta(0.0, 1.0, 2.0, 0.9);
        let s = init_mixing_state(40, 0.9).unwrap();
        let (next, f) = pr_step(&s, 1.3, 0.0, &t).unwrap();
        assert_eq!(next, s);
        assert_eq!(f, mixture_density(1.3, &t, &s));
    }

    #[test]
    fn atom_only_state_is_closed() {
        let t = theta(0.0, 1.0, 2.0, 0.9);
        let s = MixingState { pi: 1.0, ..init_mixing_state(16, 0.9).unwrap() };
        let (next, _) = pr_step(&s, 2.0, 0.4, &t).unwrap();
        assert_eq!(next.pi(), 1.0);
        assert!((next.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn far_tail_observation_lowers_atom() {
        let t = theta(0.0, 1.0, 3.0, 0.9);
        // psi concentrated on the right end of the grid.
        let grid = Arc::new(Grid::midpoint(40).unwrap());
        let psi: Vec<f64> = grid.nodes().iter().map(|u| if *u > 0.5 { 1.0 } else { 0.01 }).collect();
        let s = MixingState::from_parts(0.9, grid, psi).unwrap();
        let z = 6.0 * 1.0 * (1.0 + 3.0) + 0.5;
        let (next, _) = pr_step(&s, z, 0.3, &t).unwrap();
        assert!(next.pi() < s.pi());
    }

    #[test]
    fn rejects_bad_weight_and_underflow() {
        let t = theta(0.0, 1.0, 2.0, 0.9);
        let s = init_mixing_state(16, 0.9).unwrap();
        assert!(pr_step(&s, 0.0, 1.0, &t).is_err());
        assert!(pr_step(&s, 0.0, -0.1, &t).is_err());
        match pr_step(&s, 1e4, 0.5, &t) {
            Err(PrError::DensityUnderflow { z, .. }) => assert_eq!(z, 1e4),
            other => panic!("expected underflow, got {other:?}"),
        }
    }

    #[test]
    fn run_reports_index_of_failure() {
        let t = theta(0.0, 1.0, 2.0, 0.9);
        let s = init_mixing_state(16, 0.9).unwrap();
        let sched = WeightSchedule::new(3, 0.67).unwrap();
        match pr_run(&[0.0, 0.5, 1e4], &t, &sched, &s) {
            Err(PrError::DensityUnderflow { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected underflow, got {other:?}"),
        }
        assert!(pr_run(&[0.0, 0.5], &t, &sched, &s).is_err());
    }

    #[test]
    fn single_observation_equals_prior_predictive() {
        let t = theta(0.1, 1.1, 2.2, 0.85);
        let s = init_mixing_state(200, 0.85).unwrap();
        let sched = WeightSchedule::new(1, 0.67).unwrap();
        let trace = pr_run(&[1.7], &t, &sched, &s).unwrap();
        // Direct integral against Psi_0 with a refined grid.
        let fine = init_mixing_state(20_000, 0.85).unwrap();
        let direct = 0.85 * kernel_eval(1.7, &t, 0.0)
            + 0.15
                * fine
                    .grid()
                    .nodes()
                    .iter()
                    .zip(fine.psi())
                    .zip(fine.grid().weights())
                    .map(|((&u, &p), &q)| kernel_eval(1.7, &t, u) * p * q)
                    .sum::<f64>();
        assert!((trace.log_likelihood.exp() - direct).abs() < 1e-6);
        assert!((trace.log_likelihood - mixture_density(1.7, &t, &s).ln()).abs() < 1e-15);
    }

    #[test]
    fn order_matters() {
        let t = theta(0.0, 1.0, 2.0, 0.9);
        let s = init_mixing_state(40, 0.9).unwrap();
        let zs = [0.1, -2.5, 3.0, 0.4, -0.2, 4.1];
        let mut rev = zs;
        rev.reverse();
        let sched = WeightSchedule::new(zs.len(), 0.67).unwrap();
        let a = pr_run(&zs, &t, &sched, &s).unwrap().log_likelihood;
        let b = pr_run(&rev, &t, &sched, &s).unwrap().log_likelihood;
        assert!((a - b).abs() > 1e-6);
    }

    #[test]
    fn densities_are_kept_on_request() {
        let t = theta(0.0, 1.0, 2.0, 0.9);
        let s = init_mixing_state(40, 0.9).unwrap();
        let zs = [0.1, -2.5, 3.0];
        let sched = WeightSchedule::new(3, 0.67).unwrap();
        let tr = pr_run_with_densities(&zs, &t, &sched, &s).unwrap();
        let d = tr.per_obs_density.unwrap();
        assert_eq!(d.len(), 3);
        assert!(d.iter().all(|v| *v > 0.0));
        assert!((d.iter().map(|v| v.ln()).sum::<f64>() - tr.log_likelihood).abs() < 1e-14);
        assert!(pr_run(&zs, &t, &sched, &s).unwrap().per_obs_density.is_none());
    }
}
