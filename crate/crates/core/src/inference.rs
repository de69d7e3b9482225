//! Final fit, local false discovery rates and the thresholding rule.

use rayon::prelude::*;

use crate::error::{PrError, Result};
use crate::mixing::{init_on_grid, MixingState};
use crate::objective::{ObjectiveConfig, ObjectiveSettings};
use crate::optim::{bfgs_maximize, default_init, BfgsOptions, OptResult};
use crate::params::Theta;
use crate::recursion::{continuous_density, kernel_eval, pr_run, DENSITY_FLOOR};

/// Default fdr threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    pub objective: ObjectiveSettings,
    pub bfgs: BfgsOptions,
}

/// Fitted two-groups model. `pi_hat` is the atom mass of the final mixing
/// measure, i.e. the null proportion of the fitted density.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub final_mixing: MixingState,
    pub pi_hat: f64,
    pub optimization: OptResult,
    /// Starting spread was degenerate and fell back to `sigma = 1`.
    pub degenerate_start: bool,
}

/// fdr value together with a marker for points where `f` underflowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdrValue {
    pub value: f64,
    pub extrapolated: bool,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.optimization.converged
    }

    /// Fitted null density `N(z | mu, sigma^2)`.
    pub fn f0(&self, z: f64) -> f64 {
        kernel_eval(z, &self.theta_hat, 0.0)
    }

    /// Fitted non-null density.
    pub fn f1(&self, z: f64) -> f64 {
        continuous_density(z, &self.theta_hat, self.final_mixing.grid(), self.final_mixing.psi())
    }

    /// Fitted marginal density `pi f0 + (1 - pi) f1`.
    pub fn f(&self, z: f64) -> f64 {
        self.pi_hat * self.f0(z) + (1.0 - self.pi_hat) * self.f1(z)
    }

    pub fn fdr_checked(&self, z: f64) -> FdrValue {
        let f = self.f(z);
        if !(f > DENSITY_FLOOR) {
            return FdrValue { value: 1.0, extrapolated: true };
        }
        FdrValue { value: (self.pi_hat * self.f0(z) / f).clamp(0.0, 1.0), extrapolated: false }
    }

    /// `pi f0(z) / f(z)` clamped to `[0, 1]`; 1 where `f` underflows.
    pub fn fdr(&self, z: f64) -> f64 {
        self.fdr_checked(z).value
    }
}

pub fn fdr_eval(fit: &FitResult, z: f64) -> f64 {
    fit.fdr(z)
}

/// Fits the model: robust start, BFGS on the regularized objective, then a
/// last recursion pass at the estimate under every frozen permutation with
/// the resulting nu-densities averaged.
pub fn fit(zs: &[f64], opts: &FitOptions) -> Result<FitResult> {
    let start = default_init(zs)?;
    let cfg = ObjectiveConfig::new(zs.len(), opts.objective)?;
    let opt = bfgs_maximize(zs, &cfg, &start.eta, &opts.bfgs)?;
    if !opt.converged {
        log::warn!(
            "optimizer stopped without meeting the gradient tolerance ({:?}, |grad| = {:.3e})",
            opt.stop,
            opt.gradient_norm_at_opt
        );
    }
    let final_mixing = final_pass(zs, &cfg, &opt.theta_hat)?;
    Ok(FitResult {
        theta_hat: opt.theta_hat,
        pi_hat: final_mixing.pi(),
        final_mixing,
        optimization: opt,
        degenerate_start: start.degenerate_spread,
    })
}

fn final_pass(zs: &[f64], cfg: &ObjectiveConfig, t: &Theta) -> Result<MixingState> {
    let init = init_on_grid(cfg.grid().clone(), t.pi0())?;
    let states: Vec<Result<MixingState>> = (0..cfg.permutations().len())
        .into_par_iter()
        .map(|j| {
            let data = cfg.permuted(zs, j);
            pr_run(&data, t, cfg.schedule(), &init)
                .map(|tr| tr.final_state)
                .map_err(|err| PrError::Permutation { permutation: j, source: Box::new(err) })
        })
        .collect();
    let m = states.len() as f64;
    let k = cfg.grid().len();
    let mut pi = 0.0;
    let mut cont = vec![0.0; k];
    for s in states {
        let s = s?;
        pi += s.pi();
        for (c, p) in cont.iter_mut().zip(s.psi()) {
            *c += (1.0 - s.pi()) * p;
        }
    }
    pi /= m;
    if cont.iter().all(|c| *c <= 0.0) {
        // All mass on the atom; keep the shape of psi0.
        return Ok(MixingState { pi, ..init });
    }
    MixingState::from_parts(pi.min(1.0), cfg.grid().clone(), cont)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestDecision {
    pub flags: Vec<bool>,
    pub fdr_values: Vec<f64>,
    /// Flagged cases with `z < mu_hat`.
    pub n_left: usize,
    /// Flagged cases with `z >= mu_hat`.
    pub n_right: usize,
    pub threshold: f64,
}

impl TestDecision {
    pub fn n_flagged(&self) -> usize {
        self.n_left + self.n_right
    }
}

/// Flags case `i` as non-null when `fdr(z_i) < r`.
pub fn classify(fit: &FitResult, zs: &[f64], r: f64) -> Result<TestDecision> {
    if !(r > 0.0 && r < 1.0) {
        return Err(PrError::InvalidConfig(format!("threshold must be in (0, 1), got {r}")));
    }
    let fdr_values: Vec<f64> = zs.iter().map(|&z| fit.fdr(z)).collect();
    let flags: Vec<bool> = fdr_values.iter().map(|&v| v < r).collect();
    let mu = fit.theta_hat.mu();
    let n_left = zs.iter().zip(&flags).filter(|(z, f)| **f && **z < mu).count();
    let n_right = flags.iter().filter(|f| **f).count() - n_left;
    Ok(TestDecision { flags, fdr_values, n_left, n_right, threshold: r })
}

/// One row of the fitted-curve table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub z: f64,
    pub f0: f64,
    pub null_part: f64,
    pub nonnull_part: f64,
    pub f: f64,
    pub fdr: f64,
}

/// Evaluates the fitted curves on an even grid over `[lo, hi]`.
pub fn export_fit_curves(fit: &FitResult, lo: f64, hi: f64, n_points: usize) -> Result<Vec<CurveRow>> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(PrError::InvalidConfig(format!("curve range must be finite with lo < hi, got [{lo}, {hi}]")));
    }
    if n_points < 2 {
        return Err(PrError::InvalidConfig("need at least 2 curve points".into()));
    }
    let step = (hi - lo) / (n_points - 1) as f64;
    Ok((0..n_points)
        .map(|i| {
            let z = if i + 1 == n_points { hi } else { lo + i as f64 * step };
            let f0 = fit.f0(z);
            let null_part = fit.pi_hat * f0;
            let nonnull_part = (1.0 - fit.pi_hat) * fit.f1(z);
            let f = null_part + nonnull_part;
            let fdr = if f > DENSITY_FLOOR { (null_part / f).clamp(0.0, 1.0) } else { 1.0 };
            CurveRow { z, f0, null_part, nonnull_part, f, fdr }
        })
        .collect())
}
