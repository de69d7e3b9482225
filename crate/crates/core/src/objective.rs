//! Regularized, permutation-averaged recursion log-likelihood.
//!
//! The objective at `eta` is the mean over a frozen set of data orderings of
//! `log L_n(eta)`, plus the log prior density. Averaging (rather than
//! summing) keeps gradient tolerances independent of the permutation count.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{PrError, Result};
use crate::gradient::{pr_run_with_grad, GradState};
use crate::mixing::{init_on_grid, Grid, DEFAULT_GRID_SIZE};
use crate::params::Eta;
use crate::prior::{log_prior_eta, log_prior_grad_eta, PriorSpec};
use crate::rng::{is_permutation, permutation, rng_from_seed};
use crate::weights::{WeightSchedule, DEFAULT_GAMMA};

/// User-facing knobs for the objective; sample-size independent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSettings {
    pub n_permutations: usize,
    pub rng_seed: u64,
    pub gamma: f64,
    pub grid_size: usize,
    pub priors: PriorSpec,
}

impl Default for ObjectiveSettings {
    fn default() -> Self {
        Self {
            n_permutations: 10,
            rng_seed: 0,
            gamma: DEFAULT_GAMMA,
            grid_size: DEFAULT_GRID_SIZE,
            priors: PriorSpec::default(),
        }
    }
}

/// Objective configuration bound to a sample size, with its permutations
/// drawn once and frozen.
#[derive(Debug, Clone)]
pub struct ObjectiveConfig {
    settings: ObjectiveSettings,
    grid: Arc<Grid>,
    schedule: WeightSchedule,
    permutations: Vec<Vec<usize>>,
}

impl ObjectiveConfig {
    pub fn new(n: usize, settings: ObjectiveSettings) -> Result<Self> {
        if settings.n_permutations == 0 {
            return Err(PrError::InvalidConfig("need at least one permutation".into()));
        }
        let mut rng = rng_from_seed(settings.rng_seed);
        let perms = (0..settings.n_permutations).map(|_| permutation(n, &mut rng)).collect();
        Self::with_permutations(settings, perms)
    }

    /// Uses the given orderings instead of drawing them.
    pub fn with_permutations(
        mut settings: ObjectiveSettings,
        permutations: Vec<Vec<usize>>,
    ) -> Result<Self> {
        settings.priors.validate()?;
        let n = permutations.first().map(Vec::len).unwrap_or(0);
        if n == 0 {
            return Err(PrError::InvalidConfig("need at least one nonempty permutation".into()));
        }
        if permutations.iter().any(|p| p.len() != n || !is_permutation(p)) {
            return Err(PrError::InvalidConfig("permutations must all be orderings of 0..n".into()));
        }
        settings.n_permutations = permutations.len();
        let grid = Arc::new(Grid::midpoint(settings.grid_size)?);
        let schedule = WeightSchedule::new(n, settings.gamma)?;
        Ok(Self { settings, grid, schedule, permutations })
    }

    pub fn settings(&self) -> &ObjectiveSettings {
        &self.settings
    }

    pub fn n(&self) -> usize {
        self.schedule.len()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn schedule(&self) -> &WeightSchedule {
        &self.schedule
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.permutations
    }

    pub fn priors(&self) -> &PriorSpec {
        &self.settings.priors
    }

    pub(crate) fn permuted(&self, zs: &[f64], j: usize) -> Vec<f64> {
        self.permutations[j].iter().map(|&i| zs[i]).collect()
    }
}

/// Value and eta-gradient of the regularized objective. Deterministic in
/// `(e, zs, cfg)`; the per-permutation runs may execute in parallel but are
/// reduced in permutation order.
pub fn regularized_objective(e: &Eta, zs: &[f64], cfg: &ObjectiveConfig) -> Result<(f64, [f64; 4])> {
    if zs.len() != cfg.n() {
        return Err(PrError::LengthMismatch { expected: cfg.n(), actual: zs.len() });
    }
    let t = e.to_theta()?;
    let init = init_on_grid(cfg.grid.clone(), t.pi0())?;
    let runs: Vec<Result<(f64, [f64; 4])>> = (0..cfg.permutations.len())
        .into_par_iter()
        .map(|j| {
            let data = cfg.permuted(zs, j);
            pr_run_with_grad(&data, e, &cfg.schedule, GradState::new(&init))
                .map(|r| (r.log_likelihood, r.grad))
                .map_err(|err| PrError::Permutation { permutation: j, source: Box::new(err) })
        })
        .collect();

    let m = runs.len() as f64;
    let mut value = 0.0;
    let mut grad = [0.0; 4];
    for r in runs {
        let (ll, g) = r?;
        value += ll;
        for j in 0..4 {
            grad[j] += g[j];
        }
    }
    value /= m;
    let prior_grad = log_prior_grad_eta(e, cfg.priors());
    for j in 0..4 {
        grad[j] = grad[j] / m + prior_grad[j];
    }
    Ok((value + log_prior_eta(e, cfg.priors()), grad))
}
