//! Finite-difference verification of the analytic recursion gradient.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::gradient::{pr_run_with_grad, GradState};
use crate::mixing::{init_on_grid, Grid};
use crate::params::Eta;
use crate::recursion::pr_run;
use crate::rng::{derive_seed, rng_from_seed};
use crate::weights::WeightSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub sample_sizes: Vec<usize>,
    pub grid_sizes: Vec<usize>,
    pub seeds: usize,
    pub base_seed: u64,
    pub fd_step: f64,
    pub rel_tol: f64,
    /// Absolute differences below this count as agreement.
    pub abs_floor: f64,
    #[doc(hidden)]
    pub flip_tau_sign: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            sample_sizes: vec![10, 50, 200],
            grid_sizes: vec![16, 40],
            seeds: 10,
            base_seed: 20_100_517,
            fd_step: 1e-5,
            rel_tol: 1e-5,
            abs_floor: 1e-8,
            flip_tau_sign: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckCase {
    pub n: usize,
    pub grid_size: usize,
    pub seed: u64,
    pub eta: Eta,
    pub analytic: [f64; 4],
    pub numeric: [f64; 4],
    pub rel_err: [f64; 4],
}

impl GradCheckCase {
    pub fn max_rel_err(&self) -> f64 {
        self.rel_err.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub cases: Vec<GradCheckCase>,
    pub max_rel_err: [f64; 4],
    pub rel_tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err.iter().all(|e| *e < self.rel_tol)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckCase> {
        self.cases.iter().filter(move |c| c.max_rel_err() >= self.rel_tol)
    }
}

/// Relative disagreement, zero when the absolute gap is below `abs_floor`.
pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let gap = (analytic - numeric).abs();
    if gap < abs_floor {
        0.0
    } else {
        gap / analytic.abs().max(numeric.abs())
    }
}

/// Two-groups-shaped synthetic sample: 80% N(0, 1), 20% N(0, 5).
pub fn synthetic_sample(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            if rng.random::<f64>() < 0.8 {
                e
            } else {
                5f64.sqrt() * e
            }
        })
        .collect()
}

fn random_eta(seed: u64) -> Eta {
    let mut rng = rng_from_seed(seed);
    Eta([
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(-1.0..1.5),
        rng.random_range(1.0..4.0),
    ])
}

fn log_lik(zs: &[f64], e: &Eta, sched: &WeightSchedule, grid: &Arc<Grid>) -> Result<f64> {
    let t = e.to_theta()?;
    let init = init_on_grid(grid.clone(), t.pi0())?;
    Ok(pr_run(zs, &t, sched, &init)?.log_likelihood)
}

/// Compares the analytic gradient with central differences of the plain
/// recursion over every configured `(n, K, seed)`.
pub fn gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut cases = Vec::new();
    let mut max_rel_err = [0.0f64; 4];
    for &n in &cfg.sample_sizes {
        for &k in &cfg.grid_sizes {
            let grid = Arc::new(Grid::midpoint(k)?);
            let sched = WeightSchedule::new(n, crate::weights::DEFAULT_GAMMA)?;
            for s in 0..cfg.seeds as u64 {
                let seed = derive_seed(cfg.base_seed, &[n as u64, k as u64, s]);
                let zs = synthetic_sample(n, derive_seed(seed, &[0]));
                let eta = random_eta(derive_seed(seed, &[1]));
                let t = eta.to_theta()?;
                let init = init_on_grid(grid.clone(), t.pi0())?;
                let mut state = GradState::new(&init);
                if cfg.flip_tau_sign {
                    state = state.with_flipped_tau_gradient();
                }
                let analytic = pr_run_with_grad(&zs, &eta, &sched, state)?.grad;
                let mut numeric = [0.0; 4];
                let mut rel_err = [0.0; 4];
                for j in 0..4 {
                    let mut up = eta.0;
                    let mut dn = eta.0;
                    up[j] += cfg.fd_step;
                    dn[j] -= cfg.fd_step;
                    numeric[j] = (log_lik(&zs, &Eta(up), &sched, &grid)?
                        - log_lik(&zs, &Eta(dn), &sched, &grid)?)
                        / (2.0 * cfg.fd_step);
                    rel_err[j] = relative_error(analytic[j], numeric[j], cfg.abs_floor);
                    max_rel_err[j] = max_rel_err[j].max(rel_err[j]);
                }
                cases.push(GradCheckCase { n, grid_size: k, seed, eta, analytic, numeric, rel_err });
            }
        }
    }
    Ok(GradCheckReport { cases, max_rel_err, rel_tol: cfg.rel_tol })
}
