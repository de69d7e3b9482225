//! Hyper-prior on `(mu, sigma, tau, pi0)` used to regularize the recursion
//! likelihood.
//!
//! The density is taken in natural coordinates:
//!
//! * `mu | sigma ~ N(0, sigma^2 / mu_precision_scale)`
//! * `log sigma ~ N(0, sd_log_sigma^2)`, i.e. `sigma` is log-normal
//! * `log(tau - 1) ~ N(0, sd_log_taum1^2)`, i.e. `tau - 1` is log-normal
//! * `pi0 ~ Beta(beta_a, beta_b)`
//!
//! No Jacobian for the move to [`Eta`] is added; only the gradient is pushed
//! forward by the chain rule.

use statrs::function::gamma::ln_gamma;

use crate::error::{PrError, Result};
use crate::params::{expit, Eta, Theta};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub sd_log_sigma: f64,
    pub sd_log_taum1: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub mu_precision_scale: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            sd_log_sigma: 0.25,
            sd_log_taum1: 1.0,
            beta_a: 22.7,
            beta_b: 1.0,
            mu_precision_scale: 400.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sd_log_sigma", self.sd_log_sigma),
            ("sd_log_taum1", self.sd_log_taum1),
            ("beta_a", self.beta_a),
            ("beta_b", self.beta_b),
            ("mu_precision_scale", self.mu_precision_scale),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(PrError::InvalidConfig(format!("prior {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Joint log density at raw coordinates. Points outside the open
    /// parameter space give `-inf` instead of an error so that a line search
    /// can simply back off.
    pub fn log_density(&self, mu: f64, sigma: f64, tau: f64, pi0: f64) -> f64 {
        if !(mu.is_finite() && sigma.is_finite() && tau.is_finite() && pi0.is_finite()) {
            return f64::NEG_INFINITY;
        }
        if sigma <= 0.0 || tau <= 1.0 || pi0 <= 0.0 || pi0 >= 1.0 {
            return f64::NEG_INFINITY;
        }
        let s = self.mu_precision_scale;
        let mu_sd = sigma / s.sqrt();
        let lp_mu = -LN_SQRT_2PI - mu_sd.ln() - 0.5 * (mu / mu_sd).powi(2);

        let log_sigma = sigma.ln();
        let lp_sigma = log_normal_ln_pdf(log_sigma, self.sd_log_sigma);

        let log_taum1 = (tau - 1.0).ln();
        let lp_tau = log_normal_ln_pdf(log_taum1, self.sd_log_taum1);

        let lp_pi = beta_ln_pdf(pi0, self.beta_a, self.beta_b);

        lp_mu + lp_sigma + lp_tau + lp_pi
    }
}

/// Log density of a log-normal(0, sd^2) variable `x`, given `ln x`.
fn log_normal_ln_pdf(ln_x: f64, sd: f64) -> f64 {
    -ln_x - LN_SQRT_2PI - sd.ln() - 0.5 * (ln_x / sd).powi(2)
}

fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    // (b - 1) * ln(1 - x) is exactly zero for b = 1 even as x -> 1.
    let right = if b == 1.0 { 0.0 } else { (b - 1.0) * (-x).ln_1p() };
    (a - 1.0) * x.ln() + right - ln_beta
}

pub fn log_prior(t: &Theta, p: &PriorSpec) -> f64 {
    p.log_density(t.mu(), t.sigma(), t.tau(), t.pi0())
}

/// Same density evaluated at an unconstrained point.
pub fn log_prior_eta(e: &Eta, p: &PriorSpec) -> f64 {
    if !e.is_finite() {
        return f64::NEG_INFINITY;
    }
    let [mu, ls, lt, lp] = e.0;
    p.log_density(mu, ls.exp(), 1.0 + lt.exp(), expit(lp))
}

/// Gradient of [`log_prior`] with respect to the unconstrained coordinates.
pub fn log_prior_grad_eta(e: &Eta, p: &PriorSpec) -> [f64; 4] {
    let [mu, ls, lt, lp] = e.0;
    let sigma2 = (2.0 * ls).exp();
    let s = p.mu_precision_scale;
    let pi0 = expit(lp);
    let one_m_pi0 = expit(-lp);

    let d_mu = -mu * s / sigma2;
    // mu-term contributes -1 + mu^2 s / sigma^2, the log-normal term -1 - ls / sd^2.
    let d_ls = -1.0 + mu * mu * s / sigma2 - 1.0 - ls / (p.sd_log_sigma * p.sd_log_sigma);
    let d_lt = -1.0 - lt / (p.sd_log_taum1 * p.sd_log_taum1);
    let d_lp = (p.beta_a - 1.0) * one_m_pi0 - (p.beta_b - 1.0) * pi0;
    [d_mu, d_ls, d_lt, d_lp]
}
