//! Non-mixing model parameters and their unconstrained reparameterization.
//!
//! [`Theta`] carries `(mu, sigma, tau, pi0)` in natural coordinates with
//! `sigma > 0`, `tau > 1` and `0 < pi0 < 1`. [`Eta`] is the unconstrained
//! image `(mu, log sigma, log(tau - 1), logit pi0)` that the optimizer works
//! in; every gradient in this crate is taken with respect to `Eta`.

use crate::error::{PrError, Result};

/// Natural-scale parameters of the two-groups model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    mu: f64,
    sigma: f64,
    tau: f64,
    pi0: f64,
}

impl Theta {
    pub fn new(mu: f64, sigma: f64, tau: f64, pi0: f64) -> Result<Self> {
        for (name, v) in [("mu", mu), ("sigma", sigma), ("tau", tau), ("pi0", pi0)] {
            if !v.is_finite() {
                return Err(PrError::NonFinite(format!("{name} = {v}")));
            }
        }
        if sigma <= 0.0 {
            return Err(PrError::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
        }
        if tau <= 1.0 {
            return Err(PrError::InvalidParameter(format!("tau must be > 1, got {tau}")));
        }
        if !(pi0 > 0.0 && pi0 < 1.0) {
            return Err(PrError::InvalidParameter(format!("pi0 must be in (0, 1), got {pi0}")));
        }
        Ok(Self { mu, sigma, tau, pi0 })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Prior null proportion that seeds the recursion's initial mixing measure.
    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    pub fn to_eta(&self) -> Eta {
        theta_to_eta(self)
    }
}

/// Unconstrained coordinates `(mu, log sigma, log(tau - 1), logit pi0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eta(pub [f64; 4]);

impl Eta {
    pub fn new(mu: f64, log_sigma: f64, log_tau_m1: f64, logit_pi0: f64) -> Self {
        Eta([mu, log_sigma, log_tau_m1, logit_pi0])
    }

    pub fn as_array(&self) -> &[f64; 4] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn to_theta(&self) -> Result<Theta> {
        eta_to_theta(self)
    }
}

impl From<[f64; 4]> for Eta {
    fn from(v: [f64; 4]) -> Self {
        Eta(v)
    }
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Numerically stable logistic function.
pub(crate) fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn theta_to_eta(t: &Theta) -> Eta {
    Eta([t.mu, t.sigma.ln(), (t.tau - 1.0).ln(), logit(t.pi0)])
}

/// Inverse of [`theta_to_eta`]. Fails for non-finite input, or when the image
/// saturates the boundary in floating point (e.g. `logit pi0 > 37`).
pub fn eta_to_theta(e: &Eta) -> Result<Theta> {
    if !e.is_finite() {
        return Err(PrError::NonFinite(format!("eta = {:?}", e.0)));
    }
    let [mu, ls, lt, lp] = e.0;
    Theta::new(mu, ls.exp(), 1.0 + lt.exp(), expit(lp))
}
