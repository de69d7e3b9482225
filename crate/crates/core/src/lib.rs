//! Empirical Bayes multiple testing with an identifiable two-groups model.
//!
//! Z-scores are modelled as `f = pi N(mu, sigma^2) + (1 - pi) f1`, where the
//! non-null density `f1(z) = int N(z | mu + tau sigma u, sigma^2) psi(u) du`
//! mixes location shifts of the null over `u in [-1, 1]`. The non-mixing
//! parameters are fitted by maximizing a regularized predictive-recursion
//! marginal likelihood with analytic gradients; the mixing measure comes out
//! of a final recursion pass. Cases are flagged by thresholding the local
//! false discovery rate `pi f0 / f`.

pub mod error;
pub mod fmt;
pub mod gradcheck;
pub mod gradient;
pub mod inference;
pub mod mixing;
pub mod objective;
pub mod optim;
pub mod params;
pub mod prior;
pub mod recursion;
pub mod rng;
pub mod simulation;
pub mod weights;

pub use error::{PrError, Result};
pub use gradient::{kernel_grads, pr_run_with_grad, GradRun, GradState, KernelGrads};
pub use inference::{classify, export_fit_curves, fit, CurveRow, FitOptions, FitResult, TestDecision};
pub use mixing::{init_mixing_state, Grid, MixingState};
pub use objective::{regularized_objective, ObjectiveConfig, ObjectiveSettings};
pub use optim::{bfgs_maximize, default_init, BfgsOptions, OptResult};
pub use params::{eta_to_theta, theta_to_eta, Eta, Theta};
pub use prior::{log_prior, log_prior_grad_eta, PriorSpec};
pub use recursion::{kernel_eval, mixture_density, pr_run, pr_step, PrTrace};
pub use weights::{make_weight_schedule, WeightSchedule};
