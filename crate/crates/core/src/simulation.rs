//! Simulation designs, the Bayes oracle and error-rate metrics.
//!
//! Four non-null densities are available, with `f0 = N(mu, sigma^2)`:
//!
//! | variant | `f1(z)` |
//! |---------|---------|
//! | C1 | `N(z | mu, sigma^2 + omega^2)` |
//! | C2 | `0.5 int_2^4 N(z | mu + u, sigma^2) du` |
//! | C3 | `0.67 N(z | mu - 3, 2) + 0.33 N(z | mu + 3, 2)` (variance 2) |
//! | C4 | `0.25 int_{[-4,-2] U [2,4]} N(z | mu + u, sigma^2) du` |
//!
//! Metric conventions:
//! `FDR = FP / max(FP + TP, 1)`, `FNR = FN / max(FN + TN, 1)`,
//! `power = TP / max(TP + FN, 1)`, `risk = (FP + FN) / n`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{PrError, Result};
use crate::fmt::g12;
use crate::inference::{classify, fit, FitOptions};
use crate::rng::{derive_seed, rng_from_seed};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SimVariant {
    C1,
    C2,
    C3,
    C4,
}

impl SimVariant {
    pub const ALL: [SimVariant; 4] = [SimVariant::C1, SimVariant::C2, SimVariant::C3, SimVariant::C4];

    fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for SimVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SimVariant::C1 => "C1",
            SimVariant::C2 => "C2",
            SimVariant::C3 => "C3",
            SimVariant::C4 => "C4",
        };
        f.write_str(s)
    }
}

impl FromStr for SimVariant {
    type Err = PrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" => Ok(SimVariant::C1),
            "C2" => Ok(SimVariant::C2),
            "C3" => Ok(SimVariant::C3),
            "C4" => Ok(SimVariant::C4),
            other => Err(PrError::InvalidConfig(format!(
                "unknown variant '{other}'; valid names are C1, C2, C3, C4"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimModel {
    pub variant: SimVariant,
    pub pi: f64,
    pub n: usize,
    pub mu: f64,
    pub sigma: f64,
    /// Extra variance of the C1 non-null density.
    pub omega2: f64,
}

impl SimModel {
    pub fn new(variant: SimVariant, pi: f64, n: usize) -> Self {
        Self { variant, pi, n, mu: 0.0, sigma: 1.0, omega2: 4.0 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi <= 1.0) {
            return Err(PrError::InvalidConfig(format!("pi must be in (0, 1], got {}", self.pi)));
        }
        if !(self.sigma > 0.0 && self.omega2 >= 0.0 && self.mu.is_finite()) {
            return Err(PrError::InvalidConfig("invalid simulation model scale".into()));
        }
        Ok(())
    }

    /// True non-null density.
    pub fn f1(&self, z: f64) -> f64 {
        let x = z - self.mu;
        let s = self.sigma;
        match self.variant {
            SimVariant::C1 => normal_pdf(x, (s * s + self.omega2).sqrt()),
            SimVariant::C2 => 0.5 * normal_interval((x - 4.0) / s, (x - 2.0) / s),
            SimVariant::C3 => {
                let sd = 2f64.sqrt();
                0.67 * normal_pdf(x + 3.0, sd) + 0.33 * normal_pdf(x - 3.0, sd)
            }
            SimVariant::C4 => {
                0.25 * (normal_interval((x - 4.0) / s, (x - 2.0) / s)
                    + normal_interval((x + 2.0) / s, (x + 4.0) / s))
            }
        }
    }

    pub fn f0(&self, z: f64) -> f64 {
        normal_pdf(z - self.mu, self.sigma)
    }
}

fn normal_pdf(x: f64, sd: f64) -> f64 {
    let r = x / sd;
    INV_SQRT_2PI / sd * (-0.5 * r * r).exp()
}

/// Upper tail `P(X > x)` of a standard normal.
fn upper_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `P(a < X < b)` for a standard normal, computed from whichever tail avoids
/// cancellation.
pub(crate) fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        upper_tail(a) - upper_tail(b)
    } else if b <= 0.0 {
        upper_tail(-b) - upper_tail(-a)
    } else {
        1.0 - upper_tail(b) - upper_tail(-a)
    }
}

/// Simulated z-scores with their true labels (`true` = non-null).
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub zs: Vec<f64>,
    pub labels: Vec<bool>,
}

pub fn gen_two_groups(m: &SimModel, seed: u64) -> Result<SimOutcome> {
    m.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut zs = Vec::with_capacity(m.n);
    let mut labels = Vec::with_capacity(m.n);
    for _ in 0..m.n {
        let non_null = rng.random::<f64>() >= m.pi;
        let e: f64 = rng.sample(StandardNormal);
        let z = if !non_null {
            m.mu + m.sigma * e
        } else {
            match m.variant {
                SimVariant::C1 => m.mu + (m.sigma * m.sigma + m.omega2).sqrt() * e,
                SimVariant::C2 => m.mu + rng.random_range(2.0..4.0) + m.sigma * e,
                SimVariant::C3 => {
                    let centre = if rng.random::<f64>() < 0.67 { -3.0 } else { 3.0 };
                    m.mu + centre + 2f64.sqrt() * e
                }
                SimVariant::C4 => {
                    let shift: f64 = rng.random_range(2.0..4.0);
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    m.mu + sign * shift + m.sigma * e
                }
            }
        };
        zs.push(z);
        labels.push(non_null);
    }
    Ok(SimOutcome { zs, labels })
}

/// True local fdr under the generating model.
pub fn oracle_fdr(z: f64, m: &SimModel) -> f64 {
    let null = m.pi * m.f0(z);
    let total = null + (1.0 - m.pi) * m.f1(z);
    if total > 0.0 {
        (null / total).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Bayes oracle: flag where the true fdr is below `r`.
pub fn oracle_test(zs: &[f64], m: &SimModel, r: f64) -> Vec<bool> {
    zs.iter().map(|&z| oracle_fdr(z, m) < r).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub fdr: f64,
    pub fnr: f64,
    pub power: f64,
    pub bayes_risk: f64,
}

pub fn metrics(flags: &[bool], labels: &[bool]) -> Result<Metrics> {
    if flags.len() != labels.len() {
        return Err(PrError::LengthMismatch { expected: labels.len(), actual: flags.len() });
    }
    let (mut tp, mut fp, mut fne, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&f, &l) in flags.iter().zip(labels) {
        match (f, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| a as f64 / b.max(1) as f64;
    Ok(Metrics {
        fdr: ratio(fp, fp + tp),
        fnr: ratio(fne, fne + tn),
        power: ratio(tp, tp + fne),
        bayes_risk: ratio(fp + fne, flags.len()),
    })
}

/// A grid of simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub variants: Vec<SimVariant>,
    pub pis: Vec<f64>,
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    pub threshold: f64,
    pub fit: FitOptions,
}

impl StudySpec {
    pub fn new(variants: Vec<SimVariant>, pis: Vec<f64>, reps: usize, seed: u64) -> Self {
        Self { variants, pis, reps, n: 1000, seed, threshold: 0.1, fit: FitOptions::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(PrError::InvalidConfig("reps must be at least 1".into()));
        }
        if self.variants.is_empty() || self.pis.is_empty() {
            return Err(PrError::InvalidConfig("need at least one variant and one pi".into()));
        }
        if let Some(p) = self.pis.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(PrError::InvalidConfig(format!("pi values must be in (0, 1), got {p}")));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(PrError::InvalidConfig("threshold must be in (0, 1)".into()));
        }
        if self.n < 10 {
            return Err(PrError::InvalidConfig("n must be at least 10".into()));
        }
        Ok(())
    }
}

/// Per-replicate record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replicate {
    pub pi_hat: f64,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub prtest: Metrics,
    pub oracle: Metrics,
    pub converged: bool,
    pub seconds: f64,
}

/// Runs one replicate of a cell.
pub fn run_replicate(model: &SimModel, spec: &StudySpec, rep: usize) -> Result<Replicate> {
    let base = derive_seed(spec.seed, &[model.variant.index(), model.pi.to_bits(), rep as u64]);
    let data = gen_two_groups(model, derive_seed(base, &[0]))?;
    let mut opts = spec.fit;
    opts.objective.rng_seed = derive_seed(base, &[1]);
    let start = Instant::now();
    let fitted = fit(&data.zs, &opts)?;
    let decision = classify(&fitted, &data.zs, spec.threshold)?;
    let seconds = start.elapsed().as_secs_f64();
    let oracle_flags = oracle_test(&data.zs, model, spec.threshold);
    Ok(Replicate {
        pi_hat: fitted.pi_hat,
        mu_hat: fitted.theta_hat.mu(),
        sigma_hat: fitted.theta_hat.sigma(),
        prtest: metrics(&decision.flags, &data.labels)?,
        oracle: metrics(&oracle_flags, &data.labels)?,
        converged: fitted.converged(),
        seconds,
    })
}

/// Summary of one `(variant, pi)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub variant: SimVariant,
    pub pi: f64,
    pub reps: usize,
    pub failures: usize,
    pub not_converged: usize,
    pub pi_hat_mean: f64,
    pub pi_hat_sd: f64,
    pub mu_hat_mean: f64,
    pub mu_hat_sd: f64,
    pub sigma_hat_mean: f64,
    pub sigma_hat_sd: f64,
    pub prtest: Metrics,
    pub oracle: Metrics,
    /// Standard error of the mean paired difference `risk_prtest - risk_oracle`.
    pub risk_diff_se: f64,
    /// Wall-clock seconds per fit; not written to the table.
    pub mean_fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

pub const STUDY_COLUMNS: [&str; 21] = [
    "variant",
    "pi",
    "reps",
    "failures",
    "not_converged",
    "pi_hat_mean",
    "pi_hat_sd",
    "mu_hat_mean",
    "mu_hat_sd",
    "sigma_hat_mean",
    "sigma_hat_sd",
    "prtest_fdr",
    "prtest_fnr",
    "prtest_power",
    "prtest_risk",
    "oracle_fdr",
    "oracle_fnr",
    "oracle_power",
    "oracle_risk",
    "risk_diff_se",
    "threshold",
];

impl StudyTable {
    /// Tab-separated table with a header row; floats at 12 significant digits.
    pub fn to_tsv(&self, threshold: f64) -> String {
        let mut out = STUDY_COLUMNS.join("\t");
        out.push('\n');
        for r in &self.rows {
            let fields = [
                r.variant.to_string(),
                g12(r.pi),
                r.reps.to_string(),
                r.failures.to_string(),
                r.not_converged.to_string(),
                g12(r.pi_hat_mean),
                g12(r.pi_hat_sd),
                g12(r.mu_hat_mean),
                g12(r.mu_hat_sd),
                g12(r.sigma_hat_mean),
                g12(r.sigma_hat_sd),
                g12(r.prtest.fdr),
                g12(r.prtest.fnr),
                g12(r.prtest.power),
                g12(r.prtest.bayes_risk),
                g12(r.oracle.fdr),
                g12(r.oracle.fnr),
                g12(r.oracle.power),
                g12(r.oracle.bayes_risk),
                g12(r.risk_diff_se),
                g12(threshold),
            ];
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
        out
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_metrics(ms: &[Metrics]) -> Metrics {
    let avg = |f: fn(&Metrics) -> f64| mean_sd(&ms.iter().map(f).collect::<Vec<_>>()).0;
    Metrics {
        fdr: avg(|m| m.fdr),
        fnr: avg(|m| m.fnr),
        power: avg(|m| m.power),
        bayes_risk: avg(|m| m.bayes_risk),
    }
}

/// Summarizes replicates of one cell; failed replicates are counted and
/// excluded.
pub fn summarize(variant: SimVariant, pi: f64, results: &[Result<Replicate>]) -> StudyRow {
    let ok: Vec<&Replicate> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failures = results.len() - ok.len();
    for e in results.iter().filter_map(|r| r.as_ref().err()) {
        log::warn!("{variant} pi={pi}: replicate failed: {e}");
    }
    let col = |f: fn(&Replicate) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
    let (pi_hat_mean, pi_hat_sd) = mean_sd(&col(|r| r.pi_hat));
    let (mu_hat_mean, mu_hat_sd) = mean_sd(&col(|r| r.mu_hat));
    let (sigma_hat_mean, sigma_hat_sd) = mean_sd(&col(|r| r.sigma_hat));
    let (_, diff_sd) = mean_sd(&col(|r| r.prtest.bayes_risk - r.oracle.bayes_risk));
    let (mean_fit_seconds, _) = mean_sd(&col(|r| r.seconds));
    StudyRow {
        variant,
        pi,
        reps: results.len(),
        failures,
        not_converged: ok.iter().filter(|r| !r.converged).count(),
        pi_hat_mean,
        pi_hat_sd,
        mu_hat_mean,
        mu_hat_sd,
        sigma_hat_mean,
        sigma_hat_sd,
        prtest: mean_metrics(&ok.iter().map(|r| r.prtest).collect::<Vec<_>>()),
        oracle: mean_metrics(&ok.iter().map(|r| r.oracle).collect::<Vec<_>>()),
        risk_diff_se: diff_sd / (ok.len().max(1) as f64).sqrt(),
        mean_fit_seconds,
    }
}

/// Runs every `(variant, pi)` cell. Replicates run in parallel and are
/// reduced in index order, so the table depends only on the spec.
pub fn run_study(spec: &StudySpec) -> Result<StudyTable> {
    run_study_with(spec, |_| {})
}

/// [`run_study`] with a callback invoked after each finished cell.
pub fn run_study_with(spec: &StudySpec, mut on_row: impl FnMut(&StudyRow)) -> Result<StudyTable> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &variant in &spec.variants {
        for &pi in &spec.pis {
            let model = SimModel::new(variant, pi, spec.n);
            let results: Vec<Result<Replicate>> =
                (0..spec.reps).into_par_iter().map(|rep| run_replicate(&model, spec, rep)).collect();
            let row = summarize(variant, pi, &results);
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(StudyTable { rows })
}
