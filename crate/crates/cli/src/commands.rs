use std::path::PathBuf;
use std::time::Instant;

use prtest_core::gradcheck::{gradcheck, GradCheckConfig};
use prtest_core::optim::StopReason;
use prtest_core::simulation::{run_study_with, StudySpec, StudyTable};
use prtest_core::{
    classify, export_fit_curves, fit, make_weight_schedule, BfgsOptions, FitOptions, ObjectiveSettings,
    PriorSpec,
};

use crate::args::{FitArgs, GradcheckArgs, ModelArgs, SimulateArgs};
use crate::input::read_z_scores;
use crate::output::{self, Estimates};
use crate::CliError;

const COMPONENTS: [&str; 4] = ["mu", "log_sigma", "log_tau_minus_1", "logit_pi0"];

/// Validates the shared model flags and turns them into fit options.
pub fn fit_options(m: &ModelArgs) -> Result<FitOptions, CliError> {
    if !(m.threshold > 0.0 && m.threshold < 1.0) {
        return Err(CliError::Usage(format!("--threshold must be in (0, 1), got {}", m.threshold)));
    }
    if m.permutations == 0 {
        return Err(CliError::Usage("--permutations must be at least 1".into()));
    }
    if m.grid < 2 {
        return Err(CliError::Usage(format!("--grid must be at least 2, got {}", m.grid)));
    }
    make_weight_schedule(1, m.gamma).map_err(|e| CliError::Usage(format!("--gamma: {e}")))?;
    let priors = PriorSpec { sd_log_sigma: m.prior_sd_log_sigma, beta_a: m.prior_beta_a, ..PriorSpec::default() };
    priors.validate().map_err(|e| CliError::Usage(format!("prior: {e}")))?;
    Ok(FitOptions {
        objective: ObjectiveSettings {
            n_permutations: m.permutations,
            rng_seed: m.seed,
            gamma: m.gamma,
            grid_size: m.grid,
            priors,
        },
        bfgs: BfgsOptions::default(),
    })
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::GradientTolerance => "gradient_tolerance",
        StopReason::StepTolerance => "step_tolerance",
        StopReason::MaxIterations => "max_iterations",
        StopReason::LineSearchFailed => "line_search_failed",
    }
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub estimates: Estimates,
    pub files: Vec<PathBuf>,
}

pub fn cmd_fit(a: &FitArgs) -> Result<FitSummary, CliError> {
    let opts = fit_options(&a.model)?;
    if let Some(r) = &a.curve_range {
        if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
            return Err(CliError::Usage(format!("--curve-range needs finite LO < HI, got {} {}", r[0], r[1])));
        }
    }
    if a.curve_points < 2 {
        return Err(CliError::Usage("--curve-points must be at least 2".into()));
    }
    let zs = read_z_scores(&a.input)?;
    output::ensure_dir(&a.output_dir)?;

    let start = Instant::now();
    let fitted = fit(&zs, &opts)?;
    let decision = classify(&fitted, &zs, a.model.threshold)?;
    let runtime = start.elapsed().as_secs_f64();

    let opt = &fitted.optimization;
    let mut warnings = Vec::new();
    if !fitted.converged() {
        warnings.push(format!(
            "optimizer did not converge ({}, gradient norm {:.2e})",
            stop_name(opt.stop),
            opt.gradient_norm_at_opt
        ));
    }
    if fitted.degenerate_start {
        warnings.push("data spread is degenerate; sigma was initialized at 1".to_string());
    }
    let t = &fitted.theta_hat;
    let estimates = Estimates {
        n: zs.len(),
        mu_hat: t.mu(),
        sigma_hat: t.sigma(),
        tau_hat: t.tau(),
        pi0_hat: t.pi0(),
        pi_hat: fitted.pi_hat,
        objective: opt.objective_value,
        converged: fitted.converged(),
        warning: (!warnings.is_empty()).then(|| warnings.join("; ")),
        stop_reason: stop_name(opt.stop).to_string(),
        iterations: opt.iterations,
        evaluations: opt.evaluations,
        gradient_norm: opt.gradient_norm_at_opt,
        threshold: a.model.threshold,
        n_flagged: decision.n_flagged(),
        n_left: decision.n_left,
        n_right: decision.n_right,
        permutations: a.model.permutations,
        grid: a.model.grid,
        gamma: a.model.gamma,
        seed: a.model.seed,
        prior_sd_log_sigma: a.model.prior_sd_log_sigma,
        prior_beta_a: a.model.prior_beta_a,
        runtime_seconds: a.timing.then_some(runtime),
    };

    let dir = &a.output_dir;
    let mut files = vec![
        output::write_file(dir, output::ESTIMATES_FILE, &output::estimates_json(&estimates))?,
        output::write_file(dir, output::CASES_FILE, &output::cases_tsv(&zs, &decision))?,
    ];
    if a.emit_curves {
        let (lo, hi) = match &a.curve_range {
            Some(r) => (r[0], r[1]),
            None => {
                let lo = zs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = zs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo - 1.0, hi + 1.0)
            }
        };
        let rows = export_fit_curves(&fitted, lo, hi, a.curve_points)?;
        files.push(output::write_file(dir, output::CURVES_FILE, &output::curves_tsv(&rows))?);
    }

    if let Some(w) = &estimates.warning {
        log::warn!("{w}");
    }
    println!(
        "n={} mu={:.4} sigma={:.4} tau={:.4} pi={:.4} flagged={} (left {}, right {}) in {:.2}s",
        estimates.n,
        estimates.mu_hat,
        estimates.sigma_hat,
        estimates.tau_hat,
        estimates.pi_hat,
        estimates.n_flagged,
        estimates.n_left,
        estimates.n_right,
        runtime
    );
    Ok(FitSummary { estimates, files })
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<StudyTable, CliError> {
    let opts = fit_options(&a.model)?;
    let mut spec = StudySpec::new(a.variants.clone(), a.pis.clone(), a.reps, a.model.seed);
    spec.n = a.n;
    spec.threshold = a.model.threshold;
    spec.fit = opts;
    output::ensure_dir(&a.output_dir)?;
    let table = run_study_with(&spec, |r| {
        println!(
            "{} pi={} pi_hat={:.4} ({:.4}) fdr={:.4} power={:.4} risk={:.4} oracle_risk={:.4} failures={} [{:.2}s/fit]",
            r.variant,
            r.pi,
            r.pi_hat_mean,
            r.pi_hat_sd,
            r.prtest.fdr,
            r.prtest.power,
            r.prtest.bayes_risk,
            r.oracle.bayes_risk,
            r.failures,
            r.mean_fit_seconds
        );
    })?;
    output::write_file(&a.output_dir, output::STUDY_FILE, &table.to_tsv(spec.threshold))?;
    Ok(table)
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    if !(a.fd_step > 0.0 && a.fd_step.is_finite()) {
        return Err(CliError::Usage("--fd-step must be positive".into()));
    }
    if !(a.tolerance > 0.0) {
        return Err(CliError::Usage("--tolerance must be positive".into()));
    }
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let cfg = GradCheckConfig {
        seeds: a.seeds,
        base_seed: a.seed,
        fd_step: a.fd_step,
        rel_tol: a.tolerance,
        flip_tau_sign: a.inject_fault,
        ..GradCheckConfig::default()
    };
    let report = gradcheck(&cfg)?;
    println!("{} cases, fd step {:e}, tolerance {:e}", report.cases.len(), cfg.fd_step, cfg.rel_tol);
    for (name, err) in COMPONENTS.iter().zip(report.max_rel_err) {
        println!("  {name:<16} max rel err {err:.3e}");
    }
    if report.passed() {
        println!("PASS");
        return Ok(());
    }
    let failures: Vec<_> = report.failures().collect();
    for c in failures.iter().take(10) {
        println!(
            "  FAIL n={} K={} seed={} eta={:?} rel_err={:?}",
            c.n,
            c.grid_size,
            c.seed,
            c.eta.as_array(),
            c.rel_err
        );
    }
    Err(CliError::Check(format!("{} of {} gradient checks exceed tolerance", failures.len(), report.cases.len())))
}
