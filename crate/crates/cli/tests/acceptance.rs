//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Runs the full 24-cell simulation grid (about 15-20 minutes on one core).
//! Set `PRTEST_ACCEPTANCE_SKIP_GRID=1` to skip criteria 4 and 5 during
//! development, and `PRTEST_SPIKEIN=<file>` to enable criterion 6.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use prtest_core::gradcheck::{gradcheck, GradCheckConfig};
use prtest_core::mixing::Grid;
use prtest_core::simulation::{run_study, SimVariant, StudySpec, StudyTable};
use prtest_core::{
    classify, fit, init_mixing_state, make_weight_schedule, pr_run, pr_step, FitOptions, MixingState, Theta,
};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

const PIS: [f64; 6] = [0.75, 0.80, 0.85, 0.90, 0.95, 0.99];

/// Published (mean, sd) of the null-proportion estimate over 500 replicates,
/// per variant and per entry of `PIS`.
const REFERENCE: [(SimVariant, [(f64, f64); 6]); 4] = [
    (SimVariant::C1, [(0.918, 0.017), (0.930, 0.016), (0.942, 0.014), (0.960, 0.014), (0.980, 0.010), (0.995, 0.003)]),
    (SimVariant::C2, [(0.761, 0.017), (0.804, 0.014), (0.851, 0.013), (0.896, 0.010), (0.940, 0.009), (0.980, 0.008)]),
    (SimVariant::C3, [(0.788, 0.016), (0.828, 0.015), (0.867, 0.014), (0.903, 0.014), (0.937, 0.013), (0.982, 0.010)]),
    (SimVariant::C4, [(0.784, 0.066), (0.814, 0.021), (0.862, 0.018), (0.901, 0.013), (0.943, 0.012), (0.992, 0.005)]),
];
const REFERENCE_REPS: f64 = 500.0;
const GRID_SEED: u64 = 20_100_517;

struct Outcome {
    id: &'static str,
    name: &'static str,
    status: Status,
    detail: String,
}

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

fn outcome(id: &'static str, name: &'static str, ok: bool, detail: String) -> Outcome {
    Outcome { id, name, status: if ok { Status::Pass } else { Status::Fail }, detail }
}

fn report(o: &Outcome) {
    let tag = match o.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Skip => "SKIP",
    };
    println!("{tag} [{}] {}: {}", o.id, o.name, o.detail);
}

// 1 -----------------------------------------------------------------------

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let cfg = GradCheckConfig::default();
    let r = gradcheck(&cfg).expect("gradcheck runs");
    let secs = start.elapsed().as_secs_f64();
    let worst = r.max_rel_err.iter().copied().fold(0.0, f64::max);
    outcome(
        "1",
        "gradient vs finite differences",
        r.passed() && secs < 30.0,
        format!("{} cases, max rel err {worst:.2e} (< {:.0e}), {secs:.2}s (< 30s)", r.cases.len(), cfg.rel_tol),
    )
}

// 2 -----------------------------------------------------------------------

fn normal_pdf(z: f64, m: f64, s: f64) -> f64 {
    let d = (z - m) / s;
    (-0.5 * d * d).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

/// Textbook form of the recursion: blend the atom mass and the continuous
/// measure separately, then renormalize the continuous density.
fn straight_line_pr(zs: &[f64], t: &Theta, k: usize, gamma: f64) -> (f64, Vec<f64>, f64) {
    let (mu, sigma, tau) = (t.mu(), t.sigma(), t.tau());
    let q = 2.0 / k as f64;
    let u: Vec<f64> = (0..k).map(|j| -1.0 + (j as f64 + 0.5) * q).collect();
    let raw: Vec<f64> = u.iter().map(|v| 1.5 * v * v).collect();
    let mass: f64 = raw.iter().sum::<f64>() * q;
    let mut psi: Vec<f64> = raw.iter().map(|v| v / mass).collect();
    let mut pi = t.pi0();
    let mut log_lik = 0.0;
    for (i, &z) in zs.iter().enumerate() {
        let w = ((i + 2) as f64).powf(-gamma);
        let f0 = normal_pdf(z, mu, sigma);
        let f1: Vec<f64> = u.iter().map(|v| normal_pdf(z, mu + tau * sigma * v, sigma)).collect();
        let h: f64 = (0..k).map(|j| f1[j] * psi[j] * q).sum();
        let lambda = pi * f0 + (1.0 - pi) * h;
        log_lik += lambda.ln();
        let new_pi = (1.0 - w) * pi + w * pi * f0 / lambda;
        let cont: Vec<f64> =
            (0..k).map(|j| (1.0 - w) * (1.0 - pi) * psi[j] + w * (1.0 - pi) * psi[j] * f1[j] / lambda).collect();
        psi = cont.iter().map(|c| c / (1.0 - new_pi)).collect();
        pi = new_pi;
    }
    (pi, psi, log_lik)
}

fn brute_force_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    for _ in 0..20 {
        let t = Theta::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(0.6..1.6),
            rng.random_range(1.2..4.0),
            rng.random_range(0.5..0.98),
        )
        .unwrap();
        let zs: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.5).collect();
        let sched = make_weight_schedule(5, 0.67).unwrap();
        let init = init_mixing_state(8, t.pi0()).unwrap();
        let got = pr_run(&zs, &t, &sched, &init).unwrap();
        let (pi, psi, ll) = straight_line_pr(&zs, &t, 8, 0.67);
        worst = worst.max((got.final_state.pi() - pi).abs());
        worst = worst.max((got.log_likelihood - ll).abs());
        for (a, b) in got.final_state.psi().iter().zip(&psi) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        "2",
        "recursion vs straight-line re-implementation (n=5, K=8)",
        worst < 1e-12,
        format!("20 random settings, max abs diff {worst:.2e} (< 1e-12)"),
    )
}

// 3 -----------------------------------------------------------------------

fn measure_conservation() -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let steps = 10_000;
    for _ in 0..steps {
        let k = rng.random_range(2..300);
        let grid = Arc::new(Grid::midpoint(k).unwrap());
        let psi: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let s = MixingState::from_parts(rng.random_range(0.01..0.999), grid, psi).unwrap();
        let t = Theta::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(0.3..3.0),
            rng.random_range(1.01..8.0),
            0.5,
        )
        .unwrap();
        let z = t.mu() + rng.sample::<f64, _>(StandardNormal) * 4.0 * t.sigma();
        let w = rng.random_range(0.0..0.999);
        let (next, _) = pr_step(&s, z, w, &t).unwrap();
        let q = 2.0 / k as f64;
        let total = next.pi() + (1.0 - next.pi()) * next.psi().iter().sum::<f64>() * q;
        worst = worst.max((total - 1.0).abs());
    }
    outcome("3", "measure conservation", worst < 1e-9, format!("{steps} random steps, max |mass - 1| {worst:.2e} (< 1e-9)"))
}

// 4 and 5 -------------------------------------------------------------------

fn table_check(table: &StudyTable, reps: usize) -> (usize, usize, Vec<String>) {
    let scale = (REFERENCE_REPS / reps as f64).sqrt();
    let mut ok = 0;
    let mut lines = Vec::new();
    for row in &table.rows {
        let (_, refs) = REFERENCE.iter().find(|(v, _)| *v == row.variant).unwrap();
        let idx = PIS.iter().position(|p| (p - row.pi).abs() < 1e-12).unwrap();
        let (target, sd) = refs[idx];
        let tol = 3.0 * sd * scale;
        let dev = row.pi_hat_mean - target;
        let pass = dev.abs() <= tol && row.failures == 0;
        ok += usize::from(pass);
        lines.push(format!(
            "    {} {} pi={:.2} mean pi_hat {:.4} (sd {:.4}) target {:.3} +- {:.4} dev {:+.4} failures {} not_converged {}",
            if pass { "ok  " } else { "MISS" },
            row.variant,
            row.pi,
            row.pi_hat_mean,
            row.pi_hat_sd,
            target,
            tol,
            dev,
            row.failures,
            row.not_converged
        ));
    }
    (ok, table.rows.len(), lines)
}

fn smoke_grid() -> Outcome {
    let start = Instant::now();
    let spec = StudySpec::new(vec![SimVariant::C1, SimVariant::C3], vec![0.90, 0.99], 20, GRID_SEED);
    let table = run_study(&spec).expect("smoke study");
    let secs = start.elapsed().as_secs_f64();
    let (ok, total, lines) = table_check(&table, 20);
    for l in &lines {
        println!("{l}");
    }
    outcome(
        "4s",
        "smoke grid (C1, C3 x pi 0.90, 0.99; 20 reps)",
        ok == total && secs < 900.0,
        format!("{ok}/{total} cells within 3 scaled sds, {secs:.0}s (< 900s)"),
    )
}

fn full_grid() -> (Outcome, Outcome) {
    let start = Instant::now();
    let spec = StudySpec::new(SimVariant::ALL.to_vec(), PIS.to_vec(), 50, GRID_SEED);
    let table = run_study(&spec).expect("full study");
    let secs = start.elapsed().as_secs_f64();
    let (ok, total, lines) = table_check(&table, 50);
    for l in &lines {
        println!("{l}");
    }
    let c4 = outcome(
        "4",
        "simulation grid null proportion (24 cells, 50 reps)",
        ok == total,
        format!("{ok}/{total} cells within 3 scaled sds, {secs:.0}s"),
    );

    let mut fdr_ok = true;
    let mut risk_ok = true;
    for row in table.rows.iter().filter(|r| r.variant == SimVariant::C3) {
        let fdr_pass = row.pi < 0.85 - 1e-12 || row.prtest.fdr < 0.15;
        let margin = row.prtest.bayes_risk + 2.0 * row.risk_diff_se - row.oracle.bayes_risk;
        let risk_pass = margin >= 0.0;
        fdr_ok &= fdr_pass;
        risk_ok &= risk_pass;
        println!(
            "    {} C3 pi={:.2} fdr {:.4}{} risk {:.5} oracle {:.5} (2 se {:.5})",
            if fdr_pass && risk_pass { "ok  " } else { "MISS" },
            row.pi,
            row.prtest.fdr,
            if row.pi >= 0.85 - 1e-12 { " (< 0.15)" } else { "" },
            row.prtest.bayes_risk,
            row.oracle.bayes_risk,
            2.0 * row.risk_diff_se
        );
    }
    let c5 = outcome(
        "5",
        "C3 error rates (fdr < 0.15 for pi >= 0.85; oracle risk <= risk + 2 se)",
        fdr_ok && risk_ok,
        format!("fdr {}, risk {}", if fdr_ok { "ok" } else { "violated" }, if risk_ok { "ok" } else { "violated" }),
    );
    (c4, c5)
}

// 6 -----------------------------------------------------------------------

fn spike_in() -> Outcome {
    let name = "spike-in soft check (left flags 235 +- 20%, pi_hat 0.88 +- 0.05)";
    let Ok(path) = std::env::var("PRTEST_SPIKEIN") else {
        return Outcome { id: "6", name, status: Status::Skip, detail: "no dataset supplied (set PRTEST_SPIKEIN)".into() };
    };
    let zs = prtest_cli::input::read_z_scores(Path::new(&path)).expect("spike-in file");
    let f = fit(&zs, &FitOptions::default()).expect("spike-in fit");
    let d = classify(&f, &zs, 0.1).unwrap();
    let ok = (d.n_left as f64 - 235.0).abs() <= 47.0 && (f.pi_hat - 0.88).abs() <= 0.05;
    outcome("6", name, ok, format!("n={} left {} right {} pi_hat {:.4}", zs.len(), d.n_left, d.n_right, f.pi_hat))
}

// 7 -----------------------------------------------------------------------

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_prtest"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("z.txt");
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(77);
    let text: String = (0..1000)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            format!("{}\n", if rng.random_bool(0.1) { 2.0 * z } else { z })
        })
        .collect();
    fs::write(&input, text).unwrap();
    let mut same = true;
    let mut ran = true;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = out.to_str().unwrap();
        ran &= run_cli(&["fit", "--input", input.to_str().unwrap(), "--output-dir", o, "--seed", "9", "--emit-curves"]);
        ran &= run_cli(&[
            "simulate", "--variants", "C1,C3", "--pis", "0.9", "--reps", "4", "--seed", "9", "--output-dir", o,
        ]);
        runs.push(
            ["estimates.json", "cases.tsv", "curves.tsv", "study.tsv"]
                .map(|f| fs::read(out.join(f)).unwrap_or_default()),
        );
    }
    for (a, b) in runs[0].iter().zip(&runs[1]) {
        same &= !a.is_empty() && a == b;
    }
    outcome(
        "7",
        "determinism of fit and simulate",
        ran && same,
        format!("4 artifacts {} across two invocations", if same { "byte-identical" } else { "DIFFER" }),
    )
}

// 8 -----------------------------------------------------------------------

fn pure_null() -> Outcome {
    let seeds = 20;
    let mut flags = 0usize;
    let mut pi_sum = 0.0;
    for s in 0..seeds {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1000 + s);
        let zs: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        let mut opts = FitOptions::default();
        opts.objective.rng_seed = s;
        let f = fit(&zs, &opts).expect("null fit");
        flags += classify(&f, &zs, 0.1).unwrap().n_flagged();
        pi_sum += f.pi_hat;
    }
    let mean_flags = flags as f64 / seeds as f64;
    let mean_pi = pi_sum / seeds as f64;
    outcome(
        "8",
        "pure-null control (20 N(0,1) datasets, n=1000)",
        mean_flags < 2.0 && mean_pi > 0.95,
        format!("mean flags {mean_flags:.2} (< 2), mean pi_hat {mean_pi:.4} (> 0.95)"),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // that is not ours means another target is being selected, so do nothing.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filter.is_empty() && !filter.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let skip_grid = std::env::var("PRTEST_ACCEPTANCE_SKIP_GRID").is_ok_and(|v| v == "1");
    let mut outcomes = Vec::new();
    let mut record = |o: Outcome| {
        report(&o);
        outcomes.push(o);
    };
    record(gradient_check());
    record(brute_force_equivalence());
    record(measure_conservation());
    record(smoke_grid());
    if skip_grid {
        let detail = "skipped (PRTEST_ACCEPTANCE_SKIP_GRID=1)".to_string();
        record(Outcome { id: "4", name: "simulation grid null proportion", status: Status::Skip, detail: detail.clone() });
        record(Outcome { id: "5", name: "C3 error rates", status: Status::Skip, detail });
    } else {
        let (c4, c5) = full_grid();
        record(c4);
        record(c5);
    }
    record(spike_in());
    record(determinism());
    record(pure_null());

    let failed: Vec<&str> = outcomes.iter().filter(|o| o.status == Status::Fail).map(|o| o.id).collect();
    let passed = outcomes.iter().filter(|o| o.status == Status::Pass).count();
    let skipped = outcomes.iter().filter(|o| o.status == Status::Skip).count();
    println!("acceptance: {passed} passed, {} failed, {skipped} skipped", failed.len());
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
