//! Artifact writers. Every float goes through `g12`, so the text is
//! locale-independent and identical across runs.

use std::fs;
use std::path::{Path, PathBuf};

use prtest_core::fmt::g12;
use prtest_core::{CurveRow, TestDecision};
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use crate::CliError;

pub const ESTIMATES_FILE: &str = "estimates.json";
pub const CASES_FILE: &str = "cases.tsv";
pub const CURVES_FILE: &str = "curves.tsv";
pub const STUDY_FILE: &str = "study.tsv";

fn ser_g12<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if !x.is_finite() {
        return s.serialize_none();
    }
    let raw = RawValue::from_string(g12(*x)).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

fn ser_opt_g12<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => ser_g12(v, s),
        None => s.serialize_none(),
    }
}

/// Contents of `estimates.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Estimates {
    pub n: usize,
    #[serde(serialize_with = "ser_g12")]
    pub mu_hat: f64,
    #[serde(serialize_with = "ser_g12")]
    pub sigma_hat: f64,
    #[serde(serialize_with = "ser_g12")]
    pub tau_hat: f64,
    /// Null proportion at the likelihood optimum.
    #[serde(serialize_with = "ser_g12")]
    pub pi0_hat: f64,
    /// Null proportion of the final averaged mixing measure.
    #[serde(serialize_with = "ser_g12")]
    pub pi_hat: f64,
    #[serde(serialize_with = "ser_g12")]
    pub objective: f64,
    pub converged: bool,
    pub warning: Option<String>,
    pub stop_reason: String,
    pub iterations: usize,
    pub evaluations: usize,
    #[serde(serialize_with = "ser_g12")]
    pub gradient_norm: f64,
    #[serde(serialize_with = "ser_g12")]
    pub threshold: f64,
    pub n_flagged: usize,
    pub n_left: usize,
    pub n_right: usize,
    pub permutations: usize,
    pub grid: usize,
    #[serde(serialize_with = "ser_g12")]
    pub gamma: f64,
    pub seed: u64,
    #[serde(serialize_with = "ser_g12")]
    pub prior_sd_log_sigma: f64,
    #[serde(serialize_with = "ser_g12")]
    pub prior_beta_a: f64,
    #[serde(serialize_with = "ser_opt_g12", skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

pub fn estimates_json(e: &Estimates) -> String {
    let mut s = serde_json::to_string_pretty(e).expect("estimates serialize");
    s.push('\n');
    s
}

pub fn cases_tsv(zs: &[f64], d: &TestDecision) -> String {
    let mut out = String::from("index\tz\tfdr\tflag\n");
    for (i, ((z, f), flag)) in zs.iter().zip(&d.fdr_values).zip(&d.flags).enumerate() {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", i + 1, g12(*z), g12(*f), u8::from(*flag)));
    }
    out
}

pub fn curves_tsv(rows: &[CurveRow]) -> String {
    let mut out = String::from("z\tf0\tnull_part\tnonnull_part\tf\tfdr\n");
    for r in rows {
        let fields = [r.z, r.f0, r.null_part, r.nonnull_part, r.f, r.fdr].map(g12);
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}
