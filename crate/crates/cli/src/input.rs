//! z-score ingestion.
//!
//! One value per line. Blank lines and lines starting with `#` are skipped.
//! The first content line may be a column header (single-column CSV); any
//! other non-numeric line is an error naming its line number.

use std::fs;
use std::path::Path;

use crate::CliError;

/// Minimum number of values a fit accepts.
pub const MIN_VALUES: usize = 10;

pub fn read_z_scores(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let zs = parse_z_scores(&text)?;
    if zs.len() < MIN_VALUES {
        return Err(CliError::Input(format!(
            "{}: need at least {MIN_VALUES} values, found {}",
            path.display(),
            zs.len()
        )));
    }
    Ok(zs)
}

pub fn parse_z_scores(text: &str) -> Result<Vec<f64>, CliError> {
    let mut zs = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = unquote(line.strip_suffix(',').unwrap_or(line).trim());
        let first = !seen_content;
        seen_content = true;
        match field.parse::<f64>() {
            Ok(z) if z.is_finite() => zs.push(z),
            Ok(_) => {
                return Err(CliError::Input(format!("line {lineno}: non-finite value '{field}'")));
            }
            Err(_) if first && is_header(field) => {}
            Err(_) => {
                return Err(CliError::Input(format!("line {lineno}: cannot parse '{field}' as a number")));
            }
        }
    }
    Ok(zs)
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(s)
}

// A header is a single identifier-like field, not something that merely
// failed to parse (e.g. "1.2.3" or "4,5").
fn is_header(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_alphanumeric() || "_-. ".contains(c))
        && !matches!(s.to_ascii_lowercase().as_str(), "nan" | "inf" | "infinity")
}
