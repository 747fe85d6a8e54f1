//! File formats and parsing helpers behind the `merton` binary: the
//! `year,n,k` history CSV, curve CSVs with fixed headers, and the JSON
//! schemas for fits, comparisons and synthetic-data truth sidecars.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use merton_core::inference::{FitResult, KernelFamily};
use merton_core::{DefaultHistory, YearRecord};

pub const SCHEMA_VERSION: &str = "1";

/// Errors carrying the process exit code: 2 for anything wrong with the
/// invocation or its inputs, 3 for numerical failures.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

impl From<merton_core::Error> for CliError {
    fn from(e: merton_core::Error) -> Self {
        match e {
            merton_core::Error::NotPositiveSemidefinite { .. } => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

/// Floats in curve CSVs carry 12 significant digits.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.11e}")
    }
}

// ---------------------------------------------------------------------
// history CSV: header `year,n,k`, LF endings, ASCII integers
// ---------------------------------------------------------------------

/// Parses a history CSV, reporting the 1-based line number of any
/// malformed row. Rows are sorted by year before validation, so the gap
/// and duplicate checks see them in order.
pub fn parse_history_csv(path: &Path) -> CliResult<DefaultHistory> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_history_str(&text).map_err(|msg| {
        CliError::Validation(format!("{}: {msg}", path.display()))
    })
}

pub fn parse_history_str(text: &str) -> Result<DefaultHistory, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "year,n,k" => {}
        Some((_, header)) => {
            return Err(format!("expected header 'year,n,k', found '{}'", header.trim()))
        }
        None => return Err("empty file".to_string()),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(format!("expected 3 fields at line {line_no}, found {}", fields.len()));
        }
        let year: i32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| format!("invalid year '{}' at line {line_no}", fields[0]))?;
        let n: u64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| format!("invalid cohort size '{}' at line {line_no}", fields[1]))?;
        let k: u64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| format!("invalid default count '{}' at line {line_no}", fields[2]))?;
        if n == 0 {
            return Err(format!("cohort size must be positive at line {line_no}"));
        }
        if k > n {
            return Err(format!("k exceeds n at line {line_no}"));
        }
        rows.push((line_no, YearRecord { year, n, k }));
    }
    rows.sort_by_key(|(_, r)| r.year);
    for pair in rows.windows(2) {
        let (_, a) = pair[0];
        let (line_no, b) = pair[1];
        if a.year == b.year {
            return Err(format!("duplicate year {} at line {line_no}", b.year));
        }
        if b.year - a.year > 1 {
            return Err(format!(
                "missing year {} between {} and {}",
                a.year + 1,
                a.year,
                b.year
            ));
        }
    }
    DefaultHistory::new(rows.into_iter().map(|(_, r)| r).collect()).map_err(|e| e.to_string())
}

pub fn history_to_csv(history: &DefaultHistory) -> String {
    let mut out = String::from("year,n,k\n");
    for row in history.rows() {
        let _ = writeln!(out, "{},{},{}", row.year, row.n, row.k);
    }
    out
}

pub fn write_history_csv(path: &Path, history: &DefaultHistory) -> CliResult<()> {
    std::fs::write(path, history_to_csv(history)).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------
// JSON schemas
// ---------------------------------------------------------------------

/// Fit result on disk; field names are part of the interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitJson {
    pub schema_version: String,
    pub family: String,
    pub p_hat: f64,
    #[serde(rename = "rho_A_hat")]
    pub rho_a_hat: f64,
    #[serde(rename = "rho_D_hat")]
    pub rho_d_hat: f64,
    pub kernel_param_hat: f64,
    pub log_posterior: f64,
    pub converged: bool,
    pub non_identifiable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub waic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wbic: Option<f64>,
    pub seed: u64,
    pub n_paths: usize,
}

impl FitJson {
    pub fn from_result(fit: &FitResult, seed: u64, n_paths: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            family: fit.family.name().to_string(),
            p_hat: fit.params_hat.p(),
            rho_a_hat: fit.params_hat.rho_a(),
            rho_d_hat: fit.rho_d_hat,
            kernel_param_hat: fit.params_hat.kernel().param(),
            log_posterior: fit.log_posterior,
            converged: fit.converged,
            non_identifiable: fit.non_identifiable,
            waic: fit.waic,
            wbic: fit.wbic,
            seed,
            n_paths,
        }
    }
}

/// Parses a fit JSON file holding either one fit object or an array of
/// them (the `--kernel both` layout).
pub fn parse_fit_json(path: &Path) -> CliResult<Vec<FitJson>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let fits = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|one: FitJson| vec![one])
    }
    .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(fits)
}

/// Per-family information criteria, the `compare` output layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareJson {
    pub schema_version: String,
    pub input: String,
    pub seed: u64,
    pub n_paths: usize,
    pub n_draws: usize,
    pub families: Vec<FamilyCriteria>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCriteria {
    pub family: String,
    pub waic: f64,
    pub wbic: f64,
}

/// Truth sidecar written next to synthetic histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthJson {
    pub schema_version: String,
    pub family: String,
    pub p: f64,
    #[serde(rename = "rho_A")]
    pub rho_a: f64,
    pub kernel_param: f64,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub n: u64,
    pub seed: u64,
}

/// Panel statistics emitted by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsJson {
    pub schema_version: String,
    pub z: f64,
    pub per_year_rates: Vec<f64>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------
// flag parsing helpers
// ---------------------------------------------------------------------

/// Counts such as `--T 1e5` accept plain integers or integral floats.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s
        .parse()
        .map_err(|_| format!("'{s}' is not a number"))?;
    if !f.is_finite() || f < 1.0 || f > 9.0e15 {
        return Err(format!("'{s}' is out of range"));
    }
    if (f - f.round()).abs() > 1e-6 * f.abs() {
        return Err(format!("'{s}' is not an integer"));
    }
    Ok(f.round() as u64)
}

/// Sweep values: either `a,b,c` or `start:stop:step` (inclusive stop).
pub fn parse_value_list(s: &str) -> Result<Vec<f64>, String> {
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range '{s}' must be start:stop:step"));
        }
        let start: f64 = parts[0].parse().map_err(|_| format!("bad range start '{}'", parts[0]))?;
        let stop: f64 = parts[1].parse().map_err(|_| format!("bad range stop '{}'", parts[1]))?;
        let step: f64 = parts[2].parse().map_err(|_| format!("bad range step '{}'", parts[2]))?;
        if !(step > 0.0) || stop < start {
            return Err(format!("range '{s}' must have positive step and stop >= start"));
        }
        let mut out = Vec::new();
        let mut i = 0u64;
        loop {
            let v = start + step * i as f64;
            if v > stop + step * 1e-9 {
                break;
            }
            out.push(v);
            i += 1;
        }
        Ok(out)
    } else {
        s.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("'{tok}' is not a number"))
            })
            .collect()
    }
}

/// Log-spaced integer grid from 1 to `max`, deduplicated, always ending
/// at `max`.
pub fn log_spaced_grid(max: u64, points: usize) -> Vec<u64> {
    if max <= 1 {
        return vec![max.max(1)];
    }
    let p = points.max(2) as f64;
    let lmax = (max as f64).ln();
    let mut grid: Vec<u64> = (0..points.max(2))
        .map(|i| (lmax * i as f64 / (p - 1.0)).exp().round() as u64)
        .map(|t| t.clamp(1, max))
        .collect();
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Kernel selector shared by several subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyArg {
    Exponential,
    Power,
    Both,
}

impl FamilyArg {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "exponential" | "exp" => Ok(FamilyArg::Exponential),
            "power" | "pow" => Ok(FamilyArg::Power),
            "both" => Ok(FamilyArg::Both),
            other => Err(format!(
                "'{other}' is not a kernel family (exponential, power, both)"
            )),
        }
    }

    pub fn families(self) -> Vec<KernelFamily> {
        match self {
            FamilyArg::Exponential => vec![KernelFamily::Exponential],
            FamilyArg::Power => vec![KernelFamily::Power],
            FamilyArg::Both => vec![KernelFamily::Exponential, KernelFamily::Power],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_valid_history() {
        let h = parse_history_str("year,n,k\n1981,1000,15\n1982,1000,12\n").unwrap();
        assert_eq!(h.len(), 2);
        assert_eq!(h.total_defaults(), 27);
        assert_eq!(h.total_cohort(), 2000);
    }

    #[test]
    fn rejects_k_exceeding_n_with_line_number() {
        let err = parse_history_str("year,n,k\n1981,1000,15\n1982,1000,12\n1983,100,200\n")
            .unwrap_err();
        assert!(err.contains("k exceeds n at line 4"), "{err}");
    }

    #[test]
    fn rejects_year_gap_naming_missing_year() {
        let err = parse_history_str("year,n,k\n1981,100,1\n1983,100,1\n").unwrap_err();
        assert!(err.contains("missing year 1982"), "{err}");
    }

    #[test]
    fn rejects_bad_header_and_fields() {
        assert!(parse_history_str("year,n\n").is_err());
        assert!(parse_history_str("year,n,k\n1981,abc,1\n").is_err());
        assert!(parse_history_str("year,n,k\n1981,100\n").is_err());
        let err = parse_history_str("year,n,k\n1981,100,1\n1981,100,2\n").unwrap_err();
        assert!(err.contains("duplicate year 1981"), "{err}");
    }

    #[test]
    fn unsorted_input_is_sorted_on_ingest() {
        let h = parse_history_str("year,n,k\n1982,100,2\n1981,100,1\n").unwrap();
        assert_eq!(h.rows()[0].year, 1981);
    }

    #[test]
    fn history_round_trips() {
        let text = "year,n,k\n1981,1000,15\n1982,900,12\n1983,1100,0\n";
        let h = parse_history_str(text).unwrap();
        assert_eq!(history_to_csv(&h), text);
    }

    #[test]
    fn count_parsing_accepts_scientific() {
        assert_eq!(parse_count("100000").unwrap(), 100_000);
        assert_eq!(parse_count("1e5").unwrap(), 100_000);
        assert_eq!(parse_count("1e4").unwrap(), 10_000);
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
        assert!(parse_count("x").is_err());
    }

    #[test]
    fn value_list_parsing() {
        assert_eq!(parse_value_list("0.5,0.1").unwrap(), vec![0.5, 0.1]);
        let sweep = parse_value_list("0.1:3.0:0.1").unwrap();
        assert_eq!(sweep.len(), 30);
        assert!((sweep[0] - 0.1).abs() < 1e-12);
        assert!((sweep[29] - 3.0).abs() < 1e-9);
        assert!(parse_value_list("1:0:1").is_err());
        assert!(parse_value_list("0.1:1.0").is_err());
    }

    #[test]
    fn log_grid_covers_endpoints() {
        let g = log_spaced_grid(100_000, 50);
        assert_eq!(*g.first().unwrap(), 1);
        assert_eq!(*g.last().unwrap(), 100_000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sig_digit_formatting_is_stable() {
        assert_eq!(format_sig(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(format_sig(0.0), "0.00000000000e0");
    }
}
