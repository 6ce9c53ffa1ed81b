use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::runner::RunReport;
use crate::CliError;

pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

pub const CSV_HEADER: &str = "step,time,statistic,value,standard_error";

/// SHA-256 of the resolved configuration serialized as compact JSON.
pub fn config_digest(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Rows `step,time,statistic,value,standard_error`. Statistic names get an
/// `[experiment]` suffix when a run has more than one experiment. For
/// `rms_error` rows the time column holds the level step size.
pub fn trace_csv(report: &RunReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let many = report.experiments.len() > 1;
    for e in &report.experiments {
        for s in &e.statistics {
            let name = if many {
                format!("{}[{}]", s.name, e.inputs.scheme)
            } else {
                s.name.clone()
            };
            for (k, ((t, m), se)) in s.times.iter().zip(&s.mean).zip(&s.std_err).enumerate() {
                let _ = writeln!(out, "{k},{t},{},{m},{se}", csv_field(&name));
            }
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report_json(report: &RunReport) -> Result<String, CliError> {
    let value = serde_json::to_value(report).map_err(|e| CliError::Schema(e.to_string()))?;
    validate_report(&value)?;
    let mut s = serde_json::to_string_pretty(&value).map_err(|e| CliError::Schema(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn validate_report(value: &serde_json::Value) -> Result<(), CliError> {
    let schema: serde_json::Value =
        serde_json::from_str(REPORT_SCHEMA).map_err(|e| CliError::Schema(e.to_string()))?;
    let validator =
        jsonschema::validator_for(&schema).map_err(|e| CliError::Schema(e.to_string()))?;
    let errors: Vec<String> = validator
        .iter_errors(value)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Schema(errors.join("; ")))
    }
}

pub fn gnuplot_script(report: &RunReport, csv_name: &str) -> String {
    let mut names: Vec<String> = Vec::new();
    let many = report.experiments.len() > 1;
    for e in &report.experiments {
        for s in &e.statistics {
            if s.times.len() < 2 {
                continue;
            }
            let n = if many {
                format!("{}[{}]", s.name, e.inputs.scheme)
            } else {
                s.name.clone()
            };
            names.push(n);
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "# {}", report.name);
    out.push_str("set datafile separator ','\nset logscale y\nset xlabel 'time'\nset key outside\n");
    if names.is_empty() {
        return out;
    }
    let plots: Vec<String> = names
        .iter()
        .map(|n| {
            format!(
                "'{csv_name}' using 2:(strcol(3) eq \"{n}\" ? $4 : 1/0) with lines title \"{n}\""
            )
        })
        .collect();
    let _ = writeln!(out, "plot {}", plots.join(", \\\n     "));
    out
}

/// Writes `<name>.report.json`, `<name>.trace.csv` and optionally
/// `<name>.gp` into `dir`.
pub fn write_artifacts(report: &RunReport, dir: &Path, gnuplot: bool) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let json = report_json(report)?;
    let csv_name = format!("{}.trace.csv", report.name);
    let mut written = Vec::new();
    let p = dir.join(format!("{}.report.json", report.name));
    fs::write(&p, json)?;
    written.push(p);
    let p = dir.join(&csv_name);
    fs::write(&p, trace_csv(report))?;
    written.push(p);
    if gnuplot {
        let p = dir.join(format!("{}.gp", report.name));
        fs::write(&p, gnuplot_script(report, &csv_name))?;
        written.push(p);
    }
    Ok(written)
}
