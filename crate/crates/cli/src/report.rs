//! Metric record files and plot-ready sweep tables.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use drip_core::evaluation::EvaluationReport;

use crate::CliError;

/// `# key=value` header lines identifying the run that wrote a file.
pub fn stamp(hash: &str, seed: u64) -> String {
    format!("# config_hash={hash}\n# seed={seed}\n")
}

/// Reads the `key=value` pairs out of a file's `#` header.
pub fn read_stamp(text: &str) -> Vec<(String, String)> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l[1..].trim().split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_file(path: &Path, stage: &'static str) -> Result<String, CliError> {
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            stage,
        });
    }
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// `key<TAB>value` lines after the stamp.
pub fn emit_records(report: &EvaluationReport, hash: &str, seed: u64) -> String {
    let mut s = stamp(hash, seed);
    for (k, v) in report.to_records() {
        let _ = writeln!(s, "{k}\t{v}");
    }
    s
}

pub fn parse_records(text: &str) -> Result<EvaluationReport, CliError> {
    let mut records = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('\t')
            .ok_or_else(|| CliError::Usage(format!("malformed metric record `{line}`")))?;
        records.push((k.to_string(), v.to_string()));
    }
    Ok(EvaluationReport::from_records(&records)?)
}

fn axis_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

fn metric_value(report: &EvaluationReport, metric: &str) -> Result<String, CliError> {
    report
        .to_records()
        .into_iter()
        .find(|(k, _)| k == metric)
        .map(|(_, v)| v)
        .ok_or_else(|| CliError::Usage(format!("no metric record named `{metric}`")))
}

/// Writes `records.tsv` (`axis<TAB>key<TAB>value`) and `table.tsv`
/// (`axis<TAB>metric`, sorted by axis) under `dir`.
pub fn emit_report(
    reports: &[(String, EvaluationReport)],
    axis: &str,
    metric: &str,
    dir: &Path,
    hash: &str,
    seed: u64,
) -> Result<(), CliError> {
    if reports.is_empty() {
        return Err(CliError::Usage("no reports to emit".into()));
    }
    let mut sorted: Vec<&(String, EvaluationReport)> = reports.iter().collect();
    sorted.sort_by(|a, b| axis_order(&a.0, &b.0));
    let mut records = stamp(hash, seed);
    let mut table = stamp(hash, seed);
    let _ = writeln!(table, "{axis}\t{metric}");
    for (value, report) in sorted {
        for (k, v) in report.to_records() {
            let _ = writeln!(records, "{value}\t{k}\t{v}");
        }
        let _ = writeln!(table, "{value}\t{}", metric_value(report, metric)?);
    }
    write_file(&dir.join("records.tsv"), &records)?;
    write_file(&dir.join("table.tsv"), &table)
}

/// Inverse of the `records.tsv` layout written by [`emit_report`].
pub fn parse_sweep_records(text: &str) -> Result<Vec<(String, EvaluationReport)>, CliError> {
    let mut groups: Vec<(String, Vec<(String, String)>)> = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let mut f = line.splitn(3, '\t');
        let (Some(axis), Some(k), Some(v)) = (f.next(), f.next(), f.next()) else {
            return Err(CliError::Usage(format!("malformed sweep record `{line}`")));
        };
        match groups.last_mut() {
            Some((a, recs)) if a == axis => recs.push((k.into(), v.into())),
            _ => groups.push((axis.into(), vec![(k.into(), v.into())])),
        }
    }
    groups
        .into_iter()
        .map(|(a, recs)| Ok((a, EvaluationReport::from_records(&recs)?)))
        .collect()
}
