use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::ResultRecord;
use super::spec::Method;
use crate::error::{config, Result};
use crate::evalkit::{aggregate_seeds, Metrics, Stat, METRIC_COLUMNS};
use crate::{write_atomic, Error};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

/// One table row: a method on a dataset across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algo: Method,
    pub dataset: String,
    pub n_seeds: usize,
    pub stats: BTreeMap<String, Stat>,
}

/// Percent with one decimal, `mean±std`, or the mean alone without a spread.
pub fn format_cell(stat: &Stat) -> String {
    match stat.std {
        Some(sd) => format!("{:.1}±{:.1}", stat.mean * 100.0, sd * 100.0),
        None => format!("{:.1}", stat.mean * 100.0),
    }
}

/// Inverse of [`format_cell`], in percent.
pub fn parse_cell(cell: &str) -> Result<(f64, Option<f64>)> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| config(format!("bad number `{s}` in cell `{cell}`")))
    };
    match cell.split_once('±') {
        Some((m, s)) => Ok((num(m)?, Some(num(s)?))),
        None => Ok((num(cell)?, None)),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn build_rows(records: &[ResultRecord]) -> Result<Vec<ReportRow>> {
    let mut groups: BTreeMap<(Method, String), Vec<Metrics>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.method, r.dataset.clone()))
            .or_default()
            .push(r.metrics.clone());
    }
    groups
        .into_iter()
        .map(|((algo, dataset), ms)| {
            let summary = aggregate_seeds(&ms)?;
            Ok(ReportRow {
                algo,
                dataset,
                n_seeds: ms.len(),
                stats: summary.stats,
            })
        })
        .collect()
}

pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = format!("algo,dataset,n_seeds,{}\n", METRIC_COLUMNS.join(","));
    for row in rows {
        let _ = write!(out, "{},{},{}", row.algo, csv_field(&row.dataset), row.n_seeds);
        for col in METRIC_COLUMNS {
            out.push(',');
            if let Some(s) = row.stats.get(col) {
                out.push_str(&format_cell(s));
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `report.csv` (table cells) and `report.json` (raw statistics) to
/// `dir` and returns the rows.
pub fn emit_report(records: &[ResultRecord], dir: &Path) -> Result<Vec<ReportRow>> {
    if records.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let rows = build_rows(records)?;
    write_atomic(&dir.join(REPORT_CSV), render_csv(&rows).as_bytes())?;
    let mut json = serde_json::to_vec_pretty(&rows)?;
    json.push(b'\n');
    write_atomic(&dir.join(REPORT_JSON), &json)?;
    Ok(rows)
}

/// One line per record with every metric at full precision.
pub fn render_results_csv(records: &[ResultRecord]) -> String {
    let mut out = format!("seed,algo,dataset,{}\n", METRIC_COLUMNS.join(","));
    for r in records {
        let _ = write!(out, "{},{},{}", r.seed, r.method, csv_field(&r.dataset));
        for col in METRIC_COLUMNS {
            out.push(',');
            if let Some(v) = r.metrics.get(col) {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_results_csv(records: &[ResultRecord], path: &Path) -> Result<()> {
    write_atomic(path, render_results_csv(records).as_bytes())
}
