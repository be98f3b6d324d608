//! Report rendering with fixed precision: throughput 1 dp, probabilities
//! and fractions 4 dp, latency 6 dp. JSON carries the same rounded values
//! as CSV so the formats agree numerically.

use codednet::analytic::AnalyticReport;
use codednet::harness::{suite_to_csv, suite_to_table, MetricsReport, SuiteReport};
use codednet::simnet::Mode;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("unknown format '{0}': supported formats are csv, json, table")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Table,
}

impl std::str::FromStr for Format {
    type Err = OutputError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "table" => Ok(Format::Table),
            other => Err(OutputError::UnknownFormat(other.to_string())),
        }
    }
}

fn pps(v: f64) -> String {
    format!("{v:.1}")
}

fn prob(v: f64) -> String {
    format!("{v:.4}")
}

fn secs(v: f64) -> String {
    format!("{v:.6}")
}

fn num(s: String) -> Value {
    json!(s.parse::<f64>().expect("fixed-precision number"))
}

/// Rows of an analytic report: (metric, unit, uncoded, coded) at fixed
/// precision.
fn analytic_rows(report: &AnalyticReport) -> Vec<(&'static str, &'static str, String, String)> {
    vec![
        (
            "throughput",
            "packets/sec",
            pps(report.throughput.uncoded),
            pps(report.throughput.coded),
        ),
        (
            "latency",
            "seconds",
            secs(report.latency.uncoded),
            secs(report.latency.coded),
        ),
        (
            "packet_loss",
            "probability",
            prob(report.packet_loss.uncoded),
            prob(report.packet_loss.coded),
        ),
        (
            "fault_tolerance",
            "probability",
            prob(report.fault_tolerance.uncoded),
            prob(report.fault_tolerance.coded),
        ),
        (
            "load_imbalance",
            "fraction",
            prob(report.load.imbalance.uncoded),
            prob(report.load.imbalance.coded),
        ),
        (
            "t_max",
            "packets/sec",
            pps(report.load.t_max_uncoded),
            pps(report.load.t_max_coded),
        ),
        (
            "t_min",
            "packets/sec",
            pps(report.load.t_min_uncoded),
            pps(report.load.t_min_coded),
        ),
    ]
}

pub fn emit_analytic(report: &AnalyticReport, format: Format) -> String {
    let rows = analytic_rows(report);
    match format {
        Format::Csv => {
            let mut out = String::from("metric,unit,uncoded,coded\n");
            for (metric, unit, uncoded, coded) in rows {
                out.push_str(&format!("{metric},{unit},{uncoded},{coded}\n"));
            }
            out
        }
        Format::Table => {
            let mut out = format!(
                "{:<18} {:<13} {:>15} {:>13}\n",
                "metric", "unit", "without coding", "with coding"
            );
            for (metric, unit, uncoded, coded) in rows {
                out.push_str(&format!(
                    "{metric:<18} {unit:<13} {uncoded:>15} {coded:>13}\n"
                ));
            }
            out
        }
        Format::Json => {
            let mut object = serde_json::Map::new();
            for (metric, unit, uncoded, coded) in rows {
                object.insert(
                    metric.to_string(),
                    json!({ "unit": unit, "uncoded": num(uncoded), "coded": num(coded) }),
                );
            }
            let mut text = serde_json::to_string_pretty(&Value::Object(object)).unwrap();
            text.push('\n');
            text
        }
    }
}

/// Rows of a metrics report: (metric, unit, value) at fixed precision.
fn metrics_rows(report: &MetricsReport) -> Vec<(&'static str, &'static str, String)> {
    let mut rows = vec![
        ("throughput", "packets/sec", pps(report.throughput_pps)),
        (
            "delivered_raw",
            "packets/sec",
            pps(report.delivered_pps_raw),
        ),
        ("latency", "seconds", secs(report.mean_latency_s)),
        ("packet_loss", "probability", prob(report.packet_loss)),
        (
            "fault_tolerance",
            "probability",
            prob(report.fault_tolerance),
        ),
        ("load_imbalance", "fraction", prob(report.load_imbalance)),
        ("offered_load", "packets/sec", pps(report.offered_load_pps)),
    ];
    for (path, load) in &report.per_path_load_pps {
        rows.push((
            match path {
                0 => "path0_load",
                1 => "path1_load",
                2 => "path2_load",
                _ => "path3plus_load",
            },
            "packets/sec",
            pps(*load),
        ));
    }
    rows
}

pub fn emit_metrics(reports: &[MetricsReport], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = String::from("mode,metric,unit,value\n");
            for report in reports {
                for (metric, unit, value) in metrics_rows(report) {
                    out.push_str(&format!("{},{metric},{unit},{value}\n", report.mode));
                }
            }
            out
        }
        Format::Table => {
            let mut out = String::new();
            for report in reports {
                out.push_str(&format!(
                    "--- {} (seeded run, {} transmissions, {} runs) ---\n",
                    report.mode, report.counts.tx_sent, report.counts.runs
                ));
                for (metric, unit, value) in metrics_rows(report) {
                    out.push_str(&format!("{metric:<18} {unit:<13} {value:>12}\n"));
                }
            }
            out
        }
        Format::Json => {
            let mut object = serde_json::Map::new();
            for report in reports {
                let mut fields = serde_json::Map::new();
                for (metric, unit, value) in metrics_rows(report) {
                    fields.insert(
                        metric.to_string(),
                        json!({ "unit": unit, "value": num(value) }),
                    );
                }
                fields.insert(
                    "samples".into(),
                    json!({
                        "transmissions_sent": report.counts.tx_sent,
                        "transmissions_delivered": report.counts.tx_delivered,
                        "generations_dispatched": report.counts.generations_dispatched,
                        "generations_complete": report.counts.generations_complete,
                        "runs": report.counts.runs,
                    }),
                );
                object.insert(report.mode.to_string(), Value::Object(fields));
            }
            let mut text = serde_json::to_string_pretty(&Value::Object(object)).unwrap();
            text.push('\n');
            text
        }
    }
}

pub fn emit_suite(report: &SuiteReport, format: Format) -> String {
    match format {
        Format::Csv => {
            if report.cells.is_empty() && report.discrepancies.is_empty() {
                return "case,metric,mode,analytic,simulated,deviation,pass\n".into();
            }
            suite_to_csv(report)
        }
        Format::Table => suite_to_table(report),
        Format::Json => {
            let cells: Vec<Value> = report
                .cells
                .iter()
                .map(|cell| {
                    let rows: Vec<Value> = cell
                        .comparison
                        .rows
                        .iter()
                        .map(|row| {
                            json!({
                                "metric": row.metric.to_string(),
                                "analytic": row.analytic,
                                "simulated": row.simulated,
                                "abs_deviation": row.abs_deviation,
                                "rel_deviation": row.rel_deviation,
                                "tolerance": row.tolerance.to_string(),
                                "pass": row.pass,
                                "note": row.note,
                            })
                        })
                        .collect();
                    json!({
                        "case": cell.case.name(),
                        "mode": cell.mode.to_string(),
                        "rows": rows,
                    })
                })
                .collect();
            let discrepancies: Vec<Value> = report
                .discrepancies
                .iter()
                .map(|d| {
                    json!({
                        "case": d.case.name(),
                        "metric": d.metric.to_string(),
                        "mode": d.mode.to_string(),
                        "formula_value": d.formula_value,
                        "printed_value": d.printed_value,
                    })
                })
                .collect();
            let value = json!({
                "seeds": report.seeds,
                "cells": cells,
                "discrepancies": discrepancies,
                "all_pass": report.all_pass(),
                "aborted": report.aborted,
            });
            let mut text = serde_json::to_string_pretty(&value).unwrap();
            text.push('\n');
            text
        }
    }
}

/// Single-run reports keyed for `--mode both`.
pub fn mode_order(reports: &mut [MetricsReport]) {
    reports.sort_by_key(|r| match r.mode {
        Mode::Uncoded => 0,
        Mode::Coded => 1,
    });
}
