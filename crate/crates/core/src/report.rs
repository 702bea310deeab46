//! Result files: the per-run CSV, the aggregate JSON summary, and the
//! variant-by-scenario mean matrices the bar charts are drawn from.
//!
//! Every emitter returns a `String` so callers (and tests) can compare
//! bytes before anything touches the filesystem. Floats print in
//! shortest round-trip notation, which is a pure function of the value;
//! identical runs therefore produce identical files.

use std::fmt::Write as _;

use serde_json::json;

use crate::sim::{RunMetrics, Scenario, Variant};

/// One row of `runs.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    /// Ablation variant the run executed.
    pub variant: Variant,
    /// Attack scenario.
    pub scenario: Scenario,
    /// The run's own seed (base seed plus run index).
    pub seed: u64,
    /// Run index within its scenario.
    pub run: u32,
    /// Measured results.
    pub metrics: RunMetrics,
}

/// Column header of `runs.csv`. Frozen; downstream tooling parses it.
pub const RUNS_CSV_HEADER: &str = "variant,scenario,seed,run,total_energy_J,\
mean_service_latency_ms,deadline_violation_rate,consensus_success_rate,\
committed_blocks,forged_tx_committed,active_msgs,backscatter_msgs";

// Pulls one numeric column out of a run's metrics.
type MetricFn = fn(&RunMetrics) -> f64;

// Numeric metric columns, in header order, as (name, extractor) pairs.
// The summary and the matrices index metrics by these names.
const METRICS: [(&str, MetricFn); 8] = [
    ("total_energy_J", |m| m.total_energy_j),
    ("mean_service_latency_ms", |m| m.mean_service_latency_ms),
    ("deadline_violation_rate", |m| m.deadline_violation_rate),
    ("consensus_success_rate", |m| m.consensus_success_rate),
    ("committed_blocks", |m| m.committed_blocks as f64),
    ("forged_tx_committed", |m| m.forged_committed as f64),
    ("active_msgs", |m| m.active_msgs as f64),
    ("backscatter_msgs", |m| m.backscatter_msgs as f64),
];

/// Renders `runs.csv`: the frozen header plus one row per record, in
/// record order.
pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(RUNS_CSV_HEADER);
    s.push('\n');
    for r in records {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.variant.label(),
            r.scenario.label(),
            r.seed,
            r.run,
            m.total_energy_j,
            m.mean_service_latency_ms,
            m.deadline_violation_rate,
            m.consensus_success_rate,
            m.committed_blocks,
            m.forged_committed,
            m.active_msgs,
            m.backscatter_msgs,
        );
    }
    s
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

// Population standard deviation, so a single run reports exactly zero.
fn stddev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Renders `summary.json`: one cell per (variant, scenario) pair in
/// first-appearance order, each with per-metric means and standard
/// deviations over that cell's runs.
pub fn summary_json(records: &[RunRecord]) -> String {
    let mut order: Vec<(Variant, Scenario)> = Vec::new();
    for r in records {
        if !order.contains(&(r.variant, r.scenario)) {
            order.push((r.variant, r.scenario));
        }
    }
    let cells: Vec<serde_json::Value> = order
        .iter()
        .map(|&(v, s)| {
            let rows: Vec<&RunRecord> =
                records.iter().filter(|r| r.variant == v && r.scenario == s).collect();
            let mut means = serde_json::Map::new();
            let mut devs = serde_json::Map::new();
            for (name, get) in METRICS {
                let xs: Vec<f64> = rows.iter().map(|r| get(&r.metrics)).collect();
                means.insert(name.to_string(), json!(mean(&xs)));
                devs.insert(name.to_string(), json!(stddev(&xs)));
            }
            json!({
                "variant": v.label(),
                "scenario": s.label(),
                "runs": rows.len(),
                "mean": means,
                "stddev": devs,
            })
        })
        .collect();
    let mut out = serde_json::to_string_pretty(&json!({ "cells": cells }))
        .expect("plain data serializes");
    out.push('\n');
    out
}

/// Renders one variant-by-scenario matrix of per-cell means for a named
/// metric column of `runs.csv`. Row order follows `variants`, column
/// order follows `scenarios`. Pairs with no runs average to zero.
pub fn fig_matrix_csv(
    records: &[RunRecord],
    variants: &[Variant],
    scenarios: &[Scenario],
    metric: &str,
) -> Option<String> {
    let get = METRICS.iter().find(|(name, _)| *name == metric)?.1;
    let mut s = String::new();
    s.push_str("variant");
    for sc in scenarios {
        let _ = write!(s, ",{}", sc.label());
    }
    s.push('\n');
    for v in variants {
        let _ = write!(s, "{}", v.label());
        for sc in scenarios {
            let xs: Vec<f64> = records
                .iter()
                .filter(|r| r.variant == *v && r.scenario == *sc)
                .map(|r| get(&r.metrics))
                .collect();
            let _ = write!(s, ",{}", mean(&xs));
        }
        s.push('\n');
    }
    Some(s)
}
