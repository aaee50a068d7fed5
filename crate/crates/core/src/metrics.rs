//! Calibration error statistics and reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{Pair, PredictionSet};
use crate::transform::{quat_angular_distance, translation_distance, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub pair: Pair,
    pub rotation_deg: f64,
    pub translation_cm: f64,
}

pub fn error_record(pair: Pair, pred: &RigidTransform, gt: &RigidTransform) -> ErrorRecord {
    ErrorRecord {
        pair,
        rotation_deg: quat_angular_distance(&pred.rotation(), &gt.rotation()).to_degrees(),
        translation_cm: translation_distance(pred.translation(), gt.translation()) * 100.0,
    }
}

/// One record per pair present in both sets.
pub fn prediction_errors(pred: &PredictionSet, gt: &PredictionSet) -> Vec<ErrorRecord> {
    Pair::ALL
        .iter()
        .filter_map(|&pair| Some(error_record(pair, &pred.get(pair)?, &gt.get(pair)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Normal-approximation 95% half-width, `1.96 * std / sqrt(n)`.
    pub ci95: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyList);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Ok(Stats { mean, median: crate::pipeline::median(values.to_vec()), std, ci95: 1.96 * std / n.sqrt() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub rotation_deg: Stats,
    pub translation_cm: Stats,
}

pub fn summarize(records: &[ErrorRecord]) -> Result<SummaryStats> {
    let rot: Vec<f64> = records.iter().map(|r| r.rotation_deg).collect();
    let trans: Vec<f64> = records.iter().map(|r| r.translation_cm).collect();
    Ok(SummaryStats { count: records.len(), rotation_deg: Stats::of(&rot)?, translation_cm: Stats::of(&trans)? })
}

/// Summaries per pair for every pair with at least one record.
pub fn summarize_by_pair(records: &[ErrorRecord]) -> Vec<(Pair, SummaryStats)> {
    Pair::ALL
        .iter()
        .filter_map(|&pair| {
            let rs: Vec<ErrorRecord> = records.iter().filter(|r| r.pair == pair).copied().collect();
            summarize(&rs).ok().map(|s| (pair, s))
        })
        .collect()
}

pub fn records_csv(records: &[ErrorRecord]) -> String {
    let mut out = String::from("pair,rotation_deg,translation_cm\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.pair, r.rotation_deg, r.translation_cm);
    }
    out
}

pub fn summary_csv(rows: &[(String, Pair, SummaryStats)]) -> String {
    let mut out = String::from(
        "scenario,pair,n,translation_mean_cm,translation_median_cm,translation_std_cm,translation_ci95_cm,\
         rotation_mean_deg,rotation_median_deg,rotation_std_deg,rotation_ci95_deg\n",
    );
    for (scenario, pair, s) in rows {
        let (t, r) = (&s.translation_cm, &s.rotation_deg);
        let _ = writeln!(
            out,
            "{scenario},{pair},{},{},{},{},{},{},{},{},{}",
            s.count, t.mean, t.median, t.std, t.ci95, r.mean, r.median, r.std, r.ci95
        );
    }
    out
}

pub const TABLE_HEADER: [&str; 6] =
    ["scenario", "pair", "translation mean (cm)", "translation median (cm)", "rotation mean (deg)", "rotation median (deg)"];

/// Fixed-width table: one row per (scenario, pair), translation then
/// rotation, each as mean | median with the 95% interval on the mean.
pub fn summary_table(rows: &[(String, Pair, SummaryStats)]) -> String {
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|(scenario, pair, s)| {
            [
                scenario.clone(),
                pair.to_string(),
                format!("{:.2} ± {:.2}", s.translation_cm.mean, s.translation_cm.ci95),
                format!("{:.2}", s.translation_cm.median),
                format!("{:.3} ± {:.3}", s.rotation_deg.mean, s.rotation_deg.ci95),
                format!("{:.3}", s.rotation_deg.median),
            ]
        })
        .collect();
    let mut widths = TABLE_HEADER.map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |row: &[String]| {
        let padded: Vec<String> = row.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(&TABLE_HEADER.map(String::from));
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for row in &cells {
        out.push_str(&line(row));
    }
    out
}
