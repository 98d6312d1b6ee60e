//! Per-utterance metric rows, SNR-bucket aggregation and the text report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input-SNR buckets `[-15, -5)`, `[-5, 5)` and `[5, 15]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SnrBucket {
    Low,
    Mid,
    High,
}

impl SnrBucket {
    pub const ALL: [SnrBucket; 3] = [SnrBucket::Low, SnrBucket::Mid, SnrBucket::High];

    /// Bucket of a ground-truth mixing SNR; values outside `[-15, 15]` fall in none.
    pub fn of(snr_db: f64) -> Option<Self> {
        match snr_db {
            v if (-15.0..-5.0).contains(&v) => Some(SnrBucket::Low),
            v if (-5.0..5.0).contains(&v) => Some(SnrBucket::Mid),
            v if (5.0..=15.0).contains(&v) => Some(SnrBucket::High),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SnrBucket::Low => "-15~-5",
            SnrBucket::Mid => "-5~5",
            SnrBucket::High => "5~15",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub id: String,
    pub snr_in_db: f64,
    pub sdr_db: f64,
    pub stoi: f64,
    pub pitch_acc: Option<f64>,
    /// Scores from external metric commands, by metric name.
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

impl UtteranceMetrics {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "SDR" => Some(self.sdr_db),
            "STOI" => Some(self.stoi),
            "PitchAcc" => self.pitch_acc,
            other => self.extra.get(other).copied(),
        }
    }
}

/// Metrics of one system over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub system: String,
    pub rows: Vec<UtteranceMetrics>,
}

fn mean(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in vals {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(v) if v == f64::INFINITY => "inf".into(),
        Some(v) if v == f64::NEG_INFINITY => "-inf".into(),
        Some(v) => format!("{v:.4}"),
        None => "-".into(),
    }
}

impl MetricReport {
    pub fn new(system: impl Into<String>, rows: Vec<UtteranceMetrics>) -> Self {
        Self {
            system: system.into(),
            rows,
        }
    }

    /// Arithmetic mean of `metric` over rows in `bucket`, or over all rows when `None`.
    pub fn mean(&self, metric: &str, bucket: Option<SnrBucket>) -> Option<f64> {
        mean(
            self.rows
                .iter()
                .filter(|r| bucket.is_none() || SnrBucket::of(r.snr_in_db) == bucket)
                .filter_map(|r| r.metric(metric)),
        )
    }

    /// Metric names present in any row, in display order.
    pub fn metric_names(&self) -> Vec<String> {
        let mut names = vec!["SDR".to_string(), "STOI".to_string()];
        if self.rows.iter().any(|r| r.pitch_acc.is_some()) {
            names.push("PitchAcc".into());
        }
        let extra: std::collections::BTreeSet<&String> =
            self.rows.iter().flat_map(|r| r.extra.keys()).collect();
        names.extend(extra.into_iter().cloned());
        names
    }
}

/// Table with one row per system and `metric x bucket + Avg.` columns, followed by the
/// per-utterance rows of every system.
pub fn format_report(reports: &[MetricReport]) -> String {
    let mut names: Vec<String> = Vec::new();
    for r in reports {
        for n in r.metric_names() {
            if !names.contains(&n) {
                names.push(n);
            }
        }
    }
    let mut out = String::new();
    let mut header = vec!["system".to_string()];
    for n in &names {
        header.extend(SnrBucket::ALL.iter().map(|b| format!("{n}[{}]", b.label())));
        header.push(format!("{n}[Avg.]"));
    }
    let _ = writeln!(out, "{}", header.join("\t"));
    for r in reports {
        let mut cells = vec![r.system.clone()];
        for n in &names {
            cells.extend(
                SnrBucket::ALL
                    .iter()
                    .map(|&b| fmt_value(r.mean(n, Some(b)))),
            );
            cells.push(fmt_value(r.mean(n, None)));
        }
        let _ = writeln!(out, "{}", cells.join("\t"));
    }
    let _ = writeln!(out);
    let mut cols = vec!["system".to_string(), "id".into(), "snr_in_db".into()];
    cols.extend(names.iter().cloned());
    let _ = writeln!(out, "{}", cols.join("\t"));
    for r in reports {
        for u in &r.rows {
            let mut cells = vec![
                r.system.clone(),
                u.id.clone(),
                format!("{:.4}", u.snr_in_db),
            ];
            cells.extend(names.iter().map(|n| fmt_value(u.metric(n))));
            let _ = writeln!(out, "{}", cells.join("\t"));
        }
    }
    out
}

/// An external metric: a shell command template with `{ref}` and `{est}` placeholders whose
/// last whitespace-separated stdout token is the score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPlugin {
    pub name: String,
    pub command: String,
}

impl MetricPlugin {
    pub fn run(&self, reference: &Path, estimate: &Path) -> Result<f64> {
        let cmd = self
            .command
            .replace("{ref}", &reference.display().to_string())
            .replace("{est}", &estimate.display().to_string());
        let out = Command::new("sh").arg("-c").arg(&cmd).output()?;
        let fail =
            |why: String| Error::format("metric plugin output", format!("{}: {why}", self.name));
        if !out.status.success() {
            return Err(fail(format!("command exited with {}", out.status)));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let token = text
            .split_whitespace()
            .last()
            .ok_or_else(|| fail("no output".into()))?;
        token
            .parse()
            .map_err(|_| fail(format!("`{token}` is not a number")))
    }
}
