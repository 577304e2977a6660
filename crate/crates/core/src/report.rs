//! Evaluation reports and their CSV / markdown renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetedSummary {
    pub accuracy: f64,
    pub unk_sentences: usize,
    /// Set when no test example contained an unknown token.
    pub empty: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `confusion[gold][predicted]`.
    pub confusion: [[u64; 3]; 3],
    pub n_examples: usize,
    pub targeted: Option<TargetedSummary>,
    pub config: BTreeMap<String, String>,
}

impl EvalReport {
    /// Builds a report from `(gold, predicted)` pairs.
    pub fn from_predictions(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut confusion = [[0u64; 3]; 3];
        let mut n = 0usize;
        for (gold, pred) in pairs {
            confusion[gold.index()][pred.index()] += 1;
            n += 1;
        }
        let correct: u64 = (0..3).map(|i| confusion[i][i]).sum();
        EvalReport {
            accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
            confusion,
            n_examples: n,
            targeted: None,
            config: BTreeMap::new(),
        }
    }

    /// `(metric, value)` rows in output order.
    pub fn metrics(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("accuracy".to_string(), format!("{:.4}", self.accuracy)),
            ("n_examples".to_string(), self.n_examples.to_string()),
        ];
        for gold in Label::ALL {
            for pred in Label::ALL {
                rows.push((
                    format!("confusion_{}_{}", gold.as_str(), pred.as_str()),
                    self.confusion[gold.index()][pred.index()].to_string(),
                ));
            }
        }
        if let Some(t) = &self.targeted {
            rows.push(("targeted_accuracy".into(), format!("{:.4}", t.accuracy)));
            rows.push(("unk_sentences".into(), t.unk_sentences.to_string()));
            rows.push(("targeted_empty".into(), t.empty.to_string()));
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (k, v) in self.metrics() {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }
}

/// One markdown table, a row per run and a column per metric (the metric
/// set of the first run), in the layout of a results table.
pub fn markdown_table(runs: &[(&str, &EvalReport)]) -> String {
    let Some((_, first)) = runs.first() else {
        return String::new();
    };
    let names: Vec<String> = first.metrics().into_iter().map(|(k, _)| k).collect();
    let mut s = String::new();
    let _ = writeln!(s, "| Model | {} |", names.join(" | "));
    let _ = writeln!(s, "|---|{}", "---|".repeat(names.len()));
    for (label, report) in runs {
        let values: BTreeMap<String, String> = report.metrics().into_iter().collect();
        let cells: Vec<&str> = names
            .iter()
            .map(|n| values.get(n).map_or("-", String::as_str))
            .collect();
        let _ = writeln!(s, "| {label} | {} |", cells.join(" | "));
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

pub fn emit_report(report: &EvalReport, label: &str, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let body = match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Markdown => markdown_table(&[(label, report)]),
    };
    std::fs::write(path, body)?;
    Ok(())
}
