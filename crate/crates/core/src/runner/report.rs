//! Comparison tables placing produced results next to fixed reference rows.

use std::fmt::Write as _;

use crate::evalkit::{csv_field, MetricsTable};

use super::config::Reference;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSource {
    Produced,
    Reference,
}

impl RowSource {
    fn as_str(self) -> &'static str {
        match self {
            RowSource::Produced => "produced",
            RowSource::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub source: RowSource,
    pub mae: f64,
    pub mmae: Option<f64>,
    pub acc: Option<f64>,
    pub f1: Option<f64>,
    pub mar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Produced and reference rows together, ascending by MAE. Rows with equal
/// MAE keep their input order, produced rows first.
pub fn report_compare(produced: &MetricsTable, references: &[Reference]) -> ComparisonTable {
    let mut rows: Vec<ComparisonRow> = produced
        .rows
        .iter()
        .map(|(name, m)| ComparisonRow {
            name: name.clone(),
            source: RowSource::Produced,
            mae: m.mae,
            mmae: Some(m.mmae),
            acc: Some(m.accuracy),
            f1: Some(m.macro_f1),
            mar: Some(m.mar),
        })
        .chain(references.iter().map(|r| ComparisonRow {
            name: r.name.clone(),
            source: RowSource::Reference,
            mae: r.mae,
            mmae: r.mmae,
            acc: r.acc,
            f1: r.f1,
            mar: r.mar,
        }))
        .collect();
    rows.sort_by(|a, b| a.mae.total_cmp(&b.mae));
    ComparisonTable { rows }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

impl ComparisonTable {
    /// `config,source,mae,mmae,acc,f1,mar`; absent measures are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("config,source,mae,mmae,acc,f1,mar\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&r.name),
                r.source.as_str(),
                r.mae,
                opt(r.mmae),
                opt(r.acc),
                opt(r.f1),
                opt(r.mar)
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.chars().count())
            .chain(["System".len()])
            .max()
            .unwrap_or(0);
        let cell = |v: Option<f64>, digits: usize| match v {
            Some(v) => format!("{v:>7.digits$}"),
            None => format!("{:>7}", "-"),
        };
        let mut out = format!(
            "{:<width$}  {:<9}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}\n",
            "System", "source", "MAE", "MMAE", "Acc", "F1", "MAR"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:<9}  {}  {}  {}  {}  {}",
                r.name,
                r.source.as_str(),
                cell(Some(r.mae), 4),
                cell(r.mmae, 4),
                cell(r.acc, 2),
                cell(r.f1, 2),
                cell(r.mar, 2)
            );
        }
        out
    }
}
