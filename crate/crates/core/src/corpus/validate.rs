use std::collections::HashSet;
use std::fmt;

use super::Dataset;

/// How missing view rows are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coverage {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub severity: Severity,
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}\t{}\t{}", self.subject, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn error_count(&self) -> usize {
        self.count(Severity::Error)
    }

    pub fn warning_count(&self) -> usize {
        self.count(Severity::Warning)
    }

    fn count(&self, severity: Severity) -> usize {
        self.findings.iter().filter(|f| f.severity == severity).count()
    }

    fn push(&mut self, severity: Severity, subject: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity,
            subject: subject.into(),
            message: message.into(),
        });
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "errors\t{}\nwarnings\t{}\n",
            self.error_count(),
            self.warning_count()
        );
        for finding in &self.findings {
            out.push_str(&finding.to_string());
            out.push('\n');
        }
        out
    }
}

/// Checks every dataset invariant. Findings are data, never failures.
pub fn validate(dataset: &Dataset, coverage: Coverage) -> ValidationReport {
    let mut report = ValidationReport::default();
    let roster: HashSet<&str> = dataset.roster().iter().map(String::as_str).collect();
    let mut ids = HashSet::new();

    for claim in dataset.claims() {
        let subject = format!("claim {}", claim.claim_id);
        if !ids.insert(claim.claim_id.as_str()) {
            report.push(Severity::Error, &subject, "duplicate claim_id");
        }
        if claim.text.is_empty() {
            report.push(Severity::Error, &subject, "empty text");
        }
        if !roster.contains(claim.speaker.as_str()) {
            report.push(
                Severity::Error,
                &subject,
                format!("speaker {:?} not in roster", claim.speaker),
            );
        }
        if let Some(span) = claim.audio_span {
            let ok = span.start_s.is_finite()
                && span.end_s.is_finite()
                && 0.0 <= span.start_s
                && span.start_s < span.end_s;
            if !ok {
                report.push(
                    Severity::Error,
                    &subject,
                    format!("bad audio span [{}, {}]", span.start_s, span.end_s),
                );
            }
        }
    }

    for view in dataset.views() {
        let subject = format!("view {}", view.name);
        if view.dim == 0 {
            report.push(Severity::Error, &subject, "dimension must be positive");
        }
        for (claim_id, row) in &view.rows {
            if row.len() != view.dim {
                report.push(
                    Severity::Error,
                    &subject,
                    format!("row {claim_id} has {} entries, expected {}", row.len(), view.dim),
                );
            }
            if row.iter().any(|x| !x.is_finite()) {
                report.push(Severity::Error, &subject, format!("row {claim_id} has a non-finite entry"));
            }
            if !ids.contains(claim_id.as_str()) {
                report.push(Severity::Error, &subject, format!("row {claim_id} names an unknown claim"));
            }
        }
        let missing = dataset
            .claims()
            .iter()
            .filter(|c| !view.rows.contains_key(&c.claim_id))
            .count();
        if missing > 0 {
            let severity = match coverage {
                Coverage::Strict => Severity::Error,
                Coverage::Lenient => Severity::Warning,
            };
            report.push(severity, &subject, format!("{missing} claim(s) have no row"));
        }
    }
    report
}
