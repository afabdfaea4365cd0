//! Leave-one-debate-out cross-validation and grid search on pooled MAR.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::corpus::{Dataset, FoldSpec, Label};
use crate::error::{Result, VeriflowError};
use crate::evalkit::{confusion, csv_field, metrics, ConfusionMatrix, MetricsBundle};
use crate::models::Learner;
use crate::{argmax_label, Probs};

/// Tolerance under which two MAR values count as tied.
const MAR_TIE: f64 = 1e-9;

/// Named hyperparameter candidates; candidates are the cartesian product in
/// declaration order (first parameter varies slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub params: Vec<(String, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub values: Vec<(String, f64)>,
}

impl Candidate {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn label(&self) -> String {
        self.values
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl GridSpec {
    pub fn l2(values: &[f64]) -> GridSpec {
        GridSpec {
            params: vec![("l2".to_string(), values.to_vec())],
        }
    }

    pub fn candidates(&self) -> Result<Vec<Candidate>> {
        if self.params.is_empty() || self.params.iter().any(|(_, v)| v.is_empty()) {
            return Err(VeriflowError::Empty("hyperparameter grid".into()));
        }
        if let Some((name, _)) = self.params.iter().find(|(_, v)| v.iter().any(|x| !x.is_finite())) {
            return Err(VeriflowError::invalid(format!("grid values for {name} must be finite")));
        }
        let mut out = vec![Candidate { values: Vec::new() }];
        for (name, values) in &self.params {
            out = out
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |&v| {
                        let mut next = c.clone();
                        next.values.push((name.clone(), v));
                        next
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub pooled: MetricsBundle,
    pub pooled_confusion: ConfusionMatrix,
    /// `(held-out debate, metrics on that debate)` in fold order.
    pub per_fold: Vec<(String, MetricsBundle)>,
    pub predictions: BTreeMap<String, Probs>,
}

/// Fits per fold, predicts the held-out debate and pools every held-out
/// prediction into one confusion matrix.
pub fn cv_evaluate(learner: &dyn Learner, dataset: &Dataset, folds: &FoldSpec) -> Result<CvReport> {
    if folds.len() < 2 {
        return Err(VeriflowError::TooFewDebates {
            needed: 2,
            found: folds.len(),
        });
    }
    let outputs = folds
        .folds
        .par_iter()
        .map(|fold| {
            learner
                .fit_predict(dataset, &fold.train_ids, &fold.heldout_ids)
                .map_err(|e| VeriflowError::Training {
                    context: format!("fold {}", fold.held_out_debate),
                    message: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pooled_confusion = ConfusionMatrix::default();
    let mut per_fold = Vec::with_capacity(folds.len());
    let mut predictions = BTreeMap::new();
    for (fold, probs) in folds.folds.iter().zip(outputs) {
        let truth = dataset.labels(&fold.heldout_ids)?;
        let predicted: Vec<Label> = probs.iter().map(argmax_label).collect();
        let cm = confusion(&truth, &predicted)?;
        pooled_confusion.add(&cm);
        per_fold.push((fold.held_out_debate.clone(), metrics(&cm)?));
        for (id, p) in fold.heldout_ids.iter().zip(probs) {
            predictions.insert(id.clone(), p);
        }
    }
    Ok(CvReport {
        pooled: metrics(&pooled_confusion)?,
        pooled_confusion,
        per_fold,
        predictions,
    })
}

/// Index of the best `(l2, metrics)` entry: highest MAR, then smaller L2,
/// then earliest. Entries without an L2 only compete on MAR and order.
pub fn select_best(scored: &[(Option<f64>, MetricsBundle)]) -> usize {
    let mut best = 0;
    for (i, (l2, m)) in scored.iter().enumerate().skip(1) {
        let (best_l2, best_m) = &scored[best];
        if m.mar > best_m.mar + MAR_TIE {
            best = i;
        } else if (m.mar - best_m.mar).abs() <= MAR_TIE {
            if let (Some(a), Some(b)) = (l2, best_l2) {
                if a < b {
                    best = i;
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRow {
    pub candidate: Candidate,
    pub report: CvReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: usize,
    pub leaderboard: Vec<LeaderboardRow>,
}

impl GridResult {
    pub fn best_candidate(&self) -> &Candidate {
        &self.leaderboard[self.best].candidate
    }

    /// `candidate,mae,mmae,acc,f1,mar,selected`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("candidate,mae,mmae,acc,f1,mar,selected\n");
        for (i, row) in self.leaderboard.iter().enumerate() {
            let m = &row.report.pooled;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&row.candidate.label()),
                m.mae,
                m.mmae,
                m.accuracy,
                m.macro_f1,
                m.mar,
                i == self.best
            );
        }
        out
    }
}

pub fn grid_search<F>(grid: &GridSpec, build: F, dataset: &Dataset, folds: &FoldSpec) -> Result<GridResult>
where
    F: Fn(&Candidate) -> Result<Box<dyn Learner>> + Sync,
{
    let candidates = grid.candidates()?;
    let reports = candidates
        .par_iter()
        .map(|c| cv_evaluate(build(c)?.as_ref(), dataset, folds))
        .collect::<Result<Vec<_>>>()?;
    let scored: Vec<(Option<f64>, MetricsBundle)> = candidates
        .iter()
        .zip(&reports)
        .map(|(c, r)| (c.get("l2"), r.pooled))
        .collect();
    let best = select_best(&scored);
    Ok(GridResult {
        best,
        leaderboard: candidates
            .into_iter()
            .zip(reports)
            .map(|(candidate, report)| LeaderboardRow { candidate, report })
            .collect(),
    })
}
