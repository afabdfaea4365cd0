//! View-combination schemes: feature concatenation, probability averaging
//! and a stacked ensemble trained on out-of-fold base posteriors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;

use crate::corpus::{Dataset, FeatureView, FoldSpec};
use crate::error::{Result, VeriflowError};
use crate::evalkit::{confusion, csv_field, metrics, MetricsBundle};
use crate::linmodel::{train_logreg, LinearModel, OptConfig, CLASSES};
use crate::models::{balanced_weights, Learner, Predictor};
use crate::tuningcv::select_best;
use crate::{argmax_label, ClassWeights, Probs};

/// Joins views column-wise in the given order. All views must cover the same claims.
pub fn concat_views(name: &str, views: &[&FeatureView]) -> Result<FeatureView> {
    let first = views
        .first()
        .ok_or_else(|| VeriflowError::Empty("views to concatenate".into()))?;
    let ids: BTreeSet<&String> = first.rows.keys().collect();
    for view in &views[1..] {
        if view.rows.len() != ids.len() || !view.rows.keys().all(|k| ids.contains(k)) {
            return Err(VeriflowError::invalid(format!(
                "view {} covers different claims than {}",
                view.name, first.name
            )));
        }
    }
    let mut out = FeatureView::new(name, views.iter().map(|v| v.dim).sum());
    for id in ids {
        let row: Vec<f64> = views.iter().flat_map(|v| v.rows[id].iter().copied()).collect();
        out.insert(id.clone(), row)?;
    }
    Ok(out)
}

pub fn avg_probabilities(probs: &[Probs]) -> Result<Probs> {
    if probs.is_empty() {
        return Err(VeriflowError::Empty("probabilities to average".into()));
    }
    let mut out = [0.0; CLASSES];
    for p in probs {
        for c in 0..CLASSES {
            out[c] += p[c];
        }
    }
    let n = probs.len() as f64;
    Ok(out.map(|v| v / n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaOptions {
    pub class_weighted: bool,
    pub opt: OptConfig,
    pub seed: u64,
}

impl Default for MetaOptions {
    fn default() -> Self {
        MetaOptions {
            class_weighted: true,
            opt: OptConfig::default(),
            seed: 0,
        }
    }
}

/// Out-of-fold posteriors of every base for one claim.
#[derive(Debug, Clone, PartialEq)]
pub struct OofRecord {
    /// Index into [`StackedModel::folds`] of the fold that held this claim out.
    pub fold: usize,
    /// One distribution per base, in base order.
    pub probs: Vec<Probs>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldProvenance {
    pub held_out_debate: String,
    pub train_ids: Vec<String>,
}

pub struct StackedModel {
    pub base_names: Vec<String>,
    pub bases: Vec<Box<dyn Predictor>>,
    pub meta: LinearModel,
    /// `(l2, pooled CV metrics)` for every meta candidate.
    pub meta_leaderboard: Vec<(f64, MetricsBundle)>,
    pub oof_records: BTreeMap<String, OofRecord>,
    pub folds: Vec<FoldProvenance>,
    /// How many times each base was fitted.
    pub base_fit_counts: Vec<usize>,
}

impl fmt::Debug for StackedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StackedModel")
            .field("base_names", &self.base_names)
            .field("meta", &self.meta)
            .field("oof_records", &self.oof_records.len())
            .finish()
    }
}

impl StackedModel {
    pub fn meta_input_dim(&self) -> usize {
        CLASSES * self.bases.len()
    }

    /// `claim_id,base,prob_false,prob_half,prob_true`, ordered by claim then base.
    pub fn oof_csv(&self) -> String {
        let mut out = String::from("claim_id,base,prob_false,prob_half,prob_true\n");
        for (id, record) in &self.oof_records {
            for (name, p) in self.base_names.iter().zip(&record.probs) {
                let _ = writeln!(out, "{},{},{},{},{}", csv_field(id), csv_field(name), p[0], p[1], p[2]);
            }
        }
        out
    }
}

fn meta_features<S: AsRef<str>>(records: &BTreeMap<String, OofRecord>, ids: &[S]) -> Result<Array2<f64>> {
    let width = records.values().next().map_or(0, |r| r.probs.len() * CLASSES);
    let mut x = Array2::zeros((ids.len(), width));
    for (i, id) in ids.iter().enumerate() {
        let record = records
            .get(id.as_ref())
            .ok_or_else(|| VeriflowError::invalid(format!("no out-of-fold record for {}", id.as_ref())))?;
        for (j, v) in record.probs.iter().flatten().enumerate() {
            x[[i, j]] = *v;
        }
    }
    Ok(x)
}

fn fit_meta(
    dataset: &Dataset,
    records: &BTreeMap<String, OofRecord>,
    ids: &[String],
    l2: f64,
    opts: &MetaOptions,
) -> Result<LinearModel> {
    let x = meta_features(records, ids)?;
    let labels = dataset.labels(ids)?;
    let weights = if opts.class_weighted {
        balanced_weights(&labels)
    } else {
        ClassWeights::uniform()
    };
    train_logreg(x.view(), &labels, &weights, l2, &opts.opt, opts.seed)
}

/// 1. every base is fitted on each fold's train side and its posteriors on
///    the held-out debate are recorded;
/// 2. the meta L2 is chosen by leave-one-debate-out CV over those records
///    (pooled MAR);
/// 3. every base is refitted on all training claims;
/// 4. the meta classifier is fitted on all recorded posteriors.
pub fn stack_train(
    bases: &[&dyn Learner],
    dataset: &Dataset,
    folds: &FoldSpec,
    meta_grid: &[f64],
    opts: &MetaOptions,
) -> Result<StackedModel> {
    if folds.len() < 2 {
        return Err(VeriflowError::TooFewDebates {
            needed: 2,
            found: folds.len(),
        });
    }
    if bases.is_empty() {
        return Err(VeriflowError::Empty("stacking bases".into()));
    }
    if meta_grid.is_empty() {
        return Err(VeriflowError::Empty("meta L2 grid".into()));
    }

    let jobs: Vec<(usize, usize)> = (0..folds.len())
        .flat_map(|f| (0..bases.len()).map(move |b| (f, b)))
        .collect();
    let fold_outputs = jobs
        .par_iter()
        .map(|&(f, b)| {
            let fold = &folds.folds[f];
            bases[b]
                .fit_predict(dataset, &fold.train_ids, &fold.heldout_ids)
                .map_err(|e| VeriflowError::Training {
                    context: format!("base {} on fold {}", bases[b].name(), fold.held_out_debate),
                    message: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut oof_records: BTreeMap<String, OofRecord> = BTreeMap::new();
    for (&(f, b), probs) in jobs.iter().zip(fold_outputs) {
        for (id, p) in folds.folds[f].heldout_ids.iter().zip(probs) {
            let record = oof_records.entry(id.clone()).or_insert_with(|| OofRecord {
                fold: f,
                probs: vec![[0.0; CLASSES]; bases.len()],
            });
            if record.fold != f {
                return Err(VeriflowError::invalid(format!("claim {id} is held out by two folds")));
            }
            record.probs[b] = p;
        }
    }

    let meta_leaderboard = meta_grid
        .par_iter()
        .map(|&l2| {
            let mut pooled_true = Vec::new();
            let mut pooled_pred = Vec::new();
            for fold in &folds.folds {
                let meta = fit_meta(dataset, &oof_records, &fold.train_ids, l2, opts)?;
                let x = meta_features(&oof_records, &fold.heldout_ids)?;
                pooled_pred.extend(meta.predict_proba_rows(x.view())?.iter().map(argmax_label));
                pooled_true.extend(dataset.labels(&fold.heldout_ids)?);
            }
            Ok((l2, metrics(&confusion(&pooled_true, &pooled_pred)?)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let scored: Vec<(Option<f64>, MetricsBundle)> =
        meta_leaderboard.iter().map(|(l2, m)| (Some(*l2), *m)).collect();
    let meta_l2 = meta_leaderboard[select_best(&scored)].0;

    let all_ids: Vec<String> = oof_records.keys().cloned().collect();
    let final_bases = bases
        .par_iter()
        .map(|b| b.fit(dataset, &all_ids))
        .collect::<Result<Vec<_>>>()?;
    let meta = fit_meta(dataset, &oof_records, &all_ids, meta_l2, opts)?;

    Ok(StackedModel {
        base_names: bases.iter().map(|b| b.name()).collect(),
        bases: final_bases,
        meta,
        meta_leaderboard,
        oof_records,
        folds: folds
            .folds
            .iter()
            .map(|f| FoldProvenance {
                held_out_debate: f.held_out_debate.clone(),
                train_ids: f.train_ids.clone(),
            })
            .collect(),
        base_fit_counts: vec![folds.len() + 1; bases.len()],
    })
}

/// Meta-classifier probabilities over the final bases' posteriors.
pub fn stack_predict(model: &StackedModel, dataset: &Dataset, ids: &[String]) -> Result<Vec<Probs>> {
    let per_base = model
        .bases
        .iter()
        .map(|b| b.predict(dataset, ids))
        .collect::<Result<Vec<_>>>()?;
    let mut x = Array2::zeros((ids.len(), model.meta_input_dim()));
    for (b, probs) in per_base.iter().enumerate() {
        for (i, p) in probs.iter().enumerate() {
            for c in 0..CLASSES {
                x[[i, b * CLASSES + c]] = p[c];
            }
        }
    }
    model.meta.predict_proba_rows(x.view())
}

/// Exhaustively checks that no recorded posterior came from a fold whose
/// training side contained a claim of the same debate. Returns the number
/// of (claim, base) records checked.
pub fn audit_no_leakage(model: &StackedModel, dataset: &Dataset) -> Result<usize> {
    let mut checked = 0;
    for (id, record) in &model.oof_records {
        let debate = &dataset.claim_ref(id)?.debate_id;
        let fold = model
            .folds
            .get(record.fold)
            .ok_or_else(|| VeriflowError::invalid(format!("record for {id} names a missing fold")))?;
        if &fold.held_out_debate != debate {
            return Err(VeriflowError::invalid(format!(
                "claim {id} of debate {debate} recorded by fold holding out {}",
                fold.held_out_debate
            )));
        }
        for train_id in &fold.train_ids {
            if &dataset.claim_ref(train_id)?.debate_id == debate {
                return Err(VeriflowError::invalid(format!(
                    "fold for claim {id} trained on {train_id} from the same debate"
                )));
            }
        }
        checked += record.probs.len();
    }
    Ok(checked)
}
