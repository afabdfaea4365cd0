//! Claims, labels, feature views and the leave-one-debate-out fold structure.

mod io;
mod synth;
mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, VeriflowError};

pub use io::{
    load_claims, load_dataset, load_dataset_with, load_view, write_claims, write_view,
};
pub use synth::{synth_multiview, SynthSpec, SynthTruth, SynthView};
pub use validate::{validate, Coverage, Finding, Severity, ValidationReport};

/// Ordinal veracity label: false < half-true < true.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    False = 0,
    HalfTrue = 1,
    True = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::False, Label::HalfTrue, Label::True];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::False => "false",
            Label::HalfTrue => "half-true",
            Label::True => "true",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = VeriflowError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "false" => Ok(Label::False),
            "half-true" => Ok(Label::HalfTrue),
            "true" => Ok(Label::True),
            _ => Err(VeriflowError::UnknownLabel(s.to_string())),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioSpan {
    pub start_s: f64,
    pub end_s: f64,
}

/// One spoken, fact-checked statement. `text` is the claim as originally said.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: String,
    pub debate_id: String,
    pub speaker: String,
    pub text: String,
    pub label: Label,
    pub split: Split,
    #[serde(rename = "audio", default, skip_serializing_if = "Option::is_none")]
    pub audio_span: Option<AudioSpan>,
}

/// A named family of fixed-dimension per-claim feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureView {
    pub name: String,
    pub dim: usize,
    pub rows: BTreeMap<String, Vec<f64>>,
}

impl FeatureView {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        FeatureView {
            name: name.into(),
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, claim_id: impl Into<String>, row: Vec<f64>) -> Result<()> {
        if row.len() != self.dim {
            return Err(VeriflowError::DimensionMismatch {
                context: format!("view {}", self.name),
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.rows.insert(claim_id.into(), row);
        Ok(())
    }

    pub fn row(&self, claim_id: &str) -> Result<&[f64]> {
        self.rows
            .get(claim_id)
            .map(Vec::as_slice)
            .ok_or_else(|| VeriflowError::MissingView(format!("{} (claim {claim_id})", self.name)))
    }

    /// Stack the rows of `ids` (in order) into an `ids.len() × dim` matrix.
    pub fn matrix<S: AsRef<str>>(&self, ids: &[S]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((ids.len(), self.dim));
        for (i, id) in ids.iter().enumerate() {
            let row = self.row(id.as_ref())?;
            out.row_mut(i)
                .iter_mut()
                .zip(row)
                .for_each(|(dst, src)| *dst = *src);
        }
        Ok(out)
    }
}

/// Claims plus their feature views and the speaker roster.
#[derive(Debug, Clone)]
pub struct Dataset {
    claims: Vec<Claim>,
    views: Vec<FeatureView>,
    roster: Vec<String>,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Builds a dataset whose roster is the sorted set of distinct speakers.
    pub fn new(claims: Vec<Claim>, views: Vec<FeatureView>) -> Self {
        let roster: BTreeSet<String> = claims.iter().map(|c| c.speaker.clone()).collect();
        Self::with_roster(claims, views, roster.into_iter().collect())
    }

    pub fn with_roster(claims: Vec<Claim>, views: Vec<FeatureView>, roster: Vec<String>) -> Self {
        let mut index = HashMap::with_capacity(claims.len());
        for (i, claim) in claims.iter().enumerate() {
            index.entry(claim.claim_id.clone()).or_insert(i);
        }
        Dataset {
            claims,
            views,
            roster,
            index,
        }
    }

    pub fn claims(&self) -> &[Claim] {
        &self.claims
    }

    pub fn views(&self) -> &[FeatureView] {
        &self.views
    }

    pub fn roster(&self) -> &[String] {
        &self.roster
    }

    pub fn claim(&self, claim_id: &str) -> Option<&Claim> {
        self.index.get(claim_id).map(|&i| &self.claims[i])
    }

    pub fn view(&self, name: &str) -> Result<&FeatureView> {
        self.views
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| VeriflowError::MissingView(name.to_string()))
    }

    /// Returns a copy with `view` added, replacing any view of the same name.
    pub fn with_view(&self, view: FeatureView) -> Dataset {
        let mut views: Vec<FeatureView> =
            self.views.iter().filter(|v| v.name != view.name).cloned().collect();
        views.push(view);
        Dataset::with_roster(self.claims.clone(), views, self.roster.clone())
    }

    pub fn split_ids(&self, split: Split) -> Vec<String> {
        self.claims
            .iter()
            .filter(|c| c.split == split)
            .map(|c| c.claim_id.clone())
            .collect()
    }

    pub fn labels<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<Label>> {
        ids.iter().map(|id| self.claim_ref(id.as_ref()).map(|c| c.label)).collect()
    }

    pub fn texts<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<&str>> {
        ids.iter()
            .map(|id| self.claim_ref(id.as_ref()).map(|c| c.text.as_str()))
            .collect()
    }

    pub(crate) fn claim_ref(&self, claim_id: &str) -> Result<&Claim> {
        self.claim(claim_id)
            .ok_or_else(|| VeriflowError::invalid(format!("unknown claim id {claim_id:?}")))
    }

    /// Per-class label counts over a split, in ordinal order.
    pub fn class_counts(&self, split: Split) -> [usize; 3] {
        let mut counts = [0; 3];
        for claim in self.claims.iter().filter(|c| c.split == split) {
            counts[claim.label.index()] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub held_out_debate: String,
    pub train_ids: Vec<String>,
    pub heldout_ids: Vec<String>,
}

/// Leave-one-debate-out partition of the train split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSpec {
    pub folds: Vec<Fold>,
}

impl FoldSpec {
    /// One fold per distinct group, ordered by group name. Item order is kept
    /// inside each side of a fold.
    pub fn leave_one_group_out(items: &[(String, String)]) -> Result<FoldSpec> {
        let groups: BTreeSet<&str> = items.iter().map(|(_, g)| g.as_str()).collect();
        if groups.len() < 2 {
            return Err(VeriflowError::TooFewDebates {
                needed: 2,
                found: groups.len(),
            });
        }
        let folds = groups
            .into_iter()
            .map(|group| {
                let (heldout, train): (Vec<_>, Vec<_>) =
                    items.iter().partition(|(_, g)| g == group);
                Fold {
                    held_out_debate: group.to_string(),
                    train_ids: train.into_iter().map(|(id, _)| id.clone()).collect(),
                    heldout_ids: heldout.into_iter().map(|(id, _)| id.clone()).collect(),
                }
            })
            .collect();
        Ok(FoldSpec { folds })
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

/// Folds over the train split, one per debate, sorted by debate id.
pub fn loo_debate_folds(dataset: &Dataset) -> Result<FoldSpec> {
    let items: Vec<(String, String)> = dataset
        .claims()
        .iter()
        .filter(|c| c.split == Split::Train)
        .map(|c| (c.claim_id.clone(), c.debate_id.clone()))
        .collect();
    FoldSpec::leave_one_group_out(&items)
}

/// Per-class loss weights, inversely proportional to class frequency with mean 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights(pub [f64; 3]);

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights([1.0; 3])
    }

    pub fn get(&self, label: Label) -> f64 {
        self.0[label.index()]
    }

    pub fn for_labels(&self, labels: &[Label]) -> Vec<f64> {
        labels.iter().map(|&l| self.get(l)).collect()
    }
}

/// `weight_c = N / (K · n_c)` with K = 3. Every class must be present.
pub fn class_weights(labels: &[Label]) -> Result<ClassWeights> {
    let mut counts = [0usize; 3];
    for label in labels {
        counts[label.index()] += 1;
    }
    let total = labels.len() as f64;
    let mut weights = [0.0; 3];
    for (c, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(VeriflowError::MissingClass(Label::ALL[c].as_str()));
        }
        weights[c] = total / (3.0 * n as f64);
    }
    Ok(ClassWeights(weights))
}
