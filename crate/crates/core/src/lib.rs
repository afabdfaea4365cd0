//! Multimodal claim-veracity experiments.
//!
//! Claims from political debates carry an ordinal veracity label
//! (false < half-true < true) and several per-claim feature views: lexicon
//! proportions with a speaker one-hot, TF-IDF word n-grams, a text embedding,
//! acoustic functionals and i-vectors. The crate trains class-weighted
//! multinomial logistic regression, a multi-input feed-forward network and
//! three view-combination schemes, and evaluates them with ordinal 3-class
//! metrics under leave-one-debate-out cross-validation.

pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod fusion;
pub mod linmodel;
pub mod models;
pub mod neurofusion;
pub mod pipeline;
pub mod runner;
pub mod textfeat;
pub mod tuningcv;

pub use corpus::{Claim, ClassWeights, Dataset, FeatureView, FoldSpec, Label, Split};
pub use error::{Result, VeriflowError};
pub use evalkit::{ConfusionMatrix, MetricsBundle};

/// A probability distribution over the three ordinal classes.
pub type Probs = [f64; 3];

/// Argmax over class probabilities; ties go to the lowest ordinal class.
pub fn argmax_label(probs: &Probs) -> Label {
    let mut best = 0;
    for c in 1..3 {
        if probs[c] > probs[best] {
            best = c;
        }
    }
    Label::from_index(best).expect("index below 3")
}
