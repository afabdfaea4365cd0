//! Ordinal 3-class evaluation: MAE, macro-averaged MAE, accuracy, macro-F1
//! and macro-averaged recall, plus the random and n-gram baselines.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassWeights, Dataset, Label, Split};
use crate::error::{Result, VeriflowError};
use crate::linmodel::{train_logreg, OptConfig};
use crate::textfeat::{fit_tfidf, tfidf_vector};
use crate::argmax_label;

/// Rows are true labels, columns predicted labels, both in ordinal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix(pub [[u64; 3]; 3]);

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.0[i][i]).sum()
    }

    pub fn row_total(&self, class: usize) -> u64 {
        self.0[class].iter().sum()
    }

    pub fn column_total(&self, class: usize) -> u64 {
        self.0.iter().map(|row| row[class]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for i in 0..3 {
            for j in 0..3 {
                self.0[i][j] += other.0[i][j];
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted,false,half-true,true\n");
        for (label, row) in Label::ALL.iter().zip(self.0) {
            let _ = writeln!(out, "{label},{},{},{}", row[0], row[1], row[2]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub mae: f64,
    pub mmae: f64,
    /// Percent.
    pub accuracy: f64,
    /// Percent.
    pub macro_f1: f64,
    /// Percent.
    pub mar: f64,
}

impl MetricsBundle {
    /// Field-wise mean. Panics on an empty slice.
    pub fn mean(bundles: &[MetricsBundle]) -> MetricsBundle {
        let n = bundles.len() as f64;
        let sum = |f: fn(&MetricsBundle) -> f64| bundles.iter().map(f).sum::<f64>() / n;
        MetricsBundle {
            mae: sum(|b| b.mae),
            mmae: sum(|b| b.mmae),
            accuracy: sum(|b| b.accuracy),
            macro_f1: sum(|b| b.macro_f1),
            mar: sum(|b| b.mar),
        }
    }

    /// Field-wise median (mean of the middle pair for even counts). Panics on an empty slice.
    pub fn median(bundles: &[MetricsBundle]) -> MetricsBundle {
        let med = |f: fn(&MetricsBundle) -> f64| {
            let mut v: Vec<f64> = bundles.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                (v[n / 2 - 1] + v[n / 2]) / 2.0
            }
        };
        MetricsBundle {
            mae: med(|b| b.mae),
            mmae: med(|b| b.mmae),
            accuracy: med(|b| b.accuracy),
            macro_f1: med(|b| b.macro_f1),
            mar: med(|b| b.mar),
        }
    }
}

pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(VeriflowError::DimensionMismatch {
            context: "true vs predicted labels".into(),
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(VeriflowError::Empty("prediction set".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        cm.0[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

/// MMAE skips true classes with no examples; F1 uses 0 for 0/0.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsBundle> {
    let n = cm.total();
    if n == 0 {
        return Err(VeriflowError::Empty("confusion matrix".into()));
    }
    let distance = |i: usize, j: usize| i.abs_diff(j) as f64;
    let mut abs_err = 0.0;
    let mut class_mae = Vec::new();
    let mut recalls = [0.0; 3];
    let mut f1s = [0.0; 3];
    for c in 0..3 {
        let row_err: f64 = (0..3).map(|j| cm.0[c][j] as f64 * distance(c, j)).sum();
        abs_err += row_err;
        let support = cm.row_total(c);
        if support > 0 {
            class_mae.push(row_err / support as f64);
            recalls[c] = cm.0[c][c] as f64 / support as f64;
        }
        let predicted = cm.column_total(c);
        let precision = if predicted > 0 {
            cm.0[c][c] as f64 / predicted as f64
        } else {
            0.0
        };
        f1s[c] = if precision + recalls[c] > 0.0 {
            2.0 * precision * recalls[c] / (precision + recalls[c])
        } else {
            0.0
        };
    }
    Ok(MetricsBundle {
        mae: abs_err / n as f64,
        mmae: class_mae.iter().sum::<f64>() / class_mae.len() as f64,
        accuracy: 100.0 * cm.trace() as f64 / n as f64,
        macro_f1: 100.0 * f1s.iter().sum::<f64>() / 3.0,
        mar: 100.0 * recalls.iter().sum::<f64>() / 3.0,
    })
}

pub fn evaluate(y_true: &[Label], y_pred: &[Label]) -> Result<(MetricsBundle, ConfusionMatrix)> {
    let cm = confusion(y_true, y_pred)?;
    Ok((metrics(&cm)?, cm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomMode {
    Uniform,
    TrainStratified,
}

impl std::str::FromStr for RandomMode {
    type Err = VeriflowError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(RandomMode::Uniform),
            "train_stratified" => Ok(RandomMode::TrainStratified),
            other => Err(VeriflowError::invalid(format!("unknown random baseline mode {other:?}"))),
        }
    }
}

fn sampling_probs(train_counts: [usize; 3], mode: RandomMode) -> Result<[f64; 3]> {
    match mode {
        RandomMode::Uniform => Ok([1.0 / 3.0; 3]),
        RandomMode::TrainStratified => {
            let total: usize = train_counts.iter().sum();
            if total == 0 {
                return Err(VeriflowError::Empty("train class distribution".into()));
            }
            Ok(train_counts.map(|c| c as f64 / total as f64))
        }
    }
}

/// Closed-form expected accuracy (percent) of a random predictor.
pub fn expected_random_accuracy(train_counts: [usize; 3], y_true: &[Label], mode: RandomMode) -> Result<f64> {
    let p = sampling_probs(train_counts, mode)?;
    if y_true.is_empty() {
        return Err(VeriflowError::Empty("prediction set".into()));
    }
    let hits: f64 = y_true.iter().map(|l| p[l.index()]).sum();
    Ok(100.0 * hits / y_true.len() as f64)
}

/// Mean metrics over `n_trials` random prediction draws.
pub fn random_baseline(
    train_counts: [usize; 3],
    y_true: &[Label],
    mode: RandomMode,
    seed: u64,
    n_trials: usize,
) -> Result<MetricsBundle> {
    if n_trials == 0 {
        return Err(VeriflowError::invalid("n_trials must be at least 1"));
    }
    let p = sampling_probs(train_counts, mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bundles = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let predicted: Vec<Label> = y_true
            .iter()
            .map(|_| {
                let u: f64 = rng.random();
                if u < p[0] {
                    Label::False
                } else if u < p[0] + p[1] {
                    Label::HalfTrue
                } else {
                    Label::True
                }
            })
            .collect();
        bundles.push(evaluate(y_true, &predicted)?.0);
    }
    Ok(MetricsBundle::mean(&bundles))
}

/// Unweighted logistic regression (L2 = 1) over TF-IDF word n-grams fitted
/// on the train split, scored on the test split.
pub fn ngram_baseline(dataset: &Dataset, seed: u64) -> Result<(MetricsBundle, ConfusionMatrix)> {
    let train_ids = dataset.split_ids(Split::Train);
    let test_ids = dataset.split_ids(Split::Test);
    if test_ids.is_empty() {
        return Err(VeriflowError::Empty("test split".into()));
    }
    let model = fit_tfidf(&dataset.texts(&train_ids)?)?;
    let matrix = |ids: &[String]| -> Result<ndarray::Array2<f64>> {
        let texts = dataset.texts(ids)?;
        let mut out = ndarray::Array2::zeros((ids.len(), model.dim()));
        for (i, text) in texts.iter().enumerate() {
            for (j, v) in tfidf_vector(&model, text).entries {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    };
    let x_train = matrix(&train_ids)?;
    let lr = train_logreg(
        x_train.view(),
        &dataset.labels(&train_ids)?,
        &ClassWeights::uniform(),
        1.0,
        &OptConfig::default(),
        seed,
    )?;
    let predicted: Vec<Label> = lr
        .predict_proba_rows(matrix(&test_ids)?.view())?
        .iter()
        .map(argmax_label)
        .collect();
    evaluate(&dataset.labels(&test_ids)?, &predicted)
}

/// Rows of named metric bundles in the layout of the result tables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub rows: Vec<(String, MetricsBundle)>,
}

impl MetricsTable {
    pub fn push(&mut self, name: impl Into<String>, metrics: MetricsBundle) {
        self.rows.push((name.into(), metrics));
    }

    /// Full-precision values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("config,mae,mmae,acc,f1,mar\n");
        for (name, m) in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(name),
                m.mae,
                m.mmae,
                m.accuracy,
                m.macro_f1,
                m.mar
            );
        }
        out
    }

    /// Aligned table; errors with 4 decimals, percentages with 2.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|(n, _)| n.chars().count())
            .chain(["Model & Features".len()])
            .max()
            .unwrap_or(0);
        let mut out = format!(
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}\n",
            "Model & Features", "MAE", "MMAE", "Acc", "F1", "MAR"
        );
        for (name, m) in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7.4}  {:>7.4}  {:>7.2}  {:>7.2}  {:>7.2}",
                name, m.mae, m.mmae, m.accuracy, m.macro_f1, m.mar
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<MetricsTable> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut table = MetricsTable::default();
        for record in reader.records() {
            let record = record.map_err(|e| VeriflowError::parse("metrics csv", e))?;
            if record.len() != 6 {
                return Err(VeriflowError::parse("metrics csv", "expected 6 columns"));
            }
            let num = |i: usize| {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| VeriflowError::parse("metrics csv", e))
            };
            table.push(
                &record[0],
                MetricsBundle {
                    mae: num(1)?,
                    mmae: num(2)?,
                    accuracy: num(3)?,
                    macro_f1: num(4)?,
                    mar: num(5)?,
                },
            );
        }
        Ok(table)
    }
}

pub(crate) fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}
