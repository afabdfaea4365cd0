//! Class-weighted multinomial logistic regression with an L2 penalty on the
//! weight matrix, fitted by full-batch gradient descent with backtracking.
//!
//! The objective is
//!
//! ```text
//! L(W, b) = Σ_i s_i · CE(softmax(W x_i + b), y_i) / Σ_i s_i + (l2 / 2) · ||W||²_F
//! ```
//!
//! where `s_i` is the class weight of example `i`. Normalizing by the weight
//! mass makes the minimizer invariant to rescaling all sample weights.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{ClassWeights, Label};
use crate::error::{Result, VeriflowError};
use crate::{argmax_label, Probs};

pub const CLASSES: usize = 3;

/// Default L2 candidates for leave-one-debate-out tuning.
pub const L2_GRID: [f64; 7] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `3 × d`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub initial_step: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub shrink: f64,
    /// Standard deviation of the seeded weight initialization.
    pub init_scale: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            max_iter: 20_000,
            grad_tol: 1e-6,
            initial_step: 1.0,
            armijo: 1e-4,
            shrink: 0.5,
            init_scale: 0.01,
        }
    }
}

pub fn softmax(scores: &[f64; CLASSES]) -> Probs {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; CLASSES];
    let mut total = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
    out
}

fn log_softmax(scores: &[f64; CLASSES]) -> [f64; CLASSES] {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    [scores[0] - lse, scores[1] - lse, scores[2] - lse]
}

impl LinearModel {
    pub fn zeros(dim: usize, l2: f64) -> Self {
        LinearModel {
            weights: Array2::zeros((CLASSES, dim)),
            bias: Array1::zeros(CLASSES),
            l2,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.feature_dim() {
            return Err(VeriflowError::DimensionMismatch {
                context: "linear model input".into(),
                expected: self.feature_dim(),
                actual: got,
            });
        }
        Ok(())
    }

    fn scores(&self, x: ArrayView1<f64>) -> [f64; CLASSES] {
        let s = self.weights.dot(&x) + &self.bias;
        [s[0], s[1], s[2]]
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Probs> {
        self.check_dim(x.len())?;
        Ok(softmax(&self.scores(ArrayView1::from(x))))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        self.predict_proba(x).map(|p| argmax_label(&p))
    }

    pub fn predict_proba_rows(&self, x: ArrayView2<f64>) -> Result<Vec<Probs>> {
        self.check_dim(x.ncols())?;
        let scores = x.dot(&self.weights.t()) + &self.bias;
        Ok(scores
            .outer_iter()
            .map(|row| softmax(&[row[0], row[1], row[2]]))
            .collect())
    }

    /// Header `veriflow-linear <classes> <dim> <l2>`, then the weight rows and
    /// the bias row, floats in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = format!("veriflow-linear {} {} {:e}\n", CLASSES, self.feature_dim(), self.l2);
        for row in self.weights.outer_iter() {
            out.push_str(&join_floats(row.iter()));
            out.push('\n');
        }
        out.push_str(&join_floats(self.bias.iter()));
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split_whitespace().collect();
        if header.len() != 4 || header[0] != "veriflow-linear" {
            return Err(VeriflowError::parse("linear model", "bad header"));
        }
        let classes: usize = header[1].parse().map_err(|e| VeriflowError::parse("linear model", e))?;
        let dim: usize = header[2].parse().map_err(|e| VeriflowError::parse("linear model", e))?;
        let l2: f64 = header[3].parse().map_err(|e| VeriflowError::parse("linear model", e))?;
        if classes != CLASSES {
            return Err(VeriflowError::parse("linear model", "expected 3 classes"));
        }
        let mut model = LinearModel::zeros(dim, l2);
        for c in 0..CLASSES {
            let row = parse_floats(lines.next(), dim, "weight row")?;
            model.weights.row_mut(c).assign(&Array1::from(row));
        }
        model.bias = Array1::from(parse_floats(lines.next(), CLASSES, "bias row")?);
        Ok(model)
    }
}

pub(crate) fn join_floats<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    values.map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

pub(crate) fn parse_floats(line: Option<&str>, expected: usize, what: &str) -> Result<Vec<f64>> {
    let line = line.ok_or_else(|| VeriflowError::parse(what, "missing line"))?;
    let values = line
        .split_whitespace()
        .map(|v| v.parse::<f64>().map_err(|e| VeriflowError::parse(what, e)))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(VeriflowError::DimensionMismatch {
            context: what.to_string(),
            expected,
            actual: values.len(),
        });
    }
    Ok(values)
}

/// Objective value and gradients `(loss, dL/dW, dL/db)`.
pub fn objective(
    model: &LinearModel,
    x: ArrayView2<f64>,
    labels: &[Label],
    sample_weights: &[f64],
) -> (f64, Array2<f64>, Array1<f64>) {
    let scores = x.dot(&model.weights.t()) + &model.bias;
    let mass: f64 = sample_weights.iter().sum();
    let mut residual = Array2::<f64>::zeros((labels.len(), CLASSES));
    let mut data_loss = 0.0;
    for (i, (row, (&label, &s))) in scores
        .outer_iter()
        .zip(labels.iter().zip(sample_weights))
        .enumerate()
    {
        let z = [row[0], row[1], row[2]];
        let logp = log_softmax(&z);
        data_loss -= s * logp[label.index()];
        for c in 0..CLASSES {
            let target = if c == label.index() { 1.0 } else { 0.0 };
            residual[[i, c]] = s * (logp[c].exp() - target) / mass;
        }
    }
    let penalty = 0.5 * model.l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    let grad_w = residual.t().dot(&x) + &(&model.weights * model.l2);
    let grad_b = residual.sum_axis(Axis(0));
    (data_loss / mass + penalty, grad_w, grad_b)
}

/// Objective value of `model` on a class-weighted training set.
pub fn training_loss(
    model: &LinearModel,
    x: ArrayView2<f64>,
    labels: &[Label],
    weights: &ClassWeights,
) -> f64 {
    objective(model, x, labels, &weights.for_labels(labels)).0
}

pub fn train_logreg(
    x: ArrayView2<f64>,
    labels: &[Label],
    weights: &ClassWeights,
    l2: f64,
    opt: &OptConfig,
    seed: u64,
) -> Result<LinearModel> {
    train_logreg_weighted(x, labels, &weights.for_labels(labels), l2, opt, seed)
}

/// Same as [`train_logreg`] with explicit per-example weights.
pub fn train_logreg_weighted(
    x: ArrayView2<f64>,
    labels: &[Label],
    sample_weights: &[f64],
    l2: f64,
    opt: &OptConfig,
    seed: u64,
) -> Result<LinearModel> {
    if x.nrows() == 0 {
        return Err(VeriflowError::Empty("logistic regression training set".into()));
    }
    if labels.len() != x.nrows() || sample_weights.len() != x.nrows() {
        return Err(VeriflowError::DimensionMismatch {
            context: "labels vs feature rows".into(),
            expected: x.nrows(),
            actual: labels.len().min(sample_weights.len()),
        });
    }
    if !l2.is_finite() || l2 < 0.0 {
        return Err(VeriflowError::invalid(format!("l2 must be finite and >= 0, got {l2}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(VeriflowError::NonFinite("logistic regression features".into()));
    }
    if sample_weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(VeriflowError::invalid("sample weights must be finite and positive"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, opt.init_scale).map_err(|e| VeriflowError::invalid(e.to_string()))?;
    let mut model = LinearModel::zeros(x.ncols(), l2);
    model.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));

    // Diagonal preconditioner from a bound on the objective's curvature:
    // softmax cross-entropy has Hessian diagonal at most 1/4 · E_s[x_j²].
    let mass: f64 = sample_weights.iter().sum();
    let mut second_moment = vec![0.0; x.ncols()];
    for (row, s) in x.outer_iter().zip(sample_weights) {
        for (m, v) in second_moment.iter_mut().zip(row) {
            *m += s * v * v / mass;
        }
    }
    let precond_w = Array2::from_shape_fn((CLASSES, x.ncols()), |(_, j)| {
        1.0 / (0.25 * second_moment[j] + l2).max(1e-12)
    });
    let precond_b = 4.0;

    let (mut loss, mut grad_w, mut grad_b) = objective(&model, x, labels, sample_weights);
    let mut step = opt.initial_step;
    for _ in 0..opt.max_iter {
        let grad_sq = grad_w.iter().chain(grad_b.iter()).map(|g| g * g).sum::<f64>();
        if grad_sq.sqrt() <= opt.grad_tol {
            break;
        }
        let dir_w = &grad_w * &precond_w;
        let dir_b = &grad_b * precond_b;
        let decrease = (&dir_w * &grad_w).sum() + (&dir_b * &grad_b).sum();
        // Armijo backtracking, starting from a doubled previous step.
        step = (step * 2.0).min(1e3);
        let mut accepted = None;
        while step > 1e-20 {
            let trial = LinearModel {
                weights: &model.weights - &(&dir_w * step),
                bias: &model.bias - &(&dir_b * step),
                l2,
            };
            let (trial_loss, tw, tb) = objective(&trial, x, labels, sample_weights);
            if trial_loss <= loss - opt.armijo * step * decrease {
                accepted = Some((trial, trial_loss, tw, tb));
                break;
            }
            step *= opt.shrink;
        }
        match accepted {
            Some((next, next_loss, gw, gb)) => {
                model = next;
                loss = next_loss;
                grad_w = gw;
                grad_b = gb;
            }
            // No representable decrease left.
            None => break,
        }
    }
    if !loss.is_finite() {
        return Err(VeriflowError::Training {
            context: "logistic regression".into(),
            message: "objective became non-finite".into(),
        });
    }
    Ok(model)
}
