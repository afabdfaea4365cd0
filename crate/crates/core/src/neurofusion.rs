//! Multi-input feed-forward network: one ReLU hidden layer per feature view,
//! concatenation, a shared ReLU hidden layer and a softmax output, trained by
//! class-weighted cross-entropy with plain SGD and inverted dropout.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ClassWeights, Label};
use crate::error::{Result, VeriflowError};
use crate::evalkit::{confusion, metrics, MetricsBundle};
use crate::linmodel::{join_floats, parse_floats, softmax, CLASSES};
use crate::{argmax_label, Probs};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub per_view_hidden: usize,
    pub fusion_hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub dropout_retention: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            per_view_hidden: 16,
            fusion_hidden: 32,
            epochs: 512,
            learning_rate: 0.005,
            momentum: 0.0,
            dropout_retention: 0.5,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl Hyper {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(VeriflowError::invalid(format!("hyper: {m}")));
        if self.per_view_hidden == 0 || self.fusion_hidden == 0 {
            return bad("hidden sizes must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.dropout_retention > 0.0 && self.dropout_retention <= 1.0) {
            return bad("dropout_retention must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Fully connected layer, `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut layer = Dense::zeros(inputs, outputs);
        layer
            .weights
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-limit..=limit));
        layer
    }

    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weights.dot(&x) + &self.bias
    }

    /// `grad += delta ⊗ x` for the weights, `grad_b += delta`.
    fn accumulate(&mut self, delta: &Array1<f64>, x: ArrayView1<f64>) {
        for (k, (&d, mut row)) in delta.iter().zip(self.weights.outer_iter_mut()).enumerate() {
            if d == 0.0 {
                continue;
            }
            row.iter_mut()
                .zip(x.iter())
                .for_each(|(g, xv)| *g += d * xv);
            self.bias[k] += d;
        }
    }

    fn backprop_input(&self, delta: &Array1<f64>) -> Array1<f64> {
        self.weights.t().dot(delta)
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionNet {
    pub view_names: Vec<String>,
    pub view_layers: Vec<Dense>,
    pub fusion: Dense,
    pub output: Dense,
}

/// Whether a forward pass applies dropout.
pub enum Mode<'a> {
    Eval,
    Train {
        rng: &'a mut ChaCha8Rng,
        retention: f64,
    },
}

/// Intermediate activations kept for backprop.
struct Trace {
    view_pre: Vec<Array1<f64>>,
    view_mask: Vec<Option<Array1<f64>>>,
    concat: Array1<f64>,
    fusion_pre: Array1<f64>,
    fusion_mask: Option<Array1<f64>>,
    fusion_act: Array1<f64>,
    probs: Probs,
}

fn relu(mut v: Array1<f64>) -> Array1<f64> {
    v.mapv_inplace(|x| x.max(0.0));
    v
}

fn dropout_mask(len: usize, rng: &mut ChaCha8Rng, retention: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| {
        if rng.random::<f64>() < retention {
            1.0 / retention
        } else {
            0.0
        }
    })
}

impl FusionNet {
    pub fn view_dims(&self) -> Vec<usize> {
        self.view_layers.iter().map(|l| l.weights.ncols()).collect()
    }

    pub fn per_view_hidden(&self) -> usize {
        self.view_layers[0].bias.len()
    }

    pub fn fusion_hidden(&self) -> usize {
        self.fusion.bias.len()
    }

    pub fn param_count(&self) -> usize {
        self.params().count()
    }

    fn zeros_like(&self) -> FusionNet {
        FusionNet {
            view_names: self.view_names.clone(),
            view_layers: self
                .view_layers
                .iter()
                .map(|l| Dense::zeros(l.weights.ncols(), l.weights.nrows()))
                .collect(),
            fusion: Dense::zeros(self.fusion.weights.ncols(), self.fusion.weights.nrows()),
            output: Dense::zeros(self.output.weights.ncols(), self.output.weights.nrows()),
        }
    }

    /// All parameters in a fixed order: view layers, fusion layer, output layer.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.view_layers
            .iter()
            .flat_map(Dense::params)
            .chain(self.fusion.params())
            .chain(self.output.params())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.view_layers
            .iter_mut()
            .chain([&mut self.fusion, &mut self.output])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.view_layers
            .iter_mut()
            .flat_map(Dense::params_mut)
            .chain(self.fusion.params_mut())
            .chain(self.output.params_mut())
    }

    fn check_inputs(&self, views: &[&[f64]]) -> Result<()> {
        if views.len() != self.view_layers.len() {
            return Err(VeriflowError::DimensionMismatch {
                context: "number of network input views".into(),
                expected: self.view_layers.len(),
                actual: views.len(),
            });
        }
        for ((layer, view), name) in self.view_layers.iter().zip(views).zip(&self.view_names) {
            if layer.weights.ncols() != view.len() {
                return Err(VeriflowError::DimensionMismatch {
                    context: format!("network input {name}"),
                    expected: layer.weights.ncols(),
                    actual: view.len(),
                });
            }
        }
        Ok(())
    }

    fn trace(&self, views: &[&[f64]], mode: &mut Mode<'_>) -> Trace {
        let h = self.per_view_hidden();
        let mut concat = Array1::zeros(h * self.view_layers.len());
        let mut view_pre = Vec::with_capacity(views.len());
        let mut view_mask = Vec::with_capacity(views.len());
        for (v, (layer, x)) in self.view_layers.iter().zip(views).enumerate() {
            let pre = layer.apply(ArrayView1::from(*x));
            let mut act = relu(pre.clone());
            let mask = match mode {
                Mode::Train { rng, retention } if *retention < 1.0 => {
                    let m = dropout_mask(h, rng, *retention);
                    act *= &m;
                    Some(m)
                }
                _ => None,
            };
            concat.slice_mut(ndarray::s![v * h..(v + 1) * h]).assign(&act);
            view_pre.push(pre);
            view_mask.push(mask);
        }
        let fusion_pre = self.fusion.apply(concat.view());
        let mut fusion_act = relu(fusion_pre.clone());
        let fusion_mask = match mode {
            Mode::Train { rng, retention } if *retention < 1.0 => {
                let m = dropout_mask(fusion_act.len(), rng, *retention);
                fusion_act *= &m;
                Some(m)
            }
            _ => None,
        };
        let logits = self.output.apply(fusion_act.view());
        let probs = softmax(&[logits[0], logits[1], logits[2]]);
        Trace {
            view_pre,
            view_mask,
            concat,
            fusion_pre,
            fusion_mask,
            fusion_act,
            probs,
        }
    }

    /// Adds `scale · ∂CE/∂θ` for one example into `grads`.
    fn backward(&self, views: &[&[f64]], trace: &Trace, label: Label, scale: f64, grads: &mut FusionNet) {
        let mut d_logits = Array1::from(trace.probs.to_vec());
        d_logits[label.index()] -= 1.0;
        d_logits *= scale;
        grads.output.accumulate(&d_logits, trace.fusion_act.view());

        let mut d_fusion = self.output.backprop_input(&d_logits);
        if let Some(mask) = &trace.fusion_mask {
            d_fusion *= mask;
        }
        d_fusion
            .iter_mut()
            .zip(&trace.fusion_pre)
            .for_each(|(d, &pre)| if pre <= 0.0 { *d = 0.0 });
        grads.fusion.accumulate(&d_fusion, trace.concat.view());

        let d_concat = self.fusion.backprop_input(&d_fusion);
        let h = self.per_view_hidden();
        for (v, layer_grad) in grads.view_layers.iter_mut().enumerate() {
            let mut d = d_concat.slice(ndarray::s![v * h..(v + 1) * h]).to_owned();
            if let Some(mask) = &trace.view_mask[v] {
                d *= mask;
            }
            d.iter_mut()
                .zip(&trace.view_pre[v])
                .for_each(|(d, &pre)| if pre <= 0.0 { *d = 0.0 });
            layer_grad.accumulate(&d, ArrayView1::from(views[v]));
        }
    }

    /// Text form: a header with the architecture, then every layer's weight
    /// rows followed by its bias row.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "veriflow-fusionnet {} {} {} {}\n",
            self.view_layers.len(),
            self.per_view_hidden(),
            self.fusion_hidden(),
            CLASSES
        );
        for (name, dim) in self.view_names.iter().zip(self.view_dims()) {
            out.push_str(&format!("view {name} {dim}\n"));
        }
        for layer in self.view_layers.iter().chain([&self.fusion, &self.output]) {
            for row in layer.weights.outer_iter() {
                out.push_str(&join_floats(row.iter()));
                out.push('\n');
            }
            out.push_str(&join_floats(layer.bias.iter()));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<FusionNet> {
        let mut lines = text.lines();
        let err = |m: &str| VeriflowError::parse("fusion net", m);
        let header: Vec<&str> = lines.next().unwrap_or_default().split_whitespace().collect();
        if header.len() != 5 || header[0] != "veriflow-fusionnet" {
            return Err(err("bad header"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| VeriflowError::parse("fusion net", e));
        let (n_views, h, f, classes) = (num(header[1])?, num(header[2])?, num(header[3])?, num(header[4])?);
        if classes != CLASSES {
            return Err(err("expected 3 classes"));
        }
        let mut names = Vec::with_capacity(n_views);
        let mut dims = Vec::with_capacity(n_views);
        for _ in 0..n_views {
            let parts: Vec<&str> = lines.next().unwrap_or_default().split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "view" {
                return Err(err("bad view line"));
            }
            names.push(parts[1].to_string());
            dims.push(num(parts[2])?);
        }
        let mut read_layer = |inputs: usize, outputs: usize| -> Result<Dense> {
            let mut layer = Dense::zeros(inputs, outputs);
            for k in 0..outputs {
                let row = parse_floats(lines.next(), inputs, "fusion net weights")?;
                layer.weights.row_mut(k).assign(&Array1::from(row));
            }
            layer.bias = Array1::from(parse_floats(lines.next(), outputs, "fusion net bias")?);
            Ok(layer)
        };
        let view_layers = dims.iter().map(|&d| read_layer(d, h)).collect::<Result<Vec<_>>>()?;
        let fusion = read_layer(h * n_views, f)?;
        let output = read_layer(f, CLASSES)?;
        Ok(FusionNet {
            view_names: names,
            view_layers,
            fusion,
            output,
        })
    }
}

/// Glorot-uniform weights and zero biases, drawn from a stream seeded with `hyper.seed`.
pub fn init_net(views: &[(String, usize)], hyper: &Hyper) -> Result<FusionNet> {
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    init_net_with(views, hyper, &mut rng)
}

fn init_net_with(views: &[(String, usize)], hyper: &Hyper, rng: &mut ChaCha8Rng) -> Result<FusionNet> {
    hyper.check()?;
    if views.is_empty() {
        return Err(VeriflowError::Empty("network view list".into()));
    }
    if let Some((name, _)) = views.iter().find(|(_, d)| *d == 0) {
        return Err(VeriflowError::invalid(format!("view {name} has dimension 0")));
    }
    let view_layers = views
        .iter()
        .map(|(_, d)| Dense::glorot(*d, hyper.per_view_hidden, rng))
        .collect();
    let fusion = Dense::glorot(hyper.per_view_hidden * views.len(), hyper.fusion_hidden, rng);
    let output = Dense::glorot(hyper.fusion_hidden, CLASSES, rng);
    Ok(FusionNet {
        view_names: views.iter().map(|(n, _)| n.clone()).collect(),
        view_layers,
        fusion,
        output,
    })
}

pub fn forward(net: &FusionNet, views: &[&[f64]], mut mode: Mode<'_>) -> Result<Probs> {
    net.check_inputs(views)?;
    Ok(net.trace(views, &mut mode).probs)
}

/// Eval-mode forward pass with inactive views replaced by zero vectors.
pub fn eval_with_mask(net: &FusionNet, views: &[&[f64]], active: &[bool]) -> Result<Probs> {
    if active.len() != views.len() {
        return Err(VeriflowError::DimensionMismatch {
            context: "view mask".into(),
            expected: views.len(),
            actual: active.len(),
        });
    }
    let zeros: Vec<Vec<f64>> = views
        .iter()
        .zip(active)
        .map(|(v, &on)| if on { Vec::new() } else { vec![0.0; v.len()] })
        .collect();
    let inputs: Vec<&[f64]> = views
        .iter()
        .zip(active)
        .zip(&zeros)
        .map(|((v, &on), z)| if on { *v } else { z.as_slice() })
        .collect();
    forward(net, &inputs, Mode::Eval)
}

/// Per-view input matrices (`n × dim_v`) sharing one row order.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewInputs {
    pub names: Vec<String>,
    pub matrices: Vec<Array2<f64>>,
}

impl ViewInputs {
    pub fn new(names: Vec<String>, matrices: Vec<Array2<f64>>) -> Result<Self> {
        if names.len() != matrices.len() || names.is_empty() {
            return Err(VeriflowError::invalid("need one matrix per view name, at least one view"));
        }
        let n = matrices[0].nrows();
        if matrices.iter().any(|m| m.nrows() != n) {
            return Err(VeriflowError::invalid("view matrices disagree on row count"));
        }
        Ok(ViewInputs { names, matrices })
    }

    pub fn len(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shapes(&self) -> Vec<(String, usize)> {
        self.names
            .iter()
            .cloned()
            .zip(self.matrices.iter().map(|m| m.ncols()))
            .collect()
    }

    pub fn example(&self, i: usize) -> Vec<&[f64]> {
        self.matrices
            .iter()
            .map(|m| {
                m.row(i)
                    .to_slice()
                    .expect("standard-layout matrix rows are contiguous")
            })
            .collect()
    }

    /// Copy with inactive views set to zero.
    pub fn masked(&self, active: &[bool]) -> Result<ViewInputs> {
        if active.len() != self.matrices.len() {
            return Err(VeriflowError::DimensionMismatch {
                context: "view mask".into(),
                expected: self.matrices.len(),
                actual: active.len(),
            });
        }
        let matrices = self
            .matrices
            .iter()
            .zip(active)
            .map(|(m, &on)| if on { m.clone() } else { Array2::zeros(m.raw_dim()) })
            .collect();
        Ok(ViewInputs {
            names: self.names.clone(),
            matrices,
        })
    }
}

pub fn predict_all(net: &FusionNet, inputs: &ViewInputs) -> Result<Vec<Probs>> {
    (0..inputs.len())
        .map(|i| forward(net, &inputs.example(i), Mode::Eval))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train: MetricsBundle,
    pub eval: Option<MetricsBundle>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `epoch,loss,mae,mmae,acc,f1,mar[,eval_*]`
    pub fn to_csv(&self) -> String {
        let with_eval = self.records.iter().any(|r| r.eval.is_some());
        let mut out = String::from("epoch,loss,mae,mmae,acc,f1,mar");
        if with_eval {
            out.push_str(",eval_mae,eval_mmae,eval_acc,eval_f1,eval_mar");
        }
        out.push('\n');
        let fields = |m: &MetricsBundle| {
            format!("{},{},{},{},{}", m.mae, m.mmae, m.accuracy, m.macro_f1, m.mar)
        };
        for r in &self.records {
            out.push_str(&format!("{},{},{}", r.epoch, r.loss, fields(&r.train)));
            if let Some(e) = &r.eval {
                out.push(',');
                out.push_str(&fields(e));
            }
            out.push('\n');
        }
        out
    }
}

/// Optional held-out set scored after every epoch.
pub struct EvalSet<'a> {
    pub inputs: &'a ViewInputs,
    pub labels: &'a [Label],
}

fn score(net: &FusionNet, inputs: &ViewInputs, labels: &[Label]) -> Result<MetricsBundle> {
    let predicted: Vec<Label> = predict_all(net, inputs)?.iter().map(argmax_label).collect();
    metrics(&confusion(labels, &predicted)?)
}

/// Shuffled mini-batch SGD for `hyper.epochs` epochs. Initialization,
/// shuffling and dropout all draw from one stream seeded with `hyper.seed`.
pub fn train_net(
    inputs: &ViewInputs,
    labels: &[Label],
    weights: &ClassWeights,
    hyper: &Hyper,
    eval: Option<EvalSet<'_>>,
) -> Result<(FusionNet, TrainingHistory)> {
    hyper.check()?;
    if inputs.is_empty() {
        return Err(VeriflowError::Empty("network training set".into()));
    }
    if labels.len() != inputs.len() {
        return Err(VeriflowError::DimensionMismatch {
            context: "labels vs network inputs".into(),
            expected: inputs.len(),
            actual: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut net = init_net_with(&inputs.shapes(), hyper, &mut rng)?;
    let mut grads = net.zeros_like();
    let mut velocity = (hyper.momentum > 0.0).then(|| net.zeros_like());
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = TrainingHistory::default();

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let example = inputs.example(i);
                let w = weights.get(labels[i]);
                let trace = net.trace(
                    &example,
                    &mut Mode::Train {
                        rng: &mut rng,
                        retention: hyper.dropout_retention,
                    },
                );
                let loss = -w * trace.probs[labels[i].index()].ln();
                if !loss.is_finite() {
                    return Err(VeriflowError::Training {
                        context: format!("fusion net epoch {epoch}"),
                        message: format!("non-finite loss on example {i}"),
                    });
                }
                epoch_loss += loss;
                net.backward(&example, &trace, labels[i], w * scale, &mut grads);
            }
            apply_update(&mut net, &mut grads, velocity.as_mut(), hyper);
        }
        let train = score(&net, inputs, labels)?;
        let eval = match &eval {
            Some(set) => Some(score(&net, set.inputs, set.labels)?),
            None => None,
        };
        history.records.push(EpochRecord {
            epoch,
            loss: epoch_loss / inputs.len() as f64,
            train,
            eval,
        });
    }
    Ok((net, history))
}

fn apply_update(net: &mut FusionNet, grads: &mut FusionNet, velocity: Option<&mut FusionNet>, hyper: &Hyper) {
    let lr = hyper.learning_rate;
    match velocity {
        None => {
            for (p, g) in net.layers_mut().zip(grads.layers_mut()) {
                p.weights.scaled_add(-lr, &g.weights);
                p.bias.scaled_add(-lr, &g.bias);
                g.weights.fill(0.0);
                g.bias.fill(0.0);
            }
        }
        Some(velocity) => {
            for ((p, g), v) in net.layers_mut().zip(grads.layers_mut()).zip(velocity.layers_mut()) {
                v.weights.zip_mut_with(&g.weights, |v, g| *v = hyper.momentum * *v - lr * g);
                v.bias.zip_mut_with(&g.bias, |v, g| *v = hyper.momentum * *v - lr * g);
                p.weights += &v.weights;
                p.bias += &v.bias;
                g.weights.fill(0.0);
                g.bias.fill(0.0);
            }
        }
    }
}

/// One training example: per-view vectors plus its label.
pub type Example = (Vec<Vec<f64>>, Label);

/// Mean class-weighted cross-entropy over `batch` and its gradient, no dropout.
pub fn batch_gradient(net: &FusionNet, batch: &[Example], weights: &ClassWeights) -> Result<(f64, FusionNet)> {
    if batch.is_empty() {
        return Err(VeriflowError::Empty("gradient batch".into()));
    }
    let mut grads = net.zeros_like();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (views, label) in batch {
        let refs: Vec<&[f64]> = views.iter().map(Vec::as_slice).collect();
        net.check_inputs(&refs)?;
        let trace = net.trace(&refs, &mut Mode::Eval);
        let w = weights.get(*label);
        loss -= w * scale * trace.probs[label.index()].ln();
        net.backward(&refs, &trace, *label, w * scale, &mut grads);
    }
    Ok((loss, grads))
}

/// Largest relative gap between backprop and central finite differences
/// (step 1e-5) over every parameter. Relative error uses
/// `max(|analytic|, |numeric|, 1e-6)` as the denominator.
pub fn check_gradients(net: &FusionNet, batch: &[Example], weights: &ClassWeights) -> Result<f64> {
    let (_, grads) = batch_gradient(net, batch, weights)?;
    let analytic: Vec<f64> = grads.params().copied().collect();
    let h = 1e-5;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (k, &g) in analytic.iter().enumerate() {
        let original = *probe.params_mut().nth(k).expect("parameter index in range");
        *probe.params_mut().nth(k).unwrap() = original + h;
        let up = batch_gradient(&probe, batch, weights)?.0;
        *probe.params_mut().nth(k).unwrap() = original - h;
        let down = batch_gradient(&probe, batch, weights)?.0;
        *probe.params_mut().nth(k).unwrap() = original;
        let numeric = (up - down) / (2.0 * h);
        let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_hyper(seed: u64) -> Hyper {
        Hyper {
            per_view_hidden: 4,
            fusion_hidden: 8,
            dropout_retention: 1.0,
            seed,
            ..Hyper::default()
        }
    }

    fn random_batch(dims: &[usize], n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let views = dims
                    .iter()
                    .map(|&d| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect())
                    .collect();
                (views, Label::ALL[i % 3])
            })
            .collect()
    }

    fn named(dims: &[usize]) -> Vec<(String, usize)> {
        dims.iter().enumerate().map(|(i, &d)| (format!("v{i}"), d)).collect()
    }

    #[test]
    fn default_architecture_shapes() {
        let dims = [72, 1500, 768, 6373, 600];
        let net = init_net(&named(&dims), &Hyper::default()).unwrap();
        assert_eq!(net.view_dims(), dims);
        assert!(net.view_layers.iter().all(|l| l.weights.nrows() == 16));
        assert_eq!(net.fusion.weights.dim(), (32, 80));
        assert_eq!(net.output.weights.dim(), (3, 32));
    }

    #[test]
    fn one_scalar_view_parameter_count() {
        let net = init_net(&named(&[1]), &Hyper::default()).unwrap();
        assert_eq!(net.param_count(), 16 + 16 + 16 * 32 + 32 + 32 * 3 + 3);
        assert_eq!(net.param_count(), 675);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = init_net(&named(&[5, 3]), &Hyper::default()).unwrap();
        let b = init_net(&named(&[5, 3]), &Hyper::default()).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / 21.0).sqrt();
        assert!(a.view_layers[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(a.fusion.bias.iter().all(|&b| b == 0.0));
        assert!(init_net(&[], &Hyper::default()).is_err());
    }

    #[test]
    fn zero_net_outputs_uniform() {
        let mut net = init_net(&named(&[3, 2]), &Hyper::default()).unwrap();
        net.params_mut().for_each(|p| *p = 0.0);
        let p = forward(&net, &[&[1.0, 2.0, 3.0], &[-4.0, 5.0]], Mode::Eval).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn eval_mode_ignores_rng_and_train_mode_uses_it() {
        let net = init_net(&named(&[4, 4]), &Hyper::default()).unwrap();
        let x: [&[f64]; 2] = [&[0.5, -1.0, 2.0, 0.1], &[1.0, 1.0, -0.3, 0.7]];
        let a = forward(&net, &x, Mode::Eval).unwrap();
        let b = forward(&net, &x, Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = forward(&net, &x, Mode::Train { rng: &mut rng, retention: 0.5 }).unwrap();
        assert!(t.iter().all(|&v| v >= 0.0));
        assert!(forward(&net, &[&[1.0]], Mode::Eval).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..4 {
            let dims = [3, 5];
            let net = init_net(&named(&dims), &small_hyper(seed)).unwrap();
            let batch = random_batch(&dims, 4, seed + 50);
            let err = check_gradients(&net, &batch, &ClassWeights([0.8, 1.3, 1.0])).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zero_output_layer_blocks_hidden_gradients() {
        let dims = [3, 2];
        let mut net = init_net(&named(&dims), &small_hyper(2)).unwrap();
        net.output.weights.fill(0.0);
        let batch = random_batch(&dims, 3, 9);
        let (_, g) = batch_gradient(&net, &batch, &ClassWeights::uniform()).unwrap();
        assert!(g.view_layers.iter().flat_map(|l| l.params()).all(|&v| v == 0.0));
        assert!(g.fusion.params().all(|&v| v == 0.0));
        assert!(g.output.bias.iter().any(|&v| v != 0.0));
        assert!(g.output.weights.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn unit_weights_equal_unweighted_gradient() {
        let dims = [2, 2];
        let net = init_net(&named(&dims), &small_hyper(3)).unwrap();
        let batch = random_batch(&dims, 5, 1);
        let (la, ga) = batch_gradient(&net, &batch, &ClassWeights::uniform()).unwrap();
        let (lb, gb) = batch_gradient(&net, &batch, &ClassWeights([1.0, 1.0, 1.0])).unwrap();
        assert_eq!(la, lb);
        assert_eq!(ga, gb);
    }

    #[test]
    fn duplicated_batch_keeps_gradient() {
        let dims = [3, 2];
        let net = init_net(&named(&dims), &small_hyper(5)).unwrap();
        let batch = random_batch(&dims, 6, 4);
        let doubled: Vec<Example> = batch.iter().chain(batch.iter()).cloned().collect();
        let w = ClassWeights([0.7, 1.4, 1.0]);
        let (_, a) = batch_gradient(&net, &batch, &w).unwrap();
        let (_, b) = batch_gradient(&net, &doubled, &w).unwrap();
        for (x, y) in a.params().zip(b.params()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn mask_semantics() {
        let net = init_net(&named(&[3, 2]), &Hyper::default()).unwrap();
        let a = [0.3, -0.2, 1.0];
        let b = [2.0, -1.0];
        let full = eval_with_mask(&net, &[&a, &b], &[true, true]).unwrap();
        assert_eq!(full, forward(&net, &[&a, &b], Mode::Eval).unwrap());
        let masked = eval_with_mask(&net, &[&a, &b], &[true, false]).unwrap();
        let other = eval_with_mask(&net, &[&a, &[9.0, 9.0]], &[true, false]).unwrap();
        assert_eq!(masked, other);
        let none = eval_with_mask(&net, &[&a, &b], &[false, false]).unwrap();
        let zero = forward(&net, &[&[0.0; 3], &[0.0; 2]], Mode::Eval).unwrap();
        assert_eq!(none, zero);
        assert!(eval_with_mask(&net, &[&a, &b], &[true]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let net = init_net(&named(&[3, 2]), &small_hyper(8)).unwrap();
        assert_eq!(FusionNet::from_text(&net.to_text()).unwrap(), net);
    }

    #[test]
    fn history_has_one_row_per_epoch() {
        let batch = random_batch(&[2, 3], 12, 3);
        let m0 = Array2::from_shape_fn((12, 2), |(i, j)| batch[i].0[0][j]);
        let m1 = Array2::from_shape_fn((12, 3), |(i, j)| batch[i].0[1][j]);
        let inputs = ViewInputs::new(vec!["a".into(), "b".into()], vec![m0, m1]).unwrap();
        let labels: Vec<Label> = batch.iter().map(|(_, l)| *l).collect();
        let hyper = Hyper { epochs: 7, ..Hyper::default() };
        let (_, history) = train_net(&inputs, &labels, &ClassWeights::uniform(), &hyper, None).unwrap();
        assert_eq!(history.len(), 7);
        let csv = history.to_csv();
        assert!(csv.starts_with("epoch,loss,mae,mmae,acc,f1,mar\n"));
        assert_eq!(csv.lines().count(), 8);
        let (_, again) = train_net(&inputs, &labels, &ClassWeights::uniform(), &hyper, None).unwrap();
        assert_eq!(history, again);
    }
}
