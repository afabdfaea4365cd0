//! Trainable model families behind one interface, so cross-validation,
//! stacking and the runner can treat them alike.

use crate::corpus::{ClassWeights, Dataset, Label, FoldSpec};
use crate::error::{Result, VeriflowError};
use crate::fusion::{avg_probabilities, stack_predict, stack_train, MetaOptions, StackedModel};
use crate::linmodel::{train_logreg, LinearModel, OptConfig};
use crate::neurofusion::{predict_all, train_net, EvalSet, FusionNet, Hyper, TrainingHistory, ViewInputs};
use crate::pipeline::{FittedPipeline, ViewPipeline, ViewSource};
use crate::Probs;

/// Something that can be fitted on a set of claims.
pub trait Learner: Send + Sync {
    fn name(&self) -> String;

    fn fit(&self, dataset: &Dataset, train_ids: &[String]) -> Result<Box<dyn Predictor>>;

    fn fit_predict(&self, dataset: &Dataset, train_ids: &[String], eval_ids: &[String]) -> Result<Vec<Probs>> {
        self.fit(dataset, train_ids)?.predict(dataset, eval_ids)
    }
}

pub trait Predictor: Send + Sync {
    fn predict(&self, dataset: &Dataset, ids: &[String]) -> Result<Vec<Probs>>;
}

/// `N / (3 · n_c)` over the classes present; absent classes get weight 1
/// (they contribute no examples).
pub fn balanced_weights(labels: &[Label]) -> ClassWeights {
    let mut counts = [0usize; 3];
    labels.iter().for_each(|l| counts[l.index()] += 1);
    let n = labels.len() as f64;
    ClassWeights(counts.map(|c| if c == 0 { 1.0 } else { n / (3.0 * c as f64) }))
}

/// Multinomial LR over one view or several concatenated views.
#[derive(Debug, Clone, PartialEq)]
pub struct LogregLearner {
    pub inputs: Vec<ViewSource>,
    pub l2: f64,
    pub class_weighted: bool,
    pub standardize: bool,
    pub opt: OptConfig,
    pub seed: u64,
}

impl LogregLearner {
    pub fn new(inputs: Vec<ViewSource>, l2: f64, seed: u64) -> Self {
        LogregLearner {
            inputs,
            l2,
            class_weighted: true,
            standardize: true,
            opt: OptConfig::default(),
            seed,
        }
    }

    pub fn fit_logreg(&self, dataset: &Dataset, train_ids: &[String]) -> Result<FittedLogreg> {
        let pipeline = ViewPipeline {
            sources: self.inputs.clone(),
            standardize: self.standardize,
        }
        .fit(dataset, train_ids)?;
        let x = pipeline.transform_concat(dataset, train_ids)?;
        let labels = dataset.labels(train_ids)?;
        let weights = if self.class_weighted {
            balanced_weights(&labels)
        } else {
            ClassWeights::uniform()
        };
        let model = train_logreg(x.view(), &labels, &weights, self.l2, &self.opt, self.seed)?;
        Ok(FittedLogreg { pipeline, model })
    }
}

impl Learner for LogregLearner {
    fn name(&self) -> String {
        let names: Vec<&str> = self.inputs.iter().map(ViewSource::name).collect();
        format!("lr[{}] l2={}", names.join("+"), self.l2)
    }

    fn fit(&self, dataset: &Dataset, train_ids: &[String]) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(self.fit_logreg(dataset, train_ids)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedLogreg {
    pub pipeline: FittedPipeline,
    pub model: LinearModel,
}

impl Predictor for FittedLogreg {
    fn predict(&self, dataset: &Dataset, ids: &[String]) -> Result<Vec<Probs>> {
        let x = self.pipeline.transform_concat(dataset, ids)?;
        self.model.predict_proba_rows(x.view())
    }
}

/// Predicts the same distribution for every claim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLearner(pub Probs);

impl Learner for ConstantLearner {
    fn name(&self) -> String {
        format!("constant{:?}", self.0)
    }

    fn fit(&self, _dataset: &Dataset, _train_ids: &[String]) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(*self))
    }
}

impl Predictor for ConstantLearner {
    fn predict(&self, _dataset: &Dataset, ids: &[String]) -> Result<Vec<Probs>> {
        Ok(vec![self.0; ids.len()])
    }
}

/// Arithmetic mean of the base models' class probabilities.
pub struct ProbAvgLearner {
    pub bases: Vec<Box<dyn Learner>>,
}

impl Learner for ProbAvgLearner {
    fn name(&self) -> String {
        format!("prob_avg[{}]", self.bases.len())
    }

    fn fit(&self, dataset: &Dataset, train_ids: &[String]) -> Result<Box<dyn Predictor>> {
        if self.bases.is_empty() {
            return Err(VeriflowError::Empty("probability-average bases".into()));
        }
        let fitted = self
            .bases
            .iter()
            .map(|b| b.fit(dataset, train_ids))
            .collect::<Result<Vec<_>>>()?;
        Ok(Box::new(FittedProbAvg(fitted)))
    }
}

struct FittedProbAvg(Vec<Box<dyn Predictor>>);

impl Predictor for FittedProbAvg {
    fn predict(&self, dataset: &Dataset, ids: &[String]) -> Result<Vec<Probs>> {
        let per_base = self
            .0
            .iter()
            .map(|p| p.predict(dataset, ids))
            .collect::<Result<Vec<_>>>()?;
        (0..ids.len())
            .map(|i| {
                let row: Vec<Probs> = per_base.iter().map(|b| b[i]).collect();
                avg_probabilities(&row)
            })
            .collect()
    }
}

/// The multi-input network. Inactive views are zeroed at the network input
/// during both training and prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct NetLearner {
    pub inputs: Vec<ViewSource>,
    pub active: Vec<bool>,
    pub hyper: Hyper,
    pub standardize: bool,
}

impl NetLearner {
    pub fn new(inputs: Vec<ViewSource>, hyper: Hyper) -> Self {
        let active = vec![true; inputs.len()];
        NetLearner {
            inputs,
            active,
            hyper,
            standardize: true,
        }
    }

    pub fn with_mask(mut self, active: Vec<bool>) -> Self {
        self.active = active;
        self
    }

    fn view_inputs(&self, pipeline: &FittedPipeline, dataset: &Dataset, ids: &[String]) -> Result<ViewInputs> {
        ViewInputs::new(pipeline.names(), pipeline.transform(dataset, ids)?)?.masked(&self.active)
    }

    /// Trains and returns the per-epoch history, scoring `eval_ids` each epoch when given.
    pub fn fit_net(
        &self,
        dataset: &Dataset,
        train_ids: &[String],
        eval_ids: Option<&[String]>,
    ) -> Result<(FittedNet, TrainingHistory)> {
        if self.active.len() != self.inputs.len() {
            return Err(VeriflowError::DimensionMismatch {
                context: "view mask".into(),
                expected: self.inputs.len(),
                actual: self.active.len(),
            });
        }
        let pipeline = ViewPipeline {
            sources: self.inputs.clone(),
            standardize: self.standardize,
        }
        .fit(dataset, train_ids)?;
        let inputs = self.view_inputs(&pipeline, dataset, train_ids)?;
        let labels = dataset.labels(train_ids)?;
        let weights = balanced_weights(&labels);
        let eval_data = match eval_ids {
            Some(ids) => Some((self.view_inputs(&pipeline, dataset, ids)?, dataset.labels(ids)?)),
            None => None,
        };
        let eval = eval_data.as_ref().map(|(inputs, labels)| EvalSet {
            inputs,
            labels,
        });
        let (net, history) = train_net(&inputs, &labels, &weights, &self.hyper, eval)?;
        Ok((
            FittedNet {
                pipeline,
                net,
                active: self.active.clone(),
            },
            history,
        ))
    }
}

impl Learner for NetLearner {
    fn name(&self) -> String {
        let names: Vec<String> = self
            .inputs
            .iter()
            .zip(&self.active)
            .map(|(s, &on)| if on { s.to_string() } else { format!("-{s}") })
            .collect();
        format!("net[{}] seed={}", names.join(","), self.hyper.seed)
    }

    fn fit(&self, dataset: &Dataset, train_ids: &[String]) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(self.fit_net(dataset, train_ids, None)?.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedNet {
    pub pipeline: FittedPipeline,
    pub net: FusionNet,
    pub active: Vec<bool>,
}

impl Predictor for FittedNet {
    fn predict(&self, dataset: &Dataset, ids: &[String]) -> Result<Vec<Probs>> {
        let inputs = ViewInputs::new(self.pipeline.names(), self.pipeline.transform(dataset, ids)?)?
            .masked(&self.active)?;
        predict_all(&self.net, &inputs)
    }
}

/// Stacked ensemble with leave-one-debate-out posterior recording inside the
/// training claims it is given.
pub struct StackLearner {
    pub bases: Vec<Box<dyn Learner>>,
    pub meta_grid: Vec<f64>,
    pub meta: MetaOptions,
}

impl StackLearner {
    pub fn fit_stack(&self, dataset: &Dataset, train_ids: &[String]) -> Result<StackedModel> {
        let items = train_ids
            .iter()
            .map(|id| dataset.claim_ref(id).map(|c| (id.clone(), c.debate_id.clone())))
            .collect::<Result<Vec<_>>>()?;
        let folds = FoldSpec::leave_one_group_out(&items)?;
        let bases: Vec<&dyn Learner> = self.bases.iter().map(|b| b.as_ref()).collect();
        stack_train(&bases, dataset, &folds, &self.meta_grid, &self.meta)
    }
}

impl Learner for StackLearner {
    fn name(&self) -> String {
        format!("stacked[{}]", self.bases.len())
    }

    fn fit(&self, dataset: &Dataset, train_ids: &[String]) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(self.fit_stack(dataset, train_ids)?))
    }
}

impl Predictor for StackedModel {
    fn predict(&self, dataset: &Dataset, ids: &[String]) -> Result<Vec<Probs>> {
        stack_predict(self, dataset, ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_weights_tolerate_absent_classes() {
        let w = balanced_weights(&[Label::False, Label::False, Label::True]);
        assert_eq!(w.0, [0.5, 1.0, 1.0]);
        let full = balanced_weights(&[Label::False, Label::HalfTrue, Label::True, Label::True]);
        assert_eq!(full.0, crate::corpus::class_weights(&[Label::False, Label::HalfTrue, Label::True, Label::True]).unwrap().0);
    }
}
