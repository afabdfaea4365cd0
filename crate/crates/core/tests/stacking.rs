use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use veriflow::corpus::{loo_debate_folds, SynthSpec, SynthView};
use veriflow::fusion::{audit_no_leakage, stack_predict, stack_train, MetaOptions};
use veriflow::models::{ConstantLearner, Learner, LogregLearner, Predictor};
use veriflow::pipeline::ViewSource;
use veriflow::{argmax_label, Dataset, Label, Probs, Result, Split};

fn dataset(signal: f64) -> Dataset {
    SynthSpec::new(
        150,
        3,
        vec![SynthView::new("a", 4, signal), SynthView::new("b", 3, signal)],
        31,
    )
    .generate()
    .unwrap()
    .0
}

fn lr(view: &str) -> LogregLearner {
    LogregLearner::new(vec![ViewSource::Dense(view.into())], 1.0, 0)
}

/// Records every fit: how many, and which claims were trained on and predicted.
struct Spy<L> {
    inner: L,
    fits: AtomicUsize,
    fold_calls: Mutex<Vec<(Vec<String>, Vec<String>)>>,
}

impl<L> Spy<L> {
    fn new(inner: L) -> Self {
        Spy {
            inner,
            fits: AtomicUsize::new(0),
            fold_calls: Mutex::new(Vec::new()),
        }
    }
}

impl<L: Learner> Learner for Spy<L> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn fit(&self, dataset: &Dataset, train_ids: &[String]) -> Result<Box<dyn Predictor>> {
        self.fits.fetch_add(1, Ordering::SeqCst);
        self.inner.fit(dataset, train_ids)
    }

    fn fit_predict(&self, dataset: &Dataset, train_ids: &[String], eval_ids: &[String]) -> Result<Vec<Probs>> {
        self.fold_calls
            .lock()
            .unwrap()
            .push((train_ids.to_vec(), eval_ids.to_vec()));
        self.fit(dataset, train_ids)?.predict(dataset, eval_ids)
    }
}

#[test]
fn each_base_is_fitted_once_per_fold_plus_once() {
    let ds = dataset(1.0);
    let folds = loo_debate_folds(&ds).unwrap();
    assert_eq!(folds.len(), 3);
    let a = Spy::new(lr("a"));
    let b = Spy::new(lr("b"));
    let model = stack_train(&[&a, &b], &ds, &folds, &[0.1, 1.0], &MetaOptions::default()).unwrap();
    assert_eq!(a.fits.load(Ordering::SeqCst), 4);
    assert_eq!(b.fits.load(Ordering::SeqCst), 4);
    assert_eq!(model.base_fit_counts, [4, 4]);
    assert_eq!(model.meta_input_dim(), 6);
    assert_eq!(model.meta_leaderboard.len(), 2);
}

#[test]
fn out_of_fold_records_cover_each_claim_once_per_base() {
    let ds = dataset(1.0);
    let folds = loo_debate_folds(&ds).unwrap();
    let model = stack_train(&[&lr("a"), &lr("b")], &ds, &folds, &[1.0], &MetaOptions::default()).unwrap();
    let train: BTreeSet<String> = ds.split_ids(Split::Train).into_iter().collect();
    let recorded: BTreeSet<String> = model.oof_records.keys().cloned().collect();
    assert_eq!(recorded, train);
    for record in model.oof_records.values() {
        assert_eq!(record.probs.len(), 2);
        for p in &record.probs {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
    let csv = model.oof_csv();
    assert_eq!(csv.lines().count(), 1 + 2 * train.len());
}

#[test]
fn no_posterior_comes_from_a_model_that_saw_its_debate() {
    let ds = dataset(1.0);
    let folds = loo_debate_folds(&ds).unwrap();
    let a = Spy::new(lr("a"));
    let b = Spy::new(lr("b"));
    let model = stack_train(&[&a, &b], &ds, &folds, &[1.0], &MetaOptions::default()).unwrap();
    let n_train = ds.split_ids(Split::Train).len();
    assert_eq!(audit_no_leakage(&model, &ds).unwrap(), 2 * n_train);

    // Independently of the model's own bookkeeping: every claim a base
    // predicted during the fold stage was unseen, and so was its debate.
    let debate: HashMap<&str, &str> = ds
        .claims()
        .iter()
        .map(|c| (c.claim_id.as_str(), c.debate_id.as_str()))
        .collect();
    for spy in [&a, &b] {
        let calls = spy.fold_calls.lock().unwrap();
        assert_eq!(calls.len(), 3);
        let mut predicted = BTreeSet::new();
        for (train_ids, eval_ids) in calls.iter() {
            let seen: BTreeSet<&str> = train_ids.iter().map(|id| debate[id.as_str()]).collect();
            for id in eval_ids {
                assert!(!seen.contains(debate[id.as_str()]), "{id} predicted by a model trained on its debate");
                assert!(predicted.insert(id.clone()));
            }
        }
        assert_eq!(predicted.len(), n_train);
    }
}

#[test]
fn constant_base_reduces_to_the_majority_class() {
    let ds = dataset(1.0);
    let folds = loo_debate_folds(&ds).unwrap();
    let train = ds.split_ids(Split::Train);
    let counts = ds.class_counts(Split::Train);
    let majority = Label::ALL[(0..3).max_by_key(|&c| counts[c]).unwrap()];
    assert!(counts.iter().filter(|&&n| n == counts[majority.index()]).count() == 1);

    let base = ConstantLearner([0.2, 0.5, 0.3]);
    let opts = MetaOptions {
        class_weighted: false,
        ..MetaOptions::default()
    };
    let model = stack_train(&[&base], &ds, &folds, &[0.01, 1.0], &opts).unwrap();
    let probs = stack_predict(&model, &ds, &train).unwrap();
    assert!(probs.iter().all(|p| argmax_label(p) == majority));
    let prior = counts.map(|n| n as f64 / train.len() as f64);
    for p in &probs {
        for c in 0..3 {
            assert!((p[c] - prior[c]).abs() < 0.05, "{p:?} vs {prior:?}");
        }
    }
}

#[test]
fn single_informative_base_is_echoed_by_the_meta() {
    let ds = dataset(4.0);
    let folds = loo_debate_folds(&ds).unwrap();
    let train = ds.split_ids(Split::Train);
    // Weak penalty, so the base posteriors are close to one-hot.
    let base = LogregLearner::new(vec![ViewSource::Dense("a".into())], 1e-3, 0);
    let model = stack_train(&[&base], &ds, &folds, &[1e-3, 1e-2, 1e-1, 1.0], &MetaOptions::default()).unwrap();
    let stacked = stack_predict(&model, &ds, &train).unwrap();
    let direct = model.bases[0].predict(&ds, &train).unwrap();
    let agree = stacked
        .iter()
        .zip(&direct)
        .filter(|(s, d)| argmax_label(s) == argmax_label(d))
        .count();
    let share = agree as f64 / train.len() as f64;
    assert!(share >= 0.95, "argmax agreement {share}");
}

#[test]
fn stacking_needs_two_debates_and_a_base() {
    let ds = dataset(1.0);
    let folds = loo_debate_folds(&ds).unwrap();
    assert!(stack_train(&[], &ds, &folds, &[1.0], &MetaOptions::default()).is_err());
    assert!(stack_train(&[&lr("a")], &ds, &folds, &[], &MetaOptions::default()).is_err());
    let one = veriflow::FoldSpec {
        folds: folds.folds[..1].to_vec(),
    };
    assert!(stack_train(&[&lr("a")], &ds, &one, &[1.0], &MetaOptions::default()).is_err());
}
