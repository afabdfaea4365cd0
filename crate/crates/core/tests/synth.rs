mod common;

use common::normal_cdf;
use veriflow::corpus::{validate, Coverage, SynthSpec, SynthTruth, SynthView};
use veriflow::{Dataset, Label, Split};

/// Bayes-rule accuracy (percent) of the generator on its own sample, using
/// the true class means, identity covariance and the class prior.
fn bayes_accuracy(ds: &Dataset, truth: &SynthTruth, views: &[usize]) -> f64 {
    let mut hits = 0;
    for claim in ds.claims() {
        let score = |c: usize| {
            let mut log_lik = truth.class_prior[c].ln();
            for &v in views {
                let x = &ds.views()[v].rows[&claim.claim_id];
                log_lik -= 0.5 * x.iter().zip(&truth.class_means[v][c]).map(|(a, m)| (a - m).powi(2)).sum::<f64>();
            }
            log_lik
        };
        let best = (0..3).max_by(|&a, &b| score(a).total_cmp(&score(b))).unwrap();
        if Label::ALL[best] == claim.label {
            hits += 1;
        }
    }
    100.0 * hits as f64 / ds.claims().len() as f64
}

/// Equal priors, adjacent class means a distance `s` apart along one line.
fn closed_form(signals: &[f64]) -> f64 {
    let s = signals.iter().map(|x| x * x).sum::<f64>().sqrt();
    100.0 * (4.0 * normal_cdf(s / 2.0) - 1.0) / 3.0
}

fn spec(signals: &[f64], n: usize, seed: u64) -> SynthSpec {
    let views = signals
        .iter()
        .enumerate()
        .map(|(i, &s)| SynthView::new(format!("view{i}"), 6, s))
        .collect();
    SynthSpec::new(n, 5, views, seed)
}

#[test]
fn bayes_accuracy_matches_the_closed_form() {
    let signals = [0.8; 5];
    let (ds, truth) = spec(&signals, 9000, 1).generate().unwrap();
    let fused = bayes_accuracy(&ds, &truth, &[0, 1, 2, 3, 4]);
    let single = bayes_accuracy(&ds, &truth, &[2]);
    // ≈ 75.3 and 54.1; sampling error on 9000 draws is about half a point.
    assert!((fused - closed_form(&signals)).abs() < 2.0, "fused {fused}");
    assert!((single - closed_form(&[0.8])).abs() < 2.0, "single {single}");
    assert!(fused - single >= 15.0);
}

#[test]
fn zero_signal_is_chance() {
    let (ds, truth) = spec(&[0.0, 0.0], 6000, 2).generate().unwrap();
    let acc = bayes_accuracy(&ds, &truth, &[0, 1]);
    assert!((acc - 100.0 / 3.0).abs() < 2.5, "{acc}");
    assert!((closed_form(&[0.0]) - 100.0 / 3.0).abs() < 1e-12);
}

#[test]
fn class_means_are_spaced_by_the_signal() {
    let (_, truth) = spec(&[0.3, 1.7], 30, 3).generate().unwrap();
    for (v, s) in [0.3, 1.7].iter().enumerate() {
        let [lo, mid, hi] = &truth.class_means[v];
        assert!(mid.iter().all(|m| *m == 0.0));
        let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!((gap(lo, mid) - s).abs() < 1e-12);
        assert!((gap(hi, mid) - s).abs() < 1e-12);
    }
}

#[test]
fn every_debate_has_train_and_test_claims() {
    let (ds, _) = spec(&[1.0], 600, 4).generate().unwrap();
    assert!(validate(&ds, Coverage::Strict).is_empty());
    let train = ds.split_ids(Split::Train).len();
    assert_eq!(train, 400);
    for d in 0..5 {
        let debate = format!("debate-{d:02}");
        let splits: Vec<Split> = ds.claims().iter().filter(|c| c.debate_id == debate).map(|c| c.split).collect();
        assert!(splits.contains(&Split::Train) && splits.contains(&Split::Test));
    }
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(spec(&[1.0], 1, 0).generate().is_err());
    assert!(spec(&[-1.0], 30, 0).generate().is_err());
    assert!(SynthSpec::new(30, 1, vec![], 0).generate().is_err());
    assert!(spec(&[1.0], 30, 0).with_text_signal(1.5).generate().is_err());
}
