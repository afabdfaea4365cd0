mod common;

use std::collections::{BTreeSet, HashSet};
use std::fs;

use common::{fixture, fixture_dataset};
use proptest::prelude::*;
use veriflow::corpus::{
    class_weights, load_claims, load_dataset, load_view, loo_debate_folds, validate, write_claims, write_view,
    AudioSpan, Coverage, Severity,
};
use veriflow::{Claim, Dataset, FeatureView, FoldSpec, Label, Split, VeriflowError};

#[test]
fn fixture_has_the_corpus_shape() {
    let ds = fixture_dataset();
    let train = ds.split_ids(Split::Train);
    let test = ds.split_ids(Split::Test);
    assert_eq!(train.len(), 94);
    assert_eq!(test.len(), 192);
    assert_eq!(ds.class_counts(Split::Train), [48, 24, 22]);
    assert_eq!(ds.class_counts(Split::Test), [82, 39, 71]);

    let debates = |split| {
        ds.claims()
            .iter()
            .filter(|c| c.split == split)
            .map(|c| c.debate_id.clone())
            .collect::<BTreeSet<_>>()
    };
    assert_eq!(debates(Split::Train).len(), 3);
    assert_eq!(debates(Split::Test).len(), 7);
    assert!(debates(Split::Train).is_disjoint(&debates(Split::Test)));
    assert_eq!(ds.roster().len(), 8);
    assert!(validate(&ds, Coverage::Strict).is_empty());
}

#[test]
fn fixture_folds_leave_out_each_debate() {
    let ds = fixture_dataset();
    let folds = loo_debate_folds(&ds).unwrap();
    assert_eq!(folds.len(), 3);
    let sizes: Vec<usize> = folds.folds.iter().map(|f| f.heldout_ids.len()).collect();
    assert_eq!(sizes, [30, 32, 32]);
    for fold in &folds.folds {
        assert_eq!(fold.train_ids.len() + fold.heldout_ids.len(), 94);
        for id in &fold.heldout_ids {
            assert_eq!(ds.claim(id).unwrap().debate_id, fold.held_out_debate);
        }
        for id in &fold.train_ids {
            assert_ne!(ds.claim(id).unwrap().debate_id, fold.held_out_debate);
        }
    }
}

#[test]
fn fixture_weights_have_mean_one() {
    let ds = fixture_dataset();
    let labels = ds.labels(&ds.split_ids(Split::Train)).unwrap();
    let w = class_weights(&labels).unwrap();
    // 94 / (3 · n_c)
    let expected = [94.0 / 144.0, 94.0 / 72.0, 94.0 / 66.0];
    for (a, b) in w.0.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
    let mean: f64 = w.for_labels(&labels).iter().sum::<f64>() / labels.len() as f64;
    assert!((mean - 1.0).abs() < 1e-12);
}

#[test]
fn single_claim_file_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.jsonl");
    fs::write(
        &path,
        r#"{"claim_id":"c1","debate_id":"d1","speaker":"s","text":"We cut taxes.","label":"false","split":"train"}"#,
    )
    .unwrap();
    let ds = load_dataset(&path, &[]).unwrap();
    assert_eq!(ds.claims().len(), 1);
    assert_eq!(ds.claims()[0].label, Label::False);
    assert!(ds.claims()[0].audio_span.is_none());
    assert_eq!(ds.roster(), ["s".to_string()]);
}

#[test]
fn unknown_label_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    fs::write(
        &path,
        r#"{"claim_id":"c1","debate_id":"d1","speaker":"s","text":"x","label":"mostly-true","split":"train"}"#,
    )
    .unwrap();
    assert!(load_claims(&path).is_err());
}

#[test]
fn strict_load_rejects_missing_view_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut view = load_view(&fixture("ivector_stub.json")).unwrap();
    let dropped = view.rows.keys().next().unwrap().clone();
    view.rows.remove(&dropped);
    let manifest = dir.path().join("ivector_partial.json");
    write_view(&view, &manifest).unwrap();
    let err = load_dataset(&fixture("claims.jsonl"), &[manifest]).unwrap_err();
    assert!(matches!(err, VeriflowError::Validation(_)));
}

#[test]
fn validation_reports_each_broken_invariant() {
    let mut claims = fixture_dataset().claims().to_vec();
    claims[1].claim_id = claims[0].claim_id.clone();
    claims[2].text.clear();
    claims[3].audio_span = Some(AudioSpan { start_s: 5.0, end_s: 2.0 });
    let mut view = FeatureView::new("v", 1);
    view.rows.insert(claims[4].claim_id.clone(), vec![f64::NAN]);
    let ds = Dataset::new(claims, vec![view]);
    let report = validate(&ds, Coverage::Lenient);
    let errors: Vec<String> = report
        .findings
        .iter()
        .filter(|f| f.severity == Severity::Error)
        .map(|f| f.message.clone())
        .collect();
    assert!(errors.iter().any(|m| m.contains("duplicate")), "{errors:?}");
    assert!(errors.iter().any(|m| m.contains("empty text")), "{errors:?}");
    assert!(report.error_count() >= 4, "{}", report.to_text());
    // Strict coverage turns the many missing rows into errors too.
    assert!(validate(&ds, Coverage::Strict).error_count() > report.error_count());
}

fn label_strategy() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::False), Just(Label::HalfTrue), Just(Label::True)]
}

fn claim_strategy() -> impl Strategy<Value = Claim> {
    (
        0usize..4,
        0usize..3,
        "[A-Za-z ,.'\"é!?-]{1,40}",
        label_strategy(),
        any::<bool>(),
        proptest::option::of((0.0f64..100.0, 0.01f64..30.0)),
    )
        .prop_map(|(debate, speaker, text, label, train, span)| Claim {
            claim_id: String::new(),
            debate_id: format!("d{debate}"),
            speaker: format!("s{speaker}"),
            text,
            label,
            split: if train { Split::Train } else { Split::Test },
            audio_span: span.map(|(start, len)| AudioSpan {
                start_s: start,
                end_s: start + len,
            }),
        })
}

fn numbered(mut claims: Vec<Claim>) -> Vec<Claim> {
    for (i, c) in claims.iter_mut().enumerate() {
        c.claim_id = format!("c{i:03}");
    }
    claims
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn claims_and_views_round_trip(
        claims in proptest::collection::vec(claim_strategy(), 1..20),
        values in proptest::collection::vec(-1e6f64..1e6, 60),
    ) {
        let claims = numbered(claims);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("claims.jsonl");
        write_claims(&path, &claims).unwrap();
        prop_assert_eq!(&load_claims(&path).unwrap(), &claims);

        let mut view = FeatureView::new("rt", 3);
        for (c, chunk) in claims.iter().zip(values.chunks(3)) {
            view.insert(c.claim_id.clone(), chunk.to_vec()).unwrap();
        }
        let manifest = dir.path().join("rt.json");
        write_view(&view, &manifest).unwrap();
        prop_assert_eq!(load_view(&manifest).unwrap(), view);
    }

    #[test]
    fn folds_partition_the_train_split(claims in proptest::collection::vec(claim_strategy(), 2..40)) {
        let ds = Dataset::new(numbered(claims), vec![]);
        let train: HashSet<String> = ds.split_ids(Split::Train).into_iter().collect();
        let debates: BTreeSet<String> = ds
            .claims()
            .iter()
            .filter(|c| c.split == Split::Train)
            .map(|c| c.debate_id.clone())
            .collect();
        match loo_debate_folds(&ds) {
            Err(VeriflowError::TooFewDebates { .. }) => prop_assert!(debates.len() < 2),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
            Ok(FoldSpec { folds }) => {
                prop_assert_eq!(folds.len(), debates.len());
                let mut seen = HashSet::new();
                for fold in &folds {
                    let held: HashSet<&String> = fold.heldout_ids.iter().collect();
                    prop_assert!(!held.is_empty());
                    prop_assert!(fold.train_ids.iter().all(|id| !held.contains(id)));
                    prop_assert_eq!(fold.train_ids.len() + held.len(), train.len());
                    for id in &fold.heldout_ids {
                        prop_assert!(seen.insert(id.clone()), "claim held out twice");
                    }
                }
                prop_assert_eq!(seen, train);
            }
        }
    }

    #[test]
    fn weighted_class_mass_is_equal(labels in proptest::collection::vec(label_strategy(), 3..200)) {
        let present = Label::ALL.iter().all(|l| labels.contains(l));
        match class_weights(&labels) {
            Ok(w) => {
                prop_assert!(present);
                let mut mass = [0.0; 3];
                for l in &labels {
                    mass[l.index()] += w.get(*l);
                }
                let n = labels.len() as f64;
                for m in mass {
                    prop_assert!((m - n / 3.0).abs() < 1e-9);
                }
            }
            Err(_) => prop_assert!(!present),
        }
    }
}
