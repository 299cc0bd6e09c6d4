mod common;

use std::fs;

use fnd_core::artifact::{load_model, save_model};
use fnd_core::corpus::{load_fixture, stratified_split, Label, SplitSpec};
use fnd_core::pipeline::{fit, PipelineKind, TrainConfig};
use fnd_core::preprocess::TokenizedDocument;
use fnd_core::projection::joint_probabilities;
use fnd_core::rng::SeededRng;
use fnd_core::vectorize::{train_cbow, CbowParams};
use fnd_core::{Error, SparseVector};
use proptest::prelude::*;

use common::fixture_path;

fn topic_corpus(seed: u64) -> Vec<TokenizedDocument> {
    let left = ["river", "stone", "cloud", "maple", "field", "harbor"];
    let right = ["engine", "copper", "signal", "ledger", "piston", "socket"];
    let mut rng = SeededRng::new(seed);
    let mut docs = Vec::new();
    for i in 0..300 {
        let (pool, anchors): (&[&str], &[&str]) = if i % 2 == 0 {
            (&left, &["alpha", "beta"])
        } else {
            (&right, &["gamma"])
        };
        let mut tokens: Vec<String> = (0..8)
            .map(|_| pool[rng.below(pool.len())].to_string())
            .collect();
        for a in anchors {
            let at = rng.below(tokens.len() + 1);
            tokens.insert(at, a.to_string());
        }
        docs.push(TokenizedDocument {
            tokens,
            label: Label::Real,
        });
    }
    docs
}

#[test]
fn cbow_places_co_occurring_words_closer() {
    for seed in [1u64, 2, 3, 4, 5] {
        let params = CbowParams {
            dim: 20,
            window: 3,
            epochs: 10,
            seed,
            ..Default::default()
        };
        let emb = train_cbow(&topic_corpus(seed), &params).unwrap();
        let ab = emb.cosine("alpha", "beta").unwrap();
        let ag = emb.cosine("alpha", "gamma").unwrap();
        assert!(
            ab > ag,
            "seed {seed}: cos(alpha, beta) {ab:.4} <= cos(alpha, gamma) {ag:.4}"
        );
    }
}

#[test]
fn saved_fixture_models_predict_identically() {
    let corpus = load_fixture(fixture_path()).unwrap();
    let (train, test) = stratified_split(&corpus, &SplitSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for kind in PipelineKind::all() {
        let (bundle, _) = fit(&train, &TrainConfig::for_kind(kind)).unwrap();
        let path = dir.path().join(format!("{kind}.fnd"));
        save_model(&bundle, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.kind, kind);
        let before = bundle.predict_corpus(&test).unwrap();
        let after = loaded.predict_corpus(&test).unwrap();
        assert_eq!(before.len(), test.len());
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.decision.to_bits(), b.decision.to_bits(), "{kind}");
        }
    }
}

#[test]
fn saving_under_an_unwritable_path_is_an_io_error() {
    let corpus = load_fixture(fixture_path()).unwrap();
    let (bundle, _) = fit(&corpus, &TrainConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("plain-file");
    fs::write(&blocker, b"x").unwrap();
    let target = blocker.join("model.fnd");
    match save_model(&bundle, &target) {
        Err(Error::Io { path, .. }) => assert!(path.starts_with(&blocker)),
        other => panic!("expected an I/O error, got {other:?}"),
    }
    assert!(matches!(
        load_model(dir.path().join("absent.fnd")),
        Err(Error::Io { .. })
    ));
}

fn point_cloud() -> impl Strategy<Value = (Vec<Vec<f64>>, f64)> {
    (8usize..30, 1usize..5).prop_flat_map(|(n, d)| {
        let max_perp = (n as f64 - 1.0) / 3.0 - 0.01;
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n),
            1.0f64..max_perp,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn joint_probabilities_form_a_symmetric_distribution((rows, perplexity) in point_cloud()) {
        let pts: Vec<SparseVector> = rows.iter().map(|r| SparseVector::from_dense(r)).collect();
        let n = pts.len();
        let p = joint_probabilities(&pts, perplexity).unwrap();
        prop_assert_eq!(p.len(), n * n);
        let total: f64 = p.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "sum {}", total);
        for i in 0..n {
            prop_assert_eq!(p[i * n + i], 0.0);
            for j in 0..n {
                prop_assert!(p[i * n + j] >= 0.0);
                prop_assert!((p[i * n + j] - p[j * n + i]).abs() <= 1e-15);
            }
        }
    }
}
