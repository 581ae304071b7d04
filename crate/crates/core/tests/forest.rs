mod common;

use std::fs::File;

use common::{random_forest, rng, ForestShape};
use forestplan::data::{read_csv, Dataset, Schema, SchemaFeature, SchemaKind};
use forestplan::discretize::state_proba;
use forestplan::fixtures::{example_forest, EXAMPLE_FOREST_JSON};
use forestplan::forest::{parse_instance, train_forest, FeatureKind, ForestError, TrainParams, Tree, TreeNode};
use forestplan::{FeatureMeta, Mutability, PartitionTable, RandomForest, Value};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_vector(forest: &RandomForest, r: &mut ChaCha8Rng) -> Vec<Value> {
    forest
        .features()
        .iter()
        .map(|f| match &f.kind {
            FeatureKind::Categorical(c) => Value::Category(r.gen_range(0..c.len())),
            FeatureKind::Numerical => Value::Number(r.gen_range(-2.0..6.0)),
        })
        .collect()
}

fn stub(label: usize) -> Tree {
    Tree::from_root(TreeNode::leaf(label))
}

fn two_features() -> Vec<FeatureMeta> {
    vec![
        FeatureMeta::numerical("a", Mutability::Soft),
        FeatureMeta::numerical("b", Mutability::Soft),
    ]
}

fn classes() -> Vec<String> {
    vec!["0".into(), "1".into()]
}

#[test]
fn example_predictions() {
    let (forest, _) = example_forest();
    let f = forest.features();
    let predict = |fields: &[&str]| forest.predict(&parse_instance(f, fields).unwrap()).unwrap();
    assert_eq!(predict(&["male", "2", "500"]), 0);
    for tree in forest.trees() {
        assert_eq!(tree.predict(&parse_instance(f, &["male", "2", "500"]).unwrap()), 0);
    }
    assert_eq!(predict(&["male", "5", "1500"]), 1);
    // The first tree splits x2 < 5 and sends 6 to its right leaf.
    assert_eq!(forest.trees()[0].predict(&parse_instance(f, &["male", "6", "500"]).unwrap()), 1);
}

#[test]
fn weighted_votes() {
    let x = [Value::Number(0.0), Value::Number(0.0)];
    let one = RandomForest::new(two_features(), classes(), vec![(1.0, stub(1))]).unwrap();
    assert_eq!(one.class_proba(&x, 1).unwrap(), 1.0);
    assert_eq!(one.predict(&x).unwrap(), 1);

    let three = RandomForest::new(
        two_features(),
        classes(),
        vec![(1.0, stub(1)), (1.0, stub(0)), (1.0, stub(1))],
    )
    .unwrap();
    assert!((three.class_proba(&x, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);

    let skewed = RandomForest::new(two_features(), classes(), vec![(1.0, stub(0)), (3.0, stub(1))]).unwrap();
    assert_eq!(skewed.class_proba(&x, 1).unwrap(), 0.75);
    assert_eq!(skewed.predict(&x).unwrap(), 1);

    // An even split goes to the first label.
    let tie = RandomForest::new(two_features(), classes(), vec![(1.0, stub(1)), (1.0, stub(0))]).unwrap();
    assert_eq!(tie.predict(&x).unwrap(), 0);
}

#[test]
fn round_trip_keeps_predictions() {
    let (forest, _) = example_forest();
    let back = RandomForest::from_json(&forest.to_json()).unwrap();
    assert_eq!(back, forest);
    let audited = RandomForest::from_json(&forest.to_json_with_partitions()).unwrap();
    assert_eq!(audited.fingerprint(), forest.fingerprint());
    let mut r = rng(11);
    for _ in 0..1000 {
        let x = random_vector(&forest, &mut r);
        assert_eq!(back.proba(&x).unwrap(), forest.proba(&x).unwrap());
    }
}

#[test]
fn malformed_models_are_rejected() {
    let bad_leaf = EXAMPLE_FOREST_JSON.replacen(r#"{"leaf": "1"}"#, r#"{"leaf": "7"}"#, 1);
    let err = RandomForest::from_json(&bad_leaf).unwrap_err().to_string();
    assert!(err.contains("tree 0 node 2"), "{err}");

    let truncated = &EXAMPLE_FOREST_JSON[..EXAMPLE_FOREST_JSON.len() / 2];
    assert!(matches!(RandomForest::from_json(truncated), Err(ForestError::Parse(_))));

    let future = EXAMPLE_FOREST_JSON.replacen("\"format_version\": 1", "\"format_version\": 9", 1);
    assert!(matches!(RandomForest::from_json(&future), Err(ForestError::Version(9))));

    let wrong_partitions = forest_with_partitions().replacen("1500.0", "1400.0", 1);
    assert!(RandomForest::from_json(&wrong_partitions).is_err());

    // A repeated threshold on one path does not narrow the interval.
    let stale = Tree::from_root(TreeNode::below(
        0,
        1.0,
        TreeNode::below(0, 1.0, TreeNode::leaf(0), TreeNode::leaf(1)),
        TreeNode::leaf(1),
    ));
    assert!(RandomForest::new(two_features(), classes(), vec![(1.0, stale)]).is_err());
    assert!(RandomForest::new(two_features(), classes(), vec![(0.0, stub(0))]).is_err());
}

fn forest_with_partitions() -> String {
    example_forest().0.to_json_with_partitions()
}

#[test]
fn separable_pair_is_learned() {
    let data = Dataset {
        features: two_features(),
        classes: classes(),
        rows: vec![
            vec![Value::Number(0.0), Value::Number(1.0)],
            vec![Value::Number(1.0), Value::Number(1.0)],
            vec![Value::Number(0.0), Value::Number(1.0)],
        ],
        labels: vec![0, 1, 0],
    };
    let params = TrainParams {
        n_trees: 1,
        sample_size: 2,
        mtry: 2,
        max_depth: 1,
        min_leaf: 1,
        seed: 3,
    };
    // The bootstrap may miss a point, so try seeds until one sees both.
    let hit = (0..20).any(|seed| {
        let forest = train_forest(&data, &TrainParams { seed, ..params.clone() }).unwrap();
        data.rows.iter().zip(&data.labels).all(|(x, &y)| forest.predict(x).unwrap() == y)
    });
    assert!(hit);
}

fn wdbc() -> Dataset {
    let mut features: Vec<SchemaFeature> = (0..30)
        .map(|i| SchemaFeature {
            name: format!("f{i}"),
            kind: SchemaKind::Numerical,
            categories: None,
            mutability: Mutability::Soft,
        })
        .collect();
    features[0].mutability = Mutability::Hard;
    let schema = Schema {
        label: Some("diagnosis".into()),
        classes: Some(vec!["benign".into(), "malignant".into()]),
        features,
    };
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/wdbc.csv");
    read_csv(File::open(path).unwrap(), &schema).unwrap()
}

#[test]
fn training_beats_majority_and_is_deterministic() {
    let data = wdbc();
    assert_eq!(data.len(), 569);
    let (train, test) = data.split(400, 7);
    let params = TrainParams::for_dataset(&train, 30, 42);
    let forest = train_forest(&train, &params).unwrap();
    let correct = test
        .rows
        .iter()
        .zip(&test.labels)
        .filter(|(x, &y)| forest.predict(x).unwrap() == y)
        .count();
    let accuracy = correct as f64 / test.len() as f64;
    assert!(accuracy > test.majority_rate(), "{accuracy} vs {}", test.majority_rate());

    let again = train_forest(&train, &params).unwrap();
    assert_eq!(again.to_json(), forest.to_json());
    let other = train_forest(&train, &TrainParams { seed: 43, ..params }).unwrap();
    assert_ne!(other.to_json(), forest.to_json());
}

#[test]
fn bad_training_parameters() {
    let data = wdbc();
    let base = TrainParams::for_dataset(&data, 3, 1);
    for broken in [
        TrainParams { n_trees: 0, ..base.clone() },
        TrainParams { sample_size: data.len(), ..base.clone() },
        TrainParams { mtry: 31, ..base.clone() },
        TrainParams { min_leaf: 0, ..base.clone() },
    ] {
        assert!(matches!(train_forest(&data, &broken), Err(ForestError::Training(_))));
    }
}

#[test]
fn state_proba_matches_vectors() {
    let mut r = rng(12);
    for _ in 0..20 {
        let forest = random_forest(&mut r, ForestShape::default());
        let table = PartitionTable::build(&forest);
        for _ in 0..50 {
            let x = random_vector(&forest, &mut r);
            let s = table.to_state(&forest, &x).unwrap();
            for c in 0..2 {
                assert_eq!(state_proba(&forest, &table, &s, c), forest.class_proba(&x, c).unwrap());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_sum_to_one(seed in any::<u64>(), xs in prop::collection::vec(any::<u64>(), 8)) {
        let mut r = rng(seed);
        let forest = random_forest(&mut r, ForestShape::default());
        for x_seed in xs {
            let x = random_vector(&forest, &mut rng(x_seed));
            let p = forest.proba(&x).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn scaling_all_weights_keeps_probabilities(seed in any::<u64>(), k in 0.01f64..100.0) {
        let mut r = rng(seed);
        let forest = random_forest(&mut r, ForestShape::default());
        let scaled = RandomForest::new(
            forest.features().to_vec(),
            forest.classes().to_vec(),
            forest.trees().iter().zip(forest.weights()).map(|(t, w)| (w * k, t.clone())).collect(),
        )
        .unwrap();
        for _ in 0..8 {
            let x = random_vector(&forest, &mut r);
            let (a, b) = (forest.proba(&x).unwrap(), scaled.proba(&x).unwrap());
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-9);
            }
            prop_assert_eq!(forest.predict(&x).unwrap(), scaled.predict(&x).unwrap());
        }
    }

    #[test]
    fn random_forests_round_trip(seed in any::<u64>()) {
        let forest = random_forest(&mut rng(seed), ForestShape::default());
        let back = RandomForest::from_json(&forest.to_json()).unwrap();
        prop_assert_eq!(back.fingerprint(), forest.fingerprint());
        prop_assert_eq!(back, forest);
    }
}
