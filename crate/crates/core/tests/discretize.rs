mod common;

use common::{random_forest, rng, ForestShape};
use forestplan::discretize::state_proba;
use forestplan::fixtures::example_forest;
use forestplan::forest::{parse_instance, Tree, TreeNode};
use forestplan::{FeatureMeta, Mutability, PartitionTable, RandomForest, State, Value};
use proptest::prelude::*;

#[test]
fn example_partitions() {
    let (forest, table) = example_forest();
    assert_eq!(table.counts(), vec![2, 2, 3]);
    assert_eq!(table.thresholds(1), &[5.0]);
    assert_eq!(table.thresholds(2), &[1000.0, 1500.0]);
    assert_eq!(table.state_count(), 12);
    let f = forest.features();
    let to_state = |fields: &[&str]| table.to_state(&forest, &parse_instance(f, fields).unwrap()).unwrap();
    assert_eq!(to_state(&["male", "2", "1500"]), State(vec![0, 0, 2]));
    assert_eq!(to_state(&["female", "4.999", "1499.9"]), State(vec![1, 0, 1]));
    assert_eq!(
        table.representative(&State(vec![0, 1, 2])),
        vec![Value::Category(0), Value::Number(6.0), Value::Number(1501.0)]
    );
    assert!(state_proba(&forest, &table, &State(vec![0, 1, 2]), 1) >= 0.5);
}

#[test]
fn unsplit_features_are_constant() {
    let features = vec![
        FeatureMeta::numerical("a", Mutability::Soft),
        FeatureMeta::numerical("b", Mutability::Soft),
        FeatureMeta::categorical("c", &["x", "y", "z"], Mutability::Soft),
    ];
    let t = Tree::from_root(TreeNode::below(0, 1.0, TreeNode::leaf(0), TreeNode::leaf(1)));
    let forest = RandomForest::new(features, vec!["0".into(), "1".into()], vec![(1.0, t)]).unwrap();
    let table = PartitionTable::build(&forest);
    // Categorical features keep one partition per category.
    assert_eq!(table.counts(), vec![2, 1, 3]);
    let s = table.to_state_unchecked(&[Value::Number(5.0), Value::Number(-3.0), Value::Category(2)]);
    assert_eq!(s, State(vec![1, 0, 2]));
    assert_eq!(table.representative(&s)[1], Value::Number(0.0));
    assert_eq!(table.representative(&s)[2], Value::Category(2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn representatives_round_trip(seed in any::<u64>()) {
        let forest = random_forest(&mut rng(seed), ForestShape::default());
        let table = PartitionTable::build(&forest);
        let mut n = 0u128;
        for s in table.all_states() {
            prop_assert!(table.is_valid_state(&s));
            prop_assert_eq!(table.to_state(&forest, &table.representative(&s)).unwrap(), s);
            n += 1;
        }
        prop_assert_eq!(n, table.state_count());
    }

    #[test]
    fn thresholds_are_sorted_and_distinct(seed in any::<u64>()) {
        let forest = random_forest(&mut rng(seed), ForestShape::default());
        let table = PartitionTable::build(&forest);
        for i in 0..table.len() {
            let t = table.thresholds(i);
            prop_assert!(t.windows(2).all(|w| w[0] < w[1]));
            if table.is_numerical(i) {
                prop_assert_eq!(table.count(i), t.len() + 1);
            }
        }
    }

    #[test]
    fn numeric_index_is_monotone(seed in any::<u64>(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let forest = random_forest(&mut rng(seed), ForestShape::default());
        let table = PartitionTable::build(&forest);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for i in (0..table.len()).filter(|&i| table.is_numerical(i)) {
            prop_assert!(table.numeric_index(i, lo) <= table.numeric_index(i, hi));
            for (k, &t) in table.thresholds(i).iter().enumerate() {
                prop_assert_eq!(table.numeric_index(i, t), k + 1);
            }
        }
    }
}
