// The two-tree, three-feature reference forest used throughout the tests
// and the CLI demo.
//
// Features: `x1` (categorical, hard, `male`/`female`), `x2` and `x3`
// (numerical, soft). Thresholds are `x2: {5}` and `x3: {1000, 1500}`.
// Tree weights are 1 and 3, so a male instance is predicted `1` exactly in
// state `(0, 1, 2)`, while `x2 >= 5` alone already earns a quarter of the
// vote.

use crate::discretize::PartitionTable;
use crate::forest::RandomForest;

pub const EXAMPLE_FOREST_JSON: &str = include_str!("../fixtures/toy_forest.json");

pub fn example_forest() -> (RandomForest, PartitionTable) {
    let forest = RandomForest::from_json(EXAMPLE_FOREST_JSON).expect("bundled fixture is valid");
    let table = PartitionTable::build(&forest);
    (forest, table)
}
