pub mod baselines;
pub mod data;
pub mod discretize;
pub mod encoder;
pub mod fixtures;
pub mod forest;
pub mod knn;
pub mod maxsat;
pub mod offline;
pub mod sas;

pub use discretize::{PartitionTable, State};
pub use forest::{FeatureKind, FeatureMeta, Mutability, RandomForest, Value};
