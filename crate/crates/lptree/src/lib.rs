//! Learning and querying lexicographic preference trees over combinatorial
//! domains: exact rank/compare/optimum queries, exact empirical and expected
//! rank evaluation, greedy chain and bounded-node-size learners, brute-force
//! oracles for cross-checking, and a synthetic-data pipeline.

pub mod decimal;
pub mod exec;
pub mod learn;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod schema;
pub mod synth;

pub use exec::Parallelism;
pub use learn::{KPartition, LearnError, ScoreValue, ScoreVariant};
pub use metrics::{BestLocalOrder, DiscreteDistribution, MetricsError};
pub use model::{Children, LPTree, Node, Preferred, PreferenceTable, QueryError, TreeError, Violation};
pub use schema::{Alternative, PartialInstantiation, Sample, SampleError, Schema, SchemaError};
pub use synth::{DecreasingSpec, ExperimentConfig, LearningCurve, SynthError, TreeClass, TrialRow};

pub use num_bigint::{BigInt, BigUint};
pub use num_rational::BigRational;
