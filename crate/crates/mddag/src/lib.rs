//! Sparse decision DAGs over boosted ensembles.
//!
//! The pipeline: [`boosting`] trains an ordered AdaBoost.MH stump
//! ensemble; [`mdp`] defines the per-instance controller process whose
//! actions evaluate, skip, or quit over that list; [`policy`] learns the
//! controller with SARSA(lambda); [`dag`] aggregates the resulting
//! classification paths into a decision DAG; [`metrics`] measures the
//! accuracy/cost trade-off. A single scalar penalty beta on each
//! evaluation controls how aggressively instances stop early.

pub mod boosting;
pub mod dag;
pub mod dataset;
pub mod exec;
pub mod mdp;
pub mod metrics;
pub mod policy;

pub use exec::Parallelism;
