//! Downstream evaluation: interest-prediction utility and
//! attribute-inference attacks over user embeddings, with micro-averaged
//! metrics summarized across seeded train/test splits. Classifiers are
//! in-repo (CART and logistic regression) so every run is deterministic.

mod logreg;
mod metrics;
mod tasks;
mod tree;

pub use logreg::{LogRegConfig, LogisticRegression};
pub use metrics::{micro_scores, singleton_sets};
pub use tasks::{
    attack_gender, attack_occupation, predict_interests, EvalProtocol, EvalReport, MetricSummary,
};
pub use tree::{DecisionTree, TreeConfig};
