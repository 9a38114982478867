//! Evaluation harnesses: interest-prediction utility and the two
//! attribute-inference attacks, each repeated over seeded splits.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{split_indices, split_labels, HeteroGraph, LabelSplit};
use crate::Real;

use super::logreg::{LogRegConfig, LogisticRegression};
use super::metrics::{micro_scores, singleton_sets};
use super::tree::{DecisionTree, TreeConfig};

/// Split discipline shared by every task: train fraction plus one seed per
/// repeat. Repeats differ only through their split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub train_ratio: f64,
    pub seeds: Vec<u64>,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol { train_ratio: 0.8, seeds: vec![0, 1, 2, 3, 4] }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.train_ratio) {
            return Err(Error::InvalidArgument(format!(
                "train ratio {} outside [0, 1]",
                self.train_ratio
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one repeat seed is required".into()));
        }
        Ok(())
    }
}

/// Mean, population standard deviation, and the raw per-repeat values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Real,
    pub std: Real,
    pub values: Vec<Real>,
}

impl MetricSummary {
    fn from_values(values: Vec<Real>) -> Self {
        let n = values.len() as Real;
        let mean = values.iter().sum::<Real>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<Real>() / n;
        MetricSummary { mean, std: var.sqrt(), values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub precision: MetricSummary,
    pub micro_f1: MetricSummary,
    pub repeats: usize,
    pub seeds: Vec<u64>,
    /// Echo of the classifier config and protocol that produced the report.
    pub config: serde_json::Value,
}

fn report(
    task: &str,
    protocol: &EvalProtocol,
    config: serde_json::Value,
    runs: Vec<(Real, Real)>,
) -> EvalReport {
    let (precision, f1): (Vec<Real>, Vec<Real>) = runs.into_iter().unzip();
    EvalReport {
        task: task.to_string(),
        precision: MetricSummary::from_values(precision),
        micro_f1: MetricSummary::from_values(f1),
        repeats: protocol.seeds.len(),
        seeds: protocol.seeds.clone(),
        config,
    }
}

/// Embedding rows of the given users, in the given order.
fn features_for(
    emb: &EmbeddingTable,
    graph: &HeteroGraph,
    users: &[usize],
) -> Result<Array2<Real>> {
    let mut x = Array2::zeros((users.len(), emb.dim()));
    for (row, &u) in users.iter().enumerate() {
        let id = &graph.user_ids()[u];
        let v = emb
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no embedding for user {id}")))?;
        x.row_mut(row).assign(&v);
    }
    Ok(x)
}

fn check_split(split: &LabelSplit) -> Result<()> {
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::InvalidArgument(
            "split left an empty train or test side; adjust the train ratio".into(),
        ));
    }
    Ok(())
}

/// Multi-label interest prediction by binary relevance: one depth-capped
/// tree per category, predicted set = categories whose tree fires.
/// Categories with no positive training example are always predicted
/// negative (warned once, not an error).
pub fn predict_interests(
    emb: &EmbeddingTable,
    graph: &HeteroGraph,
    protocol: &EvalProtocol,
    cfg: &TreeConfig,
) -> Result<EvalReport> {
    protocol.validate()?;
    cfg.validate()?;
    let n_labels = graph.num_interest_labels();
    let mut runs = Vec::with_capacity(protocol.seeds.len());
    let mut starved: BTreeSet<usize> = BTreeSet::new();
    for &seed in &protocol.seeds {
        let split = split_labels(graph, protocol.train_ratio, seed)?;
        check_split(&split)?;
        let x_train = features_for(emb, graph, &split.train)?;
        let x_test = features_for(emb, graph, &split.test)?;
        let truth: Vec<BTreeSet<usize>> = split
            .test
            .iter()
            .map(|&u| graph.interests()[u].clone().expect("split holds labeled users"))
            .collect();
        let mut predicted = vec![BTreeSet::new(); split.test.len()];
        for category in 0..n_labels {
            let y: Vec<usize> = split
                .train
                .iter()
                .map(|&u| {
                    usize::from(
                        graph.interests()[u].as_ref().expect("labeled").contains(&category),
                    )
                })
                .collect();
            if !y.contains(&1) {
                starved.insert(category);
                continue;
            }
            let tree = DecisionTree::fit(&x_train, &y, 2, cfg)?;
            for (i, pred) in tree.predict(&x_test).into_iter().enumerate() {
                if pred == 1 {
                    predicted[i].insert(category);
                }
            }
        }
        runs.push(micro_scores(&predicted, &truth)?);
    }
    if !starved.is_empty() {
        eprintln!(
            "warning: interest categories {starved:?} had no positive training examples \
             in at least one split and were predicted negative there"
        );
    }
    let config = serde_json::json!({ "tree": cfg, "protocol": protocol });
    Ok(report("interest-prediction", protocol, config, runs))
}

/// Gender inference attack: binary logistic regression on the embeddings.
/// Lower scores mean better privacy. Single-class training data degenerates
/// to a majority predictor with a warning.
pub fn attack_gender(
    emb: &EmbeddingTable,
    graph: &HeteroGraph,
    protocol: &EvalProtocol,
    cfg: &LogRegConfig,
) -> Result<EvalReport> {
    protocol.validate()?;
    cfg.validate()?;
    let labeled: Vec<usize> =
        (0..graph.n_users()).filter(|&u| graph.gender()[u].is_some()).collect();
    let mut runs = Vec::with_capacity(protocol.seeds.len());
    for &seed in &protocol.seeds {
        let split = split_indices(labeled.clone(), protocol.train_ratio, seed)?;
        check_split(&split)?;
        let x_train = features_for(emb, graph, &split.train)?;
        let x_test = features_for(emb, graph, &split.test)?;
        let label_of = |u: usize| graph.gender()[u].expect("split holds labeled users");
        let y_train: Vec<u8> = split.train.iter().map(|&u| label_of(u)).collect();
        let truth: Vec<usize> = split.test.iter().map(|&u| label_of(u) as usize).collect();
        let preds: Vec<usize> = if y_train.iter().all(|&l| l == y_train[0]) {
            eprintln!(
                "warning: gender attack trained on a single class; \
                 predicting the majority class {}",
                y_train[0]
            );
            vec![y_train[0] as usize; split.test.len()]
        } else {
            let model = LogisticRegression::fit(&x_train, &y_train, cfg)?;
            model.predict(&x_test).into_iter().map(usize::from).collect()
        };
        runs.push(micro_scores(&singleton_sets(&preds), &singleton_sets(&truth))?);
    }
    let config = serde_json::json!({ "logreg": cfg, "protocol": protocol });
    Ok(report("gender-attack", protocol, config, runs))
}

/// Occupation inference attack: one multiclass decision tree. A pure
/// single-class training set degenerates to a majority predictor (the
/// root leaf) with a warning.
pub fn attack_occupation(
    emb: &EmbeddingTable,
    graph: &HeteroGraph,
    protocol: &EvalProtocol,
    cfg: &TreeConfig,
) -> Result<EvalReport> {
    protocol.validate()?;
    cfg.validate()?;
    let labeled: Vec<usize> =
        (0..graph.n_users()).filter(|&u| graph.occupation()[u].is_some()).collect();
    let n_classes = graph.num_occupations();
    let mut runs = Vec::with_capacity(protocol.seeds.len());
    for &seed in &protocol.seeds {
        let split = split_indices(labeled.clone(), protocol.train_ratio, seed)?;
        check_split(&split)?;
        let x_train = features_for(emb, graph, &split.train)?;
        let x_test = features_for(emb, graph, &split.test)?;
        let label_of = |u: usize| graph.occupation()[u].expect("split holds labeled users");
        let y_train: Vec<usize> = split.train.iter().map(|&u| label_of(u)).collect();
        let truth: Vec<usize> = split.test.iter().map(|&u| label_of(u)).collect();
        if y_train.iter().all(|&l| l == y_train[0]) {
            eprintln!(
                "warning: occupation attack trained on a single class; \
                 the tree degenerates to predicting class {}",
                y_train[0]
            );
        }
        let tree = DecisionTree::fit(&x_train, &y_train, n_classes, cfg)?;
        let preds = tree.predict(&x_test);
        runs.push(micro_scores(&singleton_sets(&preds), &singleton_sets(&truth))?);
    }
    let config = serde_json::json!({ "tree": cfg, "protocol": protocol });
    Ok(report("occupation-attack", protocol, config, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, UserSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    struct UserPlan {
        interests: Option<Vec<usize>>,
        gender: Option<u8>,
        occupation: Option<usize>,
    }

    fn build_graph(n: usize, plan: impl Fn(usize) -> UserPlan) -> HeteroGraph {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            let p = plan(i);
            b.add_user(UserSpec {
                id: format!("u{i}"),
                attrs: BTreeMap::new(),
                gender: p.gender,
                occupation: p.occupation,
                interests: p.interests,
            });
        }
        b.finish().unwrap()
    }

    fn table_from(n: usize, d: usize, fill: impl Fn(usize, usize) -> Real) -> EmbeddingTable {
        let ids = (0..n).map(|i| format!("u{i}")).collect();
        let vectors = Array2::from_shape_fn((n, d), |(i, j)| fill(i, j));
        EmbeddingTable::new(ids, vectors).unwrap()
    }

    fn random_table(n: usize, d: usize, seed: u64) -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids = (0..n).map(|i| format!("u{i}")).collect();
        let mut m = Array2::zeros((n, d));
        for v in m.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        EmbeddingTable::new(ids, m).unwrap()
    }

    #[test]
    fn one_hot_interest_embeddings_score_perfectly() {
        let n = 30;
        let g = build_graph(n, |i| UserPlan {
            interests: Some(vec![i % 3]),
            gender: None,
            occupation: None,
        });
        let emb = table_from(n, 3, |i, j| if i % 3 == j { 1.0 } else { 0.0 });
        let report =
            predict_interests(&emb, &g, &EvalProtocol::default(), &TreeConfig::default()).unwrap();
        assert_eq!(report.precision.mean, 1.0);
        assert_eq!(report.micro_f1.mean, 1.0);
        assert_eq!(report.precision.std, 0.0);
        assert_eq!(report.repeats, 5);
    }

    #[test]
    fn random_interest_embeddings_sit_in_the_chance_band() {
        let n = 200;
        let g = build_graph(n, |i| UserPlan {
            interests: Some(vec![i % 2]),
            gender: None,
            occupation: None,
        });
        let emb = random_table(n, 4, 13);
        let report =
            predict_interests(&emb, &g, &EvalProtocol::default(), &TreeConfig::default()).unwrap();
        let f1 = report.micro_f1.mean;
        assert!((0.3..=0.7).contains(&f1), "chance-level micro-F1 was {f1}");
    }

    #[test]
    fn identical_seed_lists_reproduce_reports() {
        let n = 40;
        let g = build_graph(n, |i| UserPlan {
            interests: Some(vec![i % 3]),
            gender: Some((i % 2) as u8),
            occupation: Some(i % 4),
        });
        let emb = random_table(n, 5, 3);
        let protocol = EvalProtocol { train_ratio: 0.8, seeds: vec![11, 12, 13] };
        let a = predict_interests(&emb, &g, &protocol, &TreeConfig::default()).unwrap();
        let b = predict_interests(&emb, &g, &protocol, &TreeConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = attack_gender(&emb, &g, &protocol, &LogRegConfig::default()).unwrap();
        let d = attack_gender(&emb, &g, &protocol, &LogRegConfig::default()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn repeating_one_seed_has_zero_spread() {
        let n = 40;
        let g = build_graph(n, |i| UserPlan {
            interests: Some(vec![i % 2]),
            gender: None,
            occupation: None,
        });
        let emb = random_table(n, 4, 5);
        let protocol = EvalProtocol { train_ratio: 0.8, seeds: vec![7, 7, 7] };
        let report = predict_interests(&emb, &g, &protocol, &TreeConfig::default()).unwrap();
        assert_eq!(report.precision.std, 0.0);
        assert_eq!(report.micro_f1.std, 0.0);
    }

    #[test]
    fn explicit_gender_coordinate_leaks() {
        let n = 60;
        let g = build_graph(n, |i| UserPlan {
            interests: None,
            gender: Some((i % 2) as u8),
            occupation: None,
        });
        let emb = {
            let mut t = random_table(n, 3, 1);
            for i in 0..n {
                t.vectors_mut()[(i, 0)] = if i % 2 == 1 { 1.0 } else { -1.0 };
            }
            t
        };
        let report =
            attack_gender(&emb, &g, &EvalProtocol::default(), &LogRegConfig::default()).unwrap();
        assert!(report.precision.mean >= 0.99, "got {}", report.precision.mean);
    }

    #[test]
    fn gender_blind_embeddings_stay_near_the_majority_rate() {
        let n = 200;
        let g = build_graph(n, |i| UserPlan {
            interests: None,
            gender: Some((i % 2) as u8),
            occupation: None,
        });
        let emb = random_table(n, 4, 21);
        let report =
            attack_gender(&emb, &g, &EvalProtocol::default(), &LogRegConfig::default()).unwrap();
        let gap = (report.precision.mean - 0.5).abs();
        assert!(gap <= 0.05, "attack precision {} strays from chance", report.precision.mean);
    }

    #[test]
    fn one_hot_occupation_embeddings_score_perfectly() {
        let n = 40;
        let g = build_graph(n, |i| UserPlan {
            interests: None,
            gender: None,
            occupation: Some(i % 4),
        });
        let emb = table_from(n, 4, |i, j| if i % 4 == j { 1.0 } else { 0.0 });
        let report =
            attack_occupation(&emb, &g, &EvalProtocol::default(), &TreeConfig::default()).unwrap();
        assert_eq!(report.precision.mean, 1.0);
    }

    #[test]
    fn occupation_random_embeddings_stay_near_chance() {
        let n = 400;
        let g = build_graph(n, |i| UserPlan {
            interests: None,
            gender: None,
            occupation: Some(i % 4),
        });
        let emb = random_table(n, 4, 33);
        let report =
            attack_occupation(&emb, &g, &EvalProtocol::default(), &TreeConfig::default()).unwrap();
        let gap = (report.precision.mean - 0.25).abs();
        assert!(gap <= 0.05, "attack precision {} strays from chance", report.precision.mean);
    }

    #[test]
    fn empty_interest_category_is_tolerated() {
        // Category 1 never occurs; the universe still spans 0..=2 because one
        // user carries label 2.
        let n = 20;
        let g = build_graph(n, |i| UserPlan {
            interests: Some(vec![if i == 7 { 2 } else { 0 }]),
            gender: None,
            occupation: None,
        });
        let emb = random_table(n, 3, 2);
        let report =
            predict_interests(&emb, &g, &EvalProtocol::default(), &TreeConfig::default()).unwrap();
        for v in report.precision.values.iter().chain(report.micro_f1.values.iter()) {
            assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn missing_embeddings_and_labels_are_reported() {
        let g = build_graph(6, |i| UserPlan {
            interests: Some(vec![i % 2]),
            gender: None,
            occupation: None,
        });
        let short = {
            let ids = (0..5).map(|i| format!("u{i}")).collect();
            EmbeddingTable::new(ids, Array2::zeros((5, 2))).unwrap()
        };
        let err = predict_interests(&short, &g, &EvalProtocol::default(), &TreeConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("u5"), "got {err}");

        let full = random_table(6, 2, 1);
        let err = attack_gender(&full, &g, &EvalProtocol::default(), &LogRegConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::NoLabeledUsers));
    }

    #[test]
    fn degenerate_split_ratios_are_rejected() {
        let g = build_graph(10, |i| UserPlan {
            interests: Some(vec![i % 2]),
            gender: None,
            occupation: None,
        });
        let emb = random_table(10, 2, 1);
        let protocol = EvalProtocol { train_ratio: 1.0, seeds: vec![0] };
        let err = predict_interests(&emb, &g, &protocol, &TreeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
