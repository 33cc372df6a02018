//! Bagged CART ensemble used as a built-in black box.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cart::{fit_tree, CartConfig, Criterion, ExplainerTree};
use crate::error::{Error, Result};
use crate::seeds;
use crate::tabular::{Dataset, Instance, Label, Schema, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    /// `ceil(sqrt(p))` features per node.
    Sqrt,
    All,
    Count(usize),
}

impl FeatureSubsample {
    pub fn resolve(self, p: usize) -> Option<usize> {
        match self {
            FeatureSubsample::Sqrt => Some((p as f64).sqrt().ceil() as usize),
            FeatureSubsample::All => None,
            FeatureSubsample::Count(n) => Some(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub feature_subsample: FeatureSubsample,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            feature_subsample: FeatureSubsample::Sqrt,
            max_depth: None,
            min_samples_split: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub(crate) trees: Vec<ExplainerTree>,
    pub(crate) config: ForestConfig,
    pub(crate) schema: Schema,
    pub(crate) task: Task,
}

impl ForestModel {
    pub fn trees(&self) -> &[ExplainerTree] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Majority vote (ties to the lowest class) or mean of the trees.
    pub(crate) fn predict_unchecked(&self, inst: &Instance) -> Label {
        match self.task {
            Task::Classification { n_classes } => {
                let mut votes = vec![0usize; n_classes];
                for t in &self.trees {
                    if let Label::Class(c) = t.predict_unchecked(inst) {
                        votes[c] += 1;
                    }
                }
                Label::Class((0..n_classes).rev().max_by_key(|&c| votes[c]).unwrap())
            }
            Task::Regression => {
                let sum: f64 = self
                    .trees
                    .iter()
                    .filter_map(|t| t.predict_unchecked(inst).value())
                    .sum();
                Label::Value(sum / self.trees.len() as f64)
            }
        }
    }

    pub fn predict(&self, inst: &Instance) -> Result<Label> {
        self.schema.validate(inst)?;
        Ok(self.predict_unchecked(inst))
    }
}

pub fn train_forest(data: &Dataset, cfg: &ForestConfig) -> Result<ForestModel> {
    let targets = data.require_targets()?;
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if cfg.n_trees == 0 {
        return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
    }
    let schema = data.schema();
    let task = schema.task().ok_or(Error::MissingTarget(None))?;
    let n = data.len();
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for t in 0..cfg.n_trees {
        let tree_seed = seeds::derive(cfg.seed, t as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
        let (rows, labels): (Vec<Instance>, Vec<Label>) = if cfg.bootstrap {
            (0..n)
                .map(|_| {
                    let i = rng.gen_range(0..n);
                    (data.row(i).clone(), targets[i])
                })
                .unzip()
        } else {
            (data.rows().to_vec(), targets.to_vec())
        };
        let cart = CartConfig {
            criterion: if task.is_classification() {
                Criterion::Gini
            } else {
                Criterion::Mse
            },
            min_samples_split: cfg.min_samples_split,
            max_depth: cfg.max_depth,
            seed: rng.gen(),
            feature_subsample: cfg.feature_subsample.resolve(schema.n_features()),
        };
        trees.push(fit_tree(&rows, &labels, schema, &cart)?);
    }
    Ok(ForestModel {
        trees,
        config: *cfg,
        schema: schema.clone(),
        task,
    })
}
