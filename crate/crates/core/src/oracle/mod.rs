//! The black box being explained, seen only through batch predictions.

mod forest;
mod knn;
mod subprocess;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use forest::{train_forest, FeatureSubsample, ForestConfig, ForestModel};
pub use knn::{train_knn, KnnModel};
pub use subprocess::{SubprocessOracle, DEFAULT_TIMEOUT};

use crate::cart::{ExplainerTree, TreeNode};
use crate::error::{Error, Result};
use crate::gower::{DistanceMetric, MetricKind};
use crate::tabular::{Instance, Label, Schema, Task};

/// A trained built-in model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Forest(ForestModel),
    Knn(KnnModel),
}

impl Model {
    pub fn schema(&self) -> &Schema {
        match self {
            Model::Forest(m) => m.schema(),
            Model::Knn(m) => m.schema(),
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Model::Forest(m) => m.task(),
            Model::Knn(m) => m.task(),
        }
    }

    pub fn predict(&self, inst: &Instance) -> Result<Label> {
        match self {
            Model::Forest(m) => m.predict(inst),
            Model::Knn(m) => m.predict(inst),
        }
    }

    fn predict_batch_unchecked(&self, rows: &[Instance]) -> Vec<Label> {
        match self {
            Model::Forest(m) => rows.iter().map(|r| m.predict_unchecked(r)).collect(),
            Model::Knn(m) => {
                let metric = DistanceMetric::new(m.metric(), m.schema());
                rows.iter().map(|r| m.predict_with(&metric, r)).collect()
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Forest(_) => "forest",
            Model::Knn(_) => "knn",
        }
    }
}

/// Labels for a fixed set of feature vectors, e.g. a prediction column
/// shipped next to the data. It cannot label anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedOracle {
    table: HashMap<Vec<u64>, Label>,
}

impl PrecomputedOracle {
    /// The first label wins when a feature vector repeats.
    pub fn new(rows: &[Instance], labels: &[Label]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                rows: rows.len(),
                labels: labels.len(),
            });
        }
        let mut table = HashMap::with_capacity(rows.len());
        for (r, l) in rows.iter().zip(labels) {
            table.entry(r.key()).or_insert(*l);
        }
        Ok(Self { table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    fn predict_batch(&self, rows: &[Instance]) -> Result<Vec<Label>> {
        rows.iter()
            .map(|r| {
                self.table
                    .get(&r.key())
                    .copied()
                    .ok_or(Error::PrecomputedSynthetic)
            })
            .collect()
    }
}

#[derive(Debug)]
pub enum Backend {
    BuiltIn(Model),
    Subprocess(SubprocessOracle),
    Precomputed(PrecomputedOracle),
}

/// A deterministic batch map from instances to labels.
#[derive(Debug)]
pub struct PredictionOracle {
    backend: Backend,
    task: Task,
    schema: Schema,
}

impl PredictionOracle {
    pub fn builtin(model: Model, schema: &Schema) -> Result<Self> {
        if !model.schema().compatible_with(schema) {
            return Err(Error::SchemaMismatch(format!(
                "model was trained on {} but the data has {}",
                model.schema(),
                schema
            )));
        }
        Ok(Self {
            task: model.task(),
            backend: Backend::BuiltIn(model),
            schema: schema.clone(),
        })
    }

    pub fn subprocess(command: &str, schema: &Schema, timeout: Duration) -> Result<Self> {
        let task = schema.task().ok_or(Error::MissingTarget(None))?;
        Ok(Self {
            backend: Backend::Subprocess(SubprocessOracle::spawn(command, schema, timeout)?),
            task,
            schema: schema.clone(),
        })
    }

    pub fn precomputed(rows: &[Instance], labels: &[Label], schema: &Schema) -> Result<Self> {
        let task = schema.task().ok_or(Error::MissingTarget(None))?;
        for l in labels {
            schema.validate_label(*l)?;
        }
        Ok(Self {
            backend: Backend::Precomputed(PrecomputedOracle::new(rows, labels)?),
            task,
            schema: schema.clone(),
        })
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn is_precomputed(&self) -> bool {
        matches!(self.backend, Backend::Precomputed(_))
    }

    pub fn describe(&self) -> String {
        match &self.backend {
            Backend::BuiltIn(m) => format!("builtin:{}", m.kind()),
            Backend::Subprocess(s) => format!("cmd:{}", s.command()),
            Backend::Precomputed(_) => "precomputed".into(),
        }
    }

    pub fn predict_batch(&self, rows: &[Instance]) -> Result<Vec<Label>> {
        for r in rows {
            self.schema.validate(r)?;
        }
        let labels = match &self.backend {
            Backend::BuiltIn(m) => m.predict_batch_unchecked(rows),
            Backend::Subprocess(s) => s.predict_batch(rows)?,
            Backend::Precomputed(p) => p.predict_batch(rows)?,
        };
        for l in &labels {
            self.schema
                .validate_label(*l)
                .map_err(|e| Error::Oracle(format!("invalid prediction: {e}")))?;
        }
        Ok(labels)
    }

    pub fn predict_one(&self, inst: &Instance) -> Result<Label> {
        Ok(self.predict_batch(std::slice::from_ref(inst))?[0])
    }
}

pub fn predict_batch(oracle: &PredictionOracle, rows: &[Instance]) -> Result<Vec<Label>> {
    oracle.predict_batch(rows)
}

// Model files.

#[derive(Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
enum ModelWire {
    Forest {
        schema: Schema,
        task: Task,
        config: ForestConfig,
        trees: Vec<TreeNode>,
    },
    Knn {
        schema: Schema,
        task: Task,
        k: usize,
        metric: MetricKind,
        rows: Vec<serde_json::Value>,
        labels: Vec<serde_json::Value>,
    },
}

impl From<&Model> for ModelWire {
    fn from(m: &Model) -> Self {
        match m {
            Model::Forest(f) => ModelWire::Forest {
                schema: f.schema.clone(),
                task: f.task,
                config: f.config,
                trees: f.trees.iter().map(|t| t.root().clone()).collect(),
            },
            Model::Knn(k) => ModelWire::Knn {
                schema: k.schema.clone(),
                task: k.task,
                k: k.k,
                metric: k.metric,
                rows: k.rows.iter().map(|r| k.schema.instance_to_json(r)).collect(),
                labels: k.labels.iter().map(|l| k.schema.label_to_json(*l)).collect(),
            },
        }
    }
}

impl TryFrom<ModelWire> for Model {
    type Error = Error;

    fn try_from(w: ModelWire) -> Result<Self> {
        let bad = |e: Error| Error::MalformedModel(e.to_string());
        match w {
            ModelWire::Forest {
                schema,
                task,
                config,
                trees,
            } => {
                if schema.task() != Some(task) {
                    return Err(Error::MalformedModel("task disagrees with schema".into()));
                }
                if trees.is_empty() {
                    return Err(Error::MalformedModel("forest without trees".into()));
                }
                let trees = trees
                    .into_iter()
                    .map(|root| ExplainerTree::from_root(root, schema.clone(), task))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Model::Forest(ForestModel {
                    trees,
                    config,
                    schema,
                    task,
                }))
            }
            ModelWire::Knn {
                schema,
                task,
                k,
                metric,
                rows,
                labels,
            } => {
                if schema.task() != Some(task) {
                    return Err(Error::MalformedModel("task disagrees with schema".into()));
                }
                if k == 0 || rows.is_empty() || rows.len() != labels.len() {
                    return Err(Error::MalformedModel("inconsistent k-NN payload".into()));
                }
                let rows = rows
                    .iter()
                    .map(|r| schema.instance_from_json(r))
                    .collect::<Result<Vec<_>>>()
                    .map_err(bad)?;
                let labels = labels
                    .iter()
                    .map(|l| schema.label_from_json(l))
                    .collect::<Result<Vec<_>>>()
                    .map_err(bad)?;
                Ok(Model::Knn(KnnModel {
                    k,
                    metric,
                    schema,
                    task,
                    rows,
                    labels,
                }))
            }
        }
    }
}

pub fn model_to_json(model: &Model) -> serde_json::Value {
    serde_json::to_value(ModelWire::from(model)).expect("model serialises")
}

pub fn model_from_json(json: &str) -> Result<Model> {
    let wire: ModelWire =
        serde_json::from_str(json).map_err(|e| Error::MalformedModel(e.to_string()))?;
    Model::try_from(wire)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer(&mut f, &ModelWire::from(model))?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let f = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?;
    // serde_json's default recursion limit is far below the depth of an
    // unpruned tree on a few thousand rows.
    let mut de = serde_json::Deserializer::from_reader(BufReader::new(f));
    de.disable_recursion_limit();
    let wire = ModelWire::deserialize(&mut de).map_err(|e| Error::MalformedModel(e.to_string()))?;
    Model::try_from(wire)
}
