//! k-nearest-neighbour black box over a mixed-type metric.

use crate::error::{Error, Result};
use crate::gower::{DistanceMetric, MetricKind};
use crate::tabular::{Dataset, Instance, Label, Schema, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub(crate) k: usize,
    pub(crate) metric: MetricKind,
    pub(crate) schema: Schema,
    pub(crate) task: Task,
    pub(crate) rows: Vec<Instance>,
    pub(crate) labels: Vec<Label>,
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub(crate) fn predict_with(&self, metric: &DistanceMetric<'_>, inst: &Instance) -> Label {
        let mut order: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (metric.distance_unchecked(inst, r), i))
            .collect();
        let k = self.k.min(order.len());
        // Ties on distance go to the lower row index.
        order.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &order[..k];
        match self.task {
            Task::Classification { n_classes } => {
                let mut votes = vec![0usize; n_classes];
                for &(_, i) in nearest {
                    if let Label::Class(c) = self.labels[i] {
                        votes[c] += 1;
                    }
                }
                Label::Class((0..n_classes).rev().max_by_key(|&c| votes[c]).unwrap())
            }
            Task::Regression => Label::Value(
                nearest
                    .iter()
                    .filter_map(|&(_, i)| self.labels[i].value())
                    .sum::<f64>()
                    / k as f64,
            ),
        }
    }

    pub fn predict(&self, inst: &Instance) -> Result<Label> {
        self.schema.validate(inst)?;
        let metric = DistanceMetric::new(self.metric, &self.schema);
        Ok(self.predict_with(&metric, inst))
    }
}

pub fn train_knn(data: &Dataset, k: usize, metric: MetricKind) -> Result<KnnModel> {
    let targets = data.require_targets()?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(KnnModel {
        k,
        metric,
        schema: data.schema().clone(),
        task: data.schema().task().ok_or(Error::MissingTarget(None))?,
        rows: data.rows().to_vec(),
        labels: targets.to_vec(),
    })
}
