//! Everything the page shows, as plain Rust returning JSON values so it can
//! be tested natively.

use serde_json::{json, Value as Json};

use araucana::explain::{explain_instance_full, ExplainConfig, Operator, Provenance};
use araucana::fidelity::{evaluate_fidelity, ExplainerKind, FidelityConfig};
use araucana::oracle::{train_forest, ForestConfig, Model, PredictionOracle};
use araucana::seeds;
use araucana::tabular::{synth_dataset, Dataset, Generator, Instance, Label, SynthSpec, Value};
use araucana::Result;

pub struct Scene {
    train: Dataset,
    test: Dataset,
    oracle: PredictionOracle,
    accuracy: f64,
    seed: u64,
}

fn class(l: Label) -> usize {
    l.class().unwrap_or(0)
}

fn point(x: f64, y: f64) -> Instance {
    Instance::new(vec![Value::Real(x), Value::Real(y)])
}

impl Scene {
    /// Two-moons data (20% held out) and a forest black box trained on it.
    pub fn new(rows: usize, minority: f64, n_trees: usize, seed: u64) -> Result<Self> {
        let spec = SynthSpec {
            minority: Some(minority),
            ..SynthSpec::new(Generator::Moons2d, rows.max(10))
        };
        let data = synth_dataset(&spec, seeds::derive(seed, seeds::SYNTH))?;
        let (train, test) = data.split(0.2, seeds::derive(seed, seeds::SPLIT))?;
        let cfg = ForestConfig {
            n_trees: n_trees.max(1),
            seed: seeds::derive(seed, seeds::FOREST),
            ..Default::default()
        };
        let model = Model::Forest(train_forest(&train, &cfg)?);
        let oracle = PredictionOracle::builtin(model, train.schema())?;
        let predicted = oracle.predict_batch(train.rows())?;
        let hits = predicted
            .iter()
            .zip(train.require_targets()?)
            .filter(|(p, t)| p == t)
            .count();
        Ok(Self {
            accuracy: hits as f64 / train.len() as f64,
            train,
            test,
            oracle,
            seed,
        })
    }

    pub fn points(&self) -> Json {
        let targets = self.train.targets().unwrap_or_default();
        let pts: Vec<Json> = self
            .train
            .rows()
            .iter()
            .zip(targets)
            .map(|(r, l)| json!({ "x": r.real(0), "y": r.real(1), "label": class(*l) }))
            .collect();
        json!({
            "points": pts,
            "test_rows": self.test.len(),
            "training_accuracy": self.accuracy,
        })
    }

    /// Explain the black box at `(x, y)`: the rule, its box in the plane and
    /// the explainer set the tree was grown on.
    pub fn explain(&self, x: f64, y: f64, n_neighbors: usize, smote: bool) -> Result<Json> {
        let cfg = ExplainConfig {
            n_neighbors: n_neighbors.max(1),
            smote: if smote { ExplainConfig::default().smote } else { None },
            seed: self.seed,
            ..Default::default()
        };
        let run = explain_instance_full(&self.train, &point(x, y), &self.oracle, &cfg)?;
        let e = &run.explanation;
        // Axis-aligned box: [lo, hi] per feature, null for unbounded.
        let mut bounds = [[None::<f64>, None::<f64>]; 2];
        for c in &e.rule.conditions {
            let v = c.value.as_real();
            match c.op {
                Operator::Le => bounds[c.feature][1] = v,
                Operator::Gt => bounds[c.feature][0] = v,
                _ => {}
            }
        }
        let set: Vec<Json> = run
            .explainer_set
            .rows
            .iter()
            .zip(&run.explainer_set.labels)
            .zip(&run.explainer_set.provenance)
            .map(|((r, l), p)| {
                let kind = match p {
                    Provenance::Original => "original",
                    Provenance::Query => "query",
                    Provenance::Synthetic => "synthetic",
                };
                json!({ "x": r.real(0), "y": r.real(1), "label": class(*l), "kind": kind })
            })
            .collect();
        let text = e.render_text();
        Ok(json!({
            "rule": text.lines().next().unwrap_or_default(),
            "prediction": class(e.tree_prediction()),
            "oracle": class(e.oracle_label),
            "faithful": e.faithful,
            "support": e.rule.support,
            "purity": e.rule.purity,
            "box": { "x": bounds[0], "y": bounds[1] },
            "set": set,
            "depth": e.tree_stats.depth,
            "leaves": e.tree_stats.leaf_count,
        }))
    }

    /// Black-box labels on an `n x n` grid over the data's bounding box.
    pub fn boundary(&self, n: usize) -> Result<Json> {
        let n = n.clamp(2, 200);
        let span = |i: usize| {
            let f = self.train.schema().feature(i);
            let (lo, hi) = match f.kind {
                araucana::tabular::FeatureKind::Numeric { min, max } => (min, max),
                _ => (0.0, 1.0),
            };
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        };
        let ((x0, x1), (y0, y1)) = (span(0), span(1));
        let cells: Vec<Instance> = (0..n)
            .flat_map(|j| {
                (0..n).map(move |i| {
                    point(
                        x0 + (i as f64 + 0.5) / n as f64 * (x1 - x0),
                        y0 + (j as f64 + 0.5) / n as f64 * (y1 - y0),
                    )
                })
            })
            .collect();
        let labels: Vec<usize> = self
            .oracle
            .predict_batch(&cells)?
            .into_iter()
            .map(class)
            .collect();
        Ok(json!({ "n": n, "x": [x0, x1], "y": [y0, y1], "labels": labels }))
    }

    /// Tree vs linear agreement with the black box on the first `limit`
    /// held-out rows.
    pub fn fidelity(&self, limit: usize, n_neighbors: usize) -> Result<Json> {
        let idx: Vec<usize> = (0..self.test.len().min(limit.max(1))).collect();
        let test = self.test.subset(&idx);
        let cfg = FidelityConfig {
            explain: ExplainConfig {
                n_neighbors: n_neighbors.max(1),
                seed: self.seed,
                ..Default::default()
            },
            ..Default::default()
        };
        let report = evaluate_fidelity(&self.train, &test, &self.oracle, &ExplainerKind::ALL, &cfg)?;
        let misses: Vec<Json> = report
            .records
            .iter()
            .filter(|r| r.agree(&cfg.explain.regression_tolerance) == Some(false))
            .map(|r| {
                let row = test.row(r.index);
                json!({ "x": row.real(0), "y": row.real(1), "explainer": r.explainer.name() })
            })
            .collect();
        let summary = |k| {
            report.summary(k).map(|s| {
                json!({ "agreements": s.agreements, "total": s.total, "fidelity": s.fidelity() })
            })
        };
        Ok(json!({
            "araucana": summary(ExplainerKind::Araucana),
            "linear": summary(ExplainerKind::Linear),
            "disagreements": misses,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> Scene {
        Scene::new(300, 0.5, 15, 4).unwrap()
    }

    #[test]
    fn points_cover_training_split() {
        let s = scene();
        let p = s.points();
        assert_eq!(p["points"].as_array().unwrap().len(), 240);
        assert_eq!(p["test_rows"], 60);
        assert!(p["training_accuracy"].as_f64().unwrap() > 0.9);
    }

    #[test]
    fn explanation_box_contains_query() {
        let s = scene();
        let e = s.explain(0.3, 0.4, 100, true).unwrap();
        assert_eq!(e["faithful"], true);
        for (axis, v) in [("x", 0.3), ("y", 0.4)] {
            let b = &e["box"][axis];
            if let Some(lo) = b[0].as_f64() {
                assert!(v > lo);
            }
            if let Some(hi) = b[1].as_f64() {
                assert!(v <= hi);
            }
        }
        let set = e["set"].as_array().unwrap();
        assert_eq!(set.iter().filter(|p| p["kind"] == "query").count(), 1);
        assert_eq!(set.iter().filter(|p| p["kind"] == "original").count(), 100);
    }

    #[test]
    fn boundary_grid_shape() {
        let g = scene().boundary(12).unwrap();
        assert_eq!(g["labels"].as_array().unwrap().len(), 144);
    }

    #[test]
    fn fidelity_summary() {
        let f = scene().fidelity(20, 50).unwrap();
        assert_eq!(f["araucana"]["total"], 20);
        assert_eq!(f["araucana"]["fidelity"], 1.0);
    }
}
