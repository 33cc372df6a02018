//! The explanation pipeline: neighbourhood, relabelling, oversampling,
//! unpruned tree, and the IF-THEN rule on the query's path.

use std::collections::HashSet;
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::cart::{fit_tree, CartConfig, Criterion, ExplainerTree, PathStep, SplitTest, TreeStats};
use crate::error::{Error, Result};
use crate::gower::{DistanceMetric, MetricKind};
use crate::oracle::PredictionOracle;
use crate::seeds;
use crate::smote::{smote_nc, SmoteConfig};
use crate::tabular::{Dataset, Instance, Label, Schema, Task, Value};

/// Agreement test for regression predictions:
/// `|tree - oracle| <= relative * |oracle| + absolute`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionTolerance {
    pub relative: f64,
    pub absolute: f64,
}

impl Default for RegressionTolerance {
    fn default() -> Self {
        Self {
            relative: 1e-6,
            absolute: 1e-9,
        }
    }
}

impl RegressionTolerance {
    pub fn agrees(&self, predicted: f64, reference: f64) -> bool {
        (predicted - reference).abs() <= self.relative * reference.abs() + self.absolute
    }
}

/// Label agreement: exact for classes, within tolerance for values.
pub fn labels_agree(a: Label, b: Label, tol: &RegressionTolerance) -> bool {
    match (a, b) {
        (Label::Class(x), Label::Class(y)) => x == y,
        (Label::Value(x), Label::Value(y)) => tol.agrees(x, y),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainConfig {
    pub n_neighbors: usize,
    pub metric: MetricKind,
    /// `None` disables oversampling. The seed inside is replaced by one
    /// derived from [`ExplainConfig::seed`].
    pub smote: Option<SmoteConfig>,
    pub cart: CartConfig,
    pub regression_tolerance: RegressionTolerance,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            n_neighbors: 100,
            metric: MetricKind::Gower,
            smote: Some(SmoteConfig::default()),
            cart: CartConfig::default(),
            regression_tolerance: RegressionTolerance::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    /// Training-row indices, nearest first.
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
    /// Oracle predictions for the selected rows.
    pub relabels: Vec<Label>,
    pub rows: Vec<Instance>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Indices of the `n` rows nearest to `x`, ties to the lower index, with
/// their distances.
pub fn nearest_rows(
    train: &Dataset,
    x: &Instance,
    n: usize,
    metric: MetricKind,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let metric = DistanceMetric::new(metric, train.schema());
    let dist = metric.distances_to(x, train.rows())?;
    let mut order: Vec<usize> = (0..dist.len()).collect();
    let by_distance = |a: &usize, b: &usize| dist[*a].total_cmp(&dist[*b]).then(a.cmp(b));
    if n < order.len() {
        order.select_nth_unstable_by(n, by_distance);
        order.truncate(n);
    }
    order.sort_by(by_distance);
    let distances = order.iter().map(|&i| dist[i]).collect();
    Ok((order, distances))
}

pub fn select_neighborhood(
    train: &Dataset,
    x: &Instance,
    oracle: &PredictionOracle,
    cfg: &ExplainConfig,
) -> Result<Neighborhood> {
    train.schema().validate(x)?;
    if cfg.n_neighbors == 0 {
        return Err(Error::InvalidArgument("n_neighbors must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let n = effective_neighbors(cfg.n_neighbors, train.len());
    let (indices, distances) = nearest_rows(train, x, n, cfg.metric)?;
    let rows: Vec<Instance> = indices.iter().map(|&i| train.row(i).clone()).collect();
    let relabels = oracle.predict_batch(&rows)?;
    Ok(Neighborhood {
        indices,
        distances,
        relabels,
        rows,
    })
}

fn effective_neighbors(requested: usize, available: usize) -> usize {
    if requested > available {
        warn!("n_neighbors {requested} exceeds the {available} training rows; using all of them");
        available
    } else {
        requested
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Query,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerSet {
    pub rows: Vec<Instance>,
    pub labels: Vec<Label>,
    pub provenance: Vec<Provenance>,
}

impl ExplainerSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|&&q| q == p).count()
    }

    /// True when no other row shares the query's feature vector with a
    /// different label.
    pub fn query_is_unambiguous(&self, tol: &RegressionTolerance) -> bool {
        let Some(q) = self.provenance.iter().position(|&p| p == Provenance::Query) else {
            return true;
        };
        let key = self.rows[q].key();
        self.rows
            .iter()
            .zip(&self.labels)
            .all(|(r, l)| r.key() != key || labels_agree(*l, self.labels[q], tol))
    }

    /// True when the query's feature vector appears exactly once.
    pub fn query_is_unique(&self) -> bool {
        let Some(q) = self.provenance.iter().position(|&p| p == Provenance::Query) else {
            return true;
        };
        let key = self.rows[q].key();
        self.rows.iter().filter(|r| r.key() == key).count() == 1
    }
}

/// `T_n ∪ {x} ∪ S`: the relabelled neighbourhood, the query labelled by the
/// oracle, and SMOTE-NC rows over the neighbourhood, also labelled by the
/// oracle.
pub fn build_explainer_set(
    nbh: &Neighborhood,
    x: &Instance,
    oracle: &PredictionOracle,
    smote: Option<&SmoteConfig>,
    schema: &Schema,
) -> Result<ExplainerSet> {
    let mut rows = nbh.rows.clone();
    let mut labels = nbh.relabels.clone();
    let mut provenance = vec![Provenance::Original; rows.len()];
    rows.push(x.clone());
    labels.push(oracle.predict_one(x)?);
    provenance.push(Provenance::Query);

    if let Some(cfg) = smote {
        if !oracle.task().is_classification() {
            return Err(Error::RegressionOversampling);
        }
        if oracle.is_precomputed() {
            return Err(Error::PrecomputedSynthetic);
        }
        let synthetic = smote_nc(&nbh.rows, &nbh.relabels, schema, cfg)?;
        if !synthetic.is_empty() {
            let synth_rows: Vec<Instance> = synthetic.into_iter().map(|s| s.instance).collect();
            let synth_labels = oracle.predict_batch(&synth_rows)?;
            provenance.extend(std::iter::repeat(Provenance::Synthetic).take(synth_rows.len()));
            rows.extend(synth_rows);
            labels.extend(synth_labels);
        }
    }
    Ok(ExplainerSet {
        rows,
        labels,
        provenance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Le => "<=",
            Operator::Gt => ">",
            Operator::Eq => "==",
            Operator::Ne => "!=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub feature: usize,
    pub name: String,
    pub op: Operator,
    pub value: Value,
}

impl Condition {
    pub fn holds(&self, inst: &Instance) -> bool {
        match (self.op, inst.get(self.feature), self.value) {
            (Operator::Le, Value::Real(x), Value::Real(t)) => x <= t,
            (Operator::Gt, Value::Real(x), Value::Real(t)) => x > t,
            (Operator::Eq, Value::Category(x), Value::Category(c)) => x == c,
            (Operator::Ne, Value::Category(x), Value::Category(c)) => x != c,
            _ => false,
        }
    }

    pub fn render(&self, schema: &Schema) -> String {
        format!(
            "{} {} {}",
            self.name,
            self.op,
            schema.format_value(self.feature, self.value)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub conditions: Vec<Condition>,
    pub prediction: Label,
    /// Explainer-set rows satisfying every condition.
    pub support: usize,
    /// Fraction of supporting rows whose label agrees with the prediction.
    pub purity: f64,
}

impl Rule {
    pub fn holds(&self, inst: &Instance) -> bool {
        self.conditions.iter().all(|c| c.holds(inst))
    }
}

/// Turn a decision path into conditions: repeated bounds on one numeric
/// feature collapse to the tightest interval, and `!=` conditions are dropped
/// for a feature that also carries an `==`. Each condition keeps the position
/// where its feature/operator pair first appeared.
pub fn path_to_conditions(path: &[PathStep], schema: &Schema) -> Vec<Condition> {
    let mut out: Vec<Condition> = Vec::new();
    for step in path {
        let name = schema.feature(step.feature).name.clone();
        match (step.test, step.passed) {
            (SplitTest::NumericLe { threshold }, passed) => {
                let op = if passed { Operator::Le } else { Operator::Gt };
                match out.iter_mut().find(|c| c.feature == step.feature && c.op == op) {
                    Some(c) => {
                        let old = c.value.as_real().unwrap();
                        let tighter = if passed {
                            old.min(threshold)
                        } else {
                            old.max(threshold)
                        };
                        c.value = Value::Real(tighter);
                    }
                    None => out.push(Condition {
                        feature: step.feature,
                        name,
                        op,
                        value: Value::Real(threshold),
                    }),
                }
            }
            (SplitTest::CategoryEq { category }, passed) => {
                let op = if passed { Operator::Eq } else { Operator::Ne };
                let value = Value::Category(category);
                let dup = out
                    .iter()
                    .any(|c| c.feature == step.feature && c.op == op && c.value == value);
                if !dup {
                    out.push(Condition {
                        feature: step.feature,
                        name,
                        op,
                        value,
                    });
                }
            }
        }
    }
    let pinned: HashSet<usize> = out
        .iter()
        .filter(|c| c.op == Operator::Eq)
        .map(|c| c.feature)
        .collect();
    out.retain(|c| c.op != Operator::Ne || !pinned.contains(&c.feature));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub original: usize,
    pub query: usize,
    pub synthetic: usize,
    /// Largest distance within the neighbourhood.
    pub max_distance: f64,
}

/// Resolved settings echoed alongside every explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub n_neighbors: usize,
    pub distance: MetricKind,
    pub smote: String,
    pub smote_k: usize,
    pub criterion: Criterion,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub unpruned: bool,
    pub regression_tolerance: RegressionTolerance,
    pub oracle: String,
    pub explainer_set: SetSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub query: Instance,
    pub oracle_label: Label,
    pub rule: Rule,
    pub tree: ExplainerTree,
    pub tree_stats: TreeStats,
    pub faithful: bool,
    pub config: ConfigEcho,
    pub seed: u64,
}

impl Explanation {
    /// The surrogate's prediction for the query (the rule's conclusion).
    pub fn tree_prediction(&self) -> Label {
        self.rule.prediction
    }

    pub fn schema(&self) -> &Schema {
        self.tree.schema()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let s = self.schema();
        let conditions: Vec<serde_json::Value> = self
            .rule
            .conditions
            .iter()
            .map(|c| {
                serde_json::json!({
                    "feature": c.name,
                    "op": c.op,
                    "value": s.value_to_json(c.feature, c.value),
                })
            })
            .collect();
        serde_json::json!({
            "query": s.instance_to_json(&self.query),
            "oracle_label": s.label_to_json(self.oracle_label),
            "rule": {
                "conditions": conditions,
                "prediction": s.label_to_json(self.rule.prediction),
                "support": self.rule.support,
                "purity": self.rule.purity,
            },
            "tree": self.tree.to_json(),
            "tree_stats": self.tree_stats,
            "faithful": self.faithful,
            "config": self.config,
            "seed": self.seed,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let v = serde_json::Value::deserialize(&mut de)?;
        Self::from_json_value(&v)
    }

    pub fn from_json_value(v: &serde_json::Value) -> Result<Self> {
        let field = |name: &str| {
            v.get(name)
                .ok_or_else(|| Error::InvalidArgument(format!("explanation lacks '{name}'")))
        };
        let tree: ExplainerTree = serde_json::from_value(field("tree")?.clone())?;
        let schema = tree.schema().clone();
        let query = schema.instance_from_json(field("query")?)?;
        let oracle_label = schema.label_from_json(field("oracle_label")?)?;
        let rule_json = field("rule")?;
        let conditions = rule_json["conditions"]
            .as_array()
            .ok_or_else(|| Error::InvalidArgument("rule.conditions must be an array".into()))?
            .iter()
            .map(|c| {
                let name = c["feature"].as_str().unwrap_or_default().to_string();
                let feature = schema.feature_index(&name).ok_or_else(|| {
                    Error::InvalidArgument(format!("condition on unknown feature '{name}'"))
                })?;
                let op: Operator = serde_json::from_value(c["op"].clone())?;
                let value = match &c["value"] {
                    serde_json::Value::String(s) => schema.parse_value(feature, s)?,
                    serde_json::Value::Number(n) => Value::Real(n.as_f64().unwrap_or(f64::NAN)),
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "bad condition value {other}"
                        )))
                    }
                };
                Ok(Condition {
                    feature,
                    name,
                    op,
                    value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rule = Rule {
            conditions,
            prediction: schema.label_from_json(&rule_json["prediction"])?,
            support: serde_json::from_value(rule_json["support"].clone())?,
            purity: serde_json::from_value(rule_json["purity"].clone())?,
        };
        Ok(Explanation {
            query,
            oracle_label,
            rule,
            tree_stats: serde_json::from_value(field("tree_stats")?.clone())?,
            faithful: serde_json::from_value(field("faithful")?.clone())?,
            config: serde_json::from_value(field("config")?.clone())?,
            seed: serde_json::from_value(field("seed")?.clone())?,
            tree,
        })
    }

    pub fn render_text(&self) -> String {
        let s = self.schema();
        let lhs = if self.rule.conditions.is_empty() {
            "(always)".to_string()
        } else {
            self.rule
                .conditions
                .iter()
                .map(|c| c.render(s))
                .collect::<Vec<_>>()
                .join(" AND ")
        };
        format!(
            "IF {lhs} THEN {} (support={}, purity={:.3}, faithful={})\n\
             oracle: {}\n\
             tree: depth={} leaves={} nodes={}\n",
            s.format_label(self.rule.prediction),
            self.rule.support,
            self.rule.purity,
            self.faithful,
            s.format_label(self.oracle_label),
            self.tree_stats.depth,
            self.tree_stats.leaf_count,
            self.tree_stats.node_count,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Text,
    Json,
}

impl std::str::FromStr for RenderFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(RenderFormat::Text),
            "json" => Ok(RenderFormat::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown format '{other}' (expected text or json)"
            ))),
        }
    }
}

pub fn render_explanation(expl: &Explanation, format: RenderFormat) -> Vec<u8> {
    match format {
        RenderFormat::Text => expl.render_text().into_bytes(),
        RenderFormat::Json => {
            let mut out = serde_json::to_vec_pretty(&expl.to_json()).expect("json");
            out.push(b'\n');
            out
        }
    }
}

/// Everything [`explain_instance`] produces, including the intermediate sets
/// (used by the fidelity harness and the demo).
#[derive(Debug, Clone)]
pub struct ExplainRun {
    pub explanation: Explanation,
    pub neighborhood: Neighborhood,
    pub explainer_set: ExplainerSet,
}

pub fn explain_instance(
    train: &Dataset,
    x: &Instance,
    oracle: &PredictionOracle,
    cfg: &ExplainConfig,
) -> Result<Explanation> {
    explain_instance_full(train, x, oracle, cfg).map(|r| r.explanation)
}

pub fn explain_instance_full(
    train: &Dataset,
    x: &Instance,
    oracle: &PredictionOracle,
    cfg: &ExplainConfig,
) -> Result<ExplainRun> {
    if let Some(task) = train.schema().task() {
        if task != oracle.task() {
            return Err(Error::TaskMismatch(format!(
                "data declares {task:?}, oracle predicts {:?}",
                oracle.task()
            )));
        }
    }
    let nbh = select_neighborhood(train, x, oracle, cfg)?;
    explain_with_neighborhood(train.schema(), nbh, x, oracle, cfg)
}

/// Steps after neighbourhood selection, for callers that already hold one.
pub fn explain_with_neighborhood(
    schema: &Schema,
    nbh: Neighborhood,
    x: &Instance,
    oracle: &PredictionOracle,
    cfg: &ExplainConfig,
) -> Result<ExplainRun> {
    let task = oracle.task();
    let mut note = None;
    let smote = match (&cfg.smote, task) {
        (Some(_), Task::Regression) => {
            note = Some("oversampling disabled for regression targets".to_string());
            None
        }
        (Some(s), _) => Some(SmoteConfig {
            seed: seeds::derive(cfg.seed, seeds::SMOTE),
            ..*s
        }),
        (None, _) => None,
    };
    let set = build_explainer_set(&nbh, x, oracle, smote.as_ref(), schema)?;
    let query_pos = set
        .provenance
        .iter()
        .position(|&p| p == Provenance::Query)
        .expect("query row present");
    let oracle_label = set.labels[query_pos];

    let cart = CartConfig {
        criterion: match task {
            Task::Regression => Criterion::Mse,
            _ if cfg.cart.criterion == Criterion::Mse => Criterion::Gini,
            _ => cfg.cart.criterion,
        },
        seed: seeds::derive(cfg.seed, seeds::CART),
        ..cfg.cart
    };
    let tree = fit_tree(&set.rows, &set.labels, schema, &cart)?;
    let path = tree.decision_path(x)?;
    let (leaf_id, leaf) = tree.leaf_unchecked(x);
    let prediction = leaf.prediction();

    let tol = cfg.regression_tolerance;
    let mut support = 0usize;
    let mut agreeing = 0usize;
    for (r, l) in set.rows.iter().zip(&set.labels) {
        if tree.leaf_unchecked(r).0 == leaf_id {
            support += 1;
            if labels_agree(*l, prediction, &tol) {
                agreeing += 1;
            }
        }
    }
    let rule = Rule {
        conditions: path_to_conditions(&path, schema),
        prediction,
        support,
        purity: if support == 0 {
            0.0
        } else {
            agreeing as f64 / support as f64
        },
    };
    let faithful = labels_agree(prediction, oracle_label, &tol);

    let config = ConfigEcho {
        n_neighbors: nbh.len(),
        distance: cfg.metric,
        smote: smote
            .map(|s| s.policy.to_string())
            .unwrap_or_else(|| "off".into()),
        smote_k: cfg.smote.map_or(0, |s| s.k_neighbors),
        criterion: cart.criterion,
        min_samples_split: cart.min_samples_split,
        max_depth: cart.max_depth,
        unpruned: cart.max_depth.is_none() && cart.min_samples_split == 2,
        regression_tolerance: tol,
        oracle: oracle.describe(),
        explainer_set: SetSummary {
            original: set.count(Provenance::Original),
            query: set.count(Provenance::Query),
            synthetic: set.count(Provenance::Synthetic),
            max_distance: nbh.distances.last().copied().unwrap_or(0.0),
        },
        note,
    };
    let explanation = Explanation {
        query: x.clone(),
        oracle_label,
        rule,
        tree_stats: tree.stats(),
        tree,
        faithful,
        config,
        seed: cfg.seed,
    };
    Ok(ExplainRun {
        explanation,
        neighborhood: nbh,
        explainer_set: set,
    })
}
