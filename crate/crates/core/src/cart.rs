//! CART decision trees for classification and regression.
//!
//! Trees are grown greedily. Numeric features are split at midpoints between
//! consecutive distinct values (`x <= t` goes left), categorical features by
//! one-vs-rest equality (`x == c` goes left). With the default configuration
//! nothing is pruned: an impure node is split for as long as some test
//! separates its rows, so a tree reproduces every training label unless two
//! rows share a feature vector but disagree on the label.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{FeatureKind, Instance, Label, Schema, Task, Value};

/// Gains closer than this are treated as ties, so that the lower feature
/// index and the lower threshold win regardless of rounding.
const GAIN_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitTest {
    NumericLe { threshold: f64 },
    CategoryEq { category: usize },
}

impl SplitTest {
    /// True when `v` passes the test, i.e. is routed to the left child.
    pub fn passes(&self, v: Value) -> bool {
        match (*self, v) {
            (SplitTest::NumericLe { threshold }, Value::Real(x)) => x <= threshold,
            (SplitTest::CategoryEq { category }, Value::Category(c)) => c == category,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LeafValue {
    Class { prediction: usize, counts: Vec<usize> },
    Regression { prediction: f64, stats: TargetStats },
}

impl LeafValue {
    pub fn prediction(&self) -> Label {
        match self {
            LeafValue::Class { prediction, .. } => Label::Class(*prediction),
            LeafValue::Regression { prediction, .. } => Label::Value(*prediction),
        }
    }

    pub fn n_samples(&self) -> usize {
        match self {
            LeafValue::Class { counts, .. } => counts.iter().sum(),
            LeafValue::Regression { stats, .. } => stats.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal {
        feature: usize,
        test: SplitTest,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf: LeafValue,
    },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    fn check(&self, schema: &Schema, task: Task) -> Result<()> {
        match self {
            TreeNode::Internal {
                feature,
                test,
                left,
                right,
            } => {
                let f = schema.features().get(*feature).ok_or_else(|| {
                    Error::MalformedModel(format!("split on unknown feature {feature}"))
                })?;
                match (&f.kind, test) {
                    (FeatureKind::Numeric { .. }, SplitTest::NumericLe { threshold })
                        if threshold.is_finite() => {}
                    (FeatureKind::Categorical { categories }, SplitTest::CategoryEq { category })
                        if *category < categories.len() => {}
                    _ => {
                        return Err(Error::MalformedModel(format!(
                            "test {test:?} does not fit feature '{}'",
                            f.name
                        )))
                    }
                }
                left.check(schema, task)?;
                right.check(schema, task)
            }
            TreeNode::Leaf { leaf } => match (leaf, task) {
                (LeafValue::Class { prediction, counts }, Task::Classification { n_classes })
                    if *prediction < n_classes && counts.len() == n_classes =>
                {
                    Ok(())
                }
                (LeafValue::Regression { prediction, .. }, Task::Regression)
                    if prediction.is_finite() =>
                {
                    Ok(())
                }
                _ => Err(Error::MalformedModel(format!(
                    "leaf {leaf:?} does not fit task {task:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
    /// Used for regression whatever the configured criterion.
    Mse,
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gini" => Ok(Criterion::Gini),
            "entropy" => Ok(Criterion::Entropy),
            "mse" => Ok(Criterion::Mse),
            other => Err(Error::InvalidArgument(format!("unknown criterion '{other}'"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Gini => "gini",
            Criterion::Entropy => "entropy",
            Criterion::Mse => "mse",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CartConfig {
    pub criterion: Criterion,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
    /// Features drawn per node (random forests); `None` evaluates all.
    pub feature_subsample: Option<usize>,
}

impl Default for CartConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::Gini,
            min_samples_split: 2,
            max_depth: None,
            seed: 0,
            feature_subsample: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub depth: usize,
    pub leaf_count: usize,
    pub node_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub feature: usize,
    pub test: SplitTest,
    /// Whether the instance passed the test (took the left branch).
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerTree {
    root: TreeNode,
    schema: Schema,
    task: Task,
    depth: usize,
    leaf_count: usize,
}

#[derive(Serialize, Deserialize)]
struct TreeWire {
    task: Task,
    schema: Schema,
    depth: usize,
    leaf_count: usize,
    root: TreeNode,
}

impl ExplainerTree {
    pub fn from_root(root: TreeNode, schema: Schema, task: Task) -> Result<Self> {
        root.check(&schema, task)?;
        Ok(Self {
            depth: root.depth(),
            leaf_count: root.leaf_count(),
            root,
            schema,
            task,
        })
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn into_root(self) -> TreeNode {
        self.root
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn stats(&self) -> TreeStats {
        TreeStats {
            depth: self.depth,
            leaf_count: self.leaf_count,
            node_count: self.root.node_count(),
        }
    }

    pub fn predict(&self, inst: &Instance) -> Result<Label> {
        self.schema.validate(inst)?;
        Ok(self.predict_unchecked(inst))
    }

    pub(crate) fn predict_unchecked(&self, inst: &Instance) -> Label {
        self.leaf_unchecked(inst).1.prediction()
    }

    /// Preorder index of the leaf `inst` reaches, plus the leaf itself.
    pub(crate) fn leaf_unchecked(&self, inst: &Instance) -> (usize, &LeafValue) {
        let mut node = &self.root;
        let mut id = 0;
        loop {
            match node {
                TreeNode::Leaf { leaf } => return (id, leaf),
                TreeNode::Internal {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    if test.passes(inst.get(*feature)) {
                        id += 1;
                        node = left;
                    } else {
                        id += 1 + left.node_count();
                        node = right;
                    }
                }
            }
        }
    }

    pub fn decision_path(&self, inst: &Instance) -> Result<Vec<PathStep>> {
        self.schema.validate(inst)?;
        let mut path = Vec::with_capacity(self.depth);
        let mut node = &self.root;
        while let TreeNode::Internal {
            feature,
            test,
            left,
            right,
        } = node
        {
            let passed = test.passes(inst.get(*feature));
            path.push(PathStep {
                feature: *feature,
                test: *test,
                passed,
            });
            node = if passed { left } else { right };
        }
        Ok(path)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("tree serialises")
    }
}

impl Serialize for ExplainerTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        // Borrowing serialisation would need a second wire type; trees are
        // small enough to clone.
        TreeWire {
            task: self.task,
            schema: self.schema.clone(),
            depth: self.depth,
            leaf_count: self.leaf_count,
            root: self.root.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ExplainerTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = TreeWire::deserialize(d)?;
        let tree = ExplainerTree::from_root(w.root, w.schema, w.task).map_err(D::Error::custom)?;
        if tree.depth != w.depth || tree.leaf_count != w.leaf_count {
            return Err(D::Error::custom("depth/leaf_count disagree with the tree"));
        }
        Ok(tree)
    }
}

pub fn predict_tree(tree: &ExplainerTree, inst: &Instance) -> Result<Label> {
    tree.predict(inst)
}

pub fn decision_path(tree: &ExplainerTree, inst: &Instance) -> Result<Vec<PathStep>> {
    tree.decision_path(inst)
}

pub fn tree_stats(tree: &ExplainerTree) -> TreeStats {
    tree.stats()
}

/// Gini impurity of a class histogram.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Shannon entropy (bits) of a class histogram.
pub fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

enum Targets {
    Classes { labels: Vec<usize>, n_classes: usize },
    Values(Vec<f64>),
}

fn task_of(labels: &[Label], schema: &Schema) -> Result<(Task, Targets)> {
    if labels.iter().all(|l| l.class().is_some()) {
        let labels: Vec<usize> = labels.iter().map(|l| l.class().unwrap()).collect();
        let seen = labels.iter().copied().max().map_or(1, |m| m + 1);
        let n_classes = match schema.task() {
            Some(Task::Classification { n_classes }) => {
                if seen > n_classes {
                    return Err(Error::InvalidLabel(format!(
                        "class index {} outside the {n_classes} declared classes",
                        seen - 1
                    )));
                }
                n_classes
            }
            _ => seen.max(2),
        };
        Ok((
            Task::Classification { n_classes },
            Targets::Classes { labels, n_classes },
        ))
    } else if labels.iter().all(|l| l.value().is_some_and(f64::is_finite)) {
        Ok((
            Task::Regression,
            Targets::Values(labels.iter().map(|l| l.value().unwrap()).collect()),
        ))
    } else {
        Err(Error::InvalidLabel(
            "labels mix classes and values, or contain non-finite values".into(),
        ))
    }
}

struct Candidate {
    feature: usize,
    test: SplitTest,
    gain: f64,
}

struct Builder<'a> {
    rows: &'a [Instance],
    schema: &'a Schema,
    targets: Targets,
    cfg: CartConfig,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn class_counts(&self, idx: &[usize]) -> Vec<usize> {
        let Targets::Classes { labels, n_classes } = &self.targets else {
            unreachable!()
        };
        let mut counts = vec![0; *n_classes];
        for &i in idx {
            counts[labels[i]] += 1;
        }
        counts
    }

    fn impurity(&self, counts: &[usize]) -> f64 {
        match self.cfg.criterion {
            Criterion::Entropy => entropy(counts),
            _ => gini(counts),
        }
    }

    fn leaf(&self, idx: &[usize]) -> TreeNode {
        let leaf = match &self.targets {
            Targets::Classes { .. } => {
                let counts = self.class_counts(idx);
                let prediction = (0..counts.len())
                    .rev()
                    .max_by_key(|&c| counts[c])
                    .unwrap_or(0);
                LeafValue::Class { prediction, counts }
            }
            Targets::Values(ys) => {
                let n = idx.len() as f64;
                let first = ys[idx[0]];
                let mean = if idx.iter().all(|&i| ys[i] == first) {
                    first
                } else {
                    idx.iter().map(|&i| ys[i]).sum::<f64>() / n
                };
                let variance = idx.iter().map(|&i| (ys[i] - mean).powi(2)).sum::<f64>() / n;
                LeafValue::Regression {
                    prediction: mean,
                    stats: TargetStats {
                        count: idx.len(),
                        mean,
                        variance,
                    },
                }
            }
        };
        TreeNode::Leaf { leaf }
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        match &self.targets {
            Targets::Classes { labels, .. } => idx.iter().all(|&i| labels[i] == labels[idx[0]]),
            Targets::Values(ys) => idx.iter().all(|&i| ys[i] == ys[idx[0]]),
        }
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> TreeNode {
        let stop = idx.len() < self.cfg.min_samples_split
            || self.is_pure(&idx)
            || self.cfg.max_depth.is_some_and(|d| depth >= d);
        if stop {
            return self.leaf(&idx);
        }
        let Some(best) = self.best_split(&idx) else {
            return self.leaf(&idx);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| best.test.passes(self.rows[i].get(best.feature)));
        TreeNode::Internal {
            feature: best.feature,
            test: best.test,
            left: Box::new(self.build(left, depth + 1)),
            right: Box::new(self.build(right, depth + 1)),
        }
    }

    /// Best separating split. Gains are never negative for concave
    /// impurities, and a zero-gain split is still taken on an impure node.
    fn best_split(&mut self, idx: &[usize]) -> Option<Candidate> {
        let p = self.schema.n_features();
        let mut order: Vec<usize> = (0..p).collect();
        let budget = match self.cfg.feature_subsample {
            Some(m) if m < p => {
                order.shuffle(&mut self.rng);
                m.max(1)
            }
            _ => p,
        };
        let mut best: Option<Candidate> = None;
        for (visited, &f) in order.iter().enumerate() {
            if visited >= budget && best.is_some() {
                break;
            }
            if let Some(c) = self.best_for_feature(idx, f) {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        c.gain > b.gain + GAIN_TIE
                            || (c.gain > b.gain - GAIN_TIE && c.feature < b.feature)
                    }
                };
                if better {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn best_for_feature(&self, idx: &[usize], f: usize) -> Option<Candidate> {
        match self.schema.feature(f).kind {
            FeatureKind::Numeric { .. } => self.numeric_split(idx, f),
            FeatureKind::Categorical { ref categories } => {
                self.categorical_split(idx, f, categories.len())
            }
        }
    }

    fn numeric_split(&self, idx: &[usize], f: usize) -> Option<Candidate> {
        let mut sorted: Vec<(f64, usize)> = idx.iter().map(|&i| (self.rows[i].real(f), i)).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let mut best: Option<(f64, f64)> = None; // (gain, threshold)
        let mut consider = |gain: f64, lo: f64, hi: f64| {
            let mut t = lo + (hi - lo) / 2.0;
            if t >= hi {
                t = lo;
            }
            if best.map_or(true, |(g, _)| gain > g + GAIN_TIE) {
                best = Some((gain, t));
            }
        };
        match &self.targets {
            Targets::Classes { labels, n_classes } => {
                let parent = self.class_counts(idx);
                let parent_imp = self.impurity(&parent);
                let mut left = vec![0usize; *n_classes];
                let mut right = parent.clone();
                for k in 0..n - 1 {
                    let c = labels[sorted[k].1];
                    left[c] += 1;
                    right[c] -= 1;
                    if sorted[k].0 == sorted[k + 1].0 {
                        continue;
                    }
                    let nl = (k + 1) as f64;
                    let nr = (n - k - 1) as f64;
                    let child =
                        (nl * self.impurity(&left) + nr * self.impurity(&right)) / n as f64;
                    consider(parent_imp - child, sorted[k].0, sorted[k + 1].0);
                }
            }
            Targets::Values(ys) => {
                let total: f64 = idx.iter().map(|&i| ys[i]).sum();
                let total_sq: f64 = idx.iter().map(|&i| ys[i] * ys[i]).sum();
                let parent_imp = mse(total, total_sq, n as f64);
                let (mut s, mut sq) = (0.0, 0.0);
                for k in 0..n - 1 {
                    let y = ys[sorted[k].1];
                    s += y;
                    sq += y * y;
                    if sorted[k].0 == sorted[k + 1].0 {
                        continue;
                    }
                    let nl = (k + 1) as f64;
                    let nr = (n - k - 1) as f64;
                    let child = (nl * mse(s, sq, nl) + nr * mse(total - s, total_sq - sq, nr))
                        / n as f64;
                    consider(parent_imp - child, sorted[k].0, sorted[k + 1].0);
                }
            }
        }
        best.map(|(gain, threshold)| Candidate {
            feature: f,
            test: SplitTest::NumericLe { threshold },
            gain,
        })
    }

    fn categorical_split(&self, idx: &[usize], f: usize, n_cats: usize) -> Option<Candidate> {
        let n = idx.len();
        let mut per_cat = vec![0usize; n_cats];
        for &i in idx {
            per_cat[self.rows[i].category(f)] += 1;
        }
        let mut best: Option<(f64, usize)> = None;
        match &self.targets {
            Targets::Classes { labels, n_classes } => {
                let parent = self.class_counts(idx);
                let parent_imp = self.impurity(&parent);
                let mut table = vec![vec![0usize; *n_classes]; n_cats];
                for &i in idx {
                    table[self.rows[i].category(f)][labels[i]] += 1;
                }
                for c in 0..n_cats {
                    if per_cat[c] == 0 || per_cat[c] == n {
                        continue;
                    }
                    let right: Vec<usize> =
                        parent.iter().zip(&table[c]).map(|(p, l)| p - l).collect();
                    let nl = per_cat[c] as f64;
                    let nr = (n - per_cat[c]) as f64;
                    let child = (nl * self.impurity(&table[c]) + nr * self.impurity(&right))
                        / n as f64;
                    let gain = parent_imp - child;
                    if best.map_or(true, |(g, _)| gain > g + GAIN_TIE) {
                        best = Some((gain, c));
                    }
                }
            }
            Targets::Values(ys) => {
                let total: f64 = idx.iter().map(|&i| ys[i]).sum();
                let total_sq: f64 = idx.iter().map(|&i| ys[i] * ys[i]).sum();
                let parent_imp = mse(total, total_sq, n as f64);
                let mut sums = vec![(0.0, 0.0); n_cats];
                for &i in idx {
                    let e = &mut sums[self.rows[i].category(f)];
                    e.0 += ys[i];
                    e.1 += ys[i] * ys[i];
                }
                for c in 0..n_cats {
                    if per_cat[c] == 0 || per_cat[c] == n {
                        continue;
                    }
                    let nl = per_cat[c] as f64;
                    let nr = (n - per_cat[c]) as f64;
                    let (s, sq) = sums[c];
                    let child = (nl * mse(s, sq, nl) + nr * mse(total - s, total_sq - sq, nr))
                        / n as f64;
                    let gain = parent_imp - child;
                    if best.map_or(true, |(g, _)| gain > g + GAIN_TIE) {
                        best = Some((gain, c));
                    }
                }
            }
        }
        best.map(|(gain, category)| Candidate {
            feature: f,
            test: SplitTest::CategoryEq { category },
            gain,
        })
    }
}

fn mse(sum: f64, sum_sq: f64, n: f64) -> f64 {
    (sum_sq / n - (sum / n).powi(2)).max(0.0)
}

pub fn fit_tree(
    rows: &[Instance],
    labels: &[Label],
    schema: &Schema,
    cfg: &CartConfig,
) -> Result<ExplainerTree> {
    if rows.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    if cfg.min_samples_split < 2 {
        return Err(Error::InvalidArgument(
            "min_samples_split must be at least 2".into(),
        ));
    }
    for r in rows {
        schema.validate(r)?;
    }
    let (task, targets) = task_of(labels, schema)?;
    if task.is_classification() && cfg.criterion == Criterion::Mse {
        return Err(Error::InvalidArgument(
            "mse criterion needs a regression target".into(),
        ));
    }
    let mut builder = Builder {
        rows,
        schema,
        targets,
        cfg: *cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let root = builder.build((0..rows.len()).collect(), 0);
    ExplainerTree::from_root(root, schema.clone(), task)
}
