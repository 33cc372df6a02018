//! Mixed-type tabular data: schemas, instances, datasets.
//!
//! A [`Schema`] is the ground truth for how every other module treats a
//! feature. Numeric features carry the range observed on the training data,
//! categorical features carry a closed, ordered category set. Instances store
//! categorical values as indices into that set.

mod io;
mod synth;

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_dataset, load_table, load_table_with, read_schema, write_csv, write_dataset, LoadOptions,
    Table, TaskHint,
};
pub use synth::{synth_dataset, Generator, SynthSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Numeric { min: f64, max: f64 },
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric { min, max },
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                categories: categories.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, FeatureKind::Numeric { .. })
    }

    /// Width of the numeric range, `None` for categorical features.
    pub fn span(&self) -> Option<f64> {
        match self.kind {
            FeatureKind::Numeric { min, max } => Some(max - min),
            FeatureKind::Categorical { .. } => None,
        }
    }

    pub fn categories(&self) -> &[String] {
        match &self.kind {
            FeatureKind::Categorical { categories } => categories,
            FeatureKind::Numeric { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    Classification { classes: Vec<String> },
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub name: String,
    pub kind: TargetKind,
}

/// Prediction task, derived from the target declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification { n_classes: usize },
    Regression,
}

impl Task {
    pub fn is_classification(self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

/// A single feature value. Categorical values are indices into the
/// feature's category list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Real(f64),
    Category(usize),
}

impl Value {
    pub fn as_real(self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(v),
            Value::Category(_) => None,
        }
    }

    pub fn as_category(self) -> Option<usize> {
        match self {
            Value::Category(c) => Some(c),
            Value::Real(_) => None,
        }
    }
}

/// A target or prediction: a class index or a real value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Label {
    Class(usize),
    Value(f64),
}

impl Label {
    pub fn class(self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(c),
            Label::Value(_) => None,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Label::Value(v) => Some(v),
            Label::Class(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    values: Vec<Value>,
}

impl Instance {
    pub fn new(values: Vec<Value>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Value {
        self.values[i]
    }

    /// Numeric value of feature `i`. Panics if the feature is categorical.
    pub fn real(&self, i: usize) -> f64 {
        match self.values[i] {
            Value::Real(v) => v,
            Value::Category(_) => panic!("feature {i} is categorical"),
        }
    }

    /// Category index of feature `i`. Panics if the feature is numeric.
    pub fn category(&self, i: usize) -> usize {
        match self.values[i] {
            Value::Category(c) => c,
            Value::Real(_) => panic!("feature {i} is numeric"),
        }
    }

    /// Hashable identity of the feature vector (`-0.0` and `0.0` coincide).
    pub fn key(&self) -> Vec<u64> {
        self.values
            .iter()
            .map(|v| match *v {
                Value::Real(x) if x == 0.0 => 0,
                Value::Real(x) => x.to_bits(),
                Value::Category(c) => c as u64,
            })
            .collect()
    }
}

impl From<Vec<Value>> for Instance {
    fn from(values: Vec<Value>) -> Self {
        Self::new(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    features: Vec<FeatureSpec>,
    target: Option<TargetSpec>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>, target: Option<TargetSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate feature name '{}'",
                    f.name
                )));
            }
            match &f.kind {
                FeatureKind::Numeric { min, max } => {
                    if !(min.is_finite() && max.is_finite() && min <= max) {
                        return Err(Error::InvalidSchema(format!(
                            "feature '{}' has invalid range ({min}, {max})",
                            f.name
                        )));
                    }
                }
                FeatureKind::Categorical { categories } => {
                    check_unique_nonempty(&f.name, categories)?;
                }
            }
        }
        if let Some(t) = &target {
            if seen.contains(t.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "target '{}' is also a feature",
                    t.name
                )));
            }
            if let TargetKind::Classification { classes } = &t.kind {
                check_unique_nonempty(&t.name, classes)?;
                if classes.len() < 2 {
                    return Err(Error::InvalidSchema(format!(
                        "target '{}' must list at least 2 classes",
                        t.name
                    )));
                }
            }
        }
        Ok(Self { features, target })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &FeatureSpec {
        &self.features[i]
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn target(&self) -> Option<&TargetSpec> {
        self.target.as_ref()
    }

    pub fn task(&self) -> Option<Task> {
        self.target.as_ref().map(|t| match &t.kind {
            TargetKind::Classification { classes } => Task::Classification {
                n_classes: classes.len(),
            },
            TargetKind::Regression => Task::Regression,
        })
    }

    pub fn with_target(mut self, target: Option<TargetSpec>) -> Result<Self> {
        let features = std::mem::take(&mut self.features);
        Schema::new(features, target)
    }

    /// Same features, kinds, category sets and target declaration.
    /// Numeric ranges are allowed to differ.
    pub fn compatible_with(&self, other: &Schema) -> bool {
        self.features.len() == other.features.len()
            && self.target == other.target
            && self.features.iter().zip(&other.features).all(|(a, b)| {
                a.name == b.name
                    && match (&a.kind, &b.kind) {
                        (FeatureKind::Numeric { .. }, FeatureKind::Numeric { .. }) => true,
                        (
                            FeatureKind::Categorical { categories: x },
                            FeatureKind::Categorical { categories: y },
                        ) => x == y,
                        _ => false,
                    }
            })
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        if inst.len() != self.features.len() {
            return Err(Error::Arity {
                expected: self.features.len(),
                got: inst.len(),
            });
        }
        for (i, (f, v)) in self.features.iter().zip(inst.values()).enumerate() {
            match (&f.kind, *v) {
                (FeatureKind::Numeric { .. }, Value::Real(x)) => {
                    if !x.is_finite() {
                        return Err(Error::NonFinite {
                            index: i,
                            name: f.name.clone(),
                        });
                    }
                }
                (FeatureKind::Categorical { categories }, Value::Category(c)) => {
                    if c >= categories.len() {
                        return Err(Error::OutOfVocabulary {
                            index: i,
                            name: f.name.clone(),
                        });
                    }
                }
                _ => {
                    return Err(Error::TypeMismatch {
                        index: i,
                        name: f.name.clone(),
                    })
                }
            }
        }
        Ok(())
    }

    pub fn validate_label(&self, label: Label) -> Result<()> {
        match (self.task(), label) {
            (Some(Task::Classification { n_classes }), Label::Class(c)) if c < n_classes => Ok(()),
            (Some(Task::Regression), Label::Value(v)) if v.is_finite() => Ok(()),
            (None, _) => Err(Error::MissingTarget(None)),
            (_, l) => Err(Error::InvalidLabel(format!("{l:?} does not fit the target"))),
        }
    }

    /// Parse one cell into a feature value.
    pub fn parse_value(&self, i: usize, cell: &str) -> Result<Value> {
        let f = &self.features[i];
        match &f.kind {
            FeatureKind::Numeric { .. } => cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Value::Real)
                .ok_or_else(|| Error::TypeMismatch {
                    index: i,
                    name: f.name.clone(),
                }),
            FeatureKind::Categorical { categories } => categories
                .iter()
                .position(|c| c == cell)
                .map(Value::Category)
                .ok_or_else(|| Error::UnknownCategory {
                    column: f.name.clone(),
                    value: cell.to_string(),
                }),
        }
    }

    pub fn format_value(&self, i: usize, v: Value) -> String {
        match v {
            Value::Real(x) => format!("{x}"),
            Value::Category(c) => self.features[i]
                .categories()
                .get(c)
                .cloned()
                .unwrap_or_else(|| format!("#{c}")),
        }
    }

    pub fn parse_label(&self, cell: &str) -> Result<Label> {
        let target = self.target.as_ref().ok_or(Error::MissingTarget(None))?;
        match &target.kind {
            TargetKind::Classification { classes } => classes
                .iter()
                .position(|c| c == cell)
                .map(Label::Class)
                .ok_or_else(|| Error::UnknownCategory {
                    column: target.name.clone(),
                    value: cell.to_string(),
                }),
            TargetKind::Regression => cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Label::Value)
                .ok_or_else(|| Error::InvalidLabel(format!("'{cell}' is not a finite number"))),
        }
    }

    pub fn format_label(&self, label: Label) -> String {
        match label {
            Label::Value(v) => format!("{v}"),
            Label::Class(c) => match self.target.as_ref().map(|t| &t.kind) {
                Some(TargetKind::Classification { classes }) if c < classes.len() => {
                    classes[c].clone()
                }
                _ => format!("#{c}"),
            },
        }
    }

    /// JSON form of a value: numbers for numeric features, category names
    /// for categorical ones.
    pub fn value_to_json(&self, i: usize, v: Value) -> serde_json::Value {
        match v {
            Value::Real(x) => serde_json::json!(x),
            Value::Category(_) => serde_json::Value::String(self.format_value(i, v)),
        }
    }

    pub fn instance_to_json(&self, inst: &Instance) -> serde_json::Value {
        serde_json::Value::Array(
            inst.values()
                .iter()
                .enumerate()
                .map(|(i, v)| self.value_to_json(i, *v))
                .collect(),
        )
    }

    /// Accepts either an array in feature order or an object keyed by
    /// feature name.
    pub fn instance_from_json(&self, json: &serde_json::Value) -> Result<Instance> {
        let cells: Vec<&serde_json::Value> = match json {
            serde_json::Value::Array(items) => {
                if items.len() != self.features.len() {
                    return Err(Error::Arity {
                        expected: self.features.len(),
                        got: items.len(),
                    });
                }
                items.iter().collect()
            }
            serde_json::Value::Object(map) => {
                if map.len() != self.features.len() {
                    return Err(Error::Arity {
                        expected: self.features.len(),
                        got: map.len(),
                    });
                }
                self.features
                    .iter()
                    .map(|f| {
                        map.get(&f.name).ok_or_else(|| {
                            Error::SchemaMismatch(format!("instance lacks feature '{}'", f.name))
                        })
                    })
                    .collect::<Result<_>>()?
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "instance must be a JSON array or object, got {other}"
                )))
            }
        };
        let values = cells
            .into_iter()
            .enumerate()
            .map(|(i, cell)| {
                let f = &self.features[i];
                match (&f.kind, cell) {
                    (FeatureKind::Numeric { .. }, serde_json::Value::Number(n)) => n
                        .as_f64()
                        .map(Value::Real)
                        .ok_or_else(|| Error::TypeMismatch {
                            index: i,
                            name: f.name.clone(),
                        }),
                    (FeatureKind::Categorical { .. }, serde_json::Value::String(s)) => {
                        self.parse_value(i, s).map_err(|_| Error::OutOfVocabulary {
                            index: i,
                            name: f.name.clone(),
                        })
                    }
                    _ => Err(Error::TypeMismatch {
                        index: i,
                        name: f.name.clone(),
                    }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let inst = Instance::new(values);
        self.validate(&inst)?;
        Ok(inst)
    }

    /// Class names as strings, regression values as numbers.
    pub fn label_to_json(&self, label: Label) -> serde_json::Value {
        match label {
            Label::Value(v) => serde_json::json!(v),
            Label::Class(_) => serde_json::Value::String(self.format_label(label)),
        }
    }

    /// Inverse of [`Schema::label_to_json`]. A bare number is accepted as a
    /// class when its decimal rendering names a class.
    pub fn label_from_json(&self, json: &serde_json::Value) -> Result<Label> {
        match (self.task(), json) {
            (Some(Task::Classification { .. }), serde_json::Value::String(s)) => {
                self.parse_label(s)
            }
            (Some(Task::Classification { .. }), serde_json::Value::Number(n)) => {
                self.parse_label(&n.to_string())
            }
            (Some(Task::Regression), serde_json::Value::Number(n)) => n
                .as_f64()
                .filter(|v| v.is_finite())
                .map(Label::Value)
                .ok_or_else(|| Error::InvalidLabel(n.to_string())),
            (None, _) => Err(Error::MissingTarget(None)),
            (_, other) => Err(Error::InvalidLabel(other.to_string())),
        }
    }
}

fn check_unique_nonempty(name: &str, items: &[String]) -> Result<()> {
    if items.is_empty() {
        return Err(Error::InvalidSchema(format!("'{name}' has no categories")));
    }
    let mut seen = HashSet::new();
    for c in items {
        if !seen.insert(c.as_str()) {
            return Err(Error::InvalidSchema(format!(
                "'{name}' lists category '{c}' twice"
            )));
        }
    }
    Ok(())
}

pub fn validate_instance(schema: &Schema, inst: &Instance) -> Result<()> {
    schema.validate(inst)
}

// Schema file wire format.

#[derive(Serialize, Deserialize)]
struct SchemaWire {
    features: Vec<FeatureWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<TargetWire>,
}

#[derive(Serialize, Deserialize)]
struct FeatureWire {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct TargetWire {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classes: Option<Vec<String>>,
}

impl From<&Schema> for SchemaWire {
    fn from(s: &Schema) -> Self {
        SchemaWire {
            features: s
                .features
                .iter()
                .map(|f| match &f.kind {
                    FeatureKind::Numeric { min, max } => FeatureWire {
                        name: f.name.clone(),
                        kind: "numeric".into(),
                        range: Some((*min, *max)),
                        categories: None,
                    },
                    FeatureKind::Categorical { categories } => FeatureWire {
                        name: f.name.clone(),
                        kind: "categorical".into(),
                        range: None,
                        categories: Some(categories.clone()),
                    },
                })
                .collect(),
            target: s.target.as_ref().map(|t| match &t.kind {
                TargetKind::Classification { classes } => TargetWire {
                    name: t.name.clone(),
                    kind: "classification".into(),
                    classes: Some(classes.clone()),
                },
                TargetKind::Regression => TargetWire {
                    name: t.name.clone(),
                    kind: "regression".into(),
                    classes: None,
                },
            }),
        }
    }
}

impl TryFrom<SchemaWire> for Schema {
    type Error = Error;

    fn try_from(w: SchemaWire) -> Result<Self> {
        let features = w
            .features
            .into_iter()
            .map(|f| match f.kind.as_str() {
                "numeric" => {
                    let (min, max) = f.range.ok_or_else(|| {
                        Error::InvalidSchema(format!("numeric feature '{}' lacks a range", f.name))
                    })?;
                    Ok(FeatureSpec::numeric(f.name, min, max))
                }
                "categorical" => {
                    let cats = f.categories.ok_or_else(|| {
                        Error::InvalidSchema(format!(
                            "categorical feature '{}' lacks categories",
                            f.name
                        ))
                    })?;
                    Ok(FeatureSpec::categorical(f.name, cats))
                }
                other => Err(Error::InvalidSchema(format!(
                    "feature '{}' has unknown kind '{other}'",
                    f.name
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        let target = w
            .target
            .map(|t| match t.kind.as_str() {
                "classification" => {
                    let classes = t.classes.ok_or_else(|| {
                        Error::InvalidSchema(format!("target '{}' lacks classes", t.name))
                    })?;
                    Ok(TargetSpec {
                        name: t.name,
                        kind: TargetKind::Classification { classes },
                    })
                }
                "regression" => Ok(TargetSpec {
                    name: t.name,
                    kind: TargetKind::Regression,
                }),
                other => Err(Error::InvalidSchema(format!(
                    "target '{}' has unknown kind '{other}'",
                    t.name
                ))),
            })
            .transpose()?;
        Schema::new(features, target)
    }
}

impl Serialize for Schema {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SchemaWire::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Schema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = SchemaWire::deserialize(d)?;
        Schema::try_from(wire).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.features.iter().map(|x| x.name.as_str()).collect();
        write!(f, "[{}]", names.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Instance>,
    targets: Option<Vec<Label>>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Instance>, targets: Option<Vec<Label>>) -> Result<Self> {
        for r in &rows {
            schema.validate(r)?;
        }
        if let Some(t) = &targets {
            if t.len() != rows.len() {
                return Err(Error::LengthMismatch {
                    rows: rows.len(),
                    labels: t.len(),
                });
            }
            for l in t {
                schema.validate_label(*l)?;
            }
        }
        Ok(Self {
            schema,
            rows,
            targets,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Instance] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &Instance {
        &self.rows[i]
    }

    pub fn targets(&self) -> Option<&[Label]> {
        self.targets.as_deref()
    }

    /// Targets, or a `MissingTarget` error naming the declared column.
    pub fn require_targets(&self) -> Result<&[Label]> {
        self.targets
            .as_deref()
            .ok_or_else(|| Error::MissingTarget(self.schema.target().map(|t| t.name.clone())))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            targets: self
                .targets
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
        }
    }

    /// Recompute every numeric range from the rows held. No-op on an empty
    /// dataset.
    pub fn refit_ranges(&mut self) {
        if self.rows.is_empty() {
            return;
        }
        for (i, f) in self.schema.features.iter_mut().enumerate() {
            if let FeatureKind::Numeric { min, max } = &mut f.kind {
                let (lo, hi) = self
                    .rows
                    .iter()
                    .map(|r| r.real(i))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        (lo.min(x), hi.max(x))
                    });
                *min = lo;
                *max = hi;
            }
        }
    }

    /// Replace the schema by a compatible one (e.g. the training schema for
    /// a test split).
    pub fn with_schema(mut self, schema: Schema) -> Result<Self> {
        if !self.schema.compatible_with(&schema) {
            return Err(Error::SchemaMismatch(
                "schemas differ in features or target".into(),
            ));
        }
        self.schema = schema;
        Ok(self)
    }

    /// Seeded shuffle followed by a prefix split: the first
    /// `ceil(test_frac * n)` shuffled rows form the test set. Training ranges
    /// are refit on the training part and shared with the test part.
    pub fn split(&self, test_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        let (train_idx, test_idx) = self.split_indices(test_frac, seed)?;
        let mut train = self.subset(&train_idx);
        train.refit_ranges();
        let mut test = self.subset(&test_idx);
        test.schema = train.schema.clone();
        Ok((train, test))
    }

    /// Row indices of the `(train, test)` parts of [`Dataset::split`], each
    /// in ascending order.
    pub fn split_indices(&self, test_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(0.0..1.0).contains(&test_frac) {
            return Err(Error::InvalidArgument(format!(
                "test fraction must lie in [0, 1), got {test_frac}"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = (test_frac * self.len() as f64).ceil() as usize;
        let (test_idx, train_idx) = order.split_at(n_test);
        let mut train_idx = train_idx.to_vec();
        let mut test_idx = test_idx.to_vec();
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        Ok((train_idx, test_idx))
    }

    /// True when no two rows share a feature vector.
    pub fn has_unique_rows(&self) -> bool {
        let mut seen = HashSet::new();
        self.rows.iter().all(|r| seen.insert(r.key()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn age_sex() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::numeric("age", 0.0, 100.0),
                FeatureSpec::categorical("sex", ["M", "F"]),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn arity_error() {
        let inst = Instance::new(vec![Value::Real(1.0), Value::Category(0), Value::Real(2.0)]);
        assert!(matches!(
            validate_instance(&age_sex(), &inst),
            Err(Error::Arity {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn out_of_vocabulary() {
        let inst = Instance::new(vec![Value::Real(1.0), Value::Category(2)]);
        assert!(matches!(
            validate_instance(&age_sex(), &inst),
            Err(Error::OutOfVocabulary { index: 1, .. })
        ));
    }

    #[test]
    fn type_mismatch() {
        let inst = Instance::new(vec![Value::Category(0), Value::Category(0)]);
        assert!(matches!(
            validate_instance(&age_sex(), &inst),
            Err(Error::TypeMismatch { index: 0, .. })
        ));
    }

    #[test]
    fn conforming_instance() {
        let inst = Instance::new(vec![Value::Real(30.0), Value::Category(1)]);
        validate_instance(&age_sex(), &inst).unwrap();
    }

    #[test]
    fn schema_rejects_duplicates() {
        let err = Schema::new(
            vec![
                FeatureSpec::numeric("a", 0.0, 1.0),
                FeatureSpec::numeric("a", 0.0, 1.0),
            ],
            None,
        );
        assert!(err.is_err());
        let err = Schema::new(vec![FeatureSpec::categorical("c", ["x", "x"])], None);
        assert!(err.is_err());
        let err = Schema::new(
            vec![],
            Some(TargetSpec {
                name: "y".into(),
                kind: TargetKind::Classification {
                    classes: vec!["only".into()],
                },
            }),
        );
        assert!(err.is_err());
    }

    #[test]
    fn schema_json_shape() {
        let s = age_sex()
            .with_target(Some(TargetSpec {
                name: "y".into(),
                kind: TargetKind::Classification {
                    classes: vec!["0".into(), "1".into()],
                },
            }))
            .unwrap();
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "features": [
                    {"name": "age", "kind": "numeric", "range": [0.0, 100.0]},
                    {"name": "sex", "kind": "categorical", "categories": ["M", "F"]}
                ],
                "target": {"name": "y", "kind": "classification", "classes": ["0", "1"]}
            })
        );
        let back: Schema = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn instance_json_forms() {
        let s = age_sex();
        let inst = s
            .instance_from_json(&serde_json::json!({"sex": "F", "age": 41.5}))
            .unwrap();
        assert_eq!(inst.values(), &[Value::Real(41.5), Value::Category(1)]);
        assert_eq!(s.instance_to_json(&inst), serde_json::json!([41.5, "F"]));
        assert!(s.instance_from_json(&serde_json::json!([1.0, "X"])).is_err());
        assert!(s.instance_from_json(&serde_json::json!(["1", "M"])).is_err());
    }

    #[test]
    fn split_is_seeded_and_partitions() {
        let s = Schema::new(vec![FeatureSpec::numeric("a", 0.0, 9.0)], None).unwrap();
        let rows = (0..10).map(|i| Instance::new(vec![Value::Real(i as f64)])).collect();
        let d = Dataset::new(s, rows, None).unwrap();
        let (tr, te) = d.split(0.2, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr2, te2) = d.split(0.2, 3).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        assert_eq!(tr.schema(), te.schema());
    }
}
