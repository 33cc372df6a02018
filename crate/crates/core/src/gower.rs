//! Mixed-type distances for neighbourhood selection.
//!
//! Gower: the mean over features of a per-feature dissimilarity in `[0, 1]`.
//! Numeric features use `|a - b| / (max - min)` after clamping both values to
//! the schema range (constant features contribute 0); categorical features
//! contribute 0 on a match and 1 otherwise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{FeatureKind, Instance, Schema, Value};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    Gower,
    /// Euclidean distance over range-normalised numerics and one-hot
    /// categoricals, divided by its largest attainable value.
    #[serde(rename = "euclidean")]
    EuclideanNormalized,
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gower" => Ok(MetricKind::Gower),
            "euclidean" => Ok(MetricKind::EuclideanNormalized),
            other => Err(Error::InvalidArgument(format!(
                "unknown distance '{other}' (expected gower or euclidean)"
            ))),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Gower => "gower",
            MetricKind::EuclideanNormalized => "euclidean",
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Term {
    /// min, 1 / span; `inv_span == 0` marks a constant feature.
    Numeric { min: f64, max: f64, inv_span: f64 },
    Categorical,
}

#[derive(Debug, Clone)]
pub struct DistanceMetric<'a> {
    kind: MetricKind,
    schema: &'a Schema,
    terms: Vec<Term>,
    /// Squared distance attained when every feature is maximally different.
    max_sq: f64,
}

impl<'a> DistanceMetric<'a> {
    pub fn new(kind: MetricKind, schema: &'a Schema) -> Self {
        let terms: Vec<Term> = schema
            .features()
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Numeric { min, max } => Term::Numeric {
                    min,
                    max,
                    inv_span: if max > min { 1.0 / (max - min) } else { 0.0 },
                },
                FeatureKind::Categorical { .. } => Term::Categorical,
            })
            .collect();
        let max_sq = terms
            .iter()
            .map(|t| match t {
                Term::Numeric { .. } => 1.0,
                Term::Categorical => 2.0,
            })
            .sum();
        Self {
            kind,
            schema,
            terms,
            max_sq,
        }
    }

    pub fn gower(schema: &'a Schema) -> Self {
        Self::new(MetricKind::Gower, schema)
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn schema(&self) -> &'a Schema {
        self.schema
    }

    pub fn distance(&self, a: &Instance, b: &Instance) -> Result<f64> {
        self.schema.validate(a)?;
        self.schema.validate(b)?;
        Ok(self.distance_unchecked(a, b))
    }

    pub fn distances_to(&self, x: &Instance, rows: &[Instance]) -> Result<Vec<f64>> {
        self.schema.validate(x)?;
        for r in rows {
            self.schema.validate(r)?;
        }
        Ok(rows.iter().map(|r| self.distance_unchecked(x, r)).collect())
    }

    /// Caller guarantees both instances conform to the schema.
    pub(crate) fn distance_unchecked(&self, a: &Instance, b: &Instance) -> f64 {
        if self.terms.is_empty() {
            return 0.0;
        }
        match self.kind {
            MetricKind::Gower => {
                let total: f64 = self
                    .terms
                    .iter()
                    .zip(a.values().iter().zip(b.values()))
                    .map(|(t, (x, y))| feature_gap(t, *x, *y))
                    .sum();
                total / self.terms.len() as f64
            }
            MetricKind::EuclideanNormalized => {
                let sq: f64 = self
                    .terms
                    .iter()
                    .zip(a.values().iter().zip(b.values()))
                    .map(|(t, (x, y))| match t {
                        Term::Numeric { .. } => feature_gap(t, *x, *y).powi(2),
                        // One-hot vectors of two different categories differ
                        // in two coordinates.
                        Term::Categorical => 2.0 * feature_gap(t, *x, *y),
                    })
                    .sum();
                (sq / self.max_sq).sqrt()
            }
        }
    }
}

fn feature_gap(term: &Term, a: Value, b: Value) -> f64 {
    match (term, a, b) {
        (
            Term::Numeric {
                min,
                max,
                inv_span,
            },
            Value::Real(x),
            Value::Real(y),
        ) => {
            if *inv_span == 0.0 {
                0.0
            } else {
                (x.clamp(*min, *max) - y.clamp(*min, *max)).abs() * inv_span
            }
        }
        (Term::Categorical, Value::Category(x), Value::Category(y)) => {
            if x == y {
                0.0
            } else {
                1.0
            }
        }
        _ => unreachable!("instance validated against schema"),
    }
}

pub fn distance(metric: &DistanceMetric<'_>, a: &Instance, b: &Instance) -> Result<f64> {
    metric.distance(a, b)
}

pub fn distances_to(
    metric: &DistanceMetric<'_>,
    x: &Instance,
    rows: &[Instance],
) -> Result<Vec<f64>> {
    metric.distances_to(x, rows)
}
