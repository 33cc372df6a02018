//! SMOTE-NC oversampling for mixed numeric/categorical rows.
//!
//! Neighbours are found with a Euclidean distance over range-normalised
//! numerics; every mismatched categorical feature adds `(median_std / 2)^2`
//! to the squared distance, where `median_std` is the median of the
//! per-feature standard deviations of the class's normalised numerics (1 when
//! there are no numeric features). A synthetic row interpolates its seed
//! towards one neighbour with a single `λ ∈ [0, 1)` and takes, for each
//! categorical feature, the most frequent value among the seed's neighbours.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{FeatureKind, Instance, Label, Schema, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmotePolicy {
    /// Bring every class up to the majority count.
    BalanceToMajority,
    /// Add exactly this many synthetic rows, split across minority classes
    /// in proportion to their deficit.
    FixedTotal(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    pub policy: SmotePolicy,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            policy: SmotePolicy::BalanceToMajority,
            seed: 0,
        }
    }
}

/// `balance`, `fixed:N` or `off` (`None`).
pub fn parse_policy(s: &str) -> Result<Option<SmotePolicy>> {
    match s {
        "balance" => Ok(Some(SmotePolicy::BalanceToMajority)),
        "off" => Ok(None),
        _ => s
            .strip_prefix("fixed:")
            .and_then(|n| n.parse().ok())
            .map(|n| Some(SmotePolicy::FixedTotal(n)))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown SMOTE policy '{s}' (expected balance, fixed:N or off)"
                ))
            }),
    }
}

impl fmt::Display for SmotePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmotePolicy::BalanceToMajority => f.write_str("balance"),
            SmotePolicy::FixedTotal(n) => write!(f, "fixed:{n}"),
        }
    }
}

impl FromStr for SmotePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_policy(s)?.ok_or_else(|| Error::InvalidArgument("policy is 'off'".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub instance: Instance,
    /// Class of the seed row.
    pub label: usize,
    pub seed_index: usize,
    pub neighbor_index: usize,
}

/// Per-class view used for neighbour search.
struct ClassSpace<'a> {
    rows: &'a [Instance],
    members: Vec<usize>,
    /// Range-normalised numerics of every member, row-major.
    numeric: Vec<Vec<f64>>,
    numeric_features: Vec<usize>,
    categorical_features: Vec<usize>,
    penalty_sq: f64,
}

impl<'a> ClassSpace<'a> {
    fn new(rows: &'a [Instance], members: Vec<usize>, schema: &Schema) -> Self {
        let mut numeric_features = Vec::new();
        let mut categorical_features = Vec::new();
        let mut scale = Vec::new();
        for (i, f) in schema.features().iter().enumerate() {
            match f.kind {
                FeatureKind::Numeric { min, max } => {
                    numeric_features.push(i);
                    scale.push((min, max, if max > min { 1.0 / (max - min) } else { 0.0 }));
                }
                FeatureKind::Categorical { .. } => categorical_features.push(i),
            }
        }
        let numeric: Vec<Vec<f64>> = members
            .iter()
            .map(|&m| {
                numeric_features
                    .iter()
                    .zip(&scale)
                    .map(|(&i, &(min, max, inv))| (rows[m].real(i).clamp(min, max) - min) * inv)
                    .collect()
            })
            .collect();
        let penalty_sq = if numeric_features.is_empty() {
            1.0
        } else {
            let mut stds: Vec<f64> = (0..numeric_features.len())
                .map(|j| population_std(numeric.iter().map(|v| v[j])))
                .collect();
            let med = median(&mut stds);
            (med / 2.0).powi(2)
        };
        Self {
            rows,
            members,
            numeric,
            numeric_features,
            categorical_features,
            penalty_sq,
        }
    }

    fn dist_sq(&self, a: usize, b: usize) -> f64 {
        let num: f64 = self.numeric[a]
            .iter()
            .zip(&self.numeric[b])
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let (ra, rb) = (&self.rows[self.members[a]], &self.rows[self.members[b]]);
        let mismatches = self
            .categorical_features
            .iter()
            .filter(|&&i| ra.get(i) != rb.get(i))
            .count();
        num + mismatches as f64 * self.penalty_sq
    }

    /// Positions (into `members`) of the `k` nearest other members of
    /// position `pos`; ties by lower row index.
    fn nearest(&self, pos: usize, k: usize) -> Vec<usize> {
        let mut cand: Vec<(f64, usize)> = (0..self.members.len())
            .filter(|&p| p != pos)
            .map(|p| (self.dist_sq(pos, p), p))
            .collect();
        cand.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(self.members[a.1].cmp(&self.members[b.1]))
        });
        cand.into_iter().take(k).map(|(_, p)| p).collect()
    }
}

fn population_std(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = xs.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    (xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn class_labels(labels: &[Label]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| l.class().ok_or(Error::RegressionOversampling))
        .collect()
}

pub fn nearest_same_class(
    rows: &[Instance],
    labels: &[Label],
    index: usize,
    k: usize,
    schema: &Schema,
) -> Result<Vec<usize>> {
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    let classes = class_labels(labels)?;
    let members: Vec<usize> = (0..rows.len())
        .filter(|&i| classes[i] == classes[index])
        .collect();
    if members.len() < 2 {
        return Err(Error::NoPeer(index));
    }
    let pos = members.iter().position(|&m| m == index).unwrap();
    let space = ClassSpace::new(rows, members, schema);
    Ok(space
        .nearest(pos, k.min(space.members.len() - 1))
        .into_iter()
        .map(|p| space.members[p])
        .collect())
}

/// Number of synthetic rows to add per class.
fn allocate(counts: &[usize], policy: SmotePolicy) -> Vec<usize> {
    let majority = counts.iter().copied().max().unwrap_or(0);
    let deficits: Vec<usize> = counts
        .iter()
        .map(|&c| if c >= 2 { majority - c } else { 0 })
        .collect();
    match policy {
        SmotePolicy::BalanceToMajority => deficits,
        SmotePolicy::FixedTotal(total) => {
            let mut weights: Vec<f64> = deficits.iter().map(|&d| d as f64).collect();
            if weights.iter().all(|&w| w == 0.0) {
                weights = counts
                    .iter()
                    .map(|&c| if c >= 2 { 1.0 } else { 0.0 })
                    .collect();
            }
            let sum: f64 = weights.iter().sum();
            if sum == 0.0 {
                return vec![0; counts.len()];
            }
            let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
            let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
            let mut rest = total - alloc.iter().sum::<usize>();
            let mut order: Vec<usize> = (0..counts.len()).filter(|&c| weights[c] > 0.0).collect();
            order.sort_by(|&a, &b| {
                let fa = exact[a] - exact[a].floor();
                let fb = exact[b] - exact[b].floor();
                fb.total_cmp(&fa).then(a.cmp(&b))
            });
            for c in order.into_iter().cycle() {
                if rest == 0 {
                    break;
                }
                alloc[c] += 1;
                rest -= 1;
            }
            alloc
        }
    }
}

pub fn smote_nc(
    rows: &[Instance],
    labels: &[Label],
    schema: &Schema,
    cfg: &SmoteConfig,
) -> Result<Vec<SyntheticSample>> {
    if cfg.k_neighbors == 0 {
        return Err(Error::InvalidArgument("k_neighbors must be at least 1".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            rows: rows.len(),
            labels: labels.len(),
        });
    }
    let classes = class_labels(labels)?;
    let n_classes = classes.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; n_classes];
    for &c in &classes {
        counts[c] += 1;
    }
    let majority = counts.iter().copied().max().unwrap_or(0);
    for (c, &n) in counts.iter().enumerate() {
        if n == 1 && n < majority {
            warn!("class {c} has a single member; it is not oversampled");
        }
    }
    let plan = allocate(&counts, cfg.policy);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(plan.iter().sum());
    for (class, &wanted) in plan.iter().enumerate() {
        if wanted == 0 {
            continue;
        }
        let members: Vec<usize> = (0..rows.len()).filter(|&i| classes[i] == class).collect();
        let k = if cfg.k_neighbors >= members.len() {
            warn!(
                "k_neighbors {} >= size {} of class {class}; using {}",
                cfg.k_neighbors,
                members.len(),
                members.len() - 1
            );
            members.len() - 1
        } else {
            cfg.k_neighbors
        };
        let space = ClassSpace::new(rows, members, schema);
        let mut neighbours: Vec<Option<Vec<usize>>> = vec![None; space.members.len()];
        for _ in 0..wanted {
            let pos = rng.gen_range(0..space.members.len());
            let nbrs = neighbours[pos].get_or_insert_with(|| space.nearest(pos, k));
            let partner = nbrs[rng.gen_range(0..nbrs.len())];
            let lambda: f64 = rng.gen();
            let seed_row = &rows[space.members[pos]];
            let partner_row = &rows[space.members[partner]];

            let mut values = seed_row.values().to_vec();
            for &i in &space.numeric_features {
                let (a, b) = (seed_row.real(i), partner_row.real(i));
                let v = (a + lambda * (b - a)).clamp(a.min(b), a.max(b));
                values[i] = Value::Real(v);
            }
            for &i in &space.categorical_features {
                let n_cats = schema.feature(i).categories().len();
                let mut votes = vec![0usize; n_cats];
                for &p in nbrs.iter() {
                    votes[rows[space.members[p]].category(i)] += 1;
                }
                // max_by_key keeps the last maximum; scan in reverse so the
                // lowest category index wins ties.
                let mode = (0..n_cats).rev().max_by_key(|&c| votes[c]).unwrap();
                values[i] = Value::Category(mode);
            }
            out.push(SyntheticSample {
                instance: Instance::new(values),
                label: class,
                seed_index: space.members[pos],
                neighbor_index: space.members[partner],
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::FeatureSpec;

    fn num_cat_schema() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::numeric("num", 0.0, 10.0),
                FeatureSpec::categorical("cat", ["A", "B"]),
            ],
            None,
        )
        .unwrap()
    }

    fn row(num: f64, cat: usize) -> Instance {
        Instance::new(vec![Value::Real(num), Value::Category(cat)])
    }

    #[test]
    fn two_row_minority() {
        let s = num_cat_schema();
        let rows = vec![row(2.0, 0), row(4.0, 0), row(5.0, 1), row(6.0, 1), row(7.0, 0), row(8.0, 1)];
        let labels: Vec<Label> = [1, 1, 0, 0, 0, 0].into_iter().map(Label::Class).collect();
        let cfg = SmoteConfig {
            k_neighbors: 1,
            ..Default::default()
        };
        let out = smote_nc(&rows, &labels, &s, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        for smp in out {
            let v = smp.instance.real(0);
            assert!((2.0..=4.0).contains(&v));
            assert_eq!(smp.instance.category(1), 0);
            assert_eq!(smp.label, 1);
        }
    }

    #[test]
    fn balanced_adds_nothing() {
        let s = num_cat_schema();
        let rows = vec![row(1.0, 0), row(2.0, 0), row(3.0, 1), row(4.0, 1)];
        let labels: Vec<Label> = [0, 0, 1, 1].into_iter().map(Label::Class).collect();
        assert!(smote_nc(&rows, &labels, &s, &SmoteConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn regression_labels_rejected() {
        let s = num_cat_schema();
        let rows = vec![row(1.0, 0), row(2.0, 0)];
        let labels = vec![Label::Value(1.0), Label::Value(2.0)];
        assert!(matches!(
            smote_nc(&rows, &labels, &s, &SmoteConfig::default()),
            Err(Error::RegressionOversampling)
        ));
    }

    #[test]
    fn nearest_reduces_k() {
        let s = num_cat_schema();
        let rows = vec![row(1.0, 0), row(9.0, 0), row(3.0, 1)];
        let labels: Vec<Label> = [0, 0, 1].into_iter().map(Label::Class).collect();
        assert_eq!(nearest_same_class(&rows, &labels, 0, 5, &s).unwrap(), vec![1]);
        assert!(matches!(
            nearest_same_class(&rows, &labels, 2, 1, &s),
            Err(Error::NoPeer(2))
        ));
    }

    #[test]
    fn nearest_prefers_duplicates() {
        let s = num_cat_schema();
        let rows = vec![row(1.0, 0), row(1.5, 0), row(1.0, 0), row(1.0, 0)];
        let labels = vec![Label::Class(0); 4];
        assert_eq!(nearest_same_class(&rows, &labels, 0, 2, &s).unwrap(), vec![2, 3]);
    }

    #[test]
    fn nearest_one_dimensional() {
        let s = Schema::new(vec![FeatureSpec::numeric("x", 0.0, 10.0)], None).unwrap();
        let rows: Vec<Instance> = [0.0, 1.0, 10.0]
            .into_iter()
            .map(|x| Instance::new(vec![Value::Real(x)]))
            .collect();
        let labels = vec![Label::Class(0); 3];
        assert_eq!(nearest_same_class(&rows, &labels, 0, 1, &s).unwrap(), vec![1]);
    }

    #[test]
    fn fixed_total_allocation() {
        assert_eq!(allocate(&[10, 4, 2], SmotePolicy::FixedTotal(7)), vec![0, 3, 4]);
        assert_eq!(allocate(&[5, 5], SmotePolicy::FixedTotal(3)), vec![2, 1]);
        assert_eq!(allocate(&[5, 1], SmotePolicy::BalanceToMajority), vec![0, 0]);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!(parse_policy("balance").unwrap(), Some(SmotePolicy::BalanceToMajority));
        assert_eq!(parse_policy("fixed:12").unwrap(), Some(SmotePolicy::FixedTotal(12)));
        assert_eq!(parse_policy("off").unwrap(), None);
        assert!(parse_policy("fixed:x").is_err());
    }
}
