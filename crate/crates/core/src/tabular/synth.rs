//! Seeded synthetic datasets.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, FeatureSpec, Instance, Label, Schema, TargetKind, TargetSpec, Value};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// Label is the parity (XOR) of one binary "bit" per feature: `x > 0.5`
    /// for numeric features, `c == "1"` for categorical ones.
    XorMixed,
    /// Two interleaving half circles with Gaussian noise in `x0, x1`.
    Moons2d,
    /// Rare positive class whose numeric features are wider and shifted,
    /// with skewed categorical frequencies.
    ImbalancedMixed,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::XorMixed => "xor_mixed",
            Generator::Moons2d => "moons2d",
            Generator::ImbalancedMixed => "imbalanced_mixed",
        }
    }

    fn default_shape(self) -> (usize, usize) {
        match self {
            Generator::XorMixed => (2, 2),
            Generator::Moons2d => (2, 0),
            Generator::ImbalancedMixed => (4, 3),
        }
    }

    fn default_minority(self) -> f64 {
        match self {
            Generator::ImbalancedMixed => 0.14,
            _ => 0.5,
        }
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xor_mixed" => Ok(Generator::XorMixed),
            "moons2d" => Ok(Generator::Moons2d),
            "imbalanced_mixed" => Ok(Generator::ImbalancedMixed),
            other => Err(Error::UnknownGenerator(other.to_string())),
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub generator: Generator,
    pub rows: usize,
    /// Fraction of class `1`. Ignored by `xor_mixed`, whose labels are a
    /// function of the features.
    pub minority: Option<f64>,
    pub n_numeric: Option<usize>,
    pub n_categorical: Option<usize>,
    /// Replace the class label by a smooth numeric function of the features.
    pub regression: bool,
}

impl SynthSpec {
    pub fn new(generator: Generator, rows: usize) -> Self {
        Self {
            generator,
            rows,
            minority: None,
            n_numeric: None,
            n_categorical: None,
            regression: false,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        let (n, c) = self.generator.default_shape();
        (self.n_numeric.unwrap_or(n), self.n_categorical.unwrap_or(c))
    }

    pub fn minority_fraction(&self) -> f64 {
        self.minority
            .unwrap_or_else(|| self.generator.default_minority())
    }
}

const IMBALANCED_LEVELS: [&str; 4] = ["a", "b", "c", "d"];
const NOISE_LEVELS: [&str; 3] = ["a", "b", "c"];

pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    if spec.rows == 0 {
        return Err(Error::InvalidArgument("row count must be positive".into()));
    }
    let minority = spec.minority_fraction();
    if !(0.0..=1.0).contains(&minority) {
        return Err(Error::InvalidArgument(format!(
            "minority fraction must lie in [0, 1], got {minority}"
        )));
    }
    let (n_num, n_cat) = spec.shape();
    let levels: &[&str] = match spec.generator {
        Generator::XorMixed => &["0", "1"],
        Generator::ImbalancedMixed => &IMBALANCED_LEVELS,
        Generator::Moons2d => &NOISE_LEVELS,
    };
    match spec.generator {
        Generator::XorMixed if n_num + n_cat < 2 => {
            return Err(Error::InvalidArgument(
                "xor_mixed needs at least two features".into(),
            ))
        }
        Generator::Moons2d if n_num < 2 => {
            return Err(Error::InvalidArgument(
                "moons2d needs at least two numeric features".into(),
            ))
        }
        Generator::ImbalancedMixed if n_num + n_cat == 0 => {
            return Err(Error::InvalidArgument(
                "imbalanced_mixed needs at least one feature".into(),
            ))
        }
        _ => {}
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(spec.rows);
    let mut classes = Vec::with_capacity(spec.rows);
    for _ in 0..spec.rows {
        let (values, class) = match spec.generator {
            Generator::XorMixed => xor_row(&mut rng, n_num, n_cat),
            Generator::Moons2d => moons_row(&mut rng, n_num, n_cat, minority),
            Generator::ImbalancedMixed => imbalanced_row(&mut rng, n_num, n_cat, minority),
        };
        rows.push(Instance::new(values));
        classes.push(class);
    }

    let mut features: Vec<FeatureSpec> = (0..n_num)
        .map(|i| FeatureSpec::numeric(format!("x{i}"), 0.0, 0.0))
        .collect();
    features.extend((0..n_cat).map(|j| FeatureSpec::categorical(format!("c{j}"), levels.iter().copied())));

    let (kind, targets) = if spec.regression {
        let ys = rows
            .iter()
            .map(|r| Label::Value(regression_target(r, n_num, n_cat)))
            .collect();
        (TargetKind::Regression, ys)
    } else {
        (
            TargetKind::Classification {
                classes: vec!["0".into(), "1".into()],
            },
            classes.into_iter().map(Label::Class).collect(),
        )
    };
    let schema = Schema::new(
        features,
        Some(TargetSpec {
            name: "target".into(),
            kind,
        }),
    )?;
    let mut ds = Dataset::new(schema, rows, Some(targets))?;
    ds.refit_ranges();
    Ok(ds)
}

fn xor_row(rng: &mut ChaCha8Rng, n_num: usize, n_cat: usize) -> (Vec<Value>, usize) {
    let mut values = Vec::with_capacity(n_num + n_cat);
    let mut bits = Vec::with_capacity(n_num + n_cat);
    for _ in 0..n_num {
        let x: f64 = rng.gen();
        bits.push(x > 0.5);
        values.push(Value::Real(x));
    }
    for _ in 0..n_cat {
        let c = rng.gen_range(0..2);
        bits.push(c == 1);
        values.push(Value::Category(c));
    }
    (values, bits.iter().filter(|&&b| b).count() % 2)
}

fn moons_row(rng: &mut ChaCha8Rng, n_num: usize, n_cat: usize, minority: f64) -> (Vec<Value>, usize) {
    let noise = Normal::new(0.0, 0.15).unwrap();
    let class = rng.gen_bool(minority) as usize;
    let t = rng.gen_range(0.0..PI);
    let (x, y) = if class == 0 {
        (t.cos(), t.sin())
    } else {
        (1.0 - t.cos(), 0.5 - t.sin())
    };
    let mut values = vec![
        Value::Real(x + noise.sample(rng)),
        Value::Real(y + noise.sample(rng)),
    ];
    for _ in 2..n_num {
        values.push(Value::Real(rng.gen()));
    }
    for _ in 0..n_cat {
        values.push(Value::Category(rng.gen_range(0..NOISE_LEVELS.len())));
    }
    (values, class)
}

fn imbalanced_row(
    rng: &mut ChaCha8Rng,
    n_num: usize,
    n_cat: usize,
    minority: f64,
) -> (Vec<Value>, usize) {
    let class = rng.gen_bool(minority) as usize;
    let mut values = Vec::with_capacity(n_num + n_cat);
    for i in 0..n_num {
        let dist = match (class, i % 2) {
            (0, _) => Normal::new(0.0, 1.0),
            (_, 0) => Normal::new(1.0, 2.0),
            _ => Normal::new(-0.5, 0.5),
        }
        .unwrap();
        values.push(Value::Real(dist.sample(rng)));
    }
    // Positives favour the last level of the first categorical feature.
    for j in 0..n_cat {
        let n = IMBALANCED_LEVELS.len();
        let c = if class == 1 && j == 0 && rng.gen_bool(0.6) {
            n - 1
        } else {
            rng.gen_range(0..n)
        };
        values.push(Value::Category(c));
    }
    (values, class)
}

fn regression_target(row: &Instance, n_num: usize, n_cat: usize) -> f64 {
    let mut y = 0.0;
    for i in 0..n_num {
        let x = row.real(i);
        y += if i % 2 == 0 { (3.0 * x).sin() } else { 0.5 * x * x };
    }
    for j in 0..n_cat {
        y += 0.3 * row.category(n_num + j) as f64;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_labels_match_features() {
        let spec = SynthSpec {
            n_numeric: Some(0),
            n_categorical: Some(2),
            ..SynthSpec::new(Generator::XorMixed, 8)
        };
        let d = synth_dataset(&spec, 7).unwrap();
        assert_eq!(d.len(), 8);
        for (r, l) in d.rows().iter().zip(d.targets().unwrap()) {
            assert_eq!(*l, Label::Class(r.category(0) ^ r.category(1)));
        }
    }

    #[test]
    fn xor_is_parity_over_mixed_features() {
        let d = synth_dataset(&SynthSpec::new(Generator::XorMixed, 200), 3).unwrap();
        for (r, l) in d.rows().iter().zip(d.targets().unwrap()) {
            let bits = (r.real(0) > 0.5) as usize
                + (r.real(1) > 0.5) as usize
                + r.category(2)
                + r.category(3);
            assert_eq!(*l, Label::Class(bits % 2));
        }
    }

    #[test]
    fn deterministic() {
        for g in [Generator::XorMixed, Generator::Moons2d, Generator::ImbalancedMixed] {
            let spec = SynthSpec::new(g, 50);
            assert_eq!(synth_dataset(&spec, 11).unwrap(), synth_dataset(&spec, 11).unwrap());
            assert_ne!(synth_dataset(&spec, 11).unwrap(), synth_dataset(&spec, 12).unwrap());
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(
            "gauss".parse::<Generator>(),
            Err(Error::UnknownGenerator(_))
        ));
        assert!(synth_dataset(&SynthSpec::new(Generator::Moons2d, 0), 1).is_err());
    }

    /// Central 99% interval of Binomial(n, p), from the exact pmf.
    fn binomial_interval(n: usize, p: f64) -> (usize, usize) {
        let mut ln_fact = vec![0.0f64; n + 1];
        for k in 1..=n {
            ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
        }
        let pmf: Vec<f64> = (0..=n)
            .map(|k| {
                (ln_fact[n] - ln_fact[k] - ln_fact[n - k]
                    + k as f64 * p.ln()
                    + (n - k) as f64 * (1.0 - p).ln())
                .exp()
            })
            .collect();
        let (mut lo, mut acc) = (0, 0.0);
        while acc + pmf[lo] <= 0.005 {
            acc += pmf[lo];
            lo += 1;
        }
        let (mut hi, mut acc) = (n, 0.0);
        while acc + pmf[hi] <= 0.005 {
            acc += pmf[hi];
            hi -= 1;
        }
        (lo, hi)
    }

    #[test]
    fn minority_count_is_binomial() {
        let (lo, hi) = binomial_interval(1000, 0.14);
        assert_eq!((lo, hi), (112, 169));
        let spec = SynthSpec {
            minority: Some(0.14),
            ..SynthSpec::new(Generator::ImbalancedMixed, 1000)
        };
        for seed in 0..10 {
            let d = synth_dataset(&spec, seed).unwrap();
            let pos = d.targets().unwrap().iter().filter(|l| **l == Label::Class(1)).count();
            assert!((lo..=hi).contains(&pos), "seed {seed}: {pos} positives");
        }
    }

    #[test]
    fn regression_target_is_numeric() {
        let spec = SynthSpec {
            regression: true,
            ..SynthSpec::new(Generator::ImbalancedMixed, 20)
        };
        let d = synth_dataset(&spec, 1).unwrap();
        assert!(d.targets().unwrap().iter().all(|l| l.value().is_some()));
    }
}
