//! Fidelity harness: does each explainer reproduce the black box's label at
//! the query? Also home of the kernel-weighted linear baseline.

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{
    explain_with_neighborhood, labels_agree, select_neighborhood, ExplainConfig, Neighborhood,
};
use crate::gower::DistanceMetric;
use crate::oracle::PredictionOracle;
use crate::tabular::{Dataset, FeatureKind, Instance, Label, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConfig {
    /// Defaults to `0.75 * sqrt(encoded dimension)`.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            kernel_width: None,
            ridge: 1e-3,
        }
    }
}

/// Range-normalised (clamped) numerics followed by one-hot categoricals.
pub fn encode(schema: &Schema, inst: &Instance) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_dim(schema));
    for (i, f) in schema.features().iter().enumerate() {
        match &f.kind {
            FeatureKind::Numeric { min, max } => {
                let span = max - min;
                let z = if span > 0.0 {
                    ((inst.real(i) - min) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                out.push(z);
            }
            FeatureKind::Categorical { categories } => {
                let c = inst.category(i);
                out.extend((0..categories.len()).map(|k| if k == c { 1.0 } else { 0.0 }));
            }
        }
    }
    out
}

pub fn encoded_dim(schema: &Schema) -> usize {
    schema
        .features()
        .iter()
        .map(|f| match &f.kind {
            FeatureKind::Numeric { .. } => 1,
            FeatureKind::Categorical { categories } => categories.len(),
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOutput {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearOutput {
    fn score(&self, z: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinearModel {
    Constant(Label),
    /// One-vs-rest scores; `(class, output)` for each class seen in the fit.
    Classes(Vec<(usize, LinearOutput)>),
    Regression(LinearOutput),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearExplainer {
    pub model: LinearModel,
    pub kernel_width: f64,
    schema: Schema,
}

impl LinearExplainer {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn predict(&self, inst: &Instance) -> Result<Label> {
        self.schema.validate(inst)?;
        let z = encode(&self.schema, inst);
        Ok(match &self.model {
            LinearModel::Constant(l) => *l,
            LinearModel::Regression(out) => Label::Value(out.score(&z)),
            LinearModel::Classes(outs) => {
                // Largest score; ties go to the lower class.
                let mut best = outs[0].0;
                let mut best_score = f64::NEG_INFINITY;
                for (c, out) in outs {
                    let s = out.score(&z);
                    if s > best_score {
                        best = *c;
                        best_score = s;
                    }
                }
                Label::Class(best)
            }
        })
    }
}

/// Kernel-weighted ridge fit on the relabelled neighbourhood. Weights are
/// `exp(-d^2 / w^2)` with `d` the Gower distance to `x`; the intercept is not
/// penalised.
pub fn fit_linear_explainer(
    nbh: &Neighborhood,
    x: &Instance,
    schema: &Schema,
    cfg: &LinearConfig,
) -> Result<LinearExplainer> {
    schema.validate(x)?;
    let dim = encoded_dim(schema);
    let kernel_width = cfg.kernel_width.unwrap_or(0.75 * (dim as f64).sqrt());
    if !(kernel_width > 0.0) {
        return Err(Error::InvalidArgument("kernel width must be positive".into()));
    }
    if nbh.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let rows: Vec<&Instance> = nbh.rows.iter().collect();
    let labels = &nbh.relabels;

    let metric = DistanceMetric::gower(schema);
    let weights: Vec<f64> = rows
        .iter()
        .map(|r| {
            let d = metric.distance_unchecked(x, r);
            (-(d * d) / (kernel_width * kernel_width)).exp()
        })
        .collect();
    let encoded: Vec<Vec<f64>> = rows.iter().map(|r| encode(schema, r)).collect();
    let constant = |l: Label| LinearExplainer {
        model: LinearModel::Constant(l),
        kernel_width,
        schema: schema.clone(),
    };

    let model = match labels[0] {
        Label::Class(_) => {
            let mut classes: Vec<usize> = labels.iter().filter_map(|l| l.class()).collect();
            classes.sort_unstable();
            classes.dedup();
            if classes.len() < 2 {
                return Ok(constant(labels[0]));
            }
            let targets: Vec<Vec<f64>> = classes
                .iter()
                .map(|&c| {
                    labels
                        .iter()
                        .map(|l| if *l == Label::Class(c) { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect();
            let outs = weighted_ridge(&encoded, &weights, &targets, cfg.ridge);
            LinearModel::Classes(classes.into_iter().zip(outs).collect())
        }
        Label::Value(_) => {
            let y: Vec<f64> = labels.iter().filter_map(|l| l.value()).collect();
            if y.iter().all(|v| *v == y[0]) {
                return Ok(constant(labels[0]));
            }
            let mut outs = weighted_ridge(&encoded, &weights, &[y], cfg.ridge);
            LinearModel::Regression(outs.remove(0))
        }
    };
    Ok(LinearExplainer {
        model,
        kernel_width,
        schema: schema.clone(),
    })
}

/// Solve one ridge problem per target column, sharing the factorisation.
/// Centring on the weighted means leaves the intercept unpenalised.
fn weighted_ridge(z: &[Vec<f64>], w: &[f64], targets: &[Vec<f64>], ridge: f64) -> Vec<LinearOutput> {
    let n = z.len();
    let p = z.first().map_or(0, Vec::len);
    let wsum: f64 = w.iter().sum();
    let zbar: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| w[i] * z[i][j]).sum::<f64>() / wsum)
        .collect();
    let zc = DMatrix::from_fn(n, p, |i, j| (z[i][j] - zbar[j]) * w[i].sqrt());
    let gram = zc.transpose() * &zc + DMatrix::identity(p, p) * ridge;
    let chol = gram.clone().cholesky();

    targets
        .iter()
        .map(|y| {
            let ybar = (0..n).map(|i| w[i] * y[i]).sum::<f64>() / wsum;
            let yc = DVector::from_fn(n, |i, _| (y[i] - ybar) * w[i].sqrt());
            let rhs = zc.transpose() * yc;
            let beta = match &chol {
                Some(c) => c.solve(&rhs),
                None => gram.clone().lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(p)),
            };
            let weights: Vec<f64> = beta.iter().copied().collect();
            let intercept = ybar - weights.iter().zip(&zbar).map(|(b, m)| b * m).sum::<f64>();
            LinearOutput { weights, intercept }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerKind {
    Araucana,
    Linear,
}

impl ExplainerKind {
    pub const ALL: [ExplainerKind; 2] = [ExplainerKind::Araucana, ExplainerKind::Linear];

    pub fn name(self) -> &'static str {
        match self {
            ExplainerKind::Araucana => "araucana",
            ExplainerKind::Linear => "linear",
        }
    }
}

impl fmt::Display for ExplainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExplainerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExplainerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown explainer '{s}' (valid: araucana, linear)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityConfig {
    pub explain: ExplainConfig,
    pub linear: LinearConfig,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        Self {
            explain: ExplainConfig::default(),
            linear: LinearConfig::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub index: usize,
    pub explainer: ExplainerKind,
    pub oracle_label: Label,
    /// `Err` holds the failure message of an excluded instance.
    pub prediction: std::result::Result<Label, String>,
}

impl InstanceRecord {
    pub fn agree(&self, tol: &crate::explain::RegressionTolerance) -> Option<bool> {
        self.prediction
            .as_ref()
            .ok()
            .map(|p| labels_agree(*p, self.oracle_label, tol))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplainerSummary {
    pub explainer: ExplainerKind,
    pub agreements: usize,
    pub total: usize,
    pub excluded: usize,
}

impl ExplainerSummary {
    /// `agreements / total`; NaN for an empty denominator.
    pub fn fidelity(&self) -> f64 {
        if self.total == 0 {
            f64::NAN
        } else {
            self.agreements as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FidelityReport {
    pub summaries: Vec<ExplainerSummary>,
    /// Sorted by test index, then by explainer order in the request.
    pub records: Vec<InstanceRecord>,
    pub config: serde_json::Value,
    pub seed: u64,
    schema: Schema,
}

impl FidelityReport {
    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn summary(&self, kind: ExplainerKind) -> Option<&ExplainerSummary> {
        self.summaries.iter().find(|s| s.explainer == kind)
    }
}

fn explain_one(
    train: &Dataset,
    x: &Instance,
    oracle: &PredictionOracle,
    explainers: &[ExplainerKind],
    cfg: &FidelityConfig,
) -> Vec<std::result::Result<Label, String>> {
    let nbh = match select_neighborhood(train, x, oracle, &cfg.explain) {
        Ok(n) => n,
        Err(e) => return vec![Err(e.to_string()); explainers.len()],
    };
    explainers
        .iter()
        .map(|kind| {
            let pred = match kind {
                ExplainerKind::Araucana => {
                    explain_with_neighborhood(train.schema(), nbh.clone(), x, oracle, &cfg.explain)
                        .map(|r| r.explanation.tree_prediction())
                }
                ExplainerKind::Linear => {
                    fit_linear_explainer(&nbh, x, train.schema(), &cfg.linear)
                        .and_then(|l| l.predict(x))
                }
            };
            pred.map_err(|e| e.to_string())
        })
        .collect()
}

/// Run every explainer on every test row and count agreements with the
/// oracle. Failed instances are excluded from the denominator.
pub fn evaluate_fidelity(
    train: &Dataset,
    test: &Dataset,
    oracle: &PredictionOracle,
    explainers: &[ExplainerKind],
    cfg: &FidelityConfig,
) -> Result<FidelityReport> {
    if !train.schema().compatible_with(test.schema()) {
        return Err(Error::SchemaMismatch(
            "train and test data have different features".into(),
        ));
    }
    if explainers.is_empty() {
        return Err(Error::InvalidArgument("no explainers requested".into()));
    }
    let task = oracle.task();
    if let Some(t) = train.schema().task() {
        if t != task {
            return Err(Error::TaskMismatch(format!(
                "data declares {t:?}, oracle predicts {task:?}"
            )));
        }
    }
    let oracle_labels = oracle.predict_batch(test.rows())?;
    let n = test.len();
    let jobs = cfg.jobs.max(1).min(n.max(1));

    let mut outcomes: Vec<Vec<std::result::Result<Label, String>>> = Vec::with_capacity(n);
    if jobs == 1 {
        for i in 0..n {
            outcomes.push(explain_one(train, test.row(i), oracle, explainers, cfg));
        }
    } else {
        let mut slots: Vec<Option<_>> = vec![None; n];
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    s.spawn(move || {
                        (j..n)
                            .step_by(jobs)
                            .map(|i| {
                                let out = explain_one(
                                    train,
                                    test.row(i),
                                    oracle,
                                    explainers,
                                    cfg,
                                );
                                (i, out)
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, out) in h.join().expect("fidelity worker panicked") {
                    slots[i] = Some(out);
                }
            }
        });
        outcomes.extend(slots.into_iter().map(|o| o.expect("every row evaluated")));
    }

    let tol = cfg.explain.regression_tolerance;
    let mut summaries: Vec<ExplainerSummary> = explainers
        .iter()
        .map(|&k| ExplainerSummary {
            explainer: k,
            agreements: 0,
            total: 0,
            excluded: 0,
        })
        .collect();
    let mut records = Vec::with_capacity(n * explainers.len());
    for (i, per_explainer) in outcomes.into_iter().enumerate() {
        for (k, prediction) in per_explainer.into_iter().enumerate() {
            let record = InstanceRecord {
                index: i,
                explainer: explainers[k],
                oracle_label: oracle_labels[i],
                prediction,
            };
            let summary = &mut summaries[k];
            match record.agree(&tol) {
                Some(agree) => {
                    summary.total += 1;
                    summary.agreements += agree as usize;
                }
                None => summary.excluded += 1,
            }
            records.push(record);
        }
    }
    for s in &summaries {
        if s.excluded > 0 {
            warn!("{}: {} test instances excluded after failures", s.explainer, s.excluded);
        }
    }

    let e = &cfg.explain;
    let config = serde_json::json!({
        "explainers": explainers.iter().map(|k| k.name()).collect::<Vec<_>>(),
        "n_neighbors": e.n_neighbors,
        "distance": e.metric,
        "smote": e.smote.map(|s| s.policy.to_string()).unwrap_or_else(|| "off".into()),
        "smote_k": e.smote.map_or(0, |s| s.k_neighbors),
        "criterion": e.cart.criterion,
        "min_samples_split": e.cart.min_samples_split,
        "max_depth": e.cart.max_depth,
        "kernel_width": cfg.linear.kernel_width,
        "ridge": cfg.linear.ridge,
        "regression_tolerance": e.regression_tolerance,
        "oracle": oracle.describe(),
        "test_rows": n,
        "task": task,
    });
    Ok(FidelityReport {
        summaries,
        records,
        config,
        seed: e.seed,
        schema: train.schema().clone(),
    })
}

/// CSV bodies of `summary.csv` and `per_instance.csv`.
pub struct ReportCsv {
    pub summary: Vec<u8>,
    pub per_instance: Vec<u8>,
}

pub fn report_to_csv(report: &FidelityReport, tol: &crate::explain::RegressionTolerance) -> ReportCsv {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["explainer", "agreements", "total", "fidelity", "excluded"])
        .expect("in-memory write");
    for s in &report.summaries {
        let fid = s.fidelity();
        let fid = if fid.is_nan() {
            "nan".to_string()
        } else {
            format!("{fid:.6}")
        };
        w.write_record([
            s.explainer.name().to_string(),
            s.agreements.to_string(),
            s.total.to_string(),
            fid,
            s.excluded.to_string(),
        ])
        .expect("in-memory write");
    }
    let summary = w.into_inner().expect("in-memory flush");

    let schema = report.schema();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["index", "explainer", "oracle_label", "explainer_prediction", "agree"])
        .expect("in-memory write");
    for r in &report.records {
        let (pred, agree) = match (&r.prediction, r.agree(tol)) {
            (Ok(p), Some(a)) => (schema.format_label(*p), a.to_string()),
            _ => (String::new(), "excluded".to_string()),
        };
        w.write_record([
            r.index.to_string(),
            r.explainer.name().to_string(),
            schema.format_label(r.oracle_label),
            pred,
            agree,
        ])
        .expect("in-memory write");
    }
    let per_instance = w.into_inner().expect("in-memory flush");
    ReportCsv {
        summary,
        per_instance,
    }
}

/// Fraction of rows on which a linear explainer matches the given labels.
pub fn linear_agreement(lin: &LinearExplainer, rows: &[Instance], labels: &[Label]) -> Result<f64> {
    let mut hits = 0usize;
    for (r, l) in rows.iter().zip(labels) {
        hits += (lin.predict(r)? == *l) as usize;
    }
    Ok(hits as f64 / rows.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::RegressionTolerance;
    use crate::tabular::{FeatureSpec, TargetKind, TargetSpec, Value};

    fn schema2() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::numeric("a", 0.0, 1.0),
                FeatureSpec::numeric("b", 0.0, 1.0),
            ],
            Some(TargetSpec {
                name: "y".into(),
                kind: TargetKind::Classification {
                    classes: vec!["0".into(), "1".into()],
                },
            }),
        )
        .unwrap()
    }

    fn inst(a: f64, b: f64) -> Instance {
        Instance::new(vec![Value::Real(a), Value::Real(b)])
    }

    fn nbh(rows: Vec<Instance>, labels: Vec<Label>) -> Neighborhood {
        Neighborhood {
            indices: (0..rows.len()).collect(),
            distances: vec![0.0; rows.len()],
            relabels: labels,
            rows,
        }
    }

    #[test]
    fn constant_relabels_give_constant_predictor() {
        let s = schema2();
        let rows = vec![inst(0.1, 0.2), inst(0.9, 0.4)];
        let n = nbh(rows.clone(), vec![Label::Class(1); 2]);
        let lin = fit_linear_explainer(&n, &rows[0], &s, &LinearConfig::default())
            .unwrap();
        assert_eq!(lin.model, LinearModel::Constant(Label::Class(1)));
        assert_eq!(linear_agreement(&lin, &rows, &n.relabels).unwrap(), 1.0);
    }

    #[test]
    fn separable_neighborhood() {
        let s = schema2();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let (a, b) = (i as f64 / 9.0, j as f64 / 9.0);
                rows.push(inst(a, b));
                labels.push(Label::Class((a + b > 1.05) as usize));
            }
        }
        let n = nbh(rows.clone(), labels.clone());
        let x = inst(0.5, 0.5);
        let lin = fit_linear_explainer(&n, &x, &s, &LinearConfig::default())
            .unwrap();
        assert!(linear_agreement(&lin, &rows, &labels).unwrap() >= 0.95);
    }

    #[test]
    fn xor_corners_cap_at_three_quarters() {
        let s = schema2();
        let corners = vec![inst(0.0, 0.0), inst(0.0, 1.0), inst(1.0, 0.0), inst(1.0, 1.0)];
        let labels: Vec<Label> = [0, 1, 1, 0].into_iter().map(Label::Class).collect();
        // Brute force over a grid of linear classifiers: none beats 3/4.
        let mut best = 0;
        for wa in -4..=4 {
            for wb in -4..=4 {
                for c in -8..=8 {
                    let hits = corners
                        .iter()
                        .zip(&labels)
                        .filter(|(r, l)| {
                            let score = wa as f64 * r.real(0) + wb as f64 * r.real(1) + c as f64 / 2.0;
                            Label::Class((score > 0.0) as usize) == **l
                        })
                        .count();
                    best = best.max(hits);
                }
            }
        }
        assert_eq!(best, 3);
        for x in &corners {
            let n = nbh(
                (0..5).flat_map(|_| corners.clone()).collect(),
                labels.repeat(5),
            );
            let lin = fit_linear_explainer(&n, x, &s, &LinearConfig::default()).unwrap();
            assert!(linear_agreement(&lin, &corners, &labels).unwrap() <= 0.75);
        }
    }

    #[test]
    fn kernel_width_default() {
        let s = schema2();
        let rows = vec![inst(0.1, 0.2), inst(0.9, 0.4)];
        let n = nbh(rows.clone(), vec![Label::Class(0), Label::Class(1)]);
        let lin = fit_linear_explainer(&n, &rows[0], &s, &LinearConfig::default())
            .unwrap();
        assert!((lin.kernel_width - 0.75 * 2f64.sqrt()).abs() < 1e-15);
        match lin.model {
            LinearModel::Classes(ref outs) => {
                assert!(outs.iter().all(|(_, o)| o.weights.len() == encoded_dim(&s)))
            }
            _ => panic!("expected a fitted model"),
        }
    }

    fn report(summaries: Vec<ExplainerSummary>, records: Vec<InstanceRecord>) -> FidelityReport {
        FidelityReport {
            summaries,
            records,
            config: serde_json::Value::Null,
            seed: 0,
            schema: schema2(),
        }
    }

    #[test]
    fn empty_report_renders_nan() {
        let r = report(
            vec![ExplainerSummary {
                explainer: ExplainerKind::Araucana,
                agreements: 0,
                total: 0,
                excluded: 0,
            }],
            vec![],
        );
        let csv = report_to_csv(&r, &RegressionTolerance::default());
        assert_eq!(
            String::from_utf8(csv.summary).unwrap(),
            "explainer,agreements,total,fidelity,excluded\naraucana,0,0,nan,0\n"
        );
        assert_eq!(
            String::from_utf8(csv.per_instance).unwrap(),
            "index,explainer,oracle_label,explainer_prediction,agree\n"
        );
    }

    #[test]
    fn single_agreement_row() {
        let r = report(
            vec![ExplainerSummary {
                explainer: ExplainerKind::Linear,
                agreements: 1,
                total: 1,
                excluded: 0,
            }],
            vec![InstanceRecord {
                index: 0,
                explainer: ExplainerKind::Linear,
                oracle_label: Label::Class(1),
                prediction: Ok(Label::Class(1)),
            }],
        );
        let tol = RegressionTolerance::default();
        let a = report_to_csv(&r, &tol);
        let b = report_to_csv(&r, &tol);
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.per_instance, b.per_instance);
        let text = String::from_utf8(a.summary).unwrap();
        assert!(text.ends_with("linear,1,1,1.000000,0\n"), "{text}");
        assert!(String::from_utf8(a.per_instance).unwrap().ends_with("0,linear,1,1,true\n"));
    }

    #[test]
    fn explainer_names() {
        assert_eq!("linear".parse::<ExplainerKind>().unwrap(), ExplainerKind::Linear);
        let err = "lime".parse::<ExplainerKind>().unwrap_err().to_string();
        assert!(err.contains("araucana, linear"), "{err}");
    }
}
