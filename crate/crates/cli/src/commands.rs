use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::info;

use araucana::cart::{CartConfig, Criterion};
use araucana::explain::{explain_instance, render_explanation, ExplainConfig, RenderFormat};
use araucana::fidelity::{
    evaluate_fidelity, report_to_csv, ExplainerKind, FidelityConfig, LinearConfig,
};
use araucana::gower::MetricKind;
use araucana::oracle::{
    load_model, save_model, train_forest, train_knn, ForestConfig, Model, PredictionOracle,
};
use araucana::seeds;
use araucana::smote::{parse_policy, SmoteConfig};
use araucana::tabular::{
    load_table_with, read_schema, synth_dataset, write_csv, write_dataset, Dataset, Generator,
    Instance, Label, LoadOptions, Schema, SynthSpec, Table, TaskHint,
};

use crate::args::*;
use crate::manifest::Manifest;
use crate::{Failure, Outcome};

/// Resolved subcommand flags plus the global ones.
fn flags<T: serde::Serialize>(cli: &Cli, args: &T) -> serde_json::Value {
    let mut v = serde_json::to_value(args).expect("flags serialize");
    if let serde_json::Value::Object(m) = &mut v {
        m.insert("jobs".into(), cli.jobs.into());
        m.insert("out".into(), serde_json::to_value(&cli.out).expect("path"));
        m.insert("seed".into(), cli.seed.into());
    }
    v
}

fn out_dir(cli_out: &Option<PathBuf>, command: &str) -> Outcome<PathBuf> {
    let dir = cli_out
        .clone()
        .ok_or_else(|| Failure::Usage(format!("`{command}` requires --out <dir>")))?;
    fs::create_dir_all(&dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::runtime(format!("{}: {e}", path.display()))
}

pub fn synth(cli: &Cli, args: &SynthArgs) -> Outcome<()> {
    if args.rows == 0 {
        return Err(Failure::Usage("--rows must be positive".into()));
    }
    if let Some(m) = args.minority {
        if !(0.0..=1.0).contains(&m) {
            return Err(Failure::Usage("--minority must lie in [0, 1]".into()));
        }
    }
    let dir = out_dir(&cli.out, "synth")?;
    let generator = match args.generator {
        GenArg::XorMixed => Generator::XorMixed,
        GenArg::Moons2d => Generator::Moons2d,
        GenArg::ImbalancedMixed => Generator::ImbalancedMixed,
    };
    let test_rows = args.test_rows.unwrap_or(0);
    let spec = SynthSpec {
        generator,
        rows: args.rows + test_rows,
        minority: args.minority,
        n_numeric: args.numeric,
        n_categorical: args.categorical,
        regression: args.regression,
    };
    let all = synth_dataset(&spec, seeds::derive(cli.seed, seeds::SYNTH))?;
    let mut manifest = Manifest::new("synth", flags(cli, args), cli.seed);

    let train_idx: Vec<usize> = (0..args.rows).collect();
    let mut train = all.subset(&train_idx);
    train.refit_ranges();
    let (data_path, schema_path) = (dir.join("data.csv"), dir.join("schema.json"));
    write_dataset(&train, &data_path, &schema_path)?;
    manifest.artifact(&data_path);
    manifest.artifact(&schema_path);
    if test_rows > 0 {
        let test_idx: Vec<usize> = (args.rows..args.rows + test_rows).collect();
        let test = all.subset(&test_idx).with_schema(train.schema().clone())?;
        let test_path = dir.join("test.csv");
        let file = fs::File::create(&test_path).map_err(io_err(&test_path))?;
        write_csv(&test, std::io::BufWriter::new(file))?;
        manifest.artifact(&test_path);
    }
    manifest.write(&dir).map_err(io_err(&dir))?;
    println!(
        "wrote {} training rows{} to {}",
        args.rows,
        if test_rows > 0 {
            format!(" and {test_rows} test rows")
        } else {
            String::new()
        },
        dir.display()
    );
    Ok(())
}

fn load_opts(data: &DataArgs, schema: Option<&Schema>, aux: Vec<String>) -> LoadOptions {
    let declared = schema.and_then(|s| s.target()).is_some();
    LoadOptions {
        target: data
            .target
            .clone()
            .or_else(|| (!declared).then(|| "target".to_string())),
        task: match data.task {
            TaskArg::Auto => TaskHint::Auto,
            TaskArg::Classification => TaskHint::Classification,
            TaskArg::Regression => TaskHint::Regression,
        },
        aux_columns: aux,
    }
}

fn load_data(data: &DataArgs, aux: Vec<String>, manifest: &mut Manifest) -> Outcome<Table> {
    let schema = data.schema.as_deref().map(read_schema).transpose()?;
    manifest.input(&data.data);
    if let Some(p) = &data.schema {
        manifest.input(p);
    }
    let opts = load_opts(data, schema.as_ref(), aux);
    Ok(load_table_with(&data.data, schema, &opts)?)
}

fn parse_metric(s: &str) -> Outcome<MetricKind> {
    s.parse().map_err(|e: araucana::Error| Failure::Usage(e.to_string()))
}

fn fit_model(data: &Dataset, kind: ModelKindArg, p: &ModelArgs, seed: u64) -> Outcome<Model> {
    Ok(match kind {
        ModelKindArg::Forest => {
            if p.n_trees == 0 {
                return Err(Failure::Usage("--n-trees must be positive".into()));
            }
            let cfg = ForestConfig {
                n_trees: p.n_trees,
                seed: seeds::derive(seed, seeds::FOREST),
                ..Default::default()
            };
            Model::Forest(train_forest(data, &cfg)?)
        }
        ModelKindArg::Knn => {
            if p.k == 0 {
                return Err(Failure::Usage("--k must be positive".into()));
            }
            Model::Knn(train_knn(data, p.k, parse_metric(&p.knn_distance)?)?)
        }
    })
}

pub fn train(cli: &Cli, args: &TrainArgs) -> Outcome<()> {
    let dir = out_dir(&cli.out, "train")?;
    let mut manifest = Manifest::new("train", flags(cli, args), cli.seed);
    let data = load_data(&args.data, Vec::new(), &mut manifest)?.dataset;
    let model = fit_model(&data, args.model, &args.params, cli.seed)?;

    let targets = data.require_targets()?;
    let preds: Vec<Label> = data
        .rows()
        .iter()
        .map(|r| model.predict(r))
        .collect::<araucana::Result<_>>()?;
    match model.task() {
        araucana::tabular::Task::Classification { .. } => {
            let hits = preds.iter().zip(targets).filter(|(p, t)| p == t).count();
            println!("training accuracy: {:.4}", hits as f64 / data.len() as f64);
        }
        araucana::tabular::Task::Regression => {
            let mse = preds
                .iter()
                .zip(targets)
                .map(|(p, t)| (p.value().unwrap() - t.value().unwrap()).powi(2))
                .sum::<f64>()
                / data.len() as f64;
            println!("training rmse: {:.6}", mse.sqrt());
        }
    }
    let path = dir.join("model.json");
    save_model(&model, &path)?;
    manifest.artifact(&path);
    manifest.write(&dir).map_err(io_err(&dir))?;
    Ok(())
}

enum OracleSpec {
    Builtin(ModelKindArg),
    Command(String),
    Precomputed(String),
}

fn parse_oracle(spec: &str) -> Outcome<OracleSpec> {
    let bad = || {
        Failure::Usage(format!(
            "invalid --oracle '{spec}' (expected builtin:forest, builtin:knn, cmd:\"...\" or precomputed:<column>)"
        ))
    };
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    match (kind, rest) {
        ("builtin", "forest") => Ok(OracleSpec::Builtin(ModelKindArg::Forest)),
        ("builtin", "knn") => Ok(OracleSpec::Builtin(ModelKindArg::Knn)),
        ("cmd", c) => {
            let c = c.trim();
            let c = c
                .strip_prefix('"')
                .and_then(|c| c.strip_suffix('"'))
                .unwrap_or(c);
            if c.is_empty() {
                Err(bad())
            } else {
                Ok(OracleSpec::Command(c.to_string()))
            }
        }
        ("precomputed", col) if !col.is_empty() => Ok(OracleSpec::Precomputed(col.to_string())),
        _ => Err(bad()),
    }
}

fn precomputed_column(spec: &OracleSpec) -> Vec<String> {
    match spec {
        OracleSpec::Precomputed(c) => vec![c.clone()],
        _ => Vec::new(),
    }
}

fn parse_predictions(table: &Table, column: &str) -> Outcome<Vec<Label>> {
    let schema = table.dataset.schema();
    table.aux[column]
        .iter()
        .map(|cell| schema.parse_label(cell).map_err(Failure::from))
        .collect()
}

/// Build the black box. `tables` are every loaded table that can feed a
/// precomputed column (training data first).
fn build_oracle(
    spec: &OracleSpec,
    args: &OracleArgs,
    tables: &[&Table],
    seed: u64,
    manifest: &mut Manifest,
) -> Outcome<PredictionOracle> {
    let train = &tables[0].dataset;
    let schema = train.schema();
    Ok(match spec {
        OracleSpec::Builtin(kind) => {
            let model = match &args.model {
                Some(path) => {
                    manifest.input(path);
                    let m = load_model(path)?;
                    let expected = match kind {
                        ModelKindArg::Forest => "forest",
                        ModelKindArg::Knn => "knn",
                    };
                    if m.kind() != expected {
                        return Err(Failure::Usage(format!(
                            "{} holds a {} model but --oracle asks for builtin:{expected}",
                            path.display(),
                            m.kind()
                        )));
                    }
                    m
                }
                None => {
                    info!("training the {kind:?} oracle on --data");
                    fit_model(train, *kind, &args.params, seed)?
                }
            };
            PredictionOracle::builtin(model, schema)?
        }
        OracleSpec::Command(cmd) => {
            if !(args.oracle_timeout > 0.0) {
                return Err(Failure::Usage("--oracle-timeout must be positive".into()));
            }
            PredictionOracle::subprocess(cmd, schema, Duration::from_secs_f64(args.oracle_timeout))?
        }
        OracleSpec::Precomputed(col) => {
            let mut rows: Vec<Instance> = Vec::new();
            let mut labels = Vec::new();
            for t in tables {
                rows.extend(t.dataset.rows().iter().cloned());
                labels.extend(parse_predictions(t, col)?);
            }
            PredictionOracle::precomputed(&rows, &labels, schema)?
        }
    })
}

fn explain_config(p: &PipelineArgs, seed: u64) -> Outcome<ExplainConfig> {
    if p.n_neighbors == 0 {
        return Err(Failure::Usage("--n-neighbors must be positive".into()));
    }
    if p.smote_k == 0 {
        return Err(Failure::Usage("--smote-k must be positive".into()));
    }
    let policy = parse_policy(&p.smote_policy).map_err(|e| Failure::Usage(e.to_string()))?;
    let criterion = match p.criterion.as_str() {
        "gini" => Criterion::Gini,
        "entropy" => Criterion::Entropy,
        other => {
            return Err(Failure::Usage(format!(
                "unknown criterion '{other}' (expected gini or entropy)"
            )))
        }
    };
    if p.min_samples_split < 2 {
        return Err(Failure::Usage("--min-samples-split must be at least 2".into()));
    }
    Ok(ExplainConfig {
        n_neighbors: p.n_neighbors,
        metric: parse_metric(&p.distance)?,
        smote: policy.map(|policy| SmoteConfig {
            k_neighbors: p.smote_k,
            policy,
            seed: 0,
        }),
        cart: CartConfig {
            criterion,
            min_samples_split: p.min_samples_split,
            max_depth: p.max_depth,
            ..Default::default()
        },
        seed,
        ..Default::default()
    })
}

pub fn explain(cli: &Cli, args: &ExplainArgs) -> Outcome<()> {
    let spec = parse_oracle(&args.oracle.oracle)?;
    let cfg = explain_config(&args.pipeline, cli.seed)?;
    let mut manifest = Manifest::new("explain", flags(cli, args), cli.seed);
    let table = load_data(&args.data, precomputed_column(&spec), &mut manifest)?;
    let train = &table.dataset;
    let schema = train.schema();

    let x = match (args.index, &args.instance) {
        (Some(i), _) => {
            if i >= train.len() {
                return Err(Failure::Usage(format!(
                    "--index {i} out of range for {} rows",
                    train.len()
                )));
            }
            train.row(i).clone()
        }
        (None, Some(text)) => {
            let json: serde_json::Value = serde_json::from_str(text)
                .map_err(|e| Failure::Usage(format!("--instance is not valid JSON: {e}")))?;
            let x = schema
                .instance_from_json(&json)
                .map_err(|e| Failure::Usage(format!("invalid --instance: {e}")))?;
            schema
                .validate(&x)
                .map_err(|e| Failure::Usage(format!("invalid --instance: {e}")))?;
            x
        }
        (None, None) => return Err(Failure::Usage("give --index or --instance".into())),
    };

    let oracle = build_oracle(&spec, &args.oracle, &[&table], cli.seed, &mut manifest)?;
    let expl = explain_instance(train, &x, &oracle, &cfg)?;
    let format = match args.format {
        FormatArg::Text => RenderFormat::Text,
        FormatArg::Json => RenderFormat::Json,
    };
    std::io::stdout()
        .write_all(&render_explanation(&expl, format))
        .map_err(|e| Failure::runtime(e.to_string()))?;

    if let Some(dir) = &cli.out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("explanation.json");
        fs::write(&path, render_explanation(&expl, RenderFormat::Json)).map_err(io_err(&path))?;
        manifest.artifact(&path);
        manifest.write(dir).map_err(io_err(dir))?;
    }
    Ok(())
}

fn parse_explainers(list: &str) -> Outcome<Vec<ExplainerKind>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind: ExplainerKind = name.parse().map_err(|e: araucana::Error| Failure::Usage(e.to_string()))?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(Failure::Usage(
            "--explainers is empty (valid: araucana, linear)".into(),
        ));
    }
    Ok(out)
}

pub fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Outcome<()> {
    let spec = parse_oracle(&args.oracle.oracle)?;
    let explainers = parse_explainers(&args.explainers)?;
    let explain = explain_config(&args.pipeline, cli.seed)?;
    if let Some(w) = args.kernel_width {
        if !(w > 0.0) {
            return Err(Failure::Usage("--kernel-width must be positive".into()));
        }
    }
    if cli.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let dir = out_dir(&cli.out, "evaluate")?;
    let mut manifest = Manifest::new("evaluate", flags(cli, args), cli.seed);
    let aux = precomputed_column(&spec);
    let table = load_data(&args.data, aux.clone(), &mut manifest)?;

    let (train_table, test_table) = match (&args.test, args.test_frac) {
        (Some(test_path), _) => {
            manifest.input(test_path);
            let schema = table.dataset.schema().clone();
            let opts = load_opts(&args.data, Some(&schema), aux);
            let test = load_table_with(test_path, Some(schema), &opts)?;
            (table, test)
        }
        (None, Some(frac)) => {
            if !(frac > 0.0 && frac < 1.0) {
                return Err(Failure::Usage("--test-frac must lie strictly between 0 and 1".into()));
            }
            split_table(table, frac, seeds::derive(cli.seed, seeds::SPLIT))?
        }
        (None, None) => return Err(Failure::Usage("give --test or --test-frac".into())),
    };
    let train = &train_table.dataset;
    let test = &test_table.dataset;
    let oracle = build_oracle(
        &spec,
        &args.oracle,
        &[&train_table, &test_table],
        cli.seed,
        &mut manifest,
    )?;

    let cfg = FidelityConfig {
        explain,
        linear: LinearConfig {
            kernel_width: args.kernel_width,
            ..Default::default()
        },
        jobs: cli.jobs,
    };
    let report = evaluate_fidelity(train, test, &oracle, &explainers, &cfg)?;
    let csv = report_to_csv(&report, &cfg.explain.regression_tolerance);
    for (name, body) in [("summary.csv", &csv.summary), ("per_instance.csv", &csv.per_instance)] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
        manifest.artifact(&path);
    }
    manifest.write(&dir).map_err(io_err(&dir))?;

    println!("{:<10} {:>10} {:>6} {:>9} {:>9}", "explainer", "agreements", "total", "fidelity", "excluded");
    for s in &report.summaries {
        let f = s.fidelity();
        let f = if f.is_nan() { "nan".to_string() } else { format!("{f:.3}") };
        println!(
            "{:<10} {:>10} {:>6} {:>9} {:>9}",
            s.explainer.name(),
            s.agreements,
            s.total,
            f,
            s.excluded
        );
    }
    Ok(())
}

/// Seeded shuffle-and-prefix split that carries auxiliary columns along.
fn split_table(table: Table, frac: f64, seed: u64) -> Outcome<(Table, Table)> {
    let (train, test) = table.dataset.split(frac, seed)?;
    let (train_idx, test_idx) = table.dataset.split_indices(frac, seed)?;
    let pick = |idx: &[usize]| {
        table
            .aux
            .iter()
            .map(|(k, v)| (k.clone(), idx.iter().map(|&i| v[i].clone()).collect()))
            .collect()
    };
    Ok((
        Table {
            aux: pick(&train_idx),
            dataset: train,
        },
        Table {
            aux: pick(&test_idx),
            dataset: test,
        },
    ))
}

pub fn serve(args: &ServeArgs) -> Outcome<()> {
    let model = load_model(&args.model)?;
    let schema = model.schema().clone();
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| Failure::runtime(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let request: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| Failure::runtime(format!("malformed request: {e}")))?;
        let instances = request["instances"]
            .as_array()
            .ok_or_else(|| Failure::runtime("request lacks an 'instances' array"))?;
        let mut predictions = Vec::with_capacity(instances.len());
        for inst in instances {
            let x = schema.instance_from_json(inst)?;
            predictions.push(schema.label_to_json(model.predict(&x)?));
        }
        let reply = serde_json::json!({ "predictions": predictions });
        writeln!(stdout, "{reply}")
            .and_then(|_| stdout.flush())
            .map_err(|e| Failure::runtime(e.to_string()))?;
    }
    Ok(())
}
