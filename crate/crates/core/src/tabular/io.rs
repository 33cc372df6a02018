//! CSV and schema-file ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{Dataset, FeatureSpec, Instance, Label, Schema, TargetKind, TargetSpec};
use crate::error::{Error, Result};

/// How to type a target column when no schema file declares it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TaskHint {
    /// Non-numeric columns are classification targets; numeric columns are
    /// classification targets when integer-valued with at most
    /// [`TaskHint::MAX_AUTO_CLASSES`] distinct values, regression otherwise.
    #[default]
    Auto,
    Classification,
    Regression,
}

impl TaskHint {
    pub const MAX_AUTO_CLASSES: usize = 20;
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Target column name. Falls back to the schema file's target.
    pub target: Option<String>,
    pub task: TaskHint,
    /// Columns read verbatim and kept out of the feature set.
    pub aux_columns: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub dataset: Dataset,
    pub aux: BTreeMap<String, Vec<String>>,
}

pub fn load_dataset(
    csv_path: impl AsRef<Path>,
    schema_path: Option<&Path>,
    opts: &LoadOptions,
) -> Result<Dataset> {
    load_table(csv_path, schema_path, opts).map(|t| t.dataset)
}

pub fn load_table(
    csv_path: impl AsRef<Path>,
    schema_path: Option<&Path>,
    opts: &LoadOptions,
) -> Result<Table> {
    let schema = schema_path.map(read_schema).transpose()?;
    load_table_with(csv_path, schema, opts)
}

/// As [`load_table`], with the schema already in memory.
pub fn load_table_with(
    csv_path: impl AsRef<Path>,
    schema: Option<Schema>,
    opts: &LoadOptions,
) -> Result<Table> {
    let (header, records) = read_csv(csv_path.as_ref())?;

    let col = |name: &str| header.iter().position(|h| h == name);
    for aux in &opts.aux_columns {
        if col(aux).is_none() {
            return Err(Error::SchemaMismatch(format!("column '{aux}' not in CSV header")));
        }
    }
    let aux: BTreeMap<String, Vec<String>> = opts
        .aux_columns
        .iter()
        .map(|name| {
            let c = col(name).unwrap();
            (name.clone(), records.iter().map(|r| r[c].clone()).collect())
        })
        .collect();

    let dataset = match schema {
        Some(schema) => with_schema(schema, &header, &records, opts)?,
        None => inferred(&header, &records, opts)?,
    };
    Ok(Table { dataset, aux })
}

pub fn read_schema(path: &Path) -> Result<Schema> {
    let file = File::open(path).map_err(|e| not_found(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}

fn not_found(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::FileNotFound(path.to_path_buf())
    } else {
        Error::Io(e)
    }
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = File::open(path).map_err(|e| not_found(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::SchemaMismatch("CSV header is empty".into()));
    }
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cells: Vec<String> = rec.iter().map(str::to_string).collect();
        if let Some(c) = cells.iter().position(|c| c.trim().is_empty()) {
            return Err(Error::EmptyCell {
                row,
                column: header[c].clone(),
            });
        }
        records.push(cells);
    }
    Ok((header, records))
}

fn with_schema(
    schema: Schema,
    header: &[String],
    records: &[Vec<String>],
    opts: &LoadOptions,
) -> Result<Dataset> {
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut feature_cols = Vec::with_capacity(schema.n_features());
    for f in schema.features() {
        feature_cols.push(col(&f.name).ok_or_else(|| {
            Error::SchemaMismatch(format!("schema feature '{}' not in CSV header", f.name))
        })?);
    }

    let schema = match (schema.target().map(|t| t.name.clone()), &opts.target) {
        (Some(declared), Some(asked)) if &declared != asked => {
            return Err(Error::SchemaMismatch(format!(
                "target '{asked}' requested but schema declares '{declared}'"
            )))
        }
        (None, Some(asked)) => {
            let c = col(asked).ok_or_else(|| Error::MissingTarget(Some(asked.clone())))?;
            let cells: Vec<&str> = records.iter().map(|r| r[c].as_str()).collect();
            let target = infer_target(asked, &cells, opts.task)?;
            schema.with_target(Some(target))?
        }
        _ => schema,
    };
    let target_col = schema.target().and_then(|t| col(&t.name));

    for h in header {
        let known = schema.feature_index(h).is_some()
            || schema.target().is_some_and(|t| &t.name == h)
            || opts.aux_columns.contains(h);
        if !known {
            return Err(Error::SchemaMismatch(format!(
                "CSV column '{h}' is not declared in the schema"
            )));
        }
    }

    let mut rows = Vec::with_capacity(records.len());
    let mut targets = target_col.map(|_| Vec::with_capacity(records.len()));
    for (r, rec) in records.iter().enumerate() {
        let values = feature_cols
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                schema.parse_value(i, &rec[c]).map_err(|e| match e {
                    Error::TypeMismatch { .. } => Error::Unparseable {
                        row: r,
                        column: header[c].clone(),
                        value: rec[c].clone(),
                    },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(Instance::new(values));
        if let (Some(c), Some(t)) = (target_col, targets.as_mut()) {
            t.push(parse_target(&schema, &rec[c], r, &header[c])?);
        }
    }
    Dataset::new(schema, rows, targets)
}

fn parse_target(schema: &Schema, cell: &str, row: usize, column: &str) -> Result<Label> {
    schema.parse_label(cell).map_err(|e| match e {
        Error::InvalidLabel(_) => Error::Unparseable {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        },
        other => other,
    })
}

fn parse_real(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

fn inferred(header: &[String], records: &[Vec<String>], opts: &LoadOptions) -> Result<Dataset> {
    let target_col = match &opts.target {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingTarget(Some(name.clone())))?,
        ),
        None => None,
    };
    let mut features = Vec::new();
    let mut feature_cols = Vec::new();
    for (c, name) in header.iter().enumerate() {
        if Some(c) == target_col || opts.aux_columns.contains(name) {
            continue;
        }
        let cells: Vec<&str> = records.iter().map(|r| r[c].as_str()).collect();
        features.push(infer_feature(name, &cells));
        feature_cols.push(c);
    }
    let target = target_col
        .map(|c| {
            let cells: Vec<&str> = records.iter().map(|r| r[c].as_str()).collect();
            infer_target(&header[c], &cells, opts.task)
        })
        .transpose()?;
    let schema = Schema::new(features, target)?;

    let mut rows = Vec::with_capacity(records.len());
    let mut targets = target_col.map(|_| Vec::with_capacity(records.len()));
    for (r, rec) in records.iter().enumerate() {
        let values = feature_cols
            .iter()
            .enumerate()
            .map(|(i, &c)| schema.parse_value(i, &rec[c]))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Instance::new(values));
        if let (Some(c), Some(t)) = (target_col, targets.as_mut()) {
            t.push(parse_target(&schema, &rec[c], r, &header[c])?);
        }
    }
    Dataset::new(schema, rows, targets)
}

fn infer_feature(name: &str, cells: &[&str]) -> FeatureSpec {
    let reals: Option<Vec<f64>> = cells.iter().map(|c| parse_real(c)).collect();
    match reals {
        Some(xs) if !xs.is_empty() => {
            let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            FeatureSpec::numeric(name, min, max)
        }
        // An empty column has no evidence either way; call it numeric with a
        // degenerate range.
        Some(_) => FeatureSpec::numeric(name, 0.0, 0.0),
        None => {
            let cats: BTreeSet<&str> = cells.iter().copied().collect();
            FeatureSpec::categorical(name, cats)
        }
    }
}

fn infer_target(name: &str, cells: &[&str], hint: TaskHint) -> Result<TargetSpec> {
    let reals: Option<Vec<f64>> = cells.iter().map(|c| parse_real(c)).collect();
    let distinct: BTreeSet<&str> = cells.iter().copied().collect();
    let regression = match (hint, &reals) {
        (TaskHint::Regression, Some(_)) => true,
        (TaskHint::Regression, None) => {
            return Err(Error::InvalidLabel(format!(
                "regression target '{name}' has non-numeric values"
            )))
        }
        (TaskHint::Classification, _) => false,
        (TaskHint::Auto, None) => false,
        (TaskHint::Auto, Some(xs)) => {
            !(xs.iter().all(|x| x.fract() == 0.0) && distinct.len() <= TaskHint::MAX_AUTO_CLASSES)
        }
    };
    let kind = if regression {
        TargetKind::Regression
    } else {
        let mut classes: Vec<String> = distinct.into_iter().map(str::to_string).collect();
        if classes.iter().all(|c| parse_real(c).is_some()) {
            classes.sort_by(|a, b| parse_real(a).unwrap().total_cmp(&parse_real(b).unwrap()));
        }
        TargetKind::Classification { classes }
    };
    Ok(TargetSpec {
        name: name.to_string(),
        kind,
    })
}

/// Write `dataset` as CSV (features, then target when present) and its
/// schema as JSON.
pub fn write_dataset(dataset: &Dataset, csv_path: &Path, schema_path: &Path) -> Result<()> {
    let file = File::create(csv_path)?;
    write_csv(dataset, file)?;
    let mut sf = File::create(schema_path)?;
    serde_json::to_writer_pretty(&mut sf, dataset.schema())?;
    sf.write_all(b"\n")?;
    Ok(())
}

pub fn write_csv<W: Write>(dataset: &Dataset, w: W) -> Result<()> {
    let schema = dataset.schema();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = schema.features().iter().map(|f| f.name.as_str()).collect();
    let targets = dataset.targets();
    if let (Some(t), Some(_)) = (schema.target(), targets) {
        header.push(&t.name);
    }
    wtr.write_record(&header)?;
    for (r, row) in dataset.rows().iter().enumerate() {
        let mut rec: Vec<String> = row
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| schema.format_value(i, *v))
            .collect();
        if let Some(t) = targets {
            rec.push(schema.format_label(t[r]));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::Value;

    fn tmp_csv(name: &str, content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("araucana-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn infers_numeric_and_categorical() {
        let p = tmp_csv("ab.csv", "a,b\n1,x\n2,y\n");
        let d = load_dataset(&p, None, &LoadOptions::default()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.schema().feature(0), &FeatureSpec::numeric("a", 1.0, 2.0));
        assert_eq!(d.schema().feature(1), &FeatureSpec::categorical("b", ["x", "y"]));
        assert_eq!(d.row(1).values(), &[Value::Real(2.0), Value::Category(1)]);
    }

    #[test]
    fn constant_column() {
        let p = tmp_csv("const.csv", "a\n1\n1\n");
        let d = load_dataset(&p, None, &LoadOptions::default()).unwrap();
        assert_eq!(d.schema().feature(0).span(), Some(0.0));
    }

    #[test]
    fn empty_cell_names_row_and_column() {
        let p = tmp_csv("empty.csv", "a,b\n1,x\n2,\n");
        match load_dataset(&p, None, &LoadOptions::default()) {
            Err(Error::EmptyCell { row, column }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "b");
            }
            other => panic!("expected empty-cell error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        let r = load_dataset("/nonexistent/x.csv", None, &LoadOptions::default());
        assert!(matches!(r, Err(Error::FileNotFound(_))));
    }

    #[test]
    fn unknown_category_with_schema() {
        let csv = tmp_csv("cat.csv", "a,b\n1,x\n2,z\n");
        let schema = tmp_csv(
            "cat.json",
            r#"{"features":[{"name":"a","kind":"numeric","range":[0,5]},{"name":"b","kind":"categorical","categories":["x","y"]}]}"#,
        );
        let r = load_dataset(&csv, Some(&schema), &LoadOptions::default());
        assert!(matches!(r, Err(Error::UnknownCategory { .. })), "{r:?}");
    }

    #[test]
    fn header_schema_mismatch() {
        let csv = tmp_csv("mm.csv", "a,c\n1,x\n");
        let schema = tmp_csv(
            "mm.json",
            r#"{"features":[{"name":"a","kind":"numeric","range":[0,5]},{"name":"b","kind":"categorical","categories":["x"]}]}"#,
        );
        let r = load_dataset(&csv, Some(&schema), &LoadOptions::default());
        assert!(matches!(r, Err(Error::SchemaMismatch(_))), "{r:?}");
    }

    #[test]
    fn target_inference() {
        let p = tmp_csv("t.csv", "a,y\n1,0\n2,1\n3,1\n");
        let opts = LoadOptions {
            target: Some("y".into()),
            ..Default::default()
        };
        let d = load_dataset(&p, None, &opts).unwrap();
        assert_eq!(d.schema().n_features(), 1);
        assert!(d.schema().task().unwrap().is_classification());
        assert_eq!(d.targets().unwrap()[2], Label::Class(1));

        let p = tmp_csv("r.csv", "a,y\n1,0.5\n2,1.25\n");
        let d = load_dataset(&p, None, &opts).unwrap();
        assert_eq!(d.targets().unwrap()[1], Label::Value(1.25));

        let p = tmp_csv("m.csv", "a,z\n1,0\n");
        assert!(matches!(
            load_dataset(&p, None, &opts),
            Err(Error::MissingTarget(Some(n))) if n == "y"
        ));
    }

    #[test]
    fn aux_columns_are_kept_apart() {
        let p = tmp_csv("aux.csv", "a,pred,y\n1,1,0\n2,0,1\n");
        let opts = LoadOptions {
            target: Some("y".into()),
            aux_columns: vec!["pred".into()],
            ..Default::default()
        };
        let t = load_table(&p, None, &opts).unwrap();
        assert_eq!(t.dataset.schema().n_features(), 1);
        assert_eq!(t.aux["pred"], vec!["1".to_string(), "0".to_string()]);
    }
}
