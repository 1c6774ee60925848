//! The five subcommands, callable in-process.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use adview_core::analysis::{
    compare_models, correlation_matrix, histogram, model_seed, rmse, CompareOptions, Comparison,
};
use adview_core::dataset::{
    drop_missing, parse_csv_for_prediction, read_csv_file, summarize, RawTable, Schema,
};
use adview_core::features::{encode_table, fit_encoders, FeatureMatrix, LabelEncoder, RowEncoder, TargetVector};
use adview_core::models::{load_model, save_model, ModelBundle, ModelKind, Regressor};
use adview_core::preprocess::{fit_minmax, train_test_split, MinMaxScaler, SplitResult};
use adview_core::rng::{derive_seed, stream};
use adview_core::testkit::{generate_synthetic, SyntheticSpec};

use crate::settings::RunConfig;
use crate::CliError;

/// Cleaned, encoded, split and scaled data ready for training.
pub struct Prepared {
    pub schema: Schema,
    pub dataset_name: String,
    pub n_read: usize,
    pub n_dropped: usize,
    pub encoders: Vec<LabelEncoder>,
    pub split: SplitResult,
    pub scaler: MinMaxScaler,
    pub train: (FeatureMatrix, TargetVector),
    pub test: (FeatureMatrix, TargetVector),
}

impl Prepared {
    fn bundle(&self, model: Regressor) -> ModelBundle {
        ModelBundle {
            model,
            scaler: self.scaler.clone(),
            label_encoders: self.encoders.clone(),
            feature_names: self.train.0.feature_names.clone(),
            target_name: self.train.1.name.clone(),
            schema: self.schema.clone(),
        }
    }
}

pub fn load_schema(config: &RunConfig) -> Result<Schema, CliError> {
    let schema = match &config.schema_path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Input(format!("cannot read schema file {}: {e}", path.display()))
            })?;
            Schema::from_json(&text)?
        }
        None => Schema::builtin(),
    };
    if schema.target().name.eq_ignore_ascii_case(config.target_name.trim()) {
        Ok(schema)
    } else {
        Ok(schema.with_target(&config.target_name)?)
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Clean, encode, split, then fit the scaler on the training rows only.
pub fn prepare(config: &RunConfig) -> Result<Prepared, CliError> {
    let schema = load_schema(config)?;
    let raw = read_csv_file(&config.data_path, &schema)?;
    let (table, n_dropped) = drop_missing(&raw, &schema);
    log(format_args!(
        "read {} rows, dropped {} with missing values",
        raw.n_rows(),
        n_dropped
    ));
    if table.n_rows() < 2 {
        return Err(CliError::Input(format!(
            "need at least 2 usable rows after cleaning, found {}",
            table.n_rows()
        )));
    }
    let encoders = fit_encoders(&table, &schema)?;
    let (features, target) = encode_table(&table, &schema, &encoders)?;
    let split = train_test_split(
        table.n_rows(),
        config.split_ratio,
        derive_seed(config.seed, stream::SPLIT),
    )?;
    let (x_train, y_train) = (features.select_rows(&split.train_indices), target.select(&split.train_indices));
    let (x_test, y_test) = (features.select_rows(&split.test_indices), target.select(&split.test_indices));
    let scaler = fit_minmax(&x_train)?;
    let x_train = scaler.transform(&x_train)?;
    let x_test = scaler.transform(&x_test)?;
    Ok(Prepared {
        schema,
        dataset_name: dataset_name(&config.data_path),
        n_read: raw.n_rows(),
        n_dropped,
        encoders,
        split,
        scaler,
        train: (x_train, y_train),
        test: (x_test, y_test),
    })
}

fn log(args: std::fmt::Arguments<'_>) {
    eprintln!("adview: {args}");
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn file_stem_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreOutcome {
    pub usable_rows: usize,
    pub dropped_rows: usize,
    pub files: Vec<PathBuf>,
}

/// Column summary, one histogram per encoded feature plus the target, and
/// the correlation matrix.
pub fn cmd_explore(config: &RunConfig) -> Result<ExploreOutcome, CliError> {
    let schema = load_schema(config)?;
    let raw = read_csv_file(&config.data_path, &schema)?;
    let (table, dropped) = drop_missing(&raw, &schema);
    let out = &config.out_dir;
    create_dir(out)?;
    let mut files = Vec::new();

    let summary = render_summary(&raw, &table, dropped, &schema);
    let path = out.join("summary.txt");
    write_file(&path, &summary)?;
    files.push(path);

    if table.n_rows() == 0 {
        log(format_args!(
            "warning: no usable rows after dropping missing values; wrote summary only"
        ));
        return Ok(ExploreOutcome {
            usable_rows: 0,
            dropped_rows: dropped,
            files,
        });
    }
    let encoders = fit_encoders(&table, &schema)?;
    let (features, target) = encode_table(&table, &schema, &encoders)?;
    let columns = features
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| (name.clone(), features.values.column(j).to_vec()))
        .chain(std::iter::once((target.name.clone(), target.values.clone())));
    for (name, values) in columns {
        let h = histogram(&name, &values, config.bins)?;
        let path = out.join(format!("histogram_{}.csv", file_stem_safe(&name)));
        write_file(&path, &h.to_csv())?;
        files.push(path);
    }
    if table.n_rows() >= 2 {
        let corr = correlation_matrix(&features, &target)?;
        let path = out.join("correlation.csv");
        write_file(&path, &corr.to_csv())?;
        files.push(path);
    } else {
        log(format_args!("warning: one usable row; correlation matrix skipped"));
    }
    Ok(ExploreOutcome {
        usable_rows: table.n_rows(),
        dropped_rows: dropped,
        files,
    })
}

fn render_summary(raw: &RawTable, clean: &RawTable, dropped: usize, schema: &Schema) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(s, "Source: {}", raw.source_name);
    let _ = writeln!(s, "Rows read: {}", raw.n_rows());
    let _ = writeln!(s, "Rows dropped (missing values): {dropped}");
    let _ = writeln!(s, "Usable rows: {}", clean.n_rows());
    if clean.n_rows() == 0 {
        let _ = writeln!(s, "Warning: no usable rows remain");
    }
    s.push('\n');
    let _ = writeln!(
        s,
        "{:<16} {:<12} {:>11} {:>9} {:>14} {:>14}",
        "column", "kind", "non_missing", "distinct", "min", "max"
    );
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
    for c in summarize(raw, schema) {
        let _ = writeln!(
            s,
            "{:<16} {:<12} {:>11} {:>9} {:>14} {:>14}",
            c.name,
            c.kind.to_string(),
            c.non_missing,
            c.distinct,
            fmt(c.min),
            fmt(c.max)
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub kind: ModelKind,
    pub bundle_path: PathBuf,
    pub train_rmse: f64,
    pub test_rmse: f64,
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome, CliError> {
    let kind = config
        .model_kind
        .ok_or_else(|| CliError::Input("no model kind given (use --model)".into()))?;
    let prepared = prepare(config)?;
    let model_config = config.single_config(kind).with_seed(model_seed(config.seed, kind));
    log(format_args!("training {} ({})", kind.display_name(), model_config.summary()));
    let started = Instant::now();
    let model = Regressor::fit(&model_config, prepared.train.0.values.view(), &prepared.train.1.values)
        .map_err(|e| CliError::Training(format!("{}: {e}", kind.display_name())))?;
    log(format_args!("trained in {:.3}s", started.elapsed().as_secs_f64()));
    let score = |(x, y): &(FeatureMatrix, TargetVector)| -> Result<f64, CliError> {
        let p = model
            .predict(x.values.view())
            .map_err(|e| CliError::Training(e.to_string()))?;
        rmse(&p, &y.values).map_err(|e| CliError::Training(format!("RMSE undefined: {e}")))
    };
    let train_rmse = score(&prepared.train)?;
    let test_rmse = score(&prepared.test)?;

    create_dir(&config.out_dir)?;
    let bundle_path = config.out_dir.join(format!("{}.json", kind.tag()));
    save_model(&prepared.bundle(model), &bundle_path)?;
    Ok(TrainOutcome {
        kind,
        bundle_path,
        train_rmse,
        test_rmse,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOutcome {
    pub comparison: Comparison,
    pub report_text: PathBuf,
    pub report_tsv: PathBuf,
    pub bundles: Vec<PathBuf>,
}

/// Trains all five models and writes `report.txt`, `report.tsv` and
/// `models/<kind>.json` for every model that trained.
pub fn cmd_compare(config: &RunConfig) -> Result<CompareOutcome, CliError> {
    let prepared = prepare(config)?;
    let options = CompareOptions {
        dataset_name: prepared.dataset_name.clone(),
        seed: config.seed,
        split_ratio: config.split_ratio,
        record_timings: config.record_timings,
    };
    let comparison = compare_models(
        (&prepared.train.0, &prepared.train.1),
        (&prepared.test.0, &prepared.test.1),
        &config.comparison_configs(),
        &options,
    )?;
    for row in &comparison.report.rows {
        match &row.outcome {
            Ok(v) => log(format_args!("{}: test RMSE {v:.3}", row.model_name)),
            Err(e) => log(format_args!("{}: failed: {e}", row.model_name)),
        }
    }

    let models_dir = config.out_dir.join("models");
    create_dir(&models_dir)?;
    let report_text = config.out_dir.join("report.txt");
    let report_tsv = config.out_dir.join("report.tsv");
    write_file(&report_text, &comparison.report.render_text())?;
    write_file(&report_tsv, &comparison.report.render_tsv())?;
    let mut bundles = Vec::new();
    for (row, model) in comparison.report.rows.iter().zip(&comparison.models) {
        let path = models_dir.join(format!("{}.json", row.kind.tag()));
        match model {
            Some(m) => {
                save_model(&prepared.bundle(m.clone()), &path)?;
                bundles.push(path);
            }
            None => {
                // Leave no stale bundle from an earlier run behind.
                let _ = fs::remove_file(&path);
            }
        }
    }
    Ok(CompareOutcome {
        comparison,
        report_text,
        report_tsv,
        bundles,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub id: String,
    pub prediction: Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub id_column: String,
    pub rows: Vec<PredictionRow>,
}

impl Predictions {
    pub fn n_failed(&self) -> usize {
        self.rows.iter().filter(|r| r.prediction.is_err()).count()
    }

    /// CSV with the identifier, the prediction and any row-level error.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([self.id_column.as_str(), "predicted_adview", "error"])
            .expect("in-memory write");
        for r in &self.rows {
            let (value, error) = match &r.prediction {
                Ok(v) => (v.to_string(), String::new()),
                Err(e) => (String::new(), e.clone()),
            };
            w.write_record([r.id.as_str(), value.as_str(), error.as_str()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Runs a saved bundle over every row of a CSV file.
///
/// Rows that cannot be encoded (missing cells, unknown categories, bad
/// numbers) get an error entry instead of a prediction.
pub fn predict_table(bundle: &ModelBundle, table: &RawTable) -> Result<Predictions, CliError> {
    let schema = &bundle.schema;
    let plan = RowEncoder::new(&table.header, schema, &bundle.label_encoders)?;
    if plan.feature_names() != bundle.feature_names.as_slice() {
        return Err(CliError::Schema(format!(
            "input columns {:?} do not match the model's features {:?}",
            plan.feature_names(),
            bundle.feature_names
        )));
    }
    let id_index = schema.identifier().and_then(|c| table.column_index(&c.name));
    let id_column = match id_index {
        Some(j) => table.header[j].clone(),
        None => "row".to_string(),
    };
    let specs: Vec<_> = table.header.iter().map(|h| schema.column(h)).collect();
    let target_index = table.column_index(&schema.target().name);

    let d = bundle.feature_names.len();
    let mut encoded: Vec<Result<Vec<f64>, String>> = Vec::with_capacity(table.n_rows());
    for (i, row) in table.rows.iter().enumerate() {
        let missing = row.iter().enumerate().find(|(j, cell)| {
            Some(*j) != target_index && specs[*j].is_some_and(|s| s.is_missing(cell))
        });
        let result = match missing {
            Some((j, _)) => Err(format!("missing value in column {:?}", table.header[j])),
            None => plan
                .encode_features(row, i + 1)
                .map(|mut v| {
                    bundle.scaler.transform_row(&mut v);
                    v
                })
                .map_err(|e| e.to_string()),
        };
        encoded.push(result);
    }
    let ok_rows: Vec<f64> = encoded.iter().flatten().flatten().copied().collect();
    let n_ok = ok_rows.len() / d.max(1);
    let x = ndarray::Array2::from_shape_vec((n_ok, d), ok_rows).expect("row-major shape");
    let predicted = bundle
        .model
        .predict(x.view())
        .map_err(|e| CliError::Schema(e.to_string()))?;
    let mut predicted = predicted.into_iter();
    let rows = encoded
        .into_iter()
        .enumerate()
        .map(|(i, r)| PredictionRow {
            id: match id_index {
                Some(j) => table.rows[i][j].clone(),
                None => (i + 1).to_string(),
            },
            prediction: r.map(|_| predicted.next().expect("one prediction per encoded row")),
        })
        .collect();
    Ok(Predictions { id_column, rows })
}

/// Loads a bundle, predicts every row of `data_path`, and writes the CSV to
/// `out` or stdout. Returns the predictions even when some rows failed; the
/// caller maps failures to an exit status.
pub fn cmd_predict(model_path: &Path, data_path: &Path, out: Option<&Path>) -> Result<Predictions, CliError> {
    let bundle = load_model(model_path)?;
    let file = fs::File::open(data_path).map_err(|e| {
        CliError::Input(format!("cannot open {}: {e}", data_path.display()))
    })?;
    let table = parse_csv_for_prediction(file, &data_path.display().to_string(), &bundle.schema)?;
    let predictions = predict_table(&bundle, &table)?;
    let csv = predictions.to_csv();
    match out {
        Some(path) => write_file(path, &csv)?,
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| CliError::Input(format!("cannot write to stdout: {e}")))?,
    }
    Ok(predictions)
}

pub fn cmd_generate(spec: &SyntheticSpec, out: Option<&Path>) -> Result<RawTable, CliError> {
    let table = generate_synthetic(spec).map_err(|e| CliError::Input(e.to_string()))?;
    let csv = table.to_csv();
    match out {
        Some(path) => write_file(path, &csv)?,
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| CliError::Input(format!("cannot write to stdout: {e}")))?,
    }
    Ok(table)
}
