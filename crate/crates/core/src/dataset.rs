//! CSV ingestion against a declared column schema, missing-value removal and
//! per-column summaries.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{source_name}: line {line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },
    #[error("{source_name}: input is not valid UTF-8 (first invalid byte at offset {offset})")]
    Encoding { source_name: String, offset: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    pub fn is_schema(&self) -> bool {
        matches!(self, DatasetError::Schema(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Identifier,
    Numeric,
    Categorical,
    Date,
    Duration,
    Target,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ColumnKind::Identifier => "identifier",
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Date => "date",
            ColumnKind::Duration => "duration",
            ColumnKind::Target => "target",
        };
        f.write_str(s)
    }
}

pub const DEFAULT_SENTINELS: [&str; 3] = ["", "F", "NaN"];

fn default_sentinels() -> BTreeSet<String> {
    DEFAULT_SENTINELS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default = "default_sentinels", rename = "missing")]
    pub missing_sentinels: BTreeSet<String>,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnSpec {
            name: name.into(),
            kind,
            missing_sentinels: default_sentinels(),
        }
    }

    pub fn with_sentinels<I, S>(mut self, sentinels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.missing_sentinels = sentinels.into_iter().map(Into::into).collect();
        self
    }

    pub fn is_missing(&self, cell: &str) -> bool {
        self.missing_sentinels.contains(cell.trim())
    }
}

/// Case-insensitive, whitespace-trimmed column key.
pub fn normalize_name(name: &str) -> String {
    name.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDoc", into = "SchemaDoc")]
pub struct Schema {
    columns: Vec<ColumnSpec>,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    columns: Vec<ColumnSpec>,
}

impl TryFrom<SchemaDoc> for Schema {
    type Error = DatasetError;
    fn try_from(doc: SchemaDoc) -> Result<Self, Self::Error> {
        Schema::new(doc.columns)
    }
}

impl From<Schema> for SchemaDoc {
    fn from(schema: Schema) -> Self {
        SchemaDoc {
            columns: schema.columns,
        }
    }
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self, DatasetError> {
        let mut seen = BTreeSet::new();
        for col in &columns {
            if col.name.trim().is_empty() {
                return Err(DatasetError::Schema("column name is empty".into()));
            }
            if !seen.insert(normalize_name(&col.name)) {
                return Err(DatasetError::Schema(format!(
                    "duplicate column name {:?}",
                    col.name
                )));
            }
        }
        let targets = columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Target)
            .count();
        if targets != 1 {
            return Err(DatasetError::Schema(format!(
                "schema must declare exactly one target column, found {targets}"
            )));
        }
        if !columns
            .iter()
            .any(|c| !matches!(c.kind, ColumnKind::Target | ColumnKind::Identifier))
        {
            return Err(DatasetError::Schema(
                "schema has no feature columns".into(),
            ));
        }
        Ok(Schema { columns })
    }

    /// The nine attributes of the public YouTube ad-view export.
    pub fn builtin() -> Self {
        use ColumnKind::*;
        Schema::new(vec![
            ColumnSpec::new("vidid", Identifier),
            ColumnSpec::new("adview", Target),
            ColumnSpec::new("views", Numeric),
            ColumnSpec::new("likes", Numeric),
            ColumnSpec::new("dislikes", Numeric),
            ColumnSpec::new("comment", Numeric),
            ColumnSpec::new("published", Date),
            ColumnSpec::new("duration", Duration),
            // Category codes are the letters A to H, so "F" is a real value here.
            ColumnSpec::new("category", Categorical).with_sentinels(["", "NaN"]),
        ])
        .expect("built-in schema is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        serde_json::from_str(text).map_err(|e| DatasetError::Schema(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        let key = normalize_name(name);
        self.columns.iter().find(|c| normalize_name(&c.name) == key)
    }

    pub fn target(&self) -> &ColumnSpec {
        self.columns
            .iter()
            .find(|c| c.kind == ColumnKind::Target)
            .expect("validated schema has a target")
    }

    pub fn identifier(&self) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.kind == ColumnKind::Identifier)
    }

    /// Re-designates the target column by name. The previous target becomes numeric.
    pub fn with_target(&self, name: &str) -> Result<Self, DatasetError> {
        let key = normalize_name(name);
        if !self.columns.iter().any(|c| normalize_name(&c.name) == key) {
            return Err(DatasetError::Schema(format!(
                "target column {name:?} is not declared in the schema"
            )));
        }
        let columns = self
            .columns
            .iter()
            .cloned()
            .map(|mut c| {
                if normalize_name(&c.name) == key {
                    c.kind = ColumnKind::Target;
                } else if c.kind == ColumnKind::Target {
                    c.kind = ColumnKind::Numeric;
                }
                c
            })
            .collect();
        Schema::new(columns)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub source_name: String,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        let key = normalize_name(name);
        self.header.iter().position(|h| normalize_name(h) == key)
    }

    pub fn column_values(&self, index: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r[index].as_str())
    }

    /// Writes the table back out as CSV, quoting cells only where needed.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            writer.write_record(row).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

/// Parses a CSV stream whose header must name exactly the schema's columns.
pub fn parse_csv<R: Read>(source: R, schema: &Schema) -> Result<RawTable, DatasetError> {
    parse_named(source, "<stream>", schema, false)
}

pub fn read_csv_file(path: &Path, schema: &Schema) -> Result<RawTable, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_named(file, &path.display().to_string(), schema, false)
}

/// Like [`parse_csv`], but the target column may be absent (inputs for prediction).
pub fn parse_csv_for_prediction<R: Read>(
    source: R,
    source_name: &str,
    schema: &Schema,
) -> Result<RawTable, DatasetError> {
    parse_named(source, source_name, schema, true)
}

fn parse_named<R: Read>(
    mut source: R,
    source_name: &str,
    schema: &Schema,
    target_optional: bool,
) -> Result<RawTable, DatasetError> {
    let mut bytes = Vec::new();
    source
        .read_to_end(&mut bytes)
        .map_err(|source| DatasetError::Io {
            path: source_name.to_string(),
            source,
        })?;
    let text = std::str::from_utf8(&bytes).map_err(|e| DatasetError::Encoding {
        source_name: source_name.to_string(),
        offset: e.valid_up_to(),
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let parse_err = |line: u64, message: String| DatasetError::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "missing header row".into())),
    };

    let mut by_name: HashMap<String, usize> = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        if by_name.insert(normalize_name(name), i).is_some() {
            return Err(DatasetError::Schema(format!(
                "{source_name}: duplicate header column {name:?}"
            )));
        }
    }
    // Source column index for each retained schema column, in schema order.
    let mut layout: Vec<(String, usize)> = Vec::with_capacity(schema.columns().len());
    for col in schema.columns() {
        match by_name.remove(&normalize_name(&col.name)) {
            Some(i) => layout.push((col.name.clone(), i)),
            None if target_optional && col.kind == ColumnKind::Target => {}
            None => {
                return Err(DatasetError::Schema(format!(
                    "{source_name}: header lacks schema column {:?}",
                    col.name
                )))
            }
        }
    }
    if !by_name.is_empty() {
        let mut extra: Vec<&str> = header
            .iter()
            .filter(|h| by_name.contains_key(&normalize_name(h)))
            .collect();
        extra.sort_unstable();
        return Err(DatasetError::Schema(format!(
            "{source_name}: header has columns not in the schema: {extra:?}"
        )));
    }

    let arity = header.len();
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != arity {
            return Err(parse_err(
                line,
                format!("expected {arity} cells, found {}", rec.len()),
            ));
        }
        rows.push(layout.iter().map(|(_, i)| rec[*i].to_string()).collect());
    }

    Ok(RawTable {
        header: layout.into_iter().map(|(name, _)| name).collect(),
        rows,
        source_name: source_name.to_string(),
    })
}

fn specs_for<'a>(table: &RawTable, schema: &'a Schema) -> Vec<Option<&'a ColumnSpec>> {
    table.header.iter().map(|h| schema.column(h)).collect()
}

/// Removes every row holding a missing-value sentinel in any column.
pub fn drop_missing(table: &RawTable, schema: &Schema) -> (RawTable, usize) {
    let specs = specs_for(table, schema);
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .filter(|row| {
            !row.iter()
                .zip(&specs)
                .any(|(cell, spec)| spec.is_some_and(|s| s.is_missing(cell)))
        })
        .cloned()
        .collect();
    let dropped = table.rows.len() - rows.len();
    (
        RawTable {
            header: table.header.clone(),
            rows,
            source_name: table.source_name.clone(),
        },
        dropped,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: ColumnKind,
    pub non_missing: usize,
    pub distinct: usize,
    /// Present only for numeric and target columns with at least one parseable cell.
    pub min: Option<f64>,
    pub max: Option<f64>,
}

pub fn summarize(table: &RawTable, schema: &Schema) -> Vec<ColumnSummary> {
    table
        .header
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let spec = schema.column(name);
            let kind = spec.map(|s| s.kind).unwrap_or(ColumnKind::Categorical);
            let present: Vec<&str> = table
                .column_values(j)
                .filter(|c| !spec.is_some_and(|s| s.is_missing(c)))
                .collect();
            let distinct = present.iter().collect::<BTreeSet<_>>().len();
            let (min, max) = if matches!(kind, ColumnKind::Numeric | ColumnKind::Target) {
                present
                    .iter()
                    .filter_map(|c| c.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .fold((None, None), |(lo, hi): (Option<f64>, Option<f64>), v| {
                        (
                            Some(lo.map_or(v, |l| l.min(v))),
                            Some(hi.map_or(v, |h| h.max(v))),
                        )
                    })
            } else {
                (None, None)
            };
            ColumnSummary {
                name: name.clone(),
                kind,
                non_missing: present.len(),
                distinct,
                min,
                max,
            }
        })
        .collect()
}
