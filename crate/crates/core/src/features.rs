//! Conversion of cleaned text cells into a numeric design matrix.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use chrono::NaiveDate;
use ndarray::Array2;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{normalize_name, ColumnKind, RawTable, Schema};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot fit a label encoder for {column:?} on zero cells")]
    EmptyEncoderInput { column: String },
    #[error("column {column:?}: unknown category {value:?}")]
    UnknownCategory { column: String, value: String },
    #[error("row {row}, column {column:?}: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },
    #[error("unrecognized duration {0:?} (expected PT#H#M#S or HH:MM:SS)")]
    Duration(String),
    #[error("column {0:?} has no fitted label encoder")]
    MissingEncoder(String),
    #[error("table column {0:?} is not declared in the schema")]
    UndeclaredColumn(String),
    #[error("table has no target column {0:?}")]
    MissingTarget(String),
}

/// Maps category text to consecutive codes in ascending lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEncoder {
    pub column_name: String,
    pub mapping: BTreeMap<String, u32>,
}

impl LabelEncoder {
    pub fn encode(&self, value: &str) -> Result<u32, FeatureError> {
        self.mapping
            .get(value.trim())
            .copied()
            .ok_or_else(|| FeatureError::UnknownCategory {
                column: self.column_name.clone(),
                value: value.to_string(),
            })
    }

    pub fn n_categories(&self) -> usize {
        self.mapping.len()
    }

    /// Checks the `0..k` gap-free, sorted-order coding.
    pub fn is_well_formed(&self) -> bool {
        self.mapping
            .values()
            .enumerate()
            .all(|(i, &code)| code as usize == i)
    }
}

pub fn fit_label_encoder<'a, I>(column_name: &str, cells: I) -> Result<LabelEncoder, FeatureError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut distinct: Vec<&str> = cells.into_iter().map(str::trim).collect();
    if distinct.is_empty() {
        return Err(FeatureError::EmptyEncoderInput {
            column: column_name.to_string(),
        });
    }
    distinct.sort_unstable();
    distinct.dedup();
    let mapping = distinct
        .into_iter()
        .enumerate()
        .map(|(code, value)| (value.to_string(), code as u32))
        .collect();
    Ok(LabelEncoder {
        column_name: column_name.to_string(),
        mapping,
    })
}

/// Fits one encoder per categorical column present in `table`.
pub fn fit_encoders(table: &RawTable, schema: &Schema) -> Result<Vec<LabelEncoder>, FeatureError> {
    let mut encoders = Vec::new();
    for (j, name) in table.header.iter().enumerate() {
        let spec = schema
            .column(name)
            .ok_or_else(|| FeatureError::UndeclaredColumn(name.clone()))?;
        if spec.kind == ColumnKind::Categorical {
            encoders.push(fit_label_encoder(&spec.name, table.column_values(j))?);
        }
    }
    Ok(encoders)
}

static ISO_DURATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^PT(?:(\d+)H)?(?:(\d+)M)?(?:(\d+)S)?$").expect("valid regex")
});
static CLOCK_DURATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d+):([0-5]\d):([0-5]\d)$").expect("valid regex"));
static DECIMAL_LITERAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$").expect("valid regex")
});
static ISO_DATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\d{4}-\d{2}-\d{2}$").expect("valid regex"));

/// Total seconds of an ISO-8601 `PT#H#M#S` or clock `HH:MM:SS` duration.
pub fn parse_duration(text: &str) -> Result<u64, FeatureError> {
    let s = text.trim();
    let bad = || FeatureError::Duration(text.to_string());
    let num = |m: Option<regex::Match<'_>>| -> Result<u64, FeatureError> {
        m.map_or(Ok(0), |m| m.as_str().parse::<u64>().map_err(|_| bad()))
    };
    let (h, m, sec) = if let Some(c) = ISO_DURATION.captures(s) {
        if c.get(1).is_none() && c.get(2).is_none() && c.get(3).is_none() {
            return Err(bad());
        }
        (num(c.get(1))?, num(c.get(2))?, num(c.get(3))?)
    } else if let Some(c) = CLOCK_DURATION.captures(s) {
        (num(c.get(1))?, num(c.get(2))?, num(c.get(3))?)
    } else {
        return Err(bad());
    };
    h.checked_mul(3600)
        .and_then(|x| x.checked_add(m.checked_mul(60)?))
        .and_then(|x| x.checked_add(sec))
        .ok_or_else(bad)
}

/// Parses an integer or decimal literal (scientific notation allowed).
pub fn parse_number(text: &str) -> Result<f64, String> {
    let s = text.trim();
    if !DECIMAL_LITERAL.is_match(s) {
        return Err(format!("not a numeric literal: {text:?}"));
    }
    let v: f64 = s.parse().map_err(|e| format!("{text:?}: {e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("numeric literal out of range: {text:?}"))
    }
}

/// Whole days since 1970-01-01 for a `YYYY-MM-DD` date.
pub fn parse_date_days(text: &str) -> Result<i64, String> {
    let s = text.trim();
    if !ISO_DATE.is_match(s) {
        return Err(format!("not a YYYY-MM-DD date: {text:?}"));
    }
    let date =
        NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("{text:?}: {e}"))?;
    Ok(date.signed_duration_since(NaiveDate::default()).num_days())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.select(ndarray::Axis(0), indices),
            feature_names: self.feature_names.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub values: Vec<f64>,
    pub name: String,
}

impl TargetVector {
    pub fn select(&self, indices: &[usize]) -> TargetVector {
        TargetVector {
            values: indices.iter().map(|&i| self.values[i]).collect(),
            name: self.name.clone(),
        }
    }
}

enum Slot<'a> {
    Skip,
    Numeric,
    Date,
    Duration,
    Categorical(&'a LabelEncoder),
    Target,
}

/// Per-column encoding plan for a given table header.
pub struct RowEncoder<'a> {
    slots: Vec<(String, Slot<'a>)>,
    feature_names: Vec<String>,
    target: Option<(usize, String)>,
}

impl<'a> RowEncoder<'a> {
    pub fn new(
        header: &[String],
        schema: &Schema,
        encoders: &'a [LabelEncoder],
    ) -> Result<Self, FeatureError> {
        let mut slots = Vec::with_capacity(header.len());
        let mut feature_names = Vec::new();
        let mut target = None;
        for (j, name) in header.iter().enumerate() {
            let spec = schema
                .column(name)
                .ok_or_else(|| FeatureError::UndeclaredColumn(name.clone()))?;
            let slot = match spec.kind {
                ColumnKind::Identifier => Slot::Skip,
                ColumnKind::Numeric => Slot::Numeric,
                ColumnKind::Date => Slot::Date,
                ColumnKind::Duration => Slot::Duration,
                ColumnKind::Categorical => {
                    let key = normalize_name(&spec.name);
                    let enc = encoders
                        .iter()
                        .find(|e| normalize_name(&e.column_name) == key)
                        .ok_or_else(|| FeatureError::MissingEncoder(spec.name.clone()))?;
                    Slot::Categorical(enc)
                }
                ColumnKind::Target => {
                    target = Some((j, spec.name.clone()));
                    Slot::Target
                }
            };
            if !matches!(slot, Slot::Skip | Slot::Target) {
                feature_names.push(spec.name.clone());
            }
            slots.push((spec.name.clone(), slot));
        }
        Ok(RowEncoder {
            slots,
            feature_names,
            target,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Encodes the feature cells of one row; `row_number` is used in error messages.
    pub fn encode_features(
        &self,
        row: &[String],
        row_number: usize,
    ) -> Result<Vec<f64>, FeatureError> {
        let mut out = Vec::with_capacity(self.feature_names.len());
        for ((column, slot), cell) in self.slots.iter().zip(row) {
            let cell_err = |message: String| FeatureError::Cell {
                row: row_number,
                column: column.clone(),
                message,
            };
            let v = match slot {
                Slot::Skip | Slot::Target => continue,
                Slot::Numeric => parse_number(cell).map_err(cell_err)?,
                Slot::Date => parse_date_days(cell).map_err(cell_err)? as f64,
                Slot::Duration => {
                    parse_duration(cell).map_err(|e| cell_err(e.to_string()))? as f64
                }
                Slot::Categorical(enc) => enc.encode(cell)? as f64,
            };
            out.push(v);
        }
        Ok(out)
    }

    pub fn encode_target(&self, row: &[String], row_number: usize) -> Result<f64, FeatureError> {
        let (j, name) = self
            .target
            .as_ref()
            .ok_or_else(|| FeatureError::MissingTarget(String::new()))?;
        parse_number(&row[*j]).map_err(|message| FeatureError::Cell {
            row: row_number,
            column: name.clone(),
            message,
        })
    }
}

/// Encodes a cleaned table into features and target, columns in schema order.
pub fn encode_table(
    table: &RawTable,
    schema: &Schema,
    encoders: &[LabelEncoder],
) -> Result<(FeatureMatrix, TargetVector), FeatureError> {
    let plan = RowEncoder::new(&table.header, schema, encoders)?;
    let target_name = match &plan.target {
        Some((_, name)) => name.clone(),
        None => return Err(FeatureError::MissingTarget(schema.target().name.clone())),
    };
    let d = plan.feature_names.len();
    let mut flat = Vec::with_capacity(table.n_rows() * d);
    let mut target = Vec::with_capacity(table.n_rows());
    for (i, row) in table.rows.iter().enumerate() {
        flat.extend(plan.encode_features(row, i + 1)?);
        target.push(plan.encode_target(row, i + 1)?);
    }
    let values = Array2::from_shape_vec((table.n_rows(), d), flat).expect("row-major shape");
    Ok((
        FeatureMatrix {
            values,
            feature_names: plan.feature_names,
        },
        TargetVector {
            values: target,
            name: target_name,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ColumnSpec;

    #[test]
    fn label_codes_follow_sorted_order() {
        let enc = fit_label_encoder("c", ["A", "B", "A", "C"]).unwrap();
        let pairs: Vec<(&str, u32)> = enc.mapping.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        assert_eq!(pairs, [("A", 0), ("B", 1), ("C", 2)]);
        assert!(enc.is_well_formed());

        let single = fit_label_encoder("c", ["x", "x"]).unwrap();
        assert_eq!(single.encode("x"), Ok(0));
        assert!(matches!(
            single.encode("y"),
            Err(FeatureError::UnknownCategory { .. })
        ));
        assert!(fit_label_encoder("c", std::iter::empty()).is_err());
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("PT15M33S"), Ok(933));
        assert_eq!(parse_duration("PT1H"), Ok(3600));
        assert_eq!(parse_duration("PT0S"), Ok(0));
        assert_eq!(parse_duration("PT1H2M3S"), Ok(3723));
        assert_eq!(parse_duration("01:02:03"), Ok(3723));
        for bad in ["PT", "P1D", "15:33", "PT1M1H", "1:60:00", "abc", ""] {
            assert!(parse_duration(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn numbers_and_dates() {
        assert_eq!(parse_number("10"), Ok(10.0));
        assert_eq!(parse_number("-2.5"), Ok(-2.5));
        assert_eq!(parse_number("1e3"), Ok(1000.0));
        assert_eq!(parse_number(".5"), Ok(0.5));
        for bad in ["1,000", "inf", "NaN", "0x10", "", "1e999", "1.2.3"] {
            assert!(parse_number(bad).is_err(), "{bad}");
        }
        assert_eq!(parse_date_days("1970-01-02"), Ok(1));
        assert_eq!(parse_date_days("1970-01-01"), Ok(0));
        assert_eq!(parse_date_days("1969-12-31"), Ok(-1));
        assert!(parse_date_days("2016-02-30").is_err());
        assert!(parse_date_days("2016/02/03").is_err());
    }

    fn small_schema() -> Schema {
        use ColumnKind::*;
        Schema::new(vec![
            ColumnSpec::new("id", Identifier),
            ColumnSpec::new("category", Categorical),
            ColumnSpec::new("views", Numeric),
            ColumnSpec::new("published", Date),
            ColumnSpec::new("adview", Target),
        ])
        .unwrap()
    }

    fn one_row(cells: [&str; 5]) -> RawTable {
        RawTable {
            header: ["id", "category", "views", "published", "adview"]
                .map(String::from)
                .to_vec(),
            rows: vec![cells.map(String::from).to_vec()],
            source_name: "t".into(),
        }
    }

    #[test]
    fn encode_single_row() {
        let schema = small_schema();
        let enc = vec![fit_label_encoder("category", ["A", "B"]).unwrap()];
        let (x, y) = encode_table(&one_row(["v1", "A", "10", "1970-01-02", "5"]), &schema, &enc)
            .unwrap();
        assert_eq!(x.feature_names, ["category", "views", "published"]);
        assert_eq!(x.values.row(0).to_vec(), vec![0.0, 10.0, 1.0]);
        assert_eq!(y.values, vec![5.0]);
        assert_eq!(y.name, "adview");
    }

    #[test]
    fn encode_errors_name_row_and_column() {
        let schema = small_schema();
        let enc = vec![fit_label_encoder("category", ["A", "B"]).unwrap()];
        let err = encode_table(&one_row(["v1", "A", "ten", "1970-01-02", "5"]), &schema, &enc)
            .unwrap_err();
        assert_eq!(
            err,
            FeatureError::Cell {
                row: 1,
                column: "views".into(),
                message: "not a numeric literal: \"ten\"".into()
            }
        );
        let err = encode_table(&one_row(["v1", "Z", "1", "1970-01-02", "5"]), &schema, &enc)
            .unwrap_err();
        assert!(matches!(err, FeatureError::UnknownCategory { .. }));
        assert!(matches!(
            encode_table(&one_row(["v1", "A", "1", "1970-01-02", "5"]), &schema, &[]),
            Err(FeatureError::MissingEncoder(_))
        ));
    }

    #[test]
    fn feature_count_excludes_identifier_and_target() {
        let schema = Schema::builtin();
        let enc = vec![fit_label_encoder("category", ["A"]).unwrap()];
        let header: Vec<String> = schema.columns().iter().map(|c| c.name.clone()).collect();
        let plan = RowEncoder::new(&header, &schema, &enc).unwrap();
        assert_eq!(plan.feature_names().len(), 9 - 1 - 1);
        assert!(!plan.feature_names().iter().any(|n| n == "vidid"));
    }
}
