//! Typed mixed datasets: per-column variable kinds, schema files and
//! delimited data ingestion.
//!
//! Columns are always held in *logical* order: continuous columns first,
//! then the discrete ones, each group keeping its file order. The
//! permutation back to file order is kept on the [`Schema`].

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identifiability::{check_identifiability, Verdict};

/// Kind of an observed variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    /// Counts in {0, 1, 2, ...}.
    Integer,
    /// Ordered levels coded 1..=levels. Binary variables use `levels = 2`.
    Ordinal { levels: u32 },
}

impl VariableKind {
    pub fn is_continuous(self) -> bool {
        matches!(self, VariableKind::Continuous)
    }

    pub fn is_discrete(self) -> bool {
        !self.is_continuous()
    }
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariableKind::Continuous => write!(f, "continuous"),
            VariableKind::Integer => write!(f, "integer"),
            VariableKind::Ordinal { levels } => write!(f, "ordinal:{levels}"),
        }
    }
}

impl FromStr for VariableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "continuous" => return Ok(VariableKind::Continuous),
            "integer" => return Ok(VariableKind::Integer),
            "binary" => return Ok(VariableKind::Ordinal { levels: 2 }),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("ordinal:") {
            let levels: u32 = rest
                .trim()
                .parse()
                .map_err(|_| Error::Schema(format!("bad ordinal level count '{rest}'")))?;
            if levels < 2 {
                return Err(Error::Schema(format!("ordinal needs at least 2 levels, got {levels}")));
            }
            return Ok(VariableKind::Ordinal { levels });
        }
        Err(Error::Schema(format!("unknown variable kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: VariableKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    /// Logical order: continuous first.
    columns: Vec<Column>,
    n_continuous: usize,
    /// `file_index[j]` is the position in the source file of logical column `j`.
    file_index: Vec<usize>,
}

impl Schema {
    /// Builds a schema from columns given in file order.
    pub fn new(file_columns: Vec<Column>) -> Result<Self> {
        if file_columns.is_empty() {
            return Err(Error::Schema("schema declares no columns".into()));
        }
        let mut seen = HashMap::new();
        for (i, c) in file_columns.iter().enumerate() {
            if seen.insert(c.name.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate column '{}'", c.name)));
            }
        }
        let mut order: Vec<usize> = (0..file_columns.len())
            .filter(|&i| file_columns[i].kind.is_continuous())
            .collect();
        let n_continuous = order.len();
        order.extend((0..file_columns.len()).filter(|&i| file_columns[i].kind.is_discrete()));
        let columns = order.iter().map(|&i| file_columns[i].clone()).collect();
        Ok(Schema {
            columns,
            n_continuous,
            file_index: order,
        })
    }

    /// Schema whose file order already is the logical order.
    pub fn from_kinds(kinds: &[(&str, VariableKind)]) -> Result<Self> {
        Schema::new(
            kinds
                .iter()
                .map(|(n, k)| Column {
                    name: n.to_string(),
                    kind: *k,
                })
                .collect(),
        )
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn kind(&self, j: usize) -> VariableKind {
        self.columns[j].kind
    }

    /// Number of continuous variables (c).
    pub fn n_continuous(&self) -> usize {
        self.n_continuous
    }

    /// Number of discrete variables (d).
    pub fn n_discrete(&self) -> usize {
        self.columns.len() - self.n_continuous
    }

    /// Total number of variables (e = c + d).
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn file_index(&self) -> &[usize] {
        &self.file_index
    }

    /// Parses the `name = kind` schema format. Blank lines and `#` comments
    /// are ignored. Returned columns are in declaration order.
    pub fn parse_declarations(text: &str) -> Result<Vec<Column>> {
        let mut out = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, kind) = line
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("line {}: expected '<name> = <kind>'", lineno + 1)))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::Schema(format!("line {}: empty column name", lineno + 1)));
            }
            out.push(Column {
                name: name.to_string(),
                kind: kind.parse()?,
            });
        }
        Ok(out)
    }

    /// Renders the schema in logical order.
    pub fn to_schema_text(&self) -> String {
        let mut s = String::new();
        for c in &self.columns {
            s.push_str(&format!("{} = {}\n", c.name, c.kind));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_schema_text()).map_err(|e| Error::io(path, e))
    }
}

/// An immutable n × e table of mixed values in logical column order.
///
/// Discrete cells hold exact non-negative integers stored as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDataset {
    schema: Schema,
    values: Vec<f64>,
    n: usize,
}

impl MixedDataset {
    /// Validates and wraps row-major values already in logical order.
    pub fn from_rows(schema: Schema, rows: Vec<Vec<f64>>) -> Result<Self> {
        let e = schema.len();
        let mut values = Vec::with_capacity(rows.len() * e);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != e {
                return Err(Error::Data {
                    row: i + 1,
                    column: String::new(),
                    message: format!("expected {e} values, got {}", row.len()),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                validate_cell(v, schema.kind(j)).map_err(|message| Error::Data {
                    row: i + 1,
                    column: schema.columns()[j].name.clone(),
                    message,
                })?;
            }
            values.extend_from_slice(row);
        }
        if rows.is_empty() {
            return Err(Error::Data {
                row: 0,
                column: String::new(),
                message: "dataset has no rows".into(),
            });
        }
        if let Verdict::NotIdentifiable(reason) = check_identifiability(&schema).verdict {
            return Err(Error::NotIdentifiable(reason));
        }
        Ok(MixedDataset {
            n: rows.len(),
            schema,
            values,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let e = self.schema.len();
        &self.values[i * e..(i + 1) * e]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.schema.len() + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks(self.schema.len())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i, j)).collect()
    }

    /// Dataset whose rows are the given subset, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        MixedDataset::from_rows(self.schema.clone(), idx.iter().map(|&i| self.row(i).to_vec()).collect())
    }

    /// Writes the data with columns in their original file order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv_string().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// The CSV text written by [`MixedDataset::write_csv`].
    pub fn to_csv_string(&self) -> String {
        let cols = self.schema.columns();
        let mut order: Vec<usize> = (0..cols.len()).collect();
        order.sort_by_key(|&j| self.schema.file_index[j]);
        let mut out = String::new();
        let names: Vec<&str> = order.iter().map(|&j| cols[j].name.as_str()).collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for row in self.rows() {
            let cells: Vec<String> = order
                .iter()
                .map(|&j| match cols[j].kind {
                    VariableKind::Continuous => format!("{}", row[j]),
                    _ => format!("{}", row[j] as u64),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn validate_cell(v: f64, kind: VariableKind) -> std::result::Result<(), String> {
    if !v.is_finite() {
        return Err("non-finite value".into());
    }
    match kind {
        VariableKind::Continuous => Ok(()),
        VariableKind::Integer => {
            if v < 0.0 {
                Err(format!("negative integer value {v}"))
            } else if v.fract() != 0.0 {
                Err(format!("non-integer value {v} in integer column"))
            } else {
                Ok(())
            }
        }
        VariableKind::Ordinal { levels } => {
            if v.fract() != 0.0 || v < 1.0 || v > levels as f64 {
                Err(format!("ordinal out of range: {v} not in 1..={levels}"))
            } else {
                Ok(())
            }
        }
    }
}

/// Picks the most frequent of comma, semicolon and tab in the header line.
pub fn detect_delimiter(header: &str) -> u8 {
    [b',', b';', b'\t']
        .into_iter()
        .max_by_key(|&d| (header.bytes().filter(|&b| b == d).count(), d == b','))
        .unwrap_or(b',')
}

/// Loads a delimited data file against a `name = kind` schema file.
pub fn load_dataset(data_path: &Path, schema_path: &Path, delimiter: Option<u8>) -> Result<MixedDataset> {
    let schema_text = fs::read_to_string(schema_path).map_err(|e| Error::io(schema_path, e))?;
    let data_text = fs::read_to_string(data_path).map_err(|e| Error::io(data_path, e))?;
    parse_dataset(&data_text, &schema_text, delimiter)
}

/// In-memory variant of [`load_dataset`].
pub fn parse_dataset(data_text: &str, schema_text: &str, delimiter: Option<u8>) -> Result<MixedDataset> {
    let declared = Schema::parse_declarations(schema_text)?;
    let kinds: HashMap<&str, VariableKind> = declared.iter().map(|c| (c.name.as_str(), c.kind)).collect();

    let header_line = data_text.lines().next().unwrap_or("");
    let delim = delimiter.unwrap_or_else(|| detect_delimiter(header_line));
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(data_text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    for c in &declared {
        if !header.iter().any(|h| h == &c.name) {
            return Err(Error::Schema(format!("unknown column name '{}' in schema", c.name)));
        }
    }
    let mut file_columns = Vec::with_capacity(header.len());
    for h in &header {
        let kind = kinds
            .get(h.as_str())
            .ok_or_else(|| Error::Schema(format!("column '{h}' has no declared kind")))?;
        file_columns.push(Column {
            name: h.clone(),
            kind: *kind,
        });
    }
    let schema = Schema::new(file_columns)?;

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row_no = i + 1;
        if rec.len() != header.len() {
            return Err(Error::Data {
                row: row_no,
                column: String::new(),
                message: format!("missing cell: expected {} cells, got {}", header.len(), rec.len()),
            });
        }
        let mut row = Vec::with_capacity(header.len());
        for (j, &fi) in schema.file_index().iter().enumerate() {
            let cell = &rec[fi];
            let name = &schema.columns()[j].name;
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell == "?" {
                return Err(Error::Data {
                    row: row_no,
                    column: name.clone(),
                    message: "missing cell".into(),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Data {
                row: row_no,
                column: name.clone(),
                message: format!("non-numeric cell '{cell}'"),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    MixedDataset::from_rows(schema, rows)
}

/// Per-column sample summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: VariableKind,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    /// Level frequencies for ordinal columns (index 0 is level 1).
    pub level_counts: Option<Vec<usize>>,
    /// Zero variance.
    pub degenerate: bool,
}

pub fn summarize(data: &MixedDataset) -> Result<Vec<ColumnSummary>> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "variance unavailable: need at least 2 rows, got {n}"
        )));
    }
    let mut out = Vec::with_capacity(data.schema().len());
    for (j, col) in data.schema().columns().iter().enumerate() {
        let xs = data.column(j);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let variance = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let level_counts = match col.kind {
            VariableKind::Ordinal { levels } => {
                let mut counts = vec![0usize; levels as usize];
                for &x in &xs {
                    counts[x as usize - 1] += 1;
                }
                Some(counts)
            }
            _ => None,
        };
        out.push(ColumnSummary {
            name: col.name.clone(),
            kind: col.kind,
            mean,
            variance,
            min,
            max,
            level_counts,
            degenerate: variance == 0.0,
        });
    }
    Ok(out)
}
