//! Record-by-metric score table, persisted as CSV.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Value(f64),
    Missing(String),
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            Cell::Missing(_) => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("score table has no `id` column")]
    NoIdColumn,
}

/// Rows are record ids, columns are metric or configuration names. Row and
/// column order is insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreMatrix {
    rows: Vec<String>,
    columns: Vec<String>,
    cells: BTreeMap<(usize, usize), Cell>,
    row_index: BTreeMap<String, usize>,
    column_index: BTreeMap<String, usize>,
}

impl ScoreMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rows<I, S>(rows: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut m = Self::new();
        for r in rows {
            m.add_row(r);
        }
        m
    }

    pub fn add_row(&mut self, id: impl Into<String>) -> usize {
        let id = id.into();
        if let Some(&i) = self.row_index.get(&id) {
            return i;
        }
        self.rows.push(id.clone());
        self.row_index.insert(id, self.rows.len() - 1);
        self.rows.len() - 1
    }

    pub fn add_column(&mut self, name: impl Into<String>) -> usize {
        let name = name.into();
        if let Some(&i) = self.column_index.get(&name) {
            return i;
        }
        self.columns.push(name.clone());
        self.column_index.insert(name, self.columns.len() - 1);
        self.columns.len() - 1
    }

    pub fn set(&mut self, column: &str, row: &str, cell: Cell) {
        let c = self.add_column(column);
        let r = self.add_row(row);
        self.cells.insert((c, r), cell);
    }

    pub fn get(&self, column: &str, row: &str) -> Option<&Cell> {
        let c = self.column_index.get(column)?;
        let r = self.row_index.get(row)?;
        self.cells.get(&(*c, *r))
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    /// Present values of one column keyed by record id.
    pub fn column_values(&self, column: &str) -> BTreeMap<String, f64> {
        let Some(&c) = self.column_index.get(column) else {
            return BTreeMap::new();
        };
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(r, id)| {
                self.cells
                    .get(&(c, r))
                    .and_then(Cell::value)
                    .map(|v| (id.clone(), v))
            })
            .collect()
    }

    /// `(column, row, reason)` for every missing cell, in table order.
    pub fn missing(&self) -> Vec<(&str, &str, &str)> {
        let mut out = Vec::new();
        for (c, col) in self.columns.iter().enumerate() {
            for (r, row) in self.rows.iter().enumerate() {
                match self.cells.get(&(c, r)) {
                    Some(Cell::Missing(reason)) => out.push((col.as_str(), row.as_str(), reason.as_str())),
                    None => out.push((col.as_str(), row.as_str(), "not computed")),
                    Some(Cell::Value(_)) => {}
                }
            }
        }
        out
    }

    /// Column-wise merge; `other` wins on conflicting cells.
    pub fn merge(&mut self, other: &ScoreMatrix) {
        for row in &other.rows {
            self.add_row(row.clone());
        }
        for col in &other.columns {
            self.add_column(col.clone());
            for row in &other.rows {
                if let Some(cell) = other.get(col, row) {
                    self.set(col, row, cell.clone());
                }
            }
        }
    }

    /// Keeps only the listed rows, in their current order.
    pub fn restrict_rows(&self, keep: &std::collections::BTreeSet<String>) -> ScoreMatrix {
        let mut out = ScoreMatrix::new();
        for col in &self.columns {
            out.add_column(col.clone());
        }
        for row in self.rows.iter().filter(|r| keep.contains(*r)) {
            out.add_row(row.clone());
            for col in &self.columns {
                if let Some(cell) = self.get(col, row) {
                    out.set(col, row, cell.clone());
                }
            }
        }
        out
    }

    /// Header `id,<columns...>`; missing cells are empty fields.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), MatrixError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string()];
        header.extend(self.columns.iter().cloned());
        out.write_record(&header)?;
        for (r, id) in self.rows.iter().enumerate() {
            let mut record = vec![id.clone()];
            for c in 0..self.columns.len() {
                record.push(match self.cells.get(&(c, r)) {
                    Some(Cell::Value(v)) => format_score(*v),
                    _ => String::new(),
                });
            }
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<(), MatrixError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        crate::cache::write_atomic(path.as_ref(), &buf)?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<Self, MatrixError> {
        let mut reader = csv::Reader::from_reader(r);
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("id") {
            return Err(MatrixError::NoIdColumn);
        }
        let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut m = ScoreMatrix::new();
        for c in &columns {
            m.add_column(c.clone());
        }
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default().to_string();
            m.add_row(id.clone());
            for (c, field) in columns.iter().zip(rec.iter().skip(1)) {
                let cell = if field.is_empty() {
                    Cell::Missing("empty in input".into())
                } else {
                    Cell::Value(field.parse().map_err(|_| MatrixError::BadNumber {
                        row: i + 1,
                        column: c.clone(),
                        value: field.to_string(),
                    })?)
                };
                m.set(c, &id, cell);
            }
        }
        Ok(m)
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self, MatrixError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_score(v: f64) -> String {
    format!("{v}")
}
