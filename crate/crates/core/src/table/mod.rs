//! Typed, immutable tables loaded from CSV or TSV.

mod typing;
mod value;

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use typing::{infer_cell_type, infer_header_type, CellType};
pub use value::{normalize_value, NormalizedValue};

use crate::text;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("input has no header row")]
    EmptyInput,
    #[error("header row has no columns")]
    InvalidHeader,
    #[error("malformed {format} input: {source}")]
    Csv {
        format: TableFormat,
        #[source]
        source: csv::Error,
    },
    #[error("cannot read table `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Tsv,
}

impl TableFormat {
    fn delimiter(self) -> u8 {
        match self {
            TableFormat::Csv => b',',
            TableFormat::Tsv => b'\t',
        }
    }

    /// Picks the format from a file extension; anything but `.tsv` is CSV.
    pub fn from_path(path: &Path) -> TableFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => TableFormat::Tsv,
            _ => TableFormat::Csv,
        }
    }
}

impl std::fmt::Display for TableFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TableFormat::Csv => "csv",
            TableFormat::Tsv => "tsv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub raw: String,
    pub normalized: NormalizedValue,
    #[serde(rename = "type")]
    pub ty: CellType,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Column {
    pub header: String,
    pub header_tokens: Vec<String>,
    #[serde(rename = "type")]
    pub ty: CellType,
    pub cells: Vec<Cell>,
    /// Each cell normalized under the column type; what the executor compares.
    #[serde(skip)]
    keyed: Vec<NormalizedValue>,
}

impl Column {
    /// Cell values normalized under the column's type.
    pub fn keyed_values(&self) -> &[NormalizedValue] {
        &self.keyed
    }

    /// Non-empty cells with distinct typed values, first occurrence in row
    /// order. These are the candidate WHERE values for the column.
    pub fn distinct_cells(&self) -> Vec<&Cell> {
        let mut seen = std::collections::HashSet::new();
        self.cells
            .iter()
            .zip(&self.keyed)
            .filter(|(cell, key)| !cell.raw.trim().is_empty() && seen.insert(*key))
            .map(|(cell, _)| cell)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub id: String,
    pub columns: Vec<Column>,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl Table {
    /// Builds a typed table from a header row and data rows. Short rows are
    /// padded with empty text, long rows truncated, and duplicate headers
    /// suffixed `#2`, `#3`, ...
    pub fn from_rows(
        id: impl Into<String>,
        headers: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Result<Table, TableError> {
        if headers.is_empty() {
            return Err(TableError::InvalidHeader);
        }
        let headers = dedup_headers(headers);
        let n_rows = rows.len();
        let n_cols = headers.len();
        let mut grid: Vec<Vec<String>> = vec![Vec::with_capacity(n_rows); n_cols];
        for row in rows {
            let mut row = row.into_iter();
            for col in grid.iter_mut() {
                col.push(row.next().unwrap_or_default());
            }
        }
        let columns = headers
            .into_iter()
            .zip(grid)
            .enumerate()
            .map(|(col, (header, raws))| build_column(col, header, raws))
            .collect();
        Ok(Table {
            id: id.into(),
            columns,
            n_rows,
            n_cols,
        })
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.header == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.header == name)
    }

    pub fn headers(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.header.as_str())
    }

    /// Raw cell grid, row-major.
    pub fn rows(&self) -> Vec<Vec<&str>> {
        (0..self.n_rows)
            .map(|r| self.columns.iter().map(|c| c.cells[r].raw.as_str()).collect())
            .collect()
    }

    /// CSV rendering of the raw cells, header first.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.headers()).expect("in-memory write");
        for row in self.rows() {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }
}

fn dedup_headers(headers: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    headers
        .into_iter()
        .map(|h| {
            let h = h.trim().to_string();
            let mut candidate = h.clone();
            let mut n = 1;
            while !seen.insert(candidate.to_lowercase()) {
                n += 1;
                candidate = format!("{h}#{n}");
            }
            candidate
        })
        .collect()
}

fn build_column(col: usize, header: String, raws: Vec<String>) -> Column {
    let cells: Vec<Cell> = raws
        .into_iter()
        .enumerate()
        .map(|(row, raw)| {
            let ty = infer_cell_type(&raw);
            Cell {
                normalized: normalize_value(&raw, ty),
                raw,
                ty,
                row,
                col,
            }
        })
        .collect();
    let ty = column_type(&cells);
    let keyed = cells.iter().map(|c| normalize_value(&c.raw, ty)).collect();
    Column {
        header_tokens: text::tokenize(&header),
        header,
        ty,
        cells,
        keyed,
    }
}

/// Header vote, except that columns which are at least half empty are TEXT.
fn column_type(cells: &[Cell]) -> CellType {
    let empty = cells.iter().filter(|c| c.raw.trim().is_empty()).count();
    if !cells.is_empty() && empty * 2 >= cells.len() {
        return CellType::Text;
    }
    let types: Vec<CellType> = cells.iter().map(|c| c.ty).collect();
    infer_header_type(&types)
}

/// Reads a table; the first record is the header row.
pub fn load_table(
    id: impl Into<String>,
    source: impl Read,
    format: TableFormat,
) -> Result<Table, TableError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(format.delimiter())
        .from_reader(source);
    let mut records = reader.records();
    let headers = match records.next() {
        None => return Err(TableError::EmptyInput),
        Some(r) => r.map_err(|source| TableError::Csv { format, source })?,
    };
    let headers: Vec<String> = headers.iter().map(str::to_string).collect();
    if headers.iter().all(|h| h.trim().is_empty()) && headers.len() <= 1 {
        return Err(TableError::InvalidHeader);
    }
    let rows = records
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|source| TableError::Csv { format, source })
        })
        .collect::<Result<Vec<Vec<String>>, _>>()?;
    Table::from_rows(id, headers, rows)
}

/// Loads a table file, using its stem as the table id.
pub fn load_table_file(path: &Path) -> Result<Table, TableError> {
    let file = std::fs::File::open(path).map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_table(id, std::io::BufReader::new(file), TableFormat::from_path(path))
}

/// The bundled Olympics host-city table.
pub fn olympics_fixture() -> Table {
    load_table(
        "olympics",
        include_str!("../../fixtures/olympics.csv").as_bytes(),
        TableFormat::Csv,
    )
    .expect("bundled fixture is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_small_csv() {
        let t = load_table("t", "Year,City\n2008,Beijing".as_bytes(), TableFormat::Csv).unwrap();
        assert_eq!((t.n_cols, t.n_rows), (2, 1));
        assert_eq!(t.columns[0].ty, CellType::Year);
        assert_eq!(t.columns[1].ty, CellType::Text);
    }

    #[test]
    fn header_only_gives_empty_text_column() {
        let t = load_table("t", "A\n".as_bytes(), TableFormat::Csv).unwrap();
        assert_eq!((t.n_cols, t.n_rows), (1, 0));
        assert_eq!(t.columns[0].ty, CellType::Text);
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(
            load_table("t", "".as_bytes(), TableFormat::Csv),
            Err(TableError::EmptyInput)
        ));
    }

    #[test]
    fn blank_header_is_invalid() {
        assert!(matches!(
            load_table("t", "\n\n".as_bytes(), TableFormat::Csv),
            Err(TableError::EmptyInput) | Err(TableError::InvalidHeader)
        ));
        assert!(matches!(
            Table::from_rows("t", vec![], vec![]),
            Err(TableError::InvalidHeader)
        ));
    }

    #[test]
    fn ragged_rows_are_padded() {
        let t = load_table("t", "a,b,c\n1\n1,2,3,4\n".as_bytes(), TableFormat::Csv).unwrap();
        assert_eq!(t.n_rows, 2);
        assert!(t.columns.iter().all(|c| c.cells.len() == 2));
        assert_eq!(t.columns[2].cells[0].raw, "");
        assert_eq!(t.columns[2].cells[1].raw, "3");
    }

    #[test]
    fn duplicate_headers_get_suffixes() {
        let t = load_table("t", "Name,name,NAME\nx,y,z".as_bytes(), TableFormat::Csv).unwrap();
        let headers: Vec<_> = t.headers().collect();
        assert_eq!(headers, ["Name", "name#2", "NAME#3"]);
    }

    #[test]
    fn tsv_with_quotes() {
        let t = load_table(
            "t",
            "Host City\tNote\n\"Rio, de\tJaneiro\"\tok\n".as_bytes(),
            TableFormat::Tsv,
        )
        .unwrap();
        assert_eq!(t.columns[0].cells[0].raw, "Rio, de\tJaneiro");
        assert_eq!(t.columns[0].header_tokens, ["host", "city"]);
    }

    #[test]
    fn sparse_columns_are_text() {
        let t = load_table("t", "n,m\n1,a\n,b\n,c\n2,d\n".as_bytes(), TableFormat::Csv).unwrap();
        assert_eq!(t.columns[0].ty, CellType::Text);
    }

    #[test]
    fn fixture_types() {
        let t = olympics_fixture();
        let types: Vec<_> = t.columns.iter().map(|c| c.ty).collect();
        assert_eq!(
            types,
            [CellType::Year, CellType::Text, CellType::Country, CellType::Number]
        );
    }

    #[test]
    fn loading_is_deterministic_and_votes_are_consistent() {
        let src = "Year,City,Medals\n2008,Beijing,3 kg\n2012,London,\n1,true,4th\n";
        let a = load_table("t", src.as_bytes(), TableFormat::Csv).unwrap();
        let b = load_table("t", src.as_bytes(), TableFormat::Csv).unwrap();
        assert_eq!(a, b);
        for c in &a.columns {
            let types: Vec<_> = c.cells.iter().map(|x| x.ty).collect();
            let empty = c.cells.iter().filter(|x| x.raw.is_empty()).count();
            if empty * 2 < c.cells.len() {
                assert_eq!(c.ty, infer_header_type(&types));
            }
        }
    }
}
