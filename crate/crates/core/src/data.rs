//! File formats: conversation and label JSON lines, model files, and the
//! SequentialQA TSV layout.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lf::{Action, LogicalForm};
use crate::scorer::{ModelWeights, ScorerError};
use crate::search::{LabelResult, QaTurn};
use crate::table::{load_table_file, Table, TableError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Json { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("table file not found: {0}")]
    MissingTableFile(PathBuf),
    #[error("{path}:{line}: malformed row: {message}")]
    MalformedRow { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: ScorerError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One conversation over one table. `tableFile` is resolved relative to the
/// file the conversation was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Conversation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub table_file: String,
    pub turns: Vec<QaTurn>,
}

/// Gold forms for one conversation, kept apart from the answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GoldRecord {
    pub table_file: String,
    pub gold_lfs: Vec<LogicalForm>,
    pub actions: Vec<Vec<Action>>,
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DataError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| DataError::Json {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Resolves `table_file` against the directory holding `source`.
pub fn resolve_table_path(source: &Path, table_file: &str) -> PathBuf {
    let p = Path::new(table_file);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    source.parent().unwrap_or(Path::new(".")).join(p)
}

/// Reads conversations and rewrites each `tableFile` as a resolved path.
pub fn read_conversations(path: &Path) -> Result<Vec<Conversation>, DataError> {
    let mut convs: Vec<Conversation> = read_jsonl(path)?;
    for c in &mut convs {
        c.table_file = resolve_table_path(path, &c.table_file).to_string_lossy().into_owned();
    }
    Ok(convs)
}

/// Loads every distinct table referenced by `files`, keyed by the file string.
pub fn load_tables<'a>(files: impl IntoIterator<Item = &'a str>) -> Result<HashMap<String, Table>, DataError> {
    let mut out = HashMap::new();
    for f in files {
        if out.contains_key(f) {
            continue;
        }
        let path = Path::new(f);
        if !path.exists() {
            return Err(DataError::MissingTableFile(path.to_path_buf()));
        }
        let mut table = load_table_file(path)?;
        table.id = f.to_string();
        out.insert(f.to_string(), table);
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelResult>, DataError> {
    read_jsonl(path)
}

pub fn save_model(path: &Path, weights: &ModelWeights) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, weights.to_json()).map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<ModelWeights, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    ModelWeights::from_json(&text).map_err(|source| DataError::Model {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses an answer cell: either a Python-style list of quoted strings
/// (`['a', "b"]`) or a bare value.
fn parse_answer_list(s: &str) -> Vec<String> {
    let t = s.trim();
    let Some(inner) = t.strip_prefix('[').and_then(|x| x.strip_suffix(']')) else {
        return if t.is_empty() { Vec::new() } else { vec![t.to_string()] };
    };
    let mut out = Vec::new();
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\'' && c != '"' {
            continue;
        }
        let mut item = String::new();
        while let Some(d) = chars.next() {
            match d {
                '\\' => {
                    if let Some(e) = chars.next() {
                        item.push(e);
                    }
                }
                _ if d == c => break,
                _ => item.push(d),
            }
        }
        out.push(item);
    }
    out
}

/// Groups SequentialQA rows into conversations keyed by (id, annotator),
/// ordered by position. Columns are located by header name.
pub fn load_sqa_tsv(path: &Path) -> Result<Vec<Conversation>, DataError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .from_reader(file);
    let malformed = |line: usize, message: String| DataError::MalformedRow {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| malformed(1, format!("missing column `{name}`")))
    };
    let (id, annotator, position, question, table_file, answer) = (
        col("id")?,
        col("annotator")?,
        col("position")?,
        col("question")?,
        col("table_file")?,
        col("answer_text")?,
    );

    // (id, annotator) -> (table file, positioned turns)
    type Groups = BTreeMap<(String, String), (String, Vec<(usize, QaTurn)>)>;
    let mut groups: Groups = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| malformed(line, e.to_string()))?;
        let field = |k: usize| {
            record
                .get(k)
                .map(str::to_string)
                .ok_or_else(|| malformed(line, format!("expected at least {} fields", k + 1)))
        };
        let pos: usize = field(position)?
            .trim()
            .parse()
            .map_err(|_| malformed(line, "position is not an integer".into()))?;
        let table = resolve_table_path(path, field(table_file)?.trim());
        if !table.exists() {
            return Err(DataError::MissingTableFile(table));
        }
        let entry = groups
            .entry((field(id)?, field(annotator)?))
            .or_insert_with(|| (table.to_string_lossy().into_owned(), Vec::new()));
        entry.1.push((
            pos,
            QaTurn {
                question: field(question)?,
                answers: parse_answer_list(&field(answer)?),
            },
        ));
    }
    Ok(groups
        .into_iter()
        .map(|((id, annotator), (table_file, mut turns))| {
            turns.sort_by_key(|(p, _)| *p);
            Conversation {
                id: Some(format!("{id}/{annotator}")),
                table_file,
                turns: turns.into_iter().map(|(_, t)| t).collect(),
            }
        })
        .collect())
}
