//! Execution of complete and partial logical forms against a table.

use std::collections::BTreeMap;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lf::{Action, Condition, LogicalForm, Operator};
use crate::table::{normalize_value, CellType, Column, NormalizedValue, Table};
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("copy action used without a previous logical form")]
    MissingPrevious,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenotationValue {
    pub row: usize,
    pub text: String,
}

/// Answer cells of one column, in table row order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Denotation {
    pub column: String,
    pub values: Vec<DenotationValue>,
}

impl Denotation {
    pub fn texts(&self) -> Vec<&str> {
        self.values.iter().map(|v| v.text.as_str()).collect()
    }

    pub fn rows(&self) -> Vec<usize> {
        self.values.iter().map(|v| v.row).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Overlap,
    Disjoint,
}

/// How answer lists are compared: duplicates count (multiset) or not (set).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerSemantics {
    #[default]
    Multiset,
    Set,
}

fn column<'t>(table: &'t Table, name: &str) -> Result<&'t Column, ExecError> {
    table
        .column(name)
        .ok_or_else(|| ExecError::UnknownColumn(name.to_string()))
}

/// Numeric view of a cell for argmin/argmax; cells that are not numbers
/// under any reading are skipped.
fn numeric_view(column: &Column, row: usize) -> Option<Decimal> {
    column.keyed_values()[row].as_number().or_else(|| {
        normalize_value(&column.cells[row].raw, CellType::Unit).as_number()
    })
}

fn has_typed_values(ty: CellType) -> bool {
    ty.is_numeric() || matches!(ty, CellType::Date | CellType::Time | CellType::Boolean)
}

fn compare(cell: &NormalizedValue, op: Operator, target: &NormalizedValue) -> bool {
    use std::cmp::Ordering::*;
    match op {
        Operator::Eq => cell.typed_eq(target) == Some(true),
        Operator::Neq => cell.typed_eq(target) == Some(false),
        Operator::Gt => cell.typed_cmp(target) == Some(Greater),
        Operator::Geq => matches!(cell.typed_cmp(target), Some(Greater | Equal)),
        Operator::Lt => cell.typed_cmp(target) == Some(Less),
        Operator::Leq => matches!(cell.typed_cmp(target), Some(Less | Equal)),
        Operator::Argmin | Operator::Argmax => unreachable!("extremum handled separately"),
    }
}

/// Rows (ascending) satisfying one condition.
pub fn eval_condition(table: &Table, cond: &Condition) -> Result<Vec<usize>, ExecError> {
    let col = column(table, &cond.column)?;
    match (cond.op, &cond.value) {
        (Operator::Argmin | Operator::Argmax, _) => {
            let nums: Vec<(usize, Decimal)> = (0..table.n_rows)
                .filter_map(|r| numeric_view(col, r).map(|n| (r, n)))
                .collect();
            let best = if cond.op == Operator::Argmax {
                nums.iter().map(|(_, n)| *n).max()
            } else {
                nums.iter().map(|(_, n)| *n).min()
            };
            Ok(match best {
                None => Vec::new(),
                Some(b) => nums.into_iter().filter(|(_, n)| *n == b).map(|(r, _)| r).collect(),
            })
        }
        (_, None) => Ok(Vec::new()),
        (op, Some(raw)) => {
            let target = normalize_value(raw, col.ty);
            // A value that does not coerce to the column's type matches nothing.
            if target.is_text() && has_typed_values(col.ty) {
                return Ok(Vec::new());
            }
            Ok(col
                .keyed_values()
                .iter()
                .enumerate()
                .filter(|(_, v)| compare(v, op, &target))
                .map(|(r, _)| r)
                .collect())
        }
    }
}

fn project(table: &Table, select: &str, rows: Option<Vec<usize>>) -> Result<Denotation, ExecError> {
    let col = column(table, select)?;
    let rows = rows.unwrap_or_else(|| (0..table.n_rows).collect());
    Ok(Denotation {
        column: col.header.clone(),
        values: rows
            .into_iter()
            .map(|row| DenotationValue {
                row,
                text: col.cells[row].raw.clone(),
            })
            .collect(),
    })
}

fn filter_rows(table: &Table, conditions: &[Condition]) -> Result<Option<Vec<usize>>, ExecError> {
    let mut rows: Option<Vec<usize>> = None;
    for cond in conditions {
        let matched = eval_condition(table, cond)?;
        rows = Some(match rows {
            None => matched,
            Some(prev) => prev.into_iter().filter(|r| matched.binary_search(r).is_ok()).collect(),
        });
    }
    Ok(rows)
}

pub fn execute(lf: &LogicalForm, table: &Table) -> Result<Denotation, ExecError> {
    column(table, &lf.select_column)?;
    let rows = filter_rows(table, &lf.conditions)?;
    project(table, &lf.select_column, rows)
}

/// Executes an action prefix, dropping any unfinished condition. Returns
/// `None` while no SELECT column is known yet (empty prefix, or `[A6]`).
pub fn execute_partial(
    prefix: &[Action],
    table: &Table,
    previous: Option<&LogicalForm>,
) -> Result<Option<Denotation>, ExecError> {
    let mut select: Option<String> = None;
    let mut conditions: Vec<Condition> = Vec::new();
    let mut where_col: Option<&str> = None;
    let mut where_op: Option<Operator> = None;
    for action in prefix {
        match action {
            Action::SelectCol(c) => select = Some(c.clone()),
            Action::WhereCol(c) => where_col = Some(c),
            Action::WhereOp(op) => {
                where_op = Some(*op);
                if !op.takes_value() {
                    if let Some(c) = where_col.take() {
                        conditions.push(Condition::extremum(c, *op));
                    }
                }
            }
            Action::WhereVal(v) => {
                if let (Some(c), Some(op)) = (where_col.take(), where_op.take()) {
                    conditions.push(Condition::compare(c, op, v.clone()));
                }
            }
            Action::CopySelect => {
                select = Some(previous.ok_or(ExecError::MissingPrevious)?.select_column.clone())
            }
            Action::CopyWhere => {
                conditions = previous.ok_or(ExecError::MissingPrevious)?.conditions.clone()
            }
            Action::CopyAll => {
                let prev = previous.ok_or(ExecError::MissingPrevious)?;
                select = Some(prev.select_column.clone());
                conditions = prev.conditions.clone();
            }
        }
    }
    match select {
        None => Ok(None),
        Some(sel) => {
            column(table, &sel)?;
            let rows = filter_rows(table, &conditions)?;
            project(table, &sel, rows).map(Some)
        }
    }
}

/// Comparison key for an answer string: numbers in canonical decimal form,
/// everything else casefolded.
pub fn answer_key(s: &str) -> String {
    let trimmed = s.trim();
    match normalize_value(trimmed, CellType::Number) {
        NormalizedValue::Number(d) => d.to_string(),
        _ => text::casefold(trimmed),
    }
}

fn counts<'a>(items: impl Iterator<Item = &'a str>, semantics: AnswerSemantics) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in items {
        let e = m.entry(answer_key(s)).or_insert(0);
        *e = match semantics {
            AnswerSemantics::Multiset => *e + 1,
            AnswerSemantics::Set => 1,
        };
    }
    m
}

/// Compares answer texts to gold answers after normalization.
pub fn match_answers<S: AsRef<str>>(
    predicted: &[&str],
    gold: &[S],
    semantics: AnswerSemantics,
) -> MatchKind {
    let p = counts(predicted.iter().copied(), semantics);
    let g = counts(gold.iter().map(AsRef::as_ref), semantics);
    if p == g {
        MatchKind::Exact
    } else if p.keys().any(|k| g.contains_key(k)) {
        MatchKind::Overlap
    } else {
        MatchKind::Disjoint
    }
}

/// Multiset comparison of a denotation against gold answer texts.
pub fn denotation_matches<S: AsRef<str>>(d: &Denotation, gold: &[S]) -> MatchKind {
    match_answers(&d.texts(), gold, AnswerSemantics::Multiset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lf::parse_lf;
    use crate::table::{load_table, olympics_fixture, TableFormat};

    fn rows_of(table: &Table, lf: &str) -> Vec<usize> {
        let lf = parse_lf(lf).unwrap();
        eval_condition(table, &lf.conditions[0]).unwrap()
    }

    #[test]
    fn equality_on_years() {
        let t = olympics_fixture();
        assert_eq!(rows_of(&t, "SELECT City WHERE Year = 2008"), vec![1]);
    }

    #[test]
    fn argmax_keeps_ties() {
        let t = olympics_fixture();
        assert_eq!(rows_of(&t, "SELECT City WHERE Nations argmax"), vec![1, 2]);
        assert_eq!(rows_of(&t, "SELECT City WHERE Nations argmin"), vec![0]);
    }

    #[test]
    fn ordering_on_text_matches_nothing() {
        let t = olympics_fixture();
        assert!(rows_of(&t, "SELECT City WHERE City > m").is_empty());
        assert!(rows_of(&t, "SELECT City WHERE Country <= china").is_empty());
        assert_eq!(rows_of(&t, "SELECT City WHERE City != athens"), vec![1, 2]);
    }

    #[test]
    fn failed_coercion_matches_nothing() {
        let t = olympics_fixture();
        assert!(rows_of(&t, "SELECT City WHERE Year != soon").is_empty());
        assert!(rows_of(&t, "SELECT City WHERE Nations = many").is_empty());
    }

    #[test]
    fn numeric_ordering() {
        let t = olympics_fixture();
        assert_eq!(rows_of(&t, "SELECT City WHERE Year > 2004"), vec![1, 2]);
        assert_eq!(rows_of(&t, "SELECT City WHERE Nations <= 201"), vec![0]);
        assert_eq!(rows_of(&t, "SELECT City WHERE Nations >= 204.0"), vec![1, 2]);
    }

    #[test]
    fn execute_examples() {
        let t = olympics_fixture();
        let d = execute(&parse_lf("SELECT City WHERE Year = 2008").unwrap(), &t).unwrap();
        assert_eq!(d.texts(), ["Beijing"]);
        let d = execute(&parse_lf("SELECT City WHERE Country = China").unwrap(), &t).unwrap();
        assert_eq!(d.texts(), ["Beijing"]);
        let empty = load_table("e", "City\n".as_bytes(), TableFormat::Csv).unwrap();
        assert!(execute(&parse_lf("SELECT City").unwrap(), &empty).unwrap().is_empty());
        assert_eq!(
            execute(&parse_lf("SELECT Mayor").unwrap(), &t),
            Err(ExecError::UnknownColumn("Mayor".into()))
        );
        assert_eq!(
            execute(&parse_lf("SELECT City WHERE Mayor = x").unwrap(), &t),
            Err(ExecError::UnknownColumn("Mayor".into()))
        );
    }

    #[test]
    fn two_conditions_intersect() {
        let t = olympics_fixture();
        let d = execute(&parse_lf("SELECT City WHERE Nations = 204 AND Year < 2010").unwrap(), &t).unwrap();
        assert_eq!(d.texts(), ["Beijing"]);
    }

    #[test]
    fn partial_execution() {
        let t = olympics_fixture();
        let d = execute_partial(&[Action::SelectCol("City".into())], &t, None).unwrap().unwrap();
        assert_eq!(d.texts(), ["Athens", "Beijing", "London"]);
        let d = execute_partial(
            &[Action::SelectCol("City".into()), Action::WhereCol("Year".into())],
            &t,
            None,
        )
        .unwrap()
        .unwrap();
        assert_eq!(d.texts(), ["Athens", "Beijing", "London"]);
        let prev = parse_lf("SELECT City WHERE Year = 2008").unwrap();
        let d = execute_partial(
            &[Action::CopyWhere, Action::SelectCol("Nations".into())],
            &t,
            Some(&prev),
        )
        .unwrap()
        .unwrap();
        assert_eq!(d.texts(), ["204"]);
        assert_eq!(execute_partial(&[Action::CopyWhere], &t, Some(&prev)), Ok(None));
        assert_eq!(
            execute_partial(&[Action::CopyAll], &t, None),
            Err(ExecError::MissingPrevious)
        );
    }

    #[test]
    fn matching() {
        let d = |xs: &[&str]| Denotation {
            column: "c".into(),
            values: xs
                .iter()
                .enumerate()
                .map(|(row, t)| DenotationValue { row, text: t.to_string() })
                .collect(),
        };
        assert_eq!(denotation_matches(&d(&["Beijing"]), &["beijing"]), MatchKind::Exact);
        assert_eq!(denotation_matches(&d(&["Athens", "Beijing"]), &["Beijing"]), MatchKind::Overlap);
        assert_eq!(denotation_matches(&d(&[]), &["Beijing"]), MatchKind::Disjoint);
        assert_eq!(denotation_matches(&d(&["1,234"]), &["1234"]), MatchKind::Exact);
        assert_eq!(denotation_matches(&d(&["a", "a"]), &["a"]), MatchKind::Overlap);
        assert_eq!(
            match_answers(&["a", "a"], &["a"], AnswerSemantics::Set),
            MatchKind::Exact
        );
    }
}
