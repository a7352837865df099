//! Seeded generator of typed tables and scripted conversations with gold
//! forms, used as a stand-in training and evaluation corpus.
//!
//! Every cell text is unique within its table, so any form whose answer
//! matches a gold answer exactly also selects the gold rows from the gold
//! column. Copying from whichever label survives first therefore behaves
//! like copying from the gold form.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{write_jsonl, Conversation, DataError, GoldRecord};
use crate::exec::execute;
use crate::lf::{Action, Condition, LogicalForm, Operator};
use crate::search::QaTurn;
use crate::table::{CellType, Table};

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyntheticSpec {
    pub n_tables: usize,
    pub row_range: (usize, usize),
    pub col_range: (usize, usize),
    pub turns_per_conversation: (usize, usize),
    pub copy_turn_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_tables: 200,
            row_range: (5, 8),
            col_range: (3, 5),
            turns_per_conversation: (2, 3),
            copy_turn_fraction: 0.6,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::InvalidSpec(m.to_string()));
        for (name, (lo, hi)) in [
            ("rowRange", self.row_range),
            ("colRange", self.col_range),
            ("turnsPerConversation", self.turns_per_conversation),
        ] {
            if lo == 0 || lo > hi {
                return bad(&format!("{name} must satisfy 1 <= min <= max"));
            }
        }
        if self.n_tables == 0 {
            return bad("nTables must be positive");
        }
        if self.col_range.0 < 2 {
            return bad("tables need at least 2 columns");
        }
        if self.row_range.1 > 60 {
            return bad("at most 60 rows per table");
        }
        if !(0.0..=1.0).contains(&self.copy_turn_fraction) {
            return bad("copyTurnFraction must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConversation {
    pub table: usize,
    pub turns: Vec<QaTurn>,
    pub gold: Vec<LogicalForm>,
    pub actions: Vec<Vec<Action>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub tables: Vec<Table>,
    pub conversations: Vec<SyntheticConversation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Text,
    Number,
    Year,
    Country,
}

const TEXT_HEADERS: &[&str] = &[
    "Name", "City", "Team", "Club", "Player", "Venue", "Album", "Coach", "Driver", "Artist", "Ship", "School",
];
const NUMBER_HEADERS: &[&str] = &[
    "Points", "Goals", "Wins", "Population", "Score", "Medals", "Votes", "Nations", "Height", "Games", "Losses",
    "Laps", "Seats", "Attendance",
];
const YEAR_HEADERS: &[&str] = &["Year", "Season", "Founded", "Opened", "Debut"];
const COUNTRY_HEADERS: &[&str] = &["Country", "Nationality"];
const COUNTRY_VALUES: &[&str] = &[
    "France", "Germany", "Brazil", "Japan", "Kenya", "Canada", "Italy", "Spain", "Mexico", "India", "Norway",
    "Egypt", "Chile", "Peru", "Greece", "China", "Poland", "Sweden", "Ghana", "Cuba", "Austria", "Ireland",
    "Turkey", "Vietnam", "Argentina", "Portugal", "Finland", "Morocco", "Nepal", "Uruguay",
];
const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "ten", "vo", "sul", "bri", "dor", "fa", "gon", "hil", "zu", "pe", "nak", "ro", "tis",
    "mar", "qui", "bel", "ost", "van", "del", "rin",
];

fn header_kind(t: &Table, col: usize) -> Kind {
    match t.columns[col].ty {
        CellType::Year => Kind::Year,
        CellType::Number => Kind::Number,
        CellType::Country => Kind::Country,
        _ => Kind::Text,
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=3);
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
    w[..1].make_ascii_uppercase();
    w
}

fn gen_table(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, index: usize) -> Table {
    let n_rows = rng.gen_range(spec.row_range.0..=spec.row_range.1);
    let n_cols = rng.gen_range(spec.col_range.0..=spec.col_range.1);
    let mut kinds = vec![Kind::Text];
    let (mut has_year, mut has_country) = (false, false);
    while kinds.len() < n_cols {
        let k = match rng.gen_range(0..10) {
            0..=1 if !has_year => Kind::Year,
            2 if !has_country && n_rows <= COUNTRY_VALUES.len() => Kind::Country,
            3..=4 => Kind::Text,
            _ => Kind::Number,
        };
        has_year |= k == Kind::Year;
        has_country |= k == Kind::Country;
        kinds.push(k);
    }
    let mut used_headers = HashSet::new();
    let headers: Vec<String> = kinds
        .iter()
        .map(|k| {
            let pool = match k {
                Kind::Text => TEXT_HEADERS,
                Kind::Number => NUMBER_HEADERS,
                Kind::Year => YEAR_HEADERS,
                Kind::Country => COUNTRY_HEADERS,
            };
            loop {
                let h = *pool.choose(rng).unwrap();
                if used_headers.insert(h) {
                    break h.to_string();
                }
            }
        })
        .collect();

    let mut used: HashSet<String> = HashSet::new();
    let mut columns: Vec<Vec<String>> = Vec::new();
    for k in &kinds {
        let mut col = Vec::with_capacity(n_rows);
        if *k == Kind::Country {
            let mut pool: Vec<&str> = COUNTRY_VALUES.iter().copied().filter(|c| !used.contains(*c)).collect();
            pool.shuffle(rng);
            col.extend(pool.into_iter().take(n_rows).map(str::to_string));
        }
        while col.len() < n_rows {
            let v = match k {
                Kind::Text => {
                    if rng.gen_bool(0.15) {
                        format!("{} {}", pseudo_word(rng), pseudo_word(rng))
                    } else {
                        pseudo_word(rng)
                    }
                }
                Kind::Number => rng.gen_range(1..1000).to_string(),
                Kind::Year => rng.gen_range(1900..2024).to_string(),
                Kind::Country => unreachable!("filled above"),
            };
            if !used.contains(&v) && !col.contains(&v) {
                col.push(v);
            }
        }
        used.extend(col.iter().cloned());
        columns.push(col);
    }
    let rows = (0..n_rows).map(|r| columns.iter().map(|c| c[r].clone()).collect()).collect();
    Table::from_rows(format!("t{index:04}"), headers, rows).expect("non-empty header")
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    table: &'a Table,
}

fn lower(t: &Table, c: usize) -> String {
    t.columns[c].header.to_lowercase()
}

impl Gen<'_> {
    fn pick<'b>(&mut self, xs: &'b [&'b str]) -> &'b str {
        xs.choose(&mut self.rng).unwrap()
    }

    fn cell(&mut self, col: usize, rows: Option<&[usize]>) -> Option<String> {
        let pool: Vec<usize> = match rows {
            Some(r) => r.to_vec(),
            None => (0..self.table.n_rows).collect(),
        };
        pool.choose(&mut self.rng)
            .map(|&r| self.table.columns[col].cells[r].raw.clone())
    }

    fn numeric_cols(&self) -> Vec<usize> {
        (0..self.table.n_cols)
            .filter(|&c| matches!(header_kind(self.table, c), Kind::Number | Kind::Year))
            .collect()
    }

    fn other_col(&mut self, not: &[usize]) -> Option<usize> {
        let pool: Vec<usize> = (0..self.table.n_cols).filter(|c| !not.contains(c)).collect();
        pool.choose(&mut self.rng).copied()
    }

    /// A condition on `col` and the phrase that asks for it.
    fn condition(&mut self, col: usize, rows: Option<&[usize]>) -> Option<(Condition, String)> {
        let t = self.table;
        let y = lower(t, col);
        let kind = header_kind(t, col);
        let numeric = matches!(kind, Kind::Number | Kind::Year);
        let roll = self.rng.gen_range(0..100);
        let op = if !numeric {
            if roll < 88 {
                Operator::Eq
            } else {
                Operator::Neq
            }
        } else {
            match roll {
                0..=39 => Operator::Eq,
                40..=54 => Operator::Argmax,
                55..=69 => Operator::Argmin,
                70..=77 => Operator::Gt,
                78..=85 => Operator::Lt,
                86..=90 => Operator::Geq,
                91..=95 => Operator::Leq,
                _ => Operator::Neq,
            }
        };
        if !op.takes_value() {
            let word = match (op, kind) {
                (Operator::Argmax, Kind::Year) => self.pick(&["latest", "most recent"]),
                (Operator::Argmin, Kind::Year) => self.pick(&["earliest", "oldest"]),
                (Operator::Argmax, _) => self.pick(&["most", "highest", "largest"]),
                _ => self.pick(&["fewest", "lowest", "smallest"]),
            };
            return Some((Condition::extremum(&t.columns[col].header, op), format!("the {word} {y}")));
        }
        let v = self.cell(col, rows)?;
        let phrase = match (op, kind) {
            (Operator::Eq, Kind::Year) => format!("{} {v}", self.pick(&["in", "for"])),
            (Operator::Eq, Kind::Number) => format!("{v} {y}"),
            (Operator::Eq, _) => format!("{y} {v}"),
            (Operator::Neq, _) => format!("{y} other than {v}"),
            (Operator::Gt, Kind::Year) => format!("after {v}"),
            (Operator::Lt, Kind::Year) => format!("before {v}"),
            (Operator::Geq, Kind::Year) => format!("in {v} or later"),
            (Operator::Leq, Kind::Year) => format!("in {v} or earlier"),
            (Operator::Gt, _) => format!("{} {v} {y}", self.pick(&["more than", "over"])),
            (Operator::Lt, _) => format!("{} than {v} {y}", self.pick(&["fewer", "less"])),
            (Operator::Geq, _) => format!("at least {v} {y}"),
            (Operator::Leq, _) => format!("at most {v} {y}"),
            _ => unreachable!("extremum handled above"),
        };
        Some((Condition::compare(&t.columns[col].header, op, v), phrase))
    }

    fn fresh(&mut self) -> Option<(String, LogicalForm, Vec<Action>)> {
        let t = self.table;
        let x = self.rng.gen_range(0..t.n_cols);
        let xs = lower(t, x);
        if self.rng.gen_bool(0.12) {
            let q = match self.rng.gen_range(0..3) {
                0 => format!("List every {xs}."),
                1 => format!("What are all the {xs} entries?"),
                _ => format!("Show each {xs}."),
            };
            let lf = LogicalForm::select(&t.columns[x].header);
            return Some((q, lf.clone(), vec![Action::SelectCol(lf.select_column)]));
        }
        let y = self.other_col(&[x])?;
        let (cond, phrase) = self.condition(y, None)?;
        let q = match self.rng.gen_range(0..3) {
            0 => format!("Which {xs} has {phrase}?"),
            1 => format!("What is the {xs} with {phrase}?"),
            _ => format!("Which {xs} had {phrase}?"),
        };
        let mut actions = vec![
            Action::SelectCol(t.columns[x].header.clone()),
            Action::WhereCol(cond.column.clone()),
            Action::WhereOp(cond.op),
        ];
        actions.extend(cond.value.clone().map(Action::WhereVal));
        Some((q, LogicalForm::select(&t.columns[x].header).with_condition(cond), actions))
    }

    fn copy_where(&mut self, prev: &LogicalForm) -> Option<(String, LogicalForm, Vec<Action>)> {
        if prev.conditions.is_empty() {
            return None;
        }
        let t = self.table;
        let mut not: Vec<usize> = prev.columns().filter_map(|c| t.column_index(c)).collect();
        not.dedup();
        let x = self.other_col(&not)?;
        let xs = lower(t, x);
        let q = match self.rng.gen_range(0..3) {
            0 => format!("What is their {xs}?"),
            1 => format!("And what about their {xs}?"),
            _ => format!("What {xs} do those have?"),
        };
        let lf = LogicalForm {
            select_column: t.columns[x].header.clone(),
            conditions: prev.conditions.clone(),
        };
        Some((q, lf, vec![Action::CopyWhere, Action::SelectCol(t.columns[x].header.clone())]))
    }

    fn copy_select(&mut self, prev: &LogicalForm) -> Option<(String, LogicalForm, Vec<Action>)> {
        let t = self.table;
        let x = t.column_index(&prev.select_column)?;
        // Re-ask with a new value for the previous equality column when there is one.
        let same = prev
            .conditions
            .iter()
            .find(|c| c.op == Operator::Eq)
            .and_then(|c| t.column_index(&c.column));
        let (cond, q) = match same {
            Some(y) => {
                let old = prev.conditions.iter().find(|c| c.op == Operator::Eq)?.value.clone()?;
                let v = self.cell(y, None).filter(|v| *v != old)?;
                let kind = header_kind(t, y);
                let q = match (kind, self.rng.gen_range(0..3)) {
                    (Kind::Year, 0) => format!("How about in {v}?"),
                    (Kind::Year, _) => format!("What about {v}?"),
                    (_, 0) => format!("How about {v}?"),
                    _ => format!("What about for {v}?"),
                };
                (Condition::compare(&t.columns[y].header, Operator::Eq, v), q)
            }
            None => {
                let y = self.other_col(&[x])?;
                let (cond, phrase) = self.condition(y, None)?;
                let q = match self.rng.gen_range(0..2) {
                    0 => format!("How about the one with {phrase}?"),
                    _ => format!("What about {phrase}?"),
                };
                (cond, q)
            }
        };
        let mut actions = vec![Action::CopySelect, Action::WhereCol(cond.column.clone()), Action::WhereOp(cond.op)];
        actions.extend(cond.value.clone().map(Action::WhereVal));
        Some((q, LogicalForm::select(&prev.select_column).with_condition(cond), actions))
    }

    fn copy_all(&mut self, prev: &LogicalForm, prev_rows: &[usize]) -> Option<(String, LogicalForm, Vec<Action>)> {
        if prev.conditions.len() >= 2 || prev_rows.len() < 2 {
            return None;
        }
        let t = self.table;
        let not: Vec<usize> = prev.columns().filter_map(|c| t.column_index(c)).collect();
        let numeric: Vec<usize> = self.numeric_cols().into_iter().filter(|c| !not.contains(c)).collect();
        let y = match numeric.choose(&mut self.rng) {
            Some(&y) => y,
            None => self.other_col(&not)?,
        };
        let (cond, phrase) = self.condition(y, Some(prev_rows))?;
        let q = match self.rng.gen_range(0..3) {
            0 => format!("Of those, which has {phrase}?"),
            1 => format!("Among them, which had {phrase}?"),
            _ => format!("Which of those has {phrase}?"),
        };
        let mut actions = vec![Action::CopyAll, Action::WhereCol(cond.column.clone()), Action::WhereOp(cond.op)];
        actions.extend(cond.value.clone().map(Action::WhereVal));
        let mut lf = prev.clone();
        lf.conditions.push(cond);
        Some((q, lf, actions))
    }
}

fn gen_conversation(rng: &mut ChaCha8Rng, table: &Table, index: usize, spec: &SyntheticSpec) -> SyntheticConversation {
    let n_turns = rng.gen_range(spec.turns_per_conversation.0..=spec.turns_per_conversation.1);
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(rng.gen()),
        table,
    };
    let mut conv = SyntheticConversation {
        table: index,
        turns: Vec::new(),
        gold: Vec::new(),
        actions: Vec::new(),
    };
    let mut prev: Option<(LogicalForm, Vec<usize>)> = None;
    while conv.turns.len() < n_turns {
        let mut made = None;
        for _ in 0..50 {
            let want_copy = prev.is_some() && g.rng.gen_bool(spec.copy_turn_fraction);
            let attempt = match (&prev, want_copy) {
                (Some((lf, rows)), true) => match g.rng.gen_range(0..3) {
                    0 => g.copy_where(lf),
                    1 => g.copy_select(lf),
                    _ => g.copy_all(lf, rows),
                },
                _ => g.fresh(),
            };
            let Some((q, lf, actions)) = attempt else { continue };
            let d = execute(&lf, table).expect("generated forms name real columns");
            if d.is_empty() {
                continue;
            }
            made = Some((q, lf, actions, d));
            break;
        }
        let Some((question, lf, actions, d)) = made else { break };
        conv.turns.push(QaTurn {
            question,
            answers: d.texts().into_iter().map(str::to_string).collect(),
        });
        prev = Some((lf.clone(), d.rows()));
        conv.gold.push(lf);
        conv.actions.push(actions);
    }
    conv
}

/// Builds the corpus: one table and one conversation per table index.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus, SyntheticError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut corpus = SyntheticCorpus {
        tables: Vec::with_capacity(spec.n_tables),
        conversations: Vec::with_capacity(spec.n_tables),
    };
    for i in 0..spec.n_tables {
        let table = gen_table(&mut rng, spec, i);
        let conv = gen_conversation(&mut rng, &table, i, spec);
        corpus.tables.push(table);
        corpus.conversations.push(conv);
    }
    Ok(corpus)
}

impl SyntheticCorpus {
    pub fn table_file(&self, conv: &SyntheticConversation) -> String {
        format!("tables/{}.csv", self.tables[conv.table].id)
    }

    pub fn conversation_records(&self) -> Vec<Conversation> {
        self.conversations
            .iter()
            .map(|c| Conversation {
                id: Some(self.tables[c.table].id.clone()),
                table_file: self.table_file(c),
                turns: c.turns.clone(),
            })
            .collect()
    }

    pub fn gold_records(&self) -> Vec<GoldRecord> {
        self.conversations
            .iter()
            .map(|c| GoldRecord {
                table_file: self.table_file(c),
                gold_lfs: c.gold.clone(),
                actions: c.actions.clone(),
            })
            .collect()
    }

    /// Writes `tables/*.csv`, `conversations.jsonl` and `gold.jsonl` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SyntheticError> {
        let tables = dir.join("tables");
        fs::create_dir_all(&tables).map_err(|source| DataError::Io {
            path: tables.clone(),
            source,
        })?;
        for t in &self.tables {
            let path = tables.join(format!("{}.csv", t.id));
            fs::write(&path, t.to_csv()).map_err(|source| DataError::Io { path, source })?;
        }
        write_jsonl(&dir.join("conversations.jsonl"), &self.conversation_records())?;
        write_jsonl(&dir.join("gold.jsonl"), &self.gold_records())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lf::{assemble, tags};
    use crate::search::{search_labels, SearchConfig};

    fn small(seed: u64, copy: f64) -> SyntheticSpec {
        SyntheticSpec {
            n_tables: 25,
            copy_turn_fraction: copy,
            seed,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&small(1, 0.6)).unwrap();
        let b = generate(&small(1, 0.6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&small(2, 0.6)).unwrap());
    }

    #[test]
    fn columns_type_as_intended_and_cells_are_unique() {
        let c = generate(&small(3, 0.6)).unwrap();
        for t in &c.tables {
            assert_eq!(t.columns[0].ty, CellType::Text);
            for col in &t.columns {
                assert!(matches!(
                    col.ty,
                    CellType::Text | CellType::Number | CellType::Year | CellType::Country
                ));
            }
            let mut seen = HashSet::new();
            for col in &t.columns {
                for cell in &col.cells {
                    assert!(seen.insert(cell.raw.clone()), "{} repeats in {}", cell.raw, t.id);
                }
            }
        }
    }

    #[test]
    fn gold_actions_assemble_to_gold_forms() {
        let c = generate(&small(4, 0.8)).unwrap();
        for conv in &c.conversations {
            for i in 0..conv.turns.len() {
                let prev = i.checked_sub(1).map(|p| &conv.gold[p]);
                assert_eq!(assemble(&conv.actions[i], prev).unwrap(), conv.gold[i]);
                assert!(crate::lf::Sketch::classify(&tags(&conv.actions[i])).is_some());
            }
        }
    }

    #[test]
    fn no_copy_turns_without_copy_fraction() {
        let c = generate(&small(5, 0.0)).unwrap();
        for conv in &c.conversations {
            assert!(conv.actions.iter().flatten().all(|a| !a.tag().is_copy()));
            let t = &c.tables[conv.table];
            for r in search_labels(&conv.turns, t, &SearchConfig::default()) {
                assert!(r.covered);
            }
        }
    }

    #[test]
    fn search_covers_generated_turns() {
        let c = generate(&small(6, 0.7)).unwrap();
        for conv in &c.conversations {
            let t = &c.tables[conv.table];
            for r in search_labels(&conv.turns, t, &SearchConfig::default()) {
                assert!(r.covered, "{} on {}", r.question, t.id);
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(generate(&SyntheticSpec {
            copy_turn_fraction: 1.5,
            ..SyntheticSpec::default()
        })
        .is_err());
        assert!(generate(&SyntheticSpec {
            row_range: (0, 3),
            ..SyntheticSpec::default()
        })
        .is_err());
    }

    #[test]
    fn writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate(&small(7, 0.5)).unwrap();
        c.write_to(dir.path()).unwrap();
        let convs = crate::data::read_conversations(&dir.path().join("conversations.jsonl")).unwrap();
        assert_eq!(convs.len(), 25);
        assert!(Path::new(&convs[0].table_file).exists());
        let loaded = crate::data::load_tables(convs.iter().map(|c| c.table_file.as_str())).unwrap();
        let t = &loaded[&convs[0].table_file];
        assert_eq!(t.headers().collect::<Vec<_>>(), c.tables[0].headers().collect::<Vec<_>>());
    }
}
