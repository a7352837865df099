//! Label generation from question/answer pairs.
//!
//! Logical forms are enumerated breadth-first along the action transition
//! graph. A prefix whose partial execution shares no answer with the gold
//! list is cut. Survivors are then filtered by two strategies: S1 drops forms
//! whose freshly chosen WHERE values never appear in the question, and S2
//! keeps only copy-action forms whenever at least one exists.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{execute, execute_partial, match_answers, AnswerSemantics, MatchKind};
use crate::lf::{assemble, legal_successors, Action, ActionTag, LogicalForm, Next, Operator, Sketch};
use crate::table::Table;
use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("max_candidates must be at least 1")]
    ZeroCandidates,
}

/// Which complete forms are kept: exact answer match, or any shared answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    #[default]
    Exact,
    Overlap,
}

impl MatchMode {
    fn accepts(self, kind: MatchKind) -> bool {
        match self {
            MatchMode::Exact => kind == MatchKind::Exact,
            MatchMode::Overlap => kind != MatchKind::Disjoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub max_candidates: usize,
    pub apply_s1: bool,
    pub apply_s2: bool,
    pub match_mode: MatchMode,
    /// Cut prefixes whose partial execution is disjoint from the gold answers.
    pub prune: bool,
    /// Seed the next turn with every survivor instead of only the first.
    pub thread_all_previous: bool,
    pub semantics: AnswerSemantics,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_candidates: 5000,
            apply_s1: true,
            apply_s2: true,
            match_mode: MatchMode::Exact,
            prune: true,
            thread_all_previous: false,
            semantics: AnswerSemantics::Multiset,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.max_candidates == 0 {
            return Err(SearchError::ZeroCandidates);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate {
    pub lf: LogicalForm,
    pub actions: Vec<Action>,
}

impl Candidate {
    pub fn sketch(&self) -> Sketch {
        Sketch::classify(&crate::lf::tags(&self.actions)).expect("assembled sequences match a sketch")
    }

    pub fn uses_copy(&self) -> bool {
        self.actions.iter().any(|a| a.tag().is_copy())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    pub candidates: Vec<Candidate>,
    /// Number of matching forms found before truncation, when it exceeded the cap.
    pub overflow: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub raw: usize,
    pub after_s1: usize,
    pub after_s2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LabelResult {
    pub question: String,
    /// 1-based turn position within the conversation.
    pub position: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous_question: Option<String>,
    /// Table reference: an id, or a file path when written by the CLI.
    pub table: String,
    pub candidates: Vec<Candidate>,
    pub covered: bool,
    pub counts_by_stage: StageCounts,
    #[serde(default)]
    pub truncated: bool,
}

struct Partial {
    actions: Vec<Action>,
    tags: Vec<ActionTag>,
    key: Vec<usize>,
    op: Option<Operator>,
}

pub(crate) fn value_choices(table: &Table, column: &str) -> Vec<(usize, String)> {
    table.column(column).map_or_else(Vec::new, |col| {
        col.distinct_cells()
            .into_iter()
            .map(|c| (c.row, c.raw.trim().to_string()))
            .collect()
    })
}

fn expand(
    table: &Table,
    previous: Option<&LogicalForm>,
    state: &Partial,
    tag: ActionTag,
) -> Vec<(Action, usize)> {
    let columns = || table.columns.iter().enumerate();
    match tag {
        ActionTag::A1 => columns().map(|(i, c)| (Action::SelectCol(c.header.clone()), i)).collect(),
        ActionTag::A2 => columns().map(|(i, c)| (Action::WhereCol(c.header.clone()), i)).collect(),
        ActionTag::A3 => Operator::ALL
            .iter()
            .enumerate()
            .map(|(i, &op)| (Action::WhereOp(op), i))
            .collect(),
        ActionTag::A4 => {
            let Some(Action::WhereCol(col)) = state.actions.iter().rev().find(|a| a.tag() == ActionTag::A2) else {
                return Vec::new();
            };
            value_choices(table, col)
                .into_iter()
                .map(|(row, v)| (Action::WhereVal(v), row))
                .collect()
        }
        ActionTag::A5 => vec![(Action::CopySelect, 0)],
        ActionTag::A6 => vec![(Action::CopyWhere, 0)],
        ActionTag::A7 if previous.is_some_and(|p| p.conditions.len() >= 2) => Vec::new(),
        ActionTag::A7 => vec![(Action::CopyAll, 0)],
    }
}

/// Breadth-first enumeration of every grammar-legal form whose answer matches
/// `gold` under `config.match_mode`.
///
/// Output order: sketch, then column index, operator order and cell row, in
/// action order. Results beyond `max_candidates` are dropped and reported in
/// [`Enumeration::overflow`].
pub fn enumerate_candidates<S: AsRef<str>>(
    table: &Table,
    previous: Option<&LogicalForm>,
    gold: &[S],
    config: &SearchConfig,
) -> Enumeration {
    let has_prev = previous.is_some();
    // An empty gold list can still be matched after filtering, so partial
    // answers say nothing about it.
    let prune = config.prune && !gold.is_empty();
    let disjoint = |prefix: &[Action]| -> bool {
        match execute_partial(prefix, table, previous) {
            Ok(Some(d)) => match_answers(&d.texts(), gold, config.semantics) == MatchKind::Disjoint,
            Ok(None) => false,
            Err(_) => true,
        }
    };

    let mut found: Vec<(usize, Vec<usize>, Candidate)> = Vec::new();
    let mut queue = VecDeque::from([Partial {
        actions: Vec::new(),
        tags: Vec::new(),
        key: Vec::new(),
        op: None,
    }]);
    while let Some(state) = queue.pop_front() {
        for next in legal_successors(&state.tags, has_prev, state.op) {
            let tag = match next {
                Next::End => {
                    let Ok(lf) = assemble(&state.actions, previous) else { continue };
                    let Ok(d) = execute(&lf, table) else { continue };
                    if config.match_mode.accepts(match_answers(&d.texts(), gold, config.semantics)) {
                        let sketch = Sketch::classify(&state.tags).expect("complete path");
                        found.push((
                            sketch.index(),
                            state.key.clone(),
                            Candidate {
                                lf,
                                actions: state.actions.clone(),
                            },
                        ));
                    }
                    continue;
                }
                Next::Tag(t) => t,
            };
            for (action, idx) in expand(table, previous, &state, tag) {
                let op = match &action {
                    Action::WhereOp(op) => Some(*op),
                    Action::WhereVal(_) => None,
                    _ => state.op,
                };
                let mut actions = state.actions.clone();
                actions.push(action);
                if prune && matches!(tag, ActionTag::A1 | ActionTag::A5 | ActionTag::A7) && disjoint(&actions) {
                    continue;
                }
                let mut tags = state.tags.clone();
                tags.push(tag);
                let mut key = state.key.clone();
                key.push(idx);
                queue.push_back(Partial { actions, tags, key, op });
            }
        }
    }

    found.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    let total = found.len();
    let overflow = (total > config.max_candidates).then_some(total);
    Enumeration {
        candidates: found
            .into_iter()
            .take(config.max_candidates)
            .map(|(_, _, c)| c)
            .collect(),
        overflow,
    }
}

/// Whether a WHERE value chosen by A4 is mentioned in the question, either as
/// a shared token or as the same number.
pub fn value_mentioned(value: &str, question: &str) -> bool {
    let q = text::token_set(question);
    if text::tokenize(value).iter().any(|t| q.contains(t)) {
        return true;
    }
    match text::parse_decimal(value.trim().trim_end_matches('%')) {
        Some(n) => text::numeric_mentions(question).contains(&n),
        None => false,
    }
}

/// S1: keep forms whose every A4 value is mentioned in the question. Copied
/// conditions and argmin/argmax conditions carry no A4 and are exempt.
pub fn apply_s1(candidates: Vec<Candidate>, question: &str) -> Vec<Candidate> {
    candidates
        .into_iter()
        .filter(|c| {
            c.actions.iter().all(|a| match a {
                Action::WhereVal(v) => value_mentioned(v, question),
                _ => true,
            })
        })
        .collect()
}

/// S2: when any form uses a copy action, keep only those.
pub fn apply_s2(candidates: Vec<Candidate>) -> Vec<Candidate> {
    if candidates.iter().any(Candidate::uses_copy) {
        candidates.into_iter().filter(Candidate::uses_copy).collect()
    } else {
        candidates
    }
}

/// One conversational turn for label search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaTurn {
    pub question: String,
    pub answers: Vec<String>,
}

/// Generates labels turn by turn. The first survivor of a covered turn seeds
/// the copy actions of the next one; an uncovered turn leaves no history.
pub fn search_labels(turns: &[QaTurn], table: &Table, config: &SearchConfig) -> Vec<LabelResult> {
    let mut previous: Vec<LogicalForm> = Vec::new();
    let mut results = Vec::with_capacity(turns.len());
    for (i, turn) in turns.iter().enumerate() {
        let (raw, overflow) = if previous.is_empty() {
            let e = enumerate_candidates(table, None, &turn.answers, config);
            (e.candidates, e.overflow.is_some())
        } else {
            let mut seen = HashSet::new();
            let mut all = Vec::new();
            let mut overflow = false;
            for prev in &previous {
                let e = enumerate_candidates(table, Some(prev), &turn.answers, config);
                overflow |= e.overflow.is_some();
                all.extend(e.candidates.into_iter().filter(|c| seen.insert(c.clone())));
            }
            if all.len() > config.max_candidates {
                all.truncate(config.max_candidates);
                overflow = true;
            }
            (all, overflow)
        };
        let mut counts = StageCounts {
            raw: raw.len(),
            ..StageCounts::default()
        };
        let s1 = if config.apply_s1 { apply_s1(raw, &turn.question) } else { raw };
        counts.after_s1 = s1.len();
        let s2 = if config.apply_s2 { apply_s2(s1) } else { s1 };
        counts.after_s2 = s2.len();

        previous = if config.thread_all_previous {
            let mut seen = HashSet::new();
            s2.iter()
                .map(|c| c.lf.clone())
                .filter(|lf| seen.insert(lf.clone()))
                .take(config.max_candidates)
                .collect()
        } else {
            s2.first().map(|c| c.lf.clone()).into_iter().collect()
        };
        results.push(LabelResult {
            question: turn.question.clone(),
            position: i + 1,
            previous_question: i.checked_sub(1).map(|p| turns[p].question.clone()),
            table: table.id.clone(),
            covered: !s2.is_empty(),
            candidates: s2,
            counts_by_stage: counts,
            truncated: overflow,
        });
    }
    results
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionStats {
    pub position: usize,
    pub questions: usize,
    pub coverage: f64,
    pub avg_raw: f64,
    pub avg_s1: f64,
    pub avg_s2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub questions: usize,
    /// Percentage of questions with at least one surviving form.
    pub overall: f64,
    pub positions: Vec<PositionStats>,
}

impl CoverageReport {
    pub fn is_empty(&self) -> bool {
        self.questions == 0
    }
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Coverage and average surviving-form counts, overall and per turn position.
/// Positions beyond `max_position` are folded into it.
pub fn coverage_report(results: &[LabelResult], max_position: Option<usize>) -> CoverageReport {
    let mut by_pos: BTreeMap<usize, Vec<&LabelResult>> = BTreeMap::new();
    for r in results {
        let p = max_position.map_or(r.position, |m| r.position.min(m));
        by_pos.entry(p).or_default().push(r);
    }
    let covered = results.iter().filter(|r| r.covered).count();
    let positions = by_pos
        .into_iter()
        .map(|(position, rs)| {
            let n = rs.len() as f64;
            let avg = |f: fn(&StageCounts) -> usize| rs.iter().map(|r| f(&r.counts_by_stage) as f64).sum::<f64>() / n;
            PositionStats {
                position,
                questions: rs.len(),
                coverage: pct(rs.iter().filter(|r| r.covered).count(), rs.len()),
                avg_raw: avg(|c| c.raw),
                avg_s1: avg(|c| c.after_s1),
                avg_s2: avg(|c| c.after_s2),
            }
        })
        .collect();
    CoverageReport {
        questions: results.len(),
        overall: pct(covered, results.len()),
        positions,
    }
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return writeln!(f, "no questions");
        }
        write!(f, "{:<16}{:>8}", "", "ALL")?;
        for p in &self.positions {
            write!(f, "{:>8}", format!("POS {}", p.position))?;
        }
        writeln!(f)?;
        write!(f, "{:<16}{:>8.1}", "Coverage", self.overall)?;
        for p in &self.positions {
            write!(f, "{:>8.1}", p.coverage)?;
        }
        writeln!(f)?;
        type Stat = fn(&PositionStats) -> f64;
        let rows: [(&str, Stat); 3] = [
            ("Basic", |p| p.avg_raw),
            ("Basic + S1", |p| p.avg_s1),
            ("Basic + S1 + S2", |p| p.avg_s2),
        ];
        for (name, get) in rows {
            write!(f, "{:<16}{:>8}", name, "")?;
            for p in &self.positions {
                write!(f, "{:>8.2}", get(p))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
