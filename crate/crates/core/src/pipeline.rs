//! Turn-level inference and conversation evaluation.
//!
//! The controller ranks sketches; the top `beam` are filled argument by
//! argument from the scorer heads, copy actions are resolved against the
//! previous turn's chosen form, and every candidate is executed. Candidates
//! with a non-empty answer outrank the rest, then higher score wins, then the
//! earlier sketch.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{denotation_matches, execute, Denotation, MatchKind};
use crate::lf::{assemble, Action, ActionTag, LogicalForm, Operator, Sketch};
use crate::scorer::{
    controller_features, score_column, score_operator, score_sketch, score_value, ColumnRole, DecisionDistribution,
    ModelWeights,
};
use crate::search::QaTurn;
use crate::table::Table;

/// Cap on filled candidates per sketch when top-k expansion is on.
pub const MAX_EXPANSION: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("no candidate logical form could be built and executed")]
    NoParse,
    #[error("beam must be at least 1")]
    ZeroBeam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ParseConfig {
    /// Number of sketches tried, best controller probability first.
    pub beam: usize,
    /// Choices kept per argument decision; 1 is greedy filling.
    pub expand: usize,
}

impl Default for ParseConfig {
    fn default() -> Self {
        ParseConfig { beam: 3, expand: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredParse {
    pub lf: LogicalForm,
    pub actions: Vec<Action>,
    pub sketch: Sketch,
    /// Sum of log-probabilities of every decision, the sketch included.
    pub score: f64,
    pub denotation: Denotation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Turn {
    pub question: String,
    pub chosen: Option<LogicalForm>,
    pub denotation: Option<Denotation>,
    #[serde(skip)]
    pub parse: Option<ScoredParse>,
}

/// One conversation over one table. Turns are only ever appended.
#[derive(Debug, Clone)]
pub struct ConversationState {
    pub table: Arc<Table>,
    pub turns: Vec<Turn>,
}

pub fn new_session(table: Arc<Table>) -> ConversationState {
    ConversationState {
        table,
        turns: Vec::new(),
    }
}

impl ConversationState {
    /// The last turn's question and form, when that turn produced one.
    pub fn previous(&self) -> Option<(&str, &LogicalForm)> {
        let last = self.turns.last()?;
        last.chosen.as_ref().map(|lf| (last.question.as_str(), lf))
    }
}

fn ln(p: f64) -> f64 {
    p.max(f64::MIN_POSITIVE).ln()
}

fn top<T>(d: &DecisionDistribution<T>, k: usize) -> Vec<(usize, f64)> {
    d.ranked().into_iter().take(k).map(|i| (i, ln(d.probs[i]))).collect()
}

#[derive(Clone)]
struct Partial {
    actions: Vec<Action>,
    score: f64,
    where_col: Option<usize>,
    op: Option<Operator>,
}

struct Heads {
    select: DecisionDistribution<usize>,
    where_: DecisionDistribution<usize>,
    operator: DecisionDistribution<Operator>,
}

fn fill(
    sketch: Sketch,
    sketch_logp: f64,
    table: &Table,
    question: &str,
    weights: &ModelWeights,
    heads: &Heads,
    expand: usize,
) -> Vec<Partial> {
    let mut beam = vec![Partial {
        actions: Vec::new(),
        score: sketch_logp,
        where_col: None,
        op: None,
    }];
    for &tag in sketch.action_tags() {
        let mut next = Vec::new();
        for p in beam {
            // argmin/argmax close the condition without a value.
            if tag == ActionTag::A4 && p.op.is_some_and(|op| !op.takes_value()) {
                next.push(p);
                continue;
            }
            let mut push = |action: Action, logp: f64, where_col: Option<usize>, op: Option<Operator>| {
                let mut q = p.clone();
                q.actions.push(action);
                q.score += logp;
                q.where_col = where_col.or(q.where_col);
                q.op = op.or(q.op);
                next.push(q);
            };
            match tag {
                ActionTag::A1 => {
                    for (i, lp) in top(&heads.select, expand) {
                        push(Action::SelectCol(table.columns[i].header.clone()), lp, None, None);
                    }
                }
                ActionTag::A2 => {
                    for (i, lp) in top(&heads.where_, expand) {
                        push(Action::WhereCol(table.columns[i].header.clone()), lp, Some(i), None);
                    }
                }
                ActionTag::A3 => {
                    for (i, lp) in top(&heads.operator, expand) {
                        let op = heads.operator.choices[i];
                        push(Action::WhereOp(op), lp, None, Some(op));
                    }
                }
                ActionTag::A4 => {
                    let Some(col) = p.where_col.map(|i| &table.columns[i]) else { continue };
                    let Ok(d) = score_value(weights, weights.lambda, question, col) else { continue };
                    for (i, lp) in top(&d, expand) {
                        push(Action::WhereVal(d.choices[i].raw.trim().to_string()), lp, None, None);
                    }
                }
                ActionTag::A5 => push(Action::CopySelect, 0.0, None, None),
                ActionTag::A6 => push(Action::CopyWhere, 0.0, None, None),
                ActionTag::A7 => push(Action::CopyAll, 0.0, None, None),
            }
        }
        next.sort_by(|a, b| b.score.total_cmp(&a.score));
        next.truncate(MAX_EXPANSION);
        beam = next;
    }
    beam
}

/// Parses one question given an explicit previous turn (question and form).
pub fn parse_with_previous(
    table: &Table,
    question: &str,
    previous: Option<(&str, &LogicalForm)>,
    weights: &ModelWeights,
    config: &ParseConfig,
) -> Result<ScoredParse, PipelineError> {
    if config.beam == 0 {
        return Err(PipelineError::ZeroBeam);
    }
    if table.columns.is_empty() {
        return Err(PipelineError::NoParse);
    }
    let fv = controller_features(question, previous.map(|p| p.0), table);
    let sketches = score_sketch(weights, &fv, previous.is_some());
    let heads = Heads {
        select: score_column(weights, question, table, ColumnRole::Select).map_err(|_| PipelineError::NoParse)?,
        where_: score_column(weights, question, table, ColumnRole::Where).map_err(|_| PipelineError::NoParse)?,
        operator: score_operator(weights, question),
    };
    let expand = config.expand.clamp(1, MAX_EXPANSION);

    let mut best: Option<ScoredParse> = None;
    for i in sketches.ranked().into_iter().take(config.beam) {
        let sketch = sketches.choices[i];
        for p in fill(sketch, ln(sketches.probs[i]), table, question, weights, &heads, expand) {
            let Ok(lf) = assemble(&p.actions, previous.map(|x| x.1)) else { continue };
            let Ok(denotation) = execute(&lf, table) else { continue };
            let cand = ScoredParse {
                lf,
                actions: p.actions,
                sketch,
                score: p.score,
                denotation,
            };
            if best.as_ref().is_none_or(|b| outranks(&cand, b)) {
                best = Some(cand);
            }
        }
    }
    best.ok_or(PipelineError::NoParse)
}

/// Non-empty answers first, then higher score, then earlier sketch.
fn outranks(a: &ScoredParse, b: &ScoredParse) -> bool {
    let key = |p: &ScoredParse| (!p.denotation.is_empty(), p.score);
    match (key(a).0, key(b).0) {
        (true, false) => true,
        (false, true) => false,
        _ => a.score > b.score || (a.score == b.score && a.sketch < b.sketch),
    }
}

pub fn parse_turn(
    state: &ConversationState,
    question: &str,
    weights: &ModelWeights,
    config: &ParseConfig,
) -> Result<ScoredParse, PipelineError> {
    parse_with_previous(&state.table, question, state.previous(), weights, config)
}

/// Parses, executes and records the turn. A failed parse is recorded too,
/// with no form, so the next turn starts without history.
pub fn answer(
    state: &mut ConversationState,
    question: &str,
    weights: &ModelWeights,
    config: &ParseConfig,
) -> Result<(Denotation, ScoredParse), PipelineError> {
    let result = parse_turn(state, question, weights, config);
    state.turns.push(Turn {
        question: question.to_string(),
        chosen: result.as_ref().ok().map(|p| p.lf.clone()),
        denotation: result.as_ref().ok().map(|p| p.denotation.clone()),
        parse: result.as_ref().ok().cloned(),
    });
    result.map(|p| (p.denotation.clone(), p))
}

/// Which form seeds copy actions during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistoryMode {
    /// The system's own previous prediction.
    #[default]
    Predicted,
    /// The gold form of the previous turn, when known.
    Gold,
}

#[derive(Debug, Clone)]
pub struct EvalItem<'a> {
    pub table: &'a Table,
    pub turns: &'a [QaTurn],
    pub gold_lfs: Option<&'a [LogicalForm]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnPrediction {
    pub question: String,
    pub previous: Option<LogicalForm>,
    pub parse: Option<ScoredParse>,
    pub correct: bool,
}

/// Runs one conversation, returning a prediction per turn.
pub fn run_conversation(
    item: &EvalItem<'_>,
    weights: &ModelWeights,
    config: &ParseConfig,
    history: HistoryMode,
) -> Vec<TurnPrediction> {
    let mut out: Vec<TurnPrediction> = Vec::with_capacity(item.turns.len());
    for (i, turn) in item.turns.iter().enumerate() {
        let previous: Option<(&str, LogicalForm)> = i.checked_sub(1).and_then(|p| {
            let q = item.turns[p].question.as_str();
            match (history, item.gold_lfs) {
                (HistoryMode::Gold, Some(gold)) => gold.get(p).cloned().map(|lf| (q, lf)),
                _ => out[p].parse.as_ref().map(|x| (q, x.lf.clone())),
            }
        });
        let parse = parse_with_previous(
            item.table,
            &turn.question,
            previous.as_ref().map(|(q, lf)| (*q, lf)),
            weights,
            config,
        )
        .ok();
        let correct = parse
            .as_ref()
            .is_some_and(|p| denotation_matches(&p.denotation, &turn.answers) == MatchKind::Exact);
        out.push(TurnPrediction {
            question: turn.question.clone(),
            previous: previous.map(|(_, lf)| lf),
            parse,
            correct,
        });
    }
    out
}

/// Accuracy over all questions, whole sequences, and each turn position, in
/// percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub all: f64,
    pub seq: f64,
    pub pos: Vec<f64>,
    pub questions: usize,
    pub conversations: usize,
}

impl EvalReport {
    pub fn from_outcomes(outcomes: &[Vec<bool>]) -> Self {
        let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
        let questions: usize = outcomes.iter().map(Vec::len).sum();
        let right: usize = outcomes.iter().flatten().filter(|&&c| c).count();
        let seqs = outcomes.iter().filter(|c| !c.is_empty() && c.iter().all(|&x| x)).count();
        let max_len = outcomes.iter().map(Vec::len).max().unwrap_or(0);
        let pos = (0..max_len)
            .map(|k| {
                let at: Vec<bool> = outcomes.iter().filter_map(|c| c.get(k).copied()).collect();
                pct(at.iter().filter(|&&c| c).count(), at.len())
            })
            .collect();
        EvalReport {
            all: pct(right, questions),
            seq: pct(seqs, outcomes.len()),
            pos,
            questions,
            conversations: outcomes.len(),
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>8}{:>8}", "ALL", "SEQ")?;
        for k in 1..=self.pos.len() {
            write!(f, "{:>8}", format!("POS {k}"))?;
        }
        writeln!(f)?;
        write!(f, "{:>8.1}{:>8.1}", self.all, self.seq)?;
        for p in &self.pos {
            write!(f, "{p:>8.1}")?;
        }
        writeln!(f)
    }
}

pub fn evaluate(items: &[EvalItem<'_>], weights: &ModelWeights, config: &ParseConfig, history: HistoryMode) -> EvalReport {
    let outcomes: Vec<Vec<bool>> = items
        .iter()
        .map(|item| {
            run_conversation(item, weights, config, history)
                .into_iter()
                .map(|t| t.correct)
                .collect()
        })
        .collect();
    EvalReport::from_outcomes(&outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lf::parse_lf;
    use crate::table::{load_table, olympics_fixture, TableFormat};

    fn fixture() -> Arc<Table> {
        Arc::new(olympics_fixture())
    }

    #[test]
    fn sessions_start_empty_and_independent() {
        let t = fixture();
        let mut a = new_session(t.clone());
        let b = new_session(t);
        assert!(a.turns.is_empty());
        answer(&mut a, "which city?", &ModelWeights::default(), &ParseConfig::default()).unwrap();
        assert_eq!(a.turns.len(), 1);
        assert!(b.turns.is_empty());
        let empty = load_table("empty", "a,b\n".as_bytes(), TableFormat::Csv).unwrap();
        let s = new_session(Arc::new(empty));
        let p = parse_turn(&s, "anything", &ModelWeights::default(), &ParseConfig::default()).unwrap();
        assert!(p.denotation.is_empty());
    }

    #[test]
    fn zero_weights_are_deterministic_and_masked() {
        let s = new_session(fixture());
        let cfg = ParseConfig { beam: 1, expand: 1 };
        let a = parse_turn(&s, "Which city hosted the 2008 Summer Olympics?", &ModelWeights::default(), &cfg).unwrap();
        let b = parse_turn(&s, "Which city hosted the 2008 Summer Olympics?", &ModelWeights::default(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.sketch.uses_copy());
        assert_eq!(execute(&a.lf, &s.table).unwrap(), a.denotation);
        assert!(a.score.is_finite());
    }

    fn hand_weights() -> ModelWeights {
        let mut w = ModelWeights::default();
        let c = &mut w.heads.controller;
        c.insert("has_number@S_SELECT_WHERE".into(), 3.0);
        c.insert("cue_that@S_COPYWHERE_SELECT".into(), 6.0);
        w.heads.select_col.insert("hdr_exact".into(), 2.0);
        w.heads.select_col.insert("cell_any".into(), -3.0);
        w.heads.select_col.insert("ty=NUMBER&cue=how_many".into(), 1.0);
        w.heads.where_col.insert("cell_any".into(), 3.0);
        w.heads.operator.insert("bias@=".into(), 3.0);
        w.heads.value.insert("overlap".into(), 5.0);
        w
    }

    #[test]
    fn olympics_conversation_with_hand_weights() {
        let mut s = new_session(fixture());
        let w = hand_weights();
        let cfg = ParseConfig::default();
        let (d, p) = answer(&mut s, "Which city hosted the 2008 Summer Olympics?", &w, &cfg).unwrap();
        assert_eq!(p.lf, parse_lf("SELECT City WHERE Year = 2008").unwrap());
        assert_eq!(d.texts(), vec!["Beijing"]);
        let (_, p2) = answer(&mut s, "How many nations participate in that year?", &w, &cfg).unwrap();
        assert_eq!(p2.sketch, Sketch::CopyWhereSelect);
        assert_eq!(p2.lf, parse_lf("SELECT Nations WHERE Year = 2008").unwrap());
        assert_eq!(p2.lf.conditions, p.lf.conditions);
    }

    #[test]
    fn failed_turn_clears_history() {
        let empty = load_table("e", "a\n".as_bytes(), TableFormat::Csv).unwrap();
        let mut s = new_session(Arc::new(empty));
        s.turns.push(Turn {
            question: "q".into(),
            chosen: None,
            denotation: None,
            parse: None,
        });
        assert!(s.previous().is_none());
        let p = parse_turn(&s, "that one", &hand_weights(), &ParseConfig::default()).unwrap();
        assert!(!p.sketch.uses_copy());
    }

    #[test]
    fn beam_candidates_grow() {
        let s = new_session(fixture());
        let w = hand_weights();
        let q = "Which city hosted the 2008 Summer Olympics?";
        let mut last = f64::NEG_INFINITY;
        for beam in 1..=5 {
            let p = parse_turn(&s, q, &w, &ParseConfig { beam, expand: 1 }).unwrap();
            if !p.denotation.is_empty() {
                assert!(p.score >= last);
                last = p.score;
            }
        }
        let wide = parse_turn(&s, q, &w, &ParseConfig { beam: 2, expand: 4 }).unwrap();
        assert!(wide.score >= last);
        assert_eq!(parse_turn(&s, q, &w, &ParseConfig { beam: 0, expand: 1 }), Err(PipelineError::ZeroBeam));
    }

    #[test]
    fn metric_arithmetic() {
        let r = EvalReport::from_outcomes(&[vec![true, false]]);
        assert_eq!((r.all, r.seq), (50.0, 0.0));
        assert_eq!(r.pos, vec![100.0, 0.0]);
        let perfect = EvalReport::from_outcomes(&[vec![true, true], vec![true]]);
        assert_eq!((perfect.all, perfect.seq), (100.0, 100.0));
        assert_eq!(perfect.pos, vec![100.0, 100.0]);
        let none = EvalReport::from_outcomes(&[]);
        assert_eq!(none.all, 0.0);
        assert!(r.to_string().contains("POS 2"));
    }

    #[test]
    fn gold_history_uses_gold_forms() {
        let t = olympics_fixture();
        let turns = vec![
            QaTurn {
                question: "Which city hosted the 2008 Summer Olympics?".into(),
                answers: vec!["Beijing".into()],
            },
            QaTurn {
                question: "How many nations participate in that year?".into(),
                answers: vec!["204".into()],
            },
        ];
        let gold = vec![
            parse_lf("SELECT City WHERE Year = 2012").unwrap(),
            parse_lf("SELECT Nations WHERE Year = 2012").unwrap(),
        ];
        let item = EvalItem {
            table: &t,
            turns: &turns,
            gold_lfs: Some(&gold),
        };
        let w = hand_weights();
        let preds = run_conversation(&item, &w, &ParseConfig::default(), HistoryMode::Gold);
        assert_eq!(preds[1].previous.as_ref(), Some(&gold[0]));
        let preds = run_conversation(&item, &w, &ParseConfig::default(), HistoryMode::Predicted);
        assert_eq!(preds[1].previous.as_ref(), preds[0].parse.as_ref().map(|p| &p.lf));
        let r = evaluate(&[item], &w, &ParseConfig::default(), HistoryMode::Predicted);
        assert_eq!(r.all, 100.0);
    }
}
