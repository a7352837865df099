//! Feature templates standing in for learned question/table encodings.

use std::collections::{BTreeMap, BTreeSet};

use rust_decimal::Decimal;

use crate::table::{Cell, CellType, Column, Table};
use crate::text;

/// Sparse feature map; an absent key reads as zero.
pub type FeatureVector = BTreeMap<String, f64>;

pub const COREF_CUES: [&str; 5] = ["that", "those", "ones", "of them", "it"];
pub const START_CUES: [&str; 3] = ["how many", "which", "what"];

/// Question cues paired with column types in the column heads.
const TYPE_CUES: [&str; 12] = [
    "how many", "how much", "when", "year", "which", "who", "what", "where", "most", "least", "more", "less",
];

const OPERATOR_CUES: [&str; 40] = [
    "most", "largest", "highest", "biggest", "greatest", "latest", "maximum", "top", "least", "fewest",
    "smallest", "lowest", "earliest", "minimum", "more than", "greater than", "over", "above", "at least",
    "after", "later than", "no less than", "less than", "fewer than", "under", "below", "at most", "before",
    "earlier than", "no more than", "not", "other than", "except", "besides", "excluding", "exactly",
    "equal", "same", "only", "than",
];

/// Pre-tokenized view of a question, shared by every template.
#[derive(Debug, Clone)]
pub struct QuestionView {
    pub tokens: Vec<String>,
    pub set: BTreeSet<String>,
    pub stems: BTreeSet<String>,
    pub numbers: BTreeSet<Decimal>,
}

impl QuestionView {
    pub fn new(question: &str) -> Self {
        let tokens = text::tokenize(question);
        QuestionView {
            set: tokens.iter().cloned().collect(),
            stems: tokens.iter().map(|t| text::stem(t)).collect(),
            numbers: text::numeric_mentions(question),
            tokens,
        }
    }

    /// Whether the token sequence of `phrase` occurs contiguously.
    pub fn has_phrase(&self, phrase: &str) -> bool {
        let p = text::tokenize(phrase);
        !p.is_empty() && self.tokens.windows(p.len()).any(|w| w == p.as_slice())
    }

    /// Word overlap of a cell with the question, in [0, 1]. A number written
    /// anywhere in the question counts as a full match for a numeric cell.
    pub fn overlap(&self, raw: &str) -> f64 {
        let toks = text::token_set(raw);
        let shared = toks.iter().filter(|t| self.set.contains(*t)).count();
        let word = shared as f64 / toks.len().max(1) as f64;
        let numeric = text::parse_decimal(raw.trim().trim_end_matches('%'))
            .is_some_and(|n| self.numbers.contains(&n));
        if numeric {
            1.0
        } else {
            word
        }
    }
}

fn key(s: &str) -> String {
    s.replace(' ', "_")
}

fn bump(fv: &mut FeatureVector, k: String, v: f64) {
    *fv.entry(k).or_insert(0.0) += v;
}

fn ngrams(q: &QuestionView, fv: &mut FeatureVector) {
    for t in &q.set {
        fv.insert(format!("w={t}"), 1.0);
    }
    for w in q.tokens.windows(2) {
        fv.insert(format!("bi={}_{}", w[0], w[1]), 1.0);
    }
}

/// Controller input: n-grams, coreference cues, question start, history
/// flag and word overlap with the previous question.
pub fn featurize_controller(current: &str, previous: Option<&str>) -> FeatureVector {
    let q = QuestionView::new(current);
    let mut fv = FeatureVector::new();
    fv.insert("has_prev".into(), if previous.is_some() { 1.0 } else { 0.0 });
    ngrams(&q, &mut fv);
    for cue in COREF_CUES {
        if q.has_phrase(cue) {
            fv.insert(format!("cue_{}", key(cue)), 1.0);
        }
    }
    for cue in START_CUES {
        let n = text::tokenize(cue).len();
        if q.tokens.len() >= n && q.tokens[..n].join(" ") == cue {
            fv.insert(format!("start_{}", key(cue)), 1.0);
        }
    }
    if let Some(prev) = previous {
        let p = text::token_set(prev);
        let shared = q.set.iter().filter(|t| p.contains(*t)).count();
        if !q.set.is_empty() {
            fv.insert("prev_overlap".into(), shared as f64 / q.set.len() as f64);
        }
    }
    fv
}

/// Table-aware additions to the controller input: whether the question
/// names any cell, and whether it names a header.
pub fn controller_table_features(current: &str, table: &Table) -> FeatureVector {
    let q = QuestionView::new(current);
    let mut fv = FeatureVector::new();
    let mentioned = table
        .columns
        .iter()
        .filter(|c| c.cells.iter().any(|cell| q.overlap(&cell.raw) >= 1.0))
        .count();
    if mentioned > 0 {
        fv.insert("mentions_cell".into(), 1.0);
    }
    if table
        .columns
        .iter()
        .any(|c| !c.header_tokens.is_empty() && c.header_tokens.iter().all(|t| q.set.contains(t)))
    {
        fv.insert("mentions_header".into(), 1.0);
    }
    if !q.numbers.is_empty() {
        fv.insert("has_number".into(), 1.0);
    }
    fv
}

/// Per-column features, identical for both column roles; each role has its
/// own weights.
pub fn column_features(q: &QuestionView, column: &Column) -> FeatureVector {
    let mut fv = FeatureVector::new();
    let hdr = &column.header_tokens;
    let exact = hdr.iter().filter(|t| q.set.contains(*t)).count();
    let stemmed = hdr.iter().filter(|t| q.stems.contains(&text::stem(t))).count();
    if exact > 0 {
        fv.insert("hdr_exact".into(), exact as f64);
    }
    if stemmed > 0 {
        fv.insert("hdr_stem".into(), stemmed as f64);
    }
    if !hdr.is_empty() && stemmed == hdr.len() {
        fv.insert("hdr_full".into(), 1.0);
    }
    let ty = column.ty.as_str();
    fv.insert(format!("ty={ty}"), 1.0);
    for cue in TYPE_CUES {
        if q.has_phrase(cue) {
            fv.insert(format!("ty={ty}&cue={}", key(cue)), 1.0);
        }
    }
    let cells = column.distinct_cells();
    if !cells.is_empty() {
        let hits = cells.iter().filter(|c| q.overlap(&c.raw) >= 1.0).count();
        if hits > 0 {
            fv.insert("cell_any".into(), 1.0);
            fv.insert("cell_frac".into(), hits as f64 / cells.len() as f64);
            fv.insert(format!("cell_any&ty={ty}"), 1.0);
        }
    }
    // Words around the first header mention.
    let stems: Vec<String> = hdr.iter().map(|t| text::stem(t)).collect();
    if let Some(pos) = q.tokens.iter().position(|t| stems.contains(&text::stem(t))) {
        if let Some(before) = pos.checked_sub(1).and_then(|i| q.tokens.get(i)) {
            bump(&mut fv, format!("pre={before}"), 1.0);
        } else {
            bump(&mut fv, "pre=<s>".into(), 1.0);
        }
        let last = pos + stems.len().max(1) - 1;
        match q.tokens.get(last + 1) {
            Some(after) => bump(&mut fv, format!("post={after}"), 1.0),
            None => bump(&mut fv, "post=</s>".into(), 1.0),
        }
    }
    fv
}

/// Operator input: n-grams plus comparison, superlative and negation cues.
pub fn operator_features(question: &str) -> FeatureVector {
    let q = QuestionView::new(question);
    let mut fv = FeatureVector::new();
    ngrams(&q, &mut fv);
    for cue in OPERATOR_CUES {
        if q.has_phrase(cue) {
            fv.insert(format!("cue={}", key(cue)), 1.0);
        }
    }
    if !q.numbers.is_empty() {
        fv.insert("has_number".into(), 1.0);
    }
    fv
}

/// Per-cell value features: overlap with the question, agreement of the
/// cell type with the column type, and frequency within the column.
pub fn value_features(q: &QuestionView, cell: &Cell, column: &Column) -> FeatureVector {
    let mut fv = FeatureVector::new();
    let overlap = q.overlap(&cell.raw);
    if overlap > 0.0 {
        fv.insert("overlap".into(), overlap);
    }
    if overlap >= 1.0 {
        fv.insert("overlap_full".into(), 1.0);
    }
    if cell.ty == column.ty || (column.ty == CellType::Text && !cell.ty.is_numeric()) {
        fv.insert("type_match".into(), 1.0);
    }
    let same = column
        .cells
        .iter()
        .filter(|c| text::casefold(&c.raw) == text::casefold(&cell.raw))
        .count();
    fv.insert("freq".into(), same as f64 / column.cells.len().max(1) as f64);
    fv
}

/// Normalized word overlap between a cell and a question.
pub fn overlap_score(cell: &Cell, question: &str) -> f64 {
    QuestionView::new(question).overlap(&cell.raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::olympics_fixture;

    #[test]
    fn controller_cues() {
        let fv = featurize_controller("How many nations participate in that year?", Some("Which city?"));
        assert_eq!(fv["has_prev"], 1.0);
        assert_eq!(fv["cue_that"], 1.0);
        assert_eq!(fv["start_how_many"], 1.0);
        let fv = featurize_controller("Which city hosted the 2008 Summer Olympics?", None);
        assert_eq!(fv["has_prev"], 0.0);
        assert!(!fv.contains_key("cue_that"));
        let empty = featurize_controller("", None);
        assert_eq!(empty.len(), 1);
        assert_eq!(empty["has_prev"], 0.0);
    }

    #[test]
    fn overlap_examples() {
        let t = olympics_fixture();
        let cell = |col: &str, row: usize| t.column(col).unwrap().cells[row].clone();
        assert_eq!(overlap_score(&cell("City", 1), "Which city hosted ... in Beijing?"), 1.0);
        assert_eq!(overlap_score(&cell("Year", 1), "...in 2008?"), 1.0);
        assert_eq!(overlap_score(&cell("City", 0), "How many nations?"), 0.0);
        assert_eq!(overlap_score(&cell("Country", 2), "the kingdom"), 0.5);
    }

    #[test]
    fn operator_negation_cue() {
        let fv = operator_features("which cities other than Beijing hosted?");
        assert_eq!(fv["cue=other_than"], 1.0);
        assert!(operator_features("which year had the most nations?").contains_key("cue=most"));
    }

    #[test]
    fn column_header_and_cell_mentions() {
        let t = olympics_fixture();
        let q = QuestionView::new("How many nations participate in that year?");
        let nations = column_features(&q, t.column("Nations").unwrap());
        assert_eq!(nations["hdr_exact"], 1.0);
        assert_eq!(nations["ty=NUMBER&cue=how_many"], 1.0);
        assert_eq!(nations["pre=many"], 1.0);
        let q = QuestionView::new("Which city hosted in 2008?");
        let year = column_features(&q, t.column("Year").unwrap());
        assert_eq!(year["cell_any"], 1.0);
        assert!((year["cell_frac"] - 1.0 / 3.0).abs() < 1e-12);
    }
}
