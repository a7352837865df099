//! Log-linear decision modules: sketch controller, SELECT column, WHERE
//! column, operator and value heads.
//!
//! Every head is a softmax over its choices. Controller and operator scores
//! conjoin question features with the label (`feature@label`); the column and
//! value heads score each choice from its own feature vector with weights
//! shared across choices.

pub mod features;
mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lf::{Operator, Sketch};
use crate::table::{Cell, Column, Table};

pub use features::{
    column_features, controller_table_features, featurize_controller, operator_features, overlap_score,
    value_features, FeatureVector, QuestionView,
};
pub use train::{
    gradient, log_likelihood, train, training_events, Event, HeadReport, TrainConfig, TrainError, TrainOutcome,
};

pub const MODEL_VERSION: &str = "loglinear-templates-v1";
pub const DEFAULT_LAMBDA: f64 = 0.7;

pub type Weights = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScorerError {
    #[error("table has no columns")]
    EmptyTable,
    #[error("column `{0}` has no non-empty cells")]
    EmptyColumn(String),
    #[error("lambda must lie in [0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("non-finite weight for `{feature}` in head {head}")]
    NonFiniteWeight { head: Head, feature: String },
    #[error("malformed model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Head {
    Controller,
    SelectCol,
    WhereCol,
    Operator,
    Value,
}

impl Head {
    pub const ALL: [Head; 5] = [Head::Controller, Head::SelectCol, Head::WhereCol, Head::Operator, Head::Value];

    pub fn name(self) -> &'static str {
        match self {
            Head::Controller => "controller",
            Head::SelectCol => "selectCol",
            Head::WhereCol => "whereCol",
            Head::Operator => "operator",
            Head::Value => "value",
        }
    }
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Heads {
    pub controller: Weights,
    pub select_col: Weights,
    pub where_col: Weights,
    pub operator: Weights,
    pub value: Weights,
}

impl Heads {
    pub fn get(&self, head: Head) -> &Weights {
        match head {
            Head::Controller => &self.controller,
            Head::SelectCol => &self.select_col,
            Head::WhereCol => &self.where_col,
            Head::Operator => &self.operator,
            Head::Value => &self.value,
        }
    }

    pub fn get_mut(&mut self, head: Head) -> &mut Weights {
        match head {
            Head::Controller => &mut self.controller,
            Head::SelectCol => &mut self.select_col,
            Head::WhereCol => &mut self.where_col,
            Head::Operator => &mut self.operator,
            Head::Value => &mut self.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub version: String,
    pub lambda: f64,
    pub heads: Heads,
}

impl Default for ModelWeights {
    fn default() -> Self {
        ModelWeights::zero(DEFAULT_LAMBDA)
    }
}

impl ModelWeights {
    /// All-zero weights: every head is uniform over its unmasked choices.
    pub fn zero(lambda: f64) -> Self {
        ModelWeights {
            version: MODEL_VERSION.to_string(),
            lambda,
            heads: Heads::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ScorerError::InvalidLambda(self.lambda));
        }
        for head in Head::ALL {
            if let Some((k, _)) = self.heads.get(head).iter().find(|(_, v)| !v.is_finite()) {
                return Err(ScorerError::NonFiniteWeight {
                    head,
                    feature: k.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, ScorerError> {
        let w: ModelWeights = serde_json::from_str(s).map_err(|e| ScorerError::Format(e.to_string()))?;
        w.validate()?;
        Ok(w)
    }
}

/// A probability distribution over an ordered list of choices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionDistribution<T> {
    pub choices: Vec<T>,
    pub probs: Vec<f64>,
}

impl<T> DecisionDistribution<T> {
    /// Index of the most probable choice; the earliest wins ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if best.is_none_or(|b| p > self.probs[b]) {
                best = Some(i);
            }
        }
        best
    }

    pub fn best(&self) -> Option<(&T, f64)> {
        self.argmax().map(|i| (&self.choices[i], self.probs[i]))
    }

    /// Choice indices by decreasing probability, stable on ties, with
    /// zero-probability choices dropped.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.probs.len()).filter(|&i| self.probs[i] > 0.0).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]));
        idx
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }
}

/// Softmax over the unmasked scores; masked entries get exactly 0.
pub fn softmax(scores: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let live = |i: usize| mask.is_none_or(|m| m[i]);
    let max = (0..scores.len())
        .filter(|&i| live(i))
        .map(|i| scores[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; scores.len()];
    }
    let exps: Vec<f64> = (0..scores.len())
        .map(|i| if live(i) { (scores[i] - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// A single classification problem: one feature list per choice, plus a
/// mask of admissible choices.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub choices: Vec<Vec<(String, f64)>>,
    pub mask: Vec<bool>,
}

impl Instance {
    pub fn new(choices: Vec<Vec<(String, f64)>>) -> Self {
        let mask = vec![true; choices.len()];
        Instance { choices, mask }
    }

    /// Label-conjoined features: each choice sees `feature@label` plus a
    /// per-label bias.
    pub fn conjoined(fv: &FeatureVector, labels: &[&str]) -> Self {
        Instance::new(
            labels
                .iter()
                .map(|l| {
                    let mut v: Vec<(String, f64)> = fv
                        .iter()
                        .filter(|(_, x)| **x != 0.0)
                        .map(|(k, x)| (format!("{k}@{l}"), *x))
                        .collect();
                    v.push((format!("bias@{l}"), 1.0));
                    v
                })
                .collect(),
        )
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), self.choices.len());
        self.mask = mask;
        self
    }

    pub fn scores(&self, w: &Weights) -> Vec<f64> {
        self.choices
            .iter()
            .map(|fs| fs.iter().map(|(k, v)| w.get(k).copied().unwrap_or(0.0) * v).sum())
            .collect()
    }

    pub fn probs(&self, w: &Weights) -> Vec<f64> {
        softmax(&self.scores(w), Some(&self.mask))
    }
}

fn per_choice(fvs: Vec<FeatureVector>) -> Instance {
    Instance::new(fvs.into_iter().map(|fv| fv.into_iter().collect()).collect())
}

pub(crate) fn sketch_instance(features: &FeatureVector, has_previous: bool) -> Instance {
    let labels: Vec<&str> = Sketch::ALL.iter().map(|s| s.id()).collect();
    let mask = Sketch::ALL.iter().map(|s| has_previous || !s.uses_copy()).collect();
    Instance::conjoined(features, &labels).with_mask(mask)
}

pub(crate) fn column_instance(question: &str, table: &Table) -> Instance {
    let q = QuestionView::new(question);
    per_choice(table.columns.iter().map(|c| column_features(&q, c)).collect())
}

pub(crate) fn operator_instance(question: &str) -> Instance {
    let labels: Vec<&str> = Operator::ALL.iter().map(|o| o.symbol()).collect();
    Instance::conjoined(&operator_features(question), &labels)
}

pub(crate) fn value_instance(question: &str, column: &Column) -> (Instance, Vec<Cell>) {
    let q = QuestionView::new(question);
    let cells: Vec<Cell> = column.distinct_cells().into_iter().cloned().collect();
    let inst = per_choice(cells.iter().map(|c| value_features(&q, c, column)).collect());
    (inst, cells)
}

/// Controller features for a turn, including the table-aware additions.
pub fn controller_features(current: &str, previous: Option<&str>, table: &Table) -> FeatureVector {
    let mut fv = featurize_controller(current, previous);
    fv.extend(controller_table_features(current, table));
    fv
}

pub fn score_sketch(weights: &ModelWeights, features: &FeatureVector, has_previous: bool) -> DecisionDistribution<Sketch> {
    DecisionDistribution {
        choices: Sketch::ALL.to_vec(),
        probs: sketch_instance(features, has_previous).probs(&weights.heads.controller),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Select,
    Where,
}

impl ColumnRole {
    pub fn head(self) -> Head {
        match self {
            ColumnRole::Select => Head::SelectCol,
            ColumnRole::Where => Head::WhereCol,
        }
    }
}

/// Distribution over column indices.
pub fn score_column(
    weights: &ModelWeights,
    question: &str,
    table: &Table,
    role: ColumnRole,
) -> Result<DecisionDistribution<usize>, ScorerError> {
    if table.columns.is_empty() {
        return Err(ScorerError::EmptyTable);
    }
    Ok(DecisionDistribution {
        choices: (0..table.columns.len()).collect(),
        probs: column_instance(question, table).probs(weights.heads.get(role.head())),
    })
}

pub fn score_operator(weights: &ModelWeights, question: &str) -> DecisionDistribution<Operator> {
    DecisionDistribution {
        choices: Operator::ALL.to_vec(),
        probs: operator_instance(question).probs(&weights.heads.operator),
    }
}

/// Mixes the feature model with softmax-normalized overlap scores:
/// `p = λ·p̂ + (1−λ)·softmax(overlap)`.
pub fn combine_value(p_hat: &[f64], overlaps: &[f64], lambda: f64) -> Vec<f64> {
    let q = softmax(overlaps, None);
    p_hat.iter().zip(&q).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect()
}

/// Distribution over the column's distinct non-empty cells.
pub fn score_value(
    weights: &ModelWeights,
    lambda: f64,
    question: &str,
    column: &Column,
) -> Result<DecisionDistribution<Cell>, ScorerError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ScorerError::InvalidLambda(lambda));
    }
    let (inst, cells) = value_instance(question, column);
    if cells.is_empty() {
        return Err(ScorerError::EmptyColumn(column.header.clone()));
    }
    let q = QuestionView::new(question);
    let overlaps: Vec<f64> = cells.iter().map(|c| q.overlap(&c.raw)).collect();
    Ok(DecisionDistribution {
        probs: combine_value(&inst.probs(&weights.heads.value), &overlaps, lambda),
        choices: cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{load_table, olympics_fixture, TableFormat};

    fn sums_to_one(p: &[f64]) -> bool {
        (p.iter().sum::<f64>() - 1.0).abs() < 1e-9
    }

    #[test]
    fn zero_weight_controller() {
        let w = ModelWeights::default();
        let fv = featurize_controller("anything", Some("before"));
        let d = score_sketch(&w, &fv, true);
        assert!(d.probs.iter().all(|&p| (p - 0.2).abs() < 1e-12));
        let d = score_sketch(&w, &featurize_controller("anything", None), false);
        assert_eq!(d.probs, vec![0.5, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn bias_dominates() {
        let mut w = ModelWeights::default();
        w.heads.controller.insert("bias@S_SELECT".into(), 10.0);
        let d = score_sketch(&w, &featurize_controller("which city", Some("x")), true);
        assert_eq!(d.best().unwrap().0, &Sketch::Select);
    }

    #[test]
    fn column_head_hand_weights() {
        let t = olympics_fixture();
        let mut w = ModelWeights::default();
        w.heads.select_col.insert("hdr_exact".into(), 1.0);
        w.heads.select_col.insert("ty=NUMBER&cue=how_many".into(), 1.0);
        let d = score_column(&w, "How many nations participate in that year?", &t, ColumnRole::Select).unwrap();
        // Nations scores 2 (header + cue), Year 1 (header), the others 0.
        let e = std::f64::consts::E;
        let expected = e * e / (e * e + e + 2.0);
        assert_eq!(t.columns[*d.best().unwrap().0].header, "Nations");
        assert!((d.best().unwrap().1 - expected).abs() < 1e-12);
        let uniform = score_column(&ModelWeights::default(), "x", &t, ColumnRole::Where).unwrap();
        assert!(uniform.probs.iter().all(|&p| (p - 0.25).abs() < 1e-12));
    }

    #[test]
    fn single_column_is_certain() {
        let t = load_table("one", "a\n1\n2\n".as_bytes(), TableFormat::Csv).unwrap();
        for role in [ColumnRole::Select, ColumnRole::Where] {
            let d = score_column(&ModelWeights::default(), "q", &t, role).unwrap();
            assert_eq!(d.probs, vec![1.0]);
        }
    }

    #[test]
    fn operator_uniform() {
        let d = score_operator(&ModelWeights::default(), "which year had the most nations?");
        assert!(d.probs.iter().all(|&p| (p - 0.125).abs() < 1e-12));
    }

    #[test]
    fn value_lambda_boundaries() {
        let t = olympics_fixture();
        let col = t.column("Year").unwrap();
        let mut w = ModelWeights::default();
        w.heads.value.insert("freq".into(), 0.3);
        w.heads.value.insert("overlap".into(), 1.7);
        let q = "Which city hosted in 2008?";
        let (inst, _) = value_instance(q, col);
        let p_hat = inst.probs(&w.heads.value);
        assert_eq!(score_value(&w, 1.0, q, col).unwrap().probs, p_hat);
        let qv = QuestionView::new(q);
        let ov: Vec<f64> = col.distinct_cells().iter().map(|c| qv.overlap(&c.raw)).collect();
        assert_eq!(score_value(&w, 0.0, q, col).unwrap().probs, softmax(&ov, None));
        assert!(sums_to_one(&score_value(&w, 0.7, q, col).unwrap().probs));
        assert!(score_value(&w, 1.5, q, col).is_err());
    }

    #[test]
    fn value_mixture_by_hand() {
        let p = combine_value(&[0.5, 0.5], &[1.0, 0.0], 0.5);
        let e = std::f64::consts::E;
        assert!((p[0] - (0.25 + 0.5 * e / (e + 1.0))).abs() < 1e-12);
        assert!((p[1] - (0.25 + 0.5 / (e + 1.0))).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs() {
        let t = load_table("e", "a,b\n,\n".as_bytes(), TableFormat::Csv).unwrap();
        assert!(matches!(
            score_value(&ModelWeights::default(), 0.7, "q", &t.columns[0]),
            Err(ScorerError::EmptyColumn(_))
        ));
    }

    #[test]
    fn softmax_shift_invariance_and_mask() {
        let s = [0.3, -1.2, 4.0, 2.5];
        let a = softmax(&s, None);
        let shifted: Vec<f64> = s.iter().map(|x| x + 123.0).collect();
        let b = softmax(&shifted, None);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let m = softmax(&s, Some(&[true, false, false, true]));
        assert_eq!(m[1], 0.0);
        assert_eq!(m[2], 0.0);
        assert!(sums_to_one(&m));
    }

    #[test]
    fn weights_json_round_trip() {
        let mut w = ModelWeights::default();
        w.heads.operator.insert("cue=most@argmax".into(), 2.5);
        let json = w.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for h in Head::ALL {
            assert!(v["heads"].get(h.name()).is_some());
        }
        assert_eq!(ModelWeights::from_json(&json).unwrap(), w);
        let bad = json.replace("0.7", "1.7");
        assert!(matches!(ModelWeights::from_json(&bad), Err(ScorerError::InvalidLambda(_))));
        assert!(ModelWeights::from_json("{\"version\":\"x\",\"lambda\":0.5}").is_err());
    }
}
