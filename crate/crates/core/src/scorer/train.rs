//! Training the heads from search labels by stochastic gradient ascent on
//! per-decision log-likelihood with L2 regularization.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    column_instance, controller_features, operator_instance, sketch_instance, value_instance, Head, Instance,
    ModelWeights, Weights, DEFAULT_LAMBDA,
};
use crate::lf::{tags, Action, Sketch};
use crate::search::LabelResult;
use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("no covered labels to train on")]
    NoCoveredLabels,
    #[error("label refers to unknown table `{0}`")]
    UnknownTable(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    /// Fraction of labels held out for the per-head accuracy report.
    pub holdout: f64,
    pub lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 0.1,
            l2: 1e-4,
            seed: 0,
            holdout: 0.1,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return bad("holdout must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        Ok(())
    }
}

/// One supervised decision: the head it trains, the choices, the gold index
/// and its weight (1/|candidates| of the originating label).
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub head: Head,
    pub instance: Instance,
    pub gold: usize,
    pub weight: f64,
    /// Class name used by the majority baseline.
    pub class: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HeadReport {
    pub head: Head,
    pub train_events: usize,
    pub heldout_events: usize,
    /// Weighted held-out accuracy in [0, 1]; absent without held-out events.
    pub accuracy: Option<f64>,
    pub majority_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub report: Vec<HeadReport>,
}

/// Decomposes every candidate of a covered label into per-head events.
pub fn training_events(label: &LabelResult, table: &Table) -> Vec<Event> {
    let n = label.candidates.len();
    if n == 0 {
        return Vec::new();
    }
    let weight = 1.0 / n as f64;
    let q = label.question.as_str();
    let has_prev = label.previous_question.is_some() || label.candidates.iter().any(|c| c.uses_copy());
    let controller = sketch_instance(
        &controller_features(q, label.previous_question.as_deref(), table),
        has_prev,
    );
    let columns = column_instance(q, table);
    let operators = operator_instance(q);
    let mut events = Vec::new();
    for cand in &label.candidates {
        let Some(sketch) = Sketch::classify(&tags(&cand.actions)) else { continue };
        events.push(Event {
            head: Head::Controller,
            instance: controller.clone(),
            gold: sketch.index(),
            weight,
            class: sketch.id().to_string(),
        });
        let mut where_col: Option<&str> = None;
        for action in &cand.actions {
            match action {
                Action::SelectCol(c) | Action::WhereCol(c) => {
                    let Some(idx) = table.column_index(c) else { continue };
                    let head = if matches!(action, Action::SelectCol(_)) {
                        Head::SelectCol
                    } else {
                        where_col = Some(c);
                        Head::WhereCol
                    };
                    events.push(Event {
                        head,
                        instance: columns.clone(),
                        gold: idx,
                        weight,
                        class: idx.to_string(),
                    });
                }
                Action::WhereOp(op) => events.push(Event {
                    head: Head::Operator,
                    instance: operators.clone(),
                    gold: op.index(),
                    weight,
                    class: op.symbol().to_string(),
                }),
                Action::WhereVal(v) => {
                    let Some(col) = where_col.and_then(|c| table.column(c)) else { continue };
                    let (inst, cells) = value_instance(q, col);
                    if let Some(idx) = cells.iter().position(|c| c.raw.trim() == v.trim()) {
                        events.push(Event {
                            head: Head::Value,
                            instance: inst,
                            gold: idx,
                            weight,
                            class: idx.to_string(),
                        });
                    }
                }
                Action::CopySelect | Action::CopyWhere | Action::CopyAll => {}
            }
        }
    }
    events
}

/// Weighted log-likelihood of the gold choices minus `l2/2·‖w‖²`.
pub fn log_likelihood(w: &Weights, events: &[Event], l2: f64) -> f64 {
    let ll: f64 = events
        .iter()
        .map(|e| e.weight * e.instance.probs(w)[e.gold].ln())
        .sum();
    ll - 0.5 * l2 * w.values().map(|x| x * x).sum::<f64>()
}

fn accumulate(w: &Weights, e: &Event, grad: &mut BTreeMap<String, f64>) {
    let probs = e.instance.probs(w);
    for (k, feats) in e.instance.choices.iter().enumerate() {
        let coef = e.weight * (f64::from(u8::from(k == e.gold)) - probs[k]);
        if coef == 0.0 {
            continue;
        }
        for (f, v) in feats {
            *grad.entry(f.clone()).or_insert(0.0) += coef * v;
        }
    }
}

/// Analytic gradient of [`log_likelihood`].
pub fn gradient(w: &Weights, events: &[Event], l2: f64) -> Weights {
    let mut grad = BTreeMap::new();
    for e in events {
        accumulate(w, e, &mut grad);
    }
    for (k, x) in w {
        *grad.entry(k.clone()).or_insert(0.0) -= l2 * x;
    }
    grad
}

fn sgd_step(w: &mut Weights, e: &Event, lr: f64, l2: f64) {
    let mut grad = BTreeMap::new();
    accumulate(w, e, &mut grad);
    for (f, g) in grad {
        let x = w.entry(f).or_insert(0.0);
        *x += lr * (g - l2 * *x);
    }
}

fn predict(w: &Weights, inst: &Instance) -> usize {
    let probs = inst.probs(w);
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

fn weighted_accuracy<'a>(events: impl Iterator<Item = &'a Event>, correct: impl Fn(&Event) -> bool) -> Option<f64> {
    let (mut hit, mut total) = (0.0, 0.0);
    for e in events {
        total += e.weight;
        if correct(e) {
            hit += e.weight;
        }
    }
    (total > 0.0).then(|| hit / total)
}

/// Trains all five heads. Deterministic for a fixed seed.
pub fn train(
    labels: &[LabelResult],
    tables: &HashMap<String, Table>,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let covered: Vec<&LabelResult> = labels.iter().filter(|l| l.covered && !l.candidates.is_empty()).collect();
    if covered.is_empty() {
        return Err(TrainError::NoCoveredLabels);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..covered.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = ((config.holdout * covered.len() as f64) as usize).min(covered.len() - 1);

    let mut train_events = Vec::new();
    let mut held_events = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        let label = covered[i];
        let table = tables
            .get(&label.table)
            .ok_or_else(|| TrainError::UnknownTable(label.table.clone()))?;
        let events = training_events(label, table);
        if rank < n_hold {
            held_events.extend(events);
        } else {
            train_events.extend(events);
        }
    }
    // Keep the original label order for the SGD pass, then reshuffle per epoch.
    let mut weights = ModelWeights::zero(config.lambda);
    let mut idx: Vec<usize> = (0..train_events.len()).collect();
    for _ in 0..config.epochs {
        idx.shuffle(&mut rng);
        for &i in &idx {
            let e = &train_events[i];
            sgd_step(weights.heads.get_mut(e.head), e, config.learning_rate, config.l2);
        }
    }

    let report = Head::ALL
        .iter()
        .map(|&head| {
            let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
            for e in train_events.iter().filter(|e| e.head == head) {
                *counts.entry(&e.class).or_insert(0.0) += e.weight;
            }
            let majority = counts
                .iter()
                .fold(None::<(&str, f64)>, |best, (c, n)| match best {
                    Some((_, m)) if m >= *n => best,
                    _ => Some((c, *n)),
                })
                .map(|(c, _)| c.to_string());
            let held = || held_events.iter().filter(|e| e.head == head);
            let w = weights.heads.get(head);
            HeadReport {
                head,
                train_events: train_events.iter().filter(|e| e.head == head).count(),
                heldout_events: held().count(),
                accuracy: weighted_accuracy(held(), |e| predict(w, &e.instance) == e.gold),
                majority_baseline: weighted_accuracy(held(), |e| majority.as_deref() == Some(e.class.as_str())),
            }
        })
        .collect();
    Ok(TrainOutcome { weights, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{search_labels, QaTurn, SearchConfig};
    use crate::table::olympics_fixture;
    use rand::Rng;

    fn olympics_labels() -> (Vec<LabelResult>, HashMap<String, Table>) {
        let t = olympics_fixture();
        let turn = |q: &str, a: &str| QaTurn {
            question: q.into(),
            answers: vec![a.into()],
        };
        let labels = search_labels(
            &[
                turn("Which city hosted the 2008 Summer Olympics?", "Beijing"),
                turn("How many nations participate in that year?", "204"),
            ],
            &t,
            &SearchConfig::default(),
        );
        (labels, HashMap::from([(t.id.clone(), t)]))
    }

    #[test]
    fn empty_or_uncovered_labels() {
        let (mut labels, tables) = olympics_labels();
        assert_eq!(train(&[], &tables, &TrainConfig::default()), Err(TrainError::NoCoveredLabels));
        for l in &mut labels {
            l.covered = false;
        }
        assert_eq!(train(&labels, &tables, &TrainConfig::default()), Err(TrainError::NoCoveredLabels));
    }

    #[test]
    fn zero_epochs_leaves_zero_weights() {
        let (labels, tables) = olympics_labels();
        let out = train(&labels, &tables, &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
        assert_eq!(out.weights, ModelWeights::zero(DEFAULT_LAMBDA));
    }

    #[test]
    fn events_decompose_copy_forms() {
        let (labels, tables) = olympics_labels();
        let t = &tables["olympics"];
        let ev = training_events(&labels[1], t);
        let heads: Vec<Head> = ev.iter().map(|e| e.head).collect();
        assert_eq!(heads, vec![Head::Controller, Head::SelectCol]);
        assert_eq!(ev[0].class, "S_COPYWHERE_SELECT");
        assert_eq!(ev[1].gold, t.column_index("Nations").unwrap());
        let first = training_events(&labels[0], t);
        assert!(first.iter().any(|e| e.head == Head::Value && e.class == "1"));
    }

    #[test]
    fn deterministic_and_learns_fixture() {
        let (labels, tables) = olympics_labels();
        let cfg = TrainConfig {
            holdout: 0.0,
            ..TrainConfig::default()
        };
        let a = train(&labels, &tables, &cfg).unwrap();
        let b = train(&labels, &tables, &cfg).unwrap();
        assert_eq!(a.weights.to_json(), b.weights.to_json());
        let t = &tables["olympics"];
        let ev = training_events(&labels[1], t);
        assert_eq!(predict(&a.weights.heads.controller, &ev[0].instance), ev[0].gold);
    }

    fn random_events(rng: &mut ChaCha8Rng) -> Vec<Event> {
        (0..rng.gen_range(1..4))
            .map(|_| {
                let k = rng.gen_range(2..5);
                let choices = (0..k)
                    .map(|_| {
                        (0..rng.gen_range(1..4))
                            .map(|_| (format!("f{}", rng.gen_range(0..6)), rng.gen_range(-2.0..2.0)))
                            .collect()
                    })
                    .collect();
                Event {
                    head: Head::Operator,
                    instance: Instance::new(choices),
                    gold: rng.gen_range(0..k),
                    weight: rng.gen_range(0.1..1.0),
                    class: String::new(),
                }
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let events = random_events(&mut rng);
            let w: Weights = (0..6).map(|i| (format!("f{i}"), rng.gen_range(-1.0..1.0))).collect();
            let l2 = 0.1;
            let g = gradient(&w, &events, l2);
            let h = 1e-5;
            for (k, &x) in &w {
                let mut plus = w.clone();
                plus.insert(k.clone(), x + h);
                let mut minus = w.clone();
                minus.insert(k.clone(), x - h);
                let num = (log_likelihood(&plus, &events, l2) - log_likelihood(&minus, &events, l2)) / (2.0 * h);
                let ana = g.get(k).copied().unwrap_or(0.0);
                assert!((num - ana).abs() <= 1e-6 * (1.0 + num.abs().max(ana.abs())));
            }
        }
    }
}
