//! Logical forms, the action alphabet that generates them, and sketches.

mod grammar;
mod syntax;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grammar::{assemble, legal_successors, Next};
pub use syntax::{parse_lf, render};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LfError {
    #[error("action sequence is not a path through the transition graph (at position {position})")]
    IllegalSequence { position: usize },
    #[error("copy action used without a previous logical form")]
    MissingPrevious,
    #[error("malformed condition: {0}")]
    MalformedCondition(&'static str),
    #[error("copying would produce more than two conditions")]
    TooManyConditions,
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Neq,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Geq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Leq,
    #[serde(rename = "argmin")]
    Argmin,
    #[serde(rename = "argmax")]
    Argmax,
}

impl Operator {
    pub const ALL: [Operator; 8] = [
        Operator::Eq,
        Operator::Neq,
        Operator::Gt,
        Operator::Geq,
        Operator::Lt,
        Operator::Leq,
        Operator::Argmin,
        Operator::Argmax,
    ];

    /// Comparison operators take a value; argmin/argmax do not.
    pub fn takes_value(self) -> bool {
        !matches!(self, Operator::Argmin | Operator::Argmax)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Eq => "=",
            Operator::Neq => "!=",
            Operator::Gt => ">",
            Operator::Geq => ">=",
            Operator::Lt => "<",
            Operator::Leq => "<=",
            Operator::Argmin => "argmin",
            Operator::Argmax => "argmax",
        }
    }

    pub fn index(self) -> usize {
        Operator::ALL.iter().position(|&o| o == self).unwrap()
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Operator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operator::ALL
            .into_iter()
            .find(|o| o.symbol().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown operator `{s}`"))
    }
}

/// One WHERE constraint. `value` is the literal text of the comparand; it is
/// normalized against the column type when executed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    #[serde(rename = "col")]
    pub column: String,
    pub op: Operator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl Condition {
    pub fn compare(column: impl Into<String>, op: Operator, value: impl Into<String>) -> Self {
        debug_assert!(op.takes_value());
        Condition {
            column: column.into(),
            op,
            value: Some(value.into()),
        }
    }

    pub fn extremum(column: impl Into<String>, op: Operator) -> Self {
        debug_assert!(!op.takes_value());
        Condition {
            column: column.into(),
            op,
            value: None,
        }
    }

    /// Value present exactly when the operator is a comparison.
    pub fn is_well_formed(&self) -> bool {
        self.op.takes_value() == self.value.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogicalForm {
    #[serde(rename = "select")]
    pub select_column: String,
    #[serde(default)]
    pub conditions: Vec<Condition>,
}

impl LogicalForm {
    pub fn select(column: impl Into<String>) -> Self {
        LogicalForm {
            select_column: column.into(),
            conditions: Vec::new(),
        }
    }

    pub fn with_condition(mut self, cond: Condition) -> Self {
        self.conditions.push(cond);
        self
    }

    /// Every column name the form mentions.
    pub fn columns(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.select_column.as_str())
            .chain(self.conditions.iter().map(|c| c.column.as_str()))
    }
}

impl fmt::Display for LogicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionTag {
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
    A7,
}

impl ActionTag {
    pub const ALL: [ActionTag; 7] = [
        ActionTag::A1,
        ActionTag::A2,
        ActionTag::A3,
        ActionTag::A4,
        ActionTag::A5,
        ActionTag::A6,
        ActionTag::A7,
    ];

    pub fn is_copy(self) -> bool {
        matches!(self, ActionTag::A5 | ActionTag::A6 | ActionTag::A7)
    }
}

impl fmt::Display for ActionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// A generative step. A1/A2 carry a column, A3 an operator, A4 a cell value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "action", content = "arg")]
pub enum Action {
    #[serde(rename = "A1")]
    SelectCol(String),
    #[serde(rename = "A2")]
    WhereCol(String),
    #[serde(rename = "A3")]
    WhereOp(Operator),
    #[serde(rename = "A4")]
    WhereVal(String),
    #[serde(rename = "A5")]
    CopySelect,
    #[serde(rename = "A6")]
    CopyWhere,
    #[serde(rename = "A7")]
    CopyAll,
}

impl Action {
    pub fn tag(&self) -> ActionTag {
        match self {
            Action::SelectCol(_) => ActionTag::A1,
            Action::WhereCol(_) => ActionTag::A2,
            Action::WhereOp(_) => ActionTag::A3,
            Action::WhereVal(_) => ActionTag::A4,
            Action::CopySelect => ActionTag::A5,
            Action::CopyWhere => ActionTag::A6,
            Action::CopyAll => ActionTag::A7,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::SelectCol(c) | Action::WhereCol(c) => write!(f, "{}({c})", self.tag()),
            Action::WhereOp(o) => write!(f, "A3({o})"),
            Action::WhereVal(v) => write!(f, "A4({v})"),
            _ => write!(f, "{}", self.tag()),
        }
    }
}

pub fn tags(actions: &[Action]) -> Vec<ActionTag> {
    actions.iter().map(Action::tag).collect()
}

/// The five argument-free action templates the controller chooses between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sketch {
    #[serde(rename = "S_SELECT")]
    Select,
    #[serde(rename = "S_SELECT_WHERE")]
    SelectWhere,
    #[serde(rename = "S_COPYSEL_WHERE")]
    CopySelectWhere,
    #[serde(rename = "S_COPYWHERE_SELECT")]
    CopyWhereSelect,
    #[serde(rename = "S_COPYALL_WHERE")]
    CopyAllWhere,
}

impl Sketch {
    pub const ALL: [Sketch; 5] = [
        Sketch::Select,
        Sketch::SelectWhere,
        Sketch::CopySelectWhere,
        Sketch::CopyWhereSelect,
        Sketch::CopyAllWhere,
    ];

    pub fn action_tags(self) -> &'static [ActionTag] {
        use ActionTag::*;
        match self {
            Sketch::Select => &[A1],
            Sketch::SelectWhere => &[A1, A2, A3, A4],
            Sketch::CopySelectWhere => &[A5, A2, A3, A4],
            Sketch::CopyWhereSelect => &[A6, A1],
            Sketch::CopyAllWhere => &[A7, A2, A3, A4],
        }
    }

    pub fn uses_copy(self) -> bool {
        self.action_tags()[0].is_copy()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn id(self) -> &'static str {
        match self {
            Sketch::Select => "S_SELECT",
            Sketch::SelectWhere => "S_SELECT_WHERE",
            Sketch::CopySelectWhere => "S_COPYSEL_WHERE",
            Sketch::CopyWhereSelect => "S_COPYWHERE_SELECT",
            Sketch::CopyAllWhere => "S_COPYALL_WHERE",
        }
    }

    /// Maps an action tag sequence to its sketch. A sequence whose condition
    /// ends at A3 (argmin/argmax) belongs to the same sketch as the one with A4.
    pub fn classify(tags: &[ActionTag]) -> Option<Sketch> {
        Sketch::ALL.into_iter().find(|s| {
            let full = s.action_tags();
            tags == full || (full.last() == Some(&ActionTag::A4) && tags == &full[..full.len() - 1])
        })
    }
}

impl fmt::Display for Sketch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Sketch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Sketch::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| format!("unknown sketch `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventories_have_fixed_sizes() {
        assert_eq!(Operator::ALL.len(), 8);
        assert_eq!(Sketch::ALL.len(), 5);
        assert_eq!(ActionTag::ALL.len(), 7);
    }

    #[test]
    fn classify_handles_extremum_sketches() {
        use ActionTag::*;
        assert_eq!(Sketch::classify(&[A1, A2, A3]), Some(Sketch::SelectWhere));
        assert_eq!(Sketch::classify(&[A7, A2, A3, A4]), Some(Sketch::CopyAllWhere));
        assert_eq!(Sketch::classify(&[A6, A1]), Some(Sketch::CopyWhereSelect));
        assert_eq!(Sketch::classify(&[A6]), None);
        assert_eq!(Sketch::classify(&[A1, A2]), None);
    }

    #[test]
    fn lf_json_shape() {
        let lf = LogicalForm::select("City")
            .with_condition(Condition::compare("Year", Operator::Eq, "2008"))
            .with_condition(Condition::extremum("Nations", Operator::Argmax));
        let json = serde_json::to_value(&lf).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "select": "City",
                "conditions": [
                    {"col": "Year", "op": "=", "value": "2008"},
                    {"col": "Nations", "op": "argmax"}
                ]
            })
        );
        let back: LogicalForm = serde_json::from_value(json).unwrap();
        assert_eq!(back, lf);
    }

    #[test]
    fn action_json_shape() {
        let a = vec![Action::CopyWhere, Action::SelectCol("Nations".into())];
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            r#"[{"action":"A6"},{"action":"A1","arg":"Nations"}]"#
        );
    }
}
