use std::cmp::Ordering;
use std::fmt;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::typing::{self, CellType};
use crate::text;

/// Typed payload of a cell, used for comparisons in the executor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum NormalizedValue {
    Number(Decimal),
    Year(i32),
    Date {
        year: Option<i32>,
        month: Option<u32>,
        day: Option<u32>,
    },
    /// Seconds since midnight.
    Time(u32),
    Bool(bool),
    Text(String),
}

impl NormalizedValue {
    /// Numeric view used by ordering comparisons and argmin/argmax.
    pub fn as_number(&self) -> Option<Decimal> {
        match self {
            NormalizedValue::Number(d) => Some(*d),
            NormalizedValue::Year(y) => Some(Decimal::from(*y)),
            NormalizedValue::Time(s) => Some(Decimal::from(*s)),
            _ => None,
        }
    }

    /// Ordering between two values of the same comparable kind. Text and
    /// booleans have no order.
    pub fn typed_cmp(&self, other: &NormalizedValue) -> Option<Ordering> {
        use NormalizedValue::*;
        match (self, other) {
            (Number(_) | Year(_), Number(_) | Year(_)) => {
                Some(self.as_number()?.cmp(&other.as_number()?))
            }
            (Time(a), Time(b)) => Some(a.cmp(b)),
            (
                Date { year, month, day },
                Date {
                    year: y2,
                    month: m2,
                    day: d2,
                },
            ) => Some(
                (year.unwrap_or(0), month.unwrap_or(0), day.unwrap_or(0)).cmp(&(
                    y2.unwrap_or(0),
                    m2.unwrap_or(0),
                    d2.unwrap_or(0),
                )),
            ),
            _ => None,
        }
    }

    /// Equality under typed semantics; `None` when the kinds are incomparable.
    pub fn typed_eq(&self, other: &NormalizedValue) -> Option<bool> {
        use NormalizedValue::*;
        match (self, other) {
            (Text(a), Text(b)) => Some(a == b),
            (Bool(a), Bool(b)) => Some(a == b),
            (Date { .. }, Date { .. }) => Some(self == other),
            _ => self.typed_cmp(other).map(|o| o == Ordering::Equal),
        }
    }

    pub fn is_text(&self) -> bool {
        matches!(self, NormalizedValue::Text(_))
    }

    /// Text form that normalizes back to the same value.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for NormalizedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormalizedValue::Number(d) => write!(f, "{d}"),
            NormalizedValue::Year(y) => write!(f, "{y}"),
            NormalizedValue::Date { year, month, day } => match (year, month, day) {
                (Some(y), Some(m), Some(d)) => write!(f, "{y:04}-{m:02}-{d:02}"),
                (Some(y), Some(m), None) => write!(f, "{} {y}", typing::MONTHS[*m as usize - 1]),
                (None, Some(m), Some(d)) => write!(f, "{} {d}", typing::MONTHS[*m as usize - 1]),
                (Some(y), None, _) => write!(f, "{y}"),
                _ => Ok(()),
            },
            NormalizedValue::Time(s) => {
                let (h, m, sec) = (s / 3600, (s / 60) % 60, s % 60);
                if sec == 0 {
                    write!(f, "{h:02}:{m:02}")
                } else {
                    write!(f, "{h:02}:{m:02}:{sec:02}")
                }
            }
            NormalizedValue::Bool(b) => write!(f, "{b}"),
            NormalizedValue::Text(t) => f.write_str(t),
        }
    }
}

/// Normalizes raw cell text under a given type. Falls back to casefolded,
/// whitespace-collapsed text whenever the typed parse fails.
pub fn normalize_value(raw: &str, ty: CellType) -> NormalizedValue {
    let trimmed = raw.trim();
    let typed = match ty {
        CellType::Number => typing::parse_number(trimmed).map(NormalizedValue::Number),
        CellType::Unit => typing::parse_unit(trimmed)
            .or_else(|| typing::parse_number(trimmed))
            .map(NormalizedValue::Number),
        CellType::Year => typing::parse_year(trimmed).map(NormalizedValue::Year),
        CellType::Date => typing::parse_date(trimmed)
            .map(|(year, month, day)| NormalizedValue::Date { year, month, day }),
        CellType::Time => typing::parse_time(trimmed).map(NormalizedValue::Time),
        CellType::Boolean => typing::parse_bool(trimmed).map(NormalizedValue::Bool),
        _ => None,
    };
    typed.unwrap_or_else(|| NormalizedValue::Text(text::casefold(trimmed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn number_with_separators() {
        assert_eq!(
            normalize_value("1,234", CellType::Number),
            NormalizedValue::Number(Decimal::from(1234))
        );
    }

    #[test]
    fn text_is_casefolded_and_trimmed() {
        assert_eq!(
            normalize_value("  Beijing ", CellType::Text),
            NormalizedValue::Text("beijing".into())
        );
    }

    #[test]
    fn year_parses_as_integer() {
        assert_eq!(normalize_value("2008", CellType::Year), NormalizedValue::Year(2008));
    }

    #[test]
    fn failed_typed_parse_falls_back_to_text() {
        assert_eq!(
            normalize_value("n/a", CellType::Number),
            NormalizedValue::Text("n/a".into())
        );
    }

    #[test]
    fn dates_and_times_render_back() {
        for (raw, ty) in [
            ("2008-08-08", CellType::Date),
            ("8 August 2008", CellType::Date),
            ("August 8, 2008", CellType::Date),
            ("14:30", CellType::Time),
            ("2:30 pm", CellType::Time),
            ("12 kg", CellType::Unit),
        ] {
            let v = normalize_value(raw, ty);
            assert!(!v.is_text(), "{raw} did not parse");
            assert_eq!(normalize_value(&v.render(), ty), v);
        }
    }

    #[test]
    fn mixed_numeric_kinds_compare() {
        let y = NormalizedValue::Year(2008);
        let n = NormalizedValue::Number(Decimal::from(2008));
        assert_eq!(y.typed_eq(&n), Some(true));
        assert_eq!(NormalizedValue::Text("a".into()).typed_cmp(&NormalizedValue::Text("b".into())), None);
    }

    proptest! {
        #[test]
        fn text_normalization_is_idempotent(s in "\\PC{0,24}") {
            let once = normalize_value(&s, CellType::Text);
            prop_assert_eq!(normalize_value(&once.render(), CellType::Text), once);
        }
    }
}
