//! Tokenization helpers shared by the typer, the label filters and the scorer.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use rust_decimal::Decimal;

static NUMERIC_MENTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d[\d,]*(?:\.\d+)?").unwrap());

/// Lowercases and collapses runs of whitespace to a single space.
pub fn casefold(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Casefolded maximal runs of alphanumeric characters.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub fn token_set(s: &str) -> BTreeSet<String> {
    tokenize(s).into_iter().collect()
}

/// Lightweight suffix stripper: `ing`, `ed`, `es`, `s`. Never shortens a
/// token below three characters.
pub fn stem(token: &str) -> String {
    for suffix in ["ing", "ed", "es", "s"] {
        if let Some(base) = token.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return base.to_string();
            }
        }
    }
    token.to_string()
}

/// Parses a plain decimal, tolerating thousands separators.
pub fn parse_decimal(s: &str) -> Option<Decimal> {
    let cleaned: String = s.chars().filter(|&c| c != ',').collect();
    if cleaned.is_empty() {
        return None;
    }
    cleaned.parse::<Decimal>().ok().map(|d| d.normalize())
}

/// Every number written in the text, in canonical decimal form. Digits glued
/// to punctuation ("2008?") are still found.
pub fn numeric_mentions(s: &str) -> BTreeSet<Decimal> {
    NUMERIC_MENTION
        .find_iter(s)
        .filter_map(|m| parse_decimal(m.as_str().trim_end_matches(',')))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_strips_punctuation() {
        assert_eq!(tokenize("Which city, in 2008?"), vec!["which", "city", "in", "2008"]);
        assert!(tokenize("  ?! ").is_empty());
    }

    #[test]
    fn stemming_is_conservative() {
        assert_eq!(stem("nations"), "nation");
        assert_eq!(stem("hosted"), "host");
        assert_eq!(stem("running"), "runn");
        assert_eq!(stem("is"), "is");
        assert_eq!(stem("gas"), "gas");
    }

    #[test]
    fn numeric_mentions_handle_separators() {
        let m = numeric_mentions("more than 1,234 people in 2008?");
        assert!(m.contains(&Decimal::from(1234)));
        assert!(m.contains(&Decimal::from(2008)));
        assert_eq!(m.len(), 2);
    }
}
