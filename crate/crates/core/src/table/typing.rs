//! Rule-based cell typer and header vote.
//!
//! Cascade, first match wins: BOOLEAN, YEAR, DATE, TIME, NUMBER, UNIT,
//! COUNTRY, SEQUENCE, then TEXT. LOCATION and PERSON are never produced here;
//! they exist for externally typed tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CellType {
    Country,
    Location,
    Person,
    Date,
    Year,
    Time,
    Text,
    Number,
    Boolean,
    Sequence,
    Unit,
}

impl CellType {
    /// Declaration order; also the header-vote tie-break order.
    pub const ALL: [CellType; 11] = [
        CellType::Country,
        CellType::Location,
        CellType::Person,
        CellType::Date,
        CellType::Year,
        CellType::Time,
        CellType::Text,
        CellType::Number,
        CellType::Boolean,
        CellType::Sequence,
        CellType::Unit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CellType::Country => "COUNTRY",
            CellType::Location => "LOCATION",
            CellType::Person => "PERSON",
            CellType::Date => "DATE",
            CellType::Year => "YEAR",
            CellType::Time => "TIME",
            CellType::Text => "TEXT",
            CellType::Number => "NUMBER",
            CellType::Boolean => "BOOLEAN",
            CellType::Sequence => "SEQUENCE",
            CellType::Unit => "UNIT",
        }
    }

    /// Types whose cells compare numerically.
    pub fn is_numeric(self) -> bool {
        matches!(self, CellType::Number | CellType::Year | CellType::Unit)
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CellType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown cell type `{s}`"))
    }
}

pub(crate) const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

const UNIT_TOKENS: &[&str] = &[
    "kg", "g", "mg", "t", "km", "m", "cm", "mm", "mi", "ft", "yd", "lb", "lbs", "oz", "$", "€",
    "£", "%", "ha", "l", "ml", "kw", "mw", "hp", "mph", "kph", "km/h", "s", "sec", "min", "h",
];

const ORDINAL_WORDS: &[&str] = &[
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
    "eleventh", "twelfth", "last",
];

const COUNTRIES: &[&str] = &[
    "afghanistan", "albania", "algeria", "andorra", "angola", "antigua and barbuda", "argentina",
    "armenia", "australia", "austria", "azerbaijan", "bahamas", "bahrain", "bangladesh",
    "barbados", "belarus", "belgium", "belize", "benin", "bhutan", "bolivia",
    "bosnia and herzegovina", "botswana", "brazil", "brunei", "bulgaria", "burkina faso",
    "burundi", "cambodia", "cameroon", "canada", "cape verde", "central african republic", "chad",
    "chile", "china", "colombia", "comoros", "congo", "costa rica", "croatia", "cuba", "cyprus",
    "czech republic", "czechia", "denmark", "djibouti", "dominica", "dominican republic",
    "east germany", "ecuador", "egypt", "el salvador", "england", "equatorial guinea", "eritrea",
    "estonia", "eswatini", "ethiopia", "fiji", "finland", "france", "gabon", "gambia", "georgia",
    "germany", "ghana", "great britain", "greece", "grenada", "guatemala", "guinea",
    "guinea-bissau", "guyana", "haiti", "honduras", "hong kong", "hungary", "iceland", "india",
    "indonesia", "iran", "iraq", "ireland", "israel", "italy", "ivory coast", "jamaica", "japan",
    "jordan", "kazakhstan", "kenya", "kiribati", "kosovo", "kuwait", "kyrgyzstan", "laos",
    "latvia", "lebanon", "lesotho", "liberia", "libya", "liechtenstein", "lithuania",
    "luxembourg", "madagascar", "malawi", "malaysia", "maldives", "mali", "malta",
    "marshall islands", "mauritania", "mauritius", "mexico", "micronesia", "moldova", "monaco",
    "mongolia", "montenegro", "morocco", "mozambique", "myanmar", "namibia", "nauru", "nepal",
    "netherlands", "new zealand", "nicaragua", "niger", "nigeria", "north korea",
    "north macedonia", "northern ireland", "norway", "oman", "pakistan", "palau", "palestine",
    "panama", "papua new guinea", "paraguay", "peru", "philippines", "poland", "portugal",
    "puerto rico", "qatar", "romania", "russia", "rwanda", "saint kitts and nevis",
    "saint lucia", "samoa", "san marino", "saudi arabia", "scotland", "senegal", "serbia",
    "seychelles", "sierra leone", "singapore", "slovakia", "slovenia", "solomon islands",
    "somalia", "south africa", "south korea", "south sudan", "soviet union", "spain",
    "sri lanka", "sudan", "suriname", "sweden", "switzerland", "syria", "taiwan", "tajikistan",
    "tanzania", "thailand", "timor-leste", "togo", "tonga", "trinidad and tobago", "tunisia",
    "turkey", "turkmenistan", "tuvalu", "uganda", "ukraine", "united arab emirates",
    "united kingdom", "united states", "uruguay", "usa", "ussr", "uzbekistan", "vanuatu",
    "vatican city", "venezuela", "vietnam", "wales", "west germany", "yemen", "yugoslavia",
    "zambia", "zimbabwe",
];

static COUNTRY_SET: LazyLock<HashSet<&'static str>> =
    LazyLock::new(|| COUNTRIES.iter().copied().collect());

static NUMBER_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?%?$|^[+-]?\.\d+%?$").unwrap()
});
static ISO_DATE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d{4})-(\d{1,2})-(\d{1,2})$").unwrap());
static DMY_DATE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?i)(\d{1,2})\s+([a-z]+)\.?,?\s+(\d{4})$").unwrap());
static MDY_DATE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?i)([a-z]+)\.?\s+(\d{1,2}),?\s+(\d{4})$").unwrap());
static TIME_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?i)(\d{1,2}):(\d{2})(?::(\d{2}))?\s*(am|pm|a\.m\.|p\.m\.)?$").unwrap()
});
static ORDINAL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?i)\d+(?:st|nd|rd|th)$").unwrap());
static ROMAN_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^M{0,4}(?:CM|CD|D?C{0,3})(?:XC|XL|L?X{0,3})(?:IX|IV|V?I{0,3})$").unwrap()
});

pub(crate) fn parse_bool(s: &str) -> Option<bool> {
    match s.to_lowercase().as_str() {
        "true" | "yes" => Some(true),
        "false" | "no" => Some(false),
        _ => None,
    }
}

pub(crate) fn parse_year(s: &str) -> Option<i32> {
    if s.len() != 4 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let y: i32 = s.parse().ok()?;
    (1000..=2999).contains(&y).then_some(y)
}

fn month_index(name: &str) -> Option<u32> {
    let name = name.to_lowercase();
    if name.len() < 3 {
        return None;
    }
    MONTHS
        .iter()
        .position(|m| *m == name || (name.len() == 3 && m.starts_with(&name)))
        .map(|i| i as u32 + 1)
}

fn valid_day(month: u32, day: u32) -> bool {
    (1..=12).contains(&month) && (1..=31).contains(&day)
}

pub(crate) fn parse_date(s: &str) -> Option<(Option<i32>, Option<u32>, Option<u32>)> {
    let (y, m, d) = if let Some(c) = ISO_DATE_RE.captures(s) {
        (c[1].parse().ok()?, c[2].parse().ok()?, c[3].parse().ok()?)
    } else if let Some(c) = DMY_DATE_RE.captures(s) {
        (c[3].parse().ok()?, month_index(&c[2])?, c[1].parse().ok()?)
    } else {
        let c = MDY_DATE_RE.captures(s)?;
        (c[3].parse().ok()?, month_index(&c[1])?, c[2].parse().ok()?)
    };
    valid_day(m, d).then_some((Some(y), Some(m), Some(d)))
}

pub(crate) fn parse_time(s: &str) -> Option<u32> {
    let c = TIME_RE.captures(s)?;
    let mut h: u32 = c[1].parse().ok()?;
    let m: u32 = c[2].parse().ok()?;
    let sec: u32 = c.get(3).map_or(Some(0), |x| x.as_str().parse().ok())?;
    if m > 59 || sec > 59 {
        return None;
    }
    match c.get(4).map(|x| x.as_str().to_lowercase()) {
        Some(suffix) => {
            if !(1..=12).contains(&h) {
                return None;
            }
            let pm = suffix.starts_with('p');
            h %= 12;
            if pm {
                h += 12;
            }
        }
        None if h > 23 => return None,
        None => {}
    }
    Some(h * 3600 + m * 60 + sec)
}

pub(crate) fn parse_number(s: &str) -> Option<Decimal> {
    if !NUMBER_RE.is_match(s) {
        return None;
    }
    text::parse_decimal(s.trim_end_matches('%').trim_start_matches('+'))
}

/// Numeric part of a number-with-unit cell ("12 kg", "$5", "3.5km").
pub(crate) fn parse_unit(s: &str) -> Option<Decimal> {
    let lower = s.to_lowercase();
    for symbol in ["$", "€", "£"] {
        if let Some(n) = lower.strip_prefix(symbol).and_then(|rest| parse_number(rest.trim())) {
            return Some(n);
        }
    }
    UNIT_TOKENS.iter().find_map(|unit| {
        lower
            .strip_suffix(unit)
            .and_then(|rest| parse_number(rest.trim_end()))
    })
}

fn is_sequence(s: &str) -> bool {
    ORDINAL_RE.is_match(s) || ORDINAL_WORDS.contains(&s.to_lowercase().as_str()) || ROMAN_RE.is_match(s)
}

/// Types one cell's raw text. Deterministic and total.
pub fn infer_cell_type(raw: &str) -> CellType {
    let s = raw.trim();
    if s.is_empty() {
        return CellType::Text;
    }
    if parse_bool(s).is_some() {
        CellType::Boolean
    } else if parse_year(s).is_some() {
        CellType::Year
    } else if parse_date(s).is_some() {
        CellType::Date
    } else if parse_time(s).is_some() {
        CellType::Time
    } else if parse_number(s).is_some() {
        CellType::Number
    } else if parse_unit(s).is_some() {
        CellType::Unit
    } else if COUNTRY_SET.contains(text::casefold(s).as_str()) {
        CellType::Country
    } else if is_sequence(s) {
        CellType::Sequence
    } else {
        CellType::Text
    }
}

/// Plurality vote over the non-TEXT cell types; TEXT when none exist. Ties go
/// to the earliest type in declaration order.
pub fn infer_header_type(cells: &[CellType]) -> CellType {
    let mut votes: BTreeMap<CellType, usize> = BTreeMap::new();
    for &t in cells.iter().filter(|&&t| t != CellType::Text) {
        *votes.entry(t).or_default() += 1;
    }
    // Equal counts rank the earlier declared type higher.
    votes
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map_or(CellType::Text, |(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cascade_examples() {
        assert_eq!(infer_cell_type("2008"), CellType::Year);
        assert_eq!(infer_cell_type("204"), CellType::Number);
        assert_eq!(infer_cell_type(""), CellType::Text);
        assert_eq!(infer_cell_type("true"), CellType::Boolean);
        assert_eq!(infer_cell_type("No"), CellType::Boolean);
        assert_eq!(infer_cell_type("3000"), CellType::Number);
        assert_eq!(infer_cell_type("0999"), CellType::Number);
        assert_eq!(infer_cell_type("2008-08-08"), CellType::Date);
        assert_eq!(infer_cell_type("8 August 2008"), CellType::Date);
        assert_eq!(infer_cell_type("Aug 8, 2008"), CellType::Date);
        assert_eq!(infer_cell_type("10:45"), CellType::Time);
        assert_eq!(infer_cell_type("7:05 pm"), CellType::Time);
        assert_eq!(infer_cell_type("1,234.5"), CellType::Number);
        assert_eq!(infer_cell_type("-12%"), CellType::Number);
        assert_eq!(infer_cell_type("12 kg"), CellType::Unit);
        assert_eq!(infer_cell_type("$300"), CellType::Unit);
        assert_eq!(infer_cell_type("China"), CellType::Country);
        assert_eq!(infer_cell_type("united  kingdom"), CellType::Country);
        assert_eq!(infer_cell_type("3rd"), CellType::Sequence);
        assert_eq!(infer_cell_type("XIV"), CellType::Sequence);
        assert_eq!(infer_cell_type("second"), CellType::Sequence);
        assert_eq!(infer_cell_type("Beijing"), CellType::Text);
        assert_eq!(infer_cell_type("mix"), CellType::Text);
    }

    #[test]
    fn header_vote() {
        use CellType::*;
        assert_eq!(infer_header_type(&[Year, Year, Number]), Year);
        assert_eq!(infer_header_type(&[]), Text);
        assert_eq!(infer_header_type(&[Number, Year]), Year);
        assert_eq!(infer_header_type(&[Text, Text, Country]), Country);
        assert_eq!(infer_header_type(&[Unit, Number, Unit, Number]), Number);
    }

    #[test]
    fn type_names_round_trip() {
        for t in CellType::ALL {
            assert_eq!(t.as_str().parse::<CellType>().unwrap(), t);
        }
        assert_eq!(CellType::ALL.len(), 11);
    }
}
