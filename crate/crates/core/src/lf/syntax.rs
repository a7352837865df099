//! Canonical text syntax:
//!
//! ```text
//! SELECT <col> [WHERE <col> <op> [<val>] [AND <col> <op> [<val>]]]
//! ```
//!
//! Names and values are written bare unless they are empty, contain
//! whitespace, quotes or backslashes, or collide with a keyword or operator;
//! those are double-quoted with `\"` and `\\` escapes.

use super::{Condition, LfError, LogicalForm, Operator};

const KEYWORDS: [&str; 3] = ["SELECT", "WHERE", "AND"];

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s.chars().any(|c| c.is_whitespace() || c == '"' || c == '\\')
        || KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(s))
        || s.parse::<Operator>().is_ok()
}

fn quote(s: &str) -> String {
    if !needs_quotes(s) {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

pub fn render(lf: &LogicalForm) -> String {
    let mut out = format!("SELECT {}", quote(&lf.select_column));
    for (i, cond) in lf.conditions.iter().enumerate() {
        out.push_str(if i == 0 { " WHERE " } else { " AND " });
        out.push_str(&quote(&cond.column));
        out.push(' ');
        out.push_str(cond.op.symbol());
        if let Some(v) = &cond.value {
            out.push(' ');
            out.push_str(&quote(v));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    quoted: bool,
    offset: usize,
}

impl Token {
    fn is_keyword(&self, kw: &str) -> bool {
        !self.quoted && self.text.eq_ignore_ascii_case(kw)
    }

    fn operator(&self) -> Option<Operator> {
        if self.quoted {
            None
        } else {
            self.text.parse().ok()
        }
    }
}

fn syntax(offset: usize, message: impl Into<String>) -> LfError {
    LfError::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(input: &str) -> Result<Vec<Token>, LfError> {
    let mut tokens = Vec::new();
    let mut chars = input.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '"' {
            chars.next();
            let mut text = String::new();
            let mut closed = false;
            while let Some((i, c)) = chars.next() {
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match chars.next() {
                        Some((_, e)) => text.push(e),
                        None => return Err(syntax(i, "dangling escape")),
                    },
                    _ => text.push(c),
                }
            }
            if !closed {
                return Err(syntax(start, "unterminated quoted string"));
            }
            tokens.push(Token {
                text,
                quoted: true,
                offset: start,
            });
        } else {
            let mut end = start;
            while let Some(&(i, c)) = chars.peek() {
                if c.is_whitespace() || c == '"' {
                    break;
                }
                end = i + c.len_utf8();
                chars.next();
            }
            tokens.push(Token {
                text: input[start..end].to_string(),
                quoted: false,
                offset: start,
            });
        }
    }
    Ok(tokens)
}

struct Cursor<'a> {
    tokens: &'a [Token],
    pos: usize,
    len: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self, what: &str) -> Result<&'a Token, LfError> {
        let t = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| syntax(self.len, format!("expected {what}, found end of input")))?;
        self.pos += 1;
        Ok(t)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), LfError> {
        let t = self.next(kw)?;
        if t.is_keyword(kw) {
            Ok(())
        } else {
            Err(syntax(t.offset, format!("expected {kw}, found `{}`", t.text)))
        }
    }

    fn name(&mut self, what: &str) -> Result<String, LfError> {
        let t = self.next(what)?;
        if !t.quoted && (KEYWORDS.iter().any(|k| t.is_keyword(k)) || t.operator().is_some()) {
            return Err(syntax(t.offset, format!("expected {what}, found `{}`", t.text)));
        }
        Ok(t.text.clone())
    }

    fn condition(&mut self) -> Result<Condition, LfError> {
        let column = self.name("column name")?;
        let t = self.next("operator")?;
        let op = t
            .operator()
            .ok_or_else(|| syntax(t.offset, format!("expected operator, found `{}`", t.text)))?;
        if !op.takes_value() {
            return Ok(Condition::extremum(column, op));
        }
        let value = self.name("value")?;
        Ok(Condition::compare(column, op, value))
    }
}

pub fn parse_lf(input: &str) -> Result<LogicalForm, LfError> {
    let tokens = lex(input)?;
    let mut cur = Cursor {
        tokens: &tokens,
        pos: 0,
        len: input.len(),
    };
    cur.keyword("SELECT")?;
    let mut lf = LogicalForm::select(cur.name("column name")?);
    if cur.peek().is_some() {
        cur.keyword("WHERE")?;
        lf.conditions.push(cur.condition()?);
        if cur.peek().is_some() {
            cur.keyword("AND")?;
            lf.conditions.push(cur.condition()?);
        }
    }
    if let Some(t) = cur.peek() {
        return Err(syntax(t.offset, format!("unexpected `{}`", t.text)));
    }
    Ok(lf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn render_examples() {
        let lf = LogicalForm::select("City").with_condition(Condition::compare("Year", Operator::Eq, "2008"));
        assert_eq!(render(&lf), "SELECT City WHERE Year = 2008");
        assert_eq!(render(&LogicalForm::select("City")), "SELECT City");
        let lf = LogicalForm::select("City").with_condition(Condition::extremum("Nations", Operator::Argmax));
        assert_eq!(render(&lf), "SELECT City WHERE Nations argmax");
    }

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_lf("SELECT City WHERE Year = 2008").unwrap(),
            LogicalForm::select("City").with_condition(Condition::compare("Year", Operator::Eq, "2008"))
        );
        assert_eq!(
            parse_lf("SELECT \"Host City\" WHERE Nations argmax").unwrap(),
            LogicalForm::select("Host City").with_condition(Condition::extremum("Nations", Operator::Argmax))
        );
        let two = parse_lf("select A where B != \"x y\" and C <= 3").unwrap();
        assert_eq!(two.conditions.len(), 2);
        assert_eq!(two.conditions[0].value.as_deref(), Some("x y"));
    }

    #[test]
    fn truncated_input_reports_offset() {
        let err = parse_lf("SELECT City WHERE").unwrap_err();
        assert_eq!(
            err,
            LfError::Syntax {
                offset: 17,
                message: "expected column name, found end of input".into()
            }
        );
        assert!(matches!(parse_lf("SELECT City WHERE Year ~ 3"), Err(LfError::Syntax { offset: 23, .. })));
        assert!(matches!(parse_lf("SELECT \"City"), Err(LfError::Syntax { offset: 7, .. })));
        assert!(matches!(parse_lf("SELECT a WHERE b = 1 AND c = 2 AND d = 3"), Err(LfError::Syntax { offset: 31, .. })));
        assert!(matches!(parse_lf(""), Err(LfError::Syntax { offset: 0, .. })));
    }

    #[test]
    fn keywords_and_operators_are_quoted() {
        let lf = LogicalForm::select("where").with_condition(Condition::compare("=", Operator::Lt, "argmax"));
        let text = render(&lf);
        assert_eq!(text, "SELECT \"where\" WHERE \"=\" < \"argmax\"");
        assert_eq!(parse_lf(&text).unwrap(), lf);
    }

    fn arb_condition() -> impl Strategy<Value = Condition> {
        (any::<String>(), proptest::sample::select(Operator::ALL.to_vec()), any::<String>()).prop_map(
            |(c, op, v)| Condition {
                column: c,
                op,
                value: op.takes_value().then_some(v),
            },
        )
    }

    proptest! {
        #[test]
        fn round_trip(select in any::<String>(), conds in proptest::collection::vec(arb_condition(), 0..=2)) {
            let lf = LogicalForm { select_column: select, conditions: conds };
            prop_assert_eq!(parse_lf(&render(&lf)).unwrap(), lf);
        }
    }
}
