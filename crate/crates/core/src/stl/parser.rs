//! Recursive-descent parser for the task syntax.
//!
//! ```text
//! formula := conj ('|' conj)*
//! conj    := until ('&' until)*
//! until   := unary ('U' '[' num ',' num ']' unary)?
//! unary   := 'true' | ident | '(' formula ')' | ('F' | 'G') '[' num ',' num ']' '(' formula ')'
//! ```
//!
//! Chains such as `a & b & c` become one n-ary node; parenthesized operands
//! keep their own node.

use thiserror::Error;

use super::ast::{Formula, Interval};
use super::fragment::{validate_fragment, FragmentError};
use super::predicate::{Binding, PredicateRegistry};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unbound predicate `{name}` at position {position}")]
    UnboundPredicate { position: usize, name: String },
    #[error("invalid interval [{lo},{hi}] at position {position}: need 0 <= a <= b")]
    IntervalViolation { position: usize, lo: f64, hi: f64 },
    #[error("{what} at position {position} is not supported by the fragment")]
    Unsupported { position: usize, what: String },
    #[error(transparent)]
    Fragment(#[from] FragmentError),
}

/// Parses `text`, resolving every predicate symbol through `registry`.
///
/// Symbols bound to a conjunction (for example an ∞-norm box) expand in place.
pub fn parse_formula<S: Scalar>(text: &str, registry: &PredicateRegistry<S>) -> Result<Formula, ParseError> {
    parse_with(text, &|name| match registry.binding(name)? {
        Binding::Atom(_) => Some(vec![name.to_string()]),
        Binding::Conjunction(atoms) => Some(atoms.clone()),
    })
}

/// Parses without a registry: every identifier is taken as an atomic predicate.
pub fn parse_formula_unbound(text: &str) -> Result<Formula, ParseError> {
    parse_with(text, &|name| Some(vec![name.to_string()]))
}

fn parse_with(text: &str, resolve: &dyn Fn(&str) -> Option<Vec<String>>) -> Result<Formula, ParseError> {
    let mut p = Parser { src: text, pos: 0, resolve };
    let f = p.formula()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.syntax(format!("unexpected trailing input `{}`", &p.src[p.pos..])));
    }
    validate_fragment(&f)?;
    Ok(f)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    resolve: &'a dyn Fn(&str) -> Option<Vec<String>>,
}

impl Parser<'_> {
    fn syntax(&self, message: String) -> ParseError {
        ParseError::Syntax { position: self.pos, message }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            let found = self.peek().map_or("end of input".to_string(), |f| format!("`{f}`"));
            Err(self.syntax(format!("expected `{c}`, found {found}")))
        }
    }

    /// Reads an identifier without consuming it.
    fn peek_ident(&mut self) -> Option<&str> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let mut end = 0;
        for (i, c) in rest.char_indices() {
            let ok = if i == 0 { c.is_ascii_alphabetic() || c == '_' } else { c.is_ascii_alphanumeric() || c == '_' };
            if !ok {
                break;
            }
            end = i + c.len_utf8();
        }
        (end > 0).then(|| &rest[..end])
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut items = vec![self.conj()?];
        while self.eat('|') {
            if self.eat('|') {
                return Err(self.syntax("use a single `|` for disjunction".into()));
            }
            items.push(self.conj()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Formula::Or(items) })
    }

    fn conj(&mut self) -> Result<Formula, ParseError> {
        let mut items = vec![self.until()?];
        while self.eat('&') {
            if self.eat('&') {
                return Err(self.syntax("use a single `&` for conjunction".into()));
            }
            items.push(self.until()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { Formula::And(items) })
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let left = self.unary()?;
        if self.peek_ident() == Some("U") {
            self.pos += 1;
            let window = self.interval()?;
            let right = self.unary()?;
            if self.peek_ident() == Some("U") {
                return Err(self.syntax("chained `U` needs parentheses".into()));
            }
            return Ok(Formula::Until { window, left: Box::new(left), right: Box::new(right) });
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => Err(self.syntax("unexpected end of input".into())),
            Some('!') | Some('~') | Some('¬') => {
                Err(ParseError::Unsupported { position: start, what: "negation".into() })
            }
            Some('(') => {
                self.pos += 1;
                let f = self.formula()?;
                self.expect(')')?;
                Ok(f)
            }
            Some(_) => {
                let Some(ident) = self.peek_ident().map(str::to_string) else {
                    return Err(self.syntax(format!("unexpected `{}`", self.peek().unwrap())));
                };
                self.pos += ident.len();
                match ident.as_str() {
                    "true" => Ok(Formula::True),
                    "false" => Err(ParseError::Unsupported { position: start, what: "`false`".into() }),
                    "not" => Err(ParseError::Unsupported { position: start, what: "negation".into() }),
                    "F" | "G" => {
                        let window = self.interval()?;
                        self.expect('(')?;
                        let child = self.formula()?;
                        self.expect(')')?;
                        Ok(if ident == "F" {
                            Formula::Eventually(window, Box::new(child))
                        } else {
                            Formula::Always(window, Box::new(child))
                        })
                    }
                    "U" => Err(ParseError::Syntax { position: start, message: "`U` needs a left operand".into() }),
                    name => match (self.resolve)(name) {
                        None => Err(ParseError::UnboundPredicate { position: start, name: name.to_string() }),
                        Some(mut atoms) if atoms.len() == 1 => Ok(Formula::Pred(atoms.pop().unwrap())),
                        Some(atoms) => Ok(Formula::And(atoms.into_iter().map(Formula::Pred).collect())),
                    },
                }
            }
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .take_while(|&(i, c)| {
                c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || ((c == '-' || c == '+') && (i == 0 || matches!(rest.as_bytes()[i - 1], b'e' | b'E')))
            })
            .last()
            .map_or(0, |(i, c)| i + c.len_utf8());
        let tok = &rest[..len];
        let v = tok.parse::<f64>().map_err(|_| self.syntax(format!("expected a number, found `{tok}`")))?;
        self.pos += len;
        Ok(v)
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        self.skip_ws();
        let start = self.pos;
        self.expect('[')?;
        let lo = self.number()?;
        self.expect(',')?;
        let hi = self.number()?;
        self.expect(']')?;
        let w = Interval::new(lo, hi);
        if !w.is_valid() {
            return Err(ParseError::IntervalViolation { position: start, lo, hi });
        }
        Ok(w)
    }
}
