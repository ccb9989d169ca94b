use std::fmt;

use serde::{Deserialize, Serialize};

/// Closed time window `[lo, hi]` in seconds, relative to the evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && 0.0 <= self.lo && self.lo <= self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

/// Which layer of the two-level grammar a formula belongs to.
///
/// `Psi` formulas are boolean combinations of predicates; `Phi` formulas
/// combine bounded temporal operators over `Psi` formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stratum {
    Psi,
    Phi,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    Pred(String),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
    Until { window: Interval, left: Box<Formula>, right: Box<Formula> },
}

impl Formula {
    pub fn pred(id: impl Into<String>) -> Self {
        Formula::Pred(id.into())
    }

    pub fn eventually(lo: f64, hi: f64, child: Formula) -> Self {
        Formula::Eventually(Interval::new(lo, hi), Box::new(child))
    }

    pub fn always(lo: f64, hi: f64, child: Formula) -> Self {
        Formula::Always(Interval::new(lo, hi), Box::new(child))
    }

    pub fn until(lo: f64, hi: f64, left: Formula, right: Formula) -> Self {
        Formula::Until { window: Interval::new(lo, hi), left: Box::new(left), right: Box::new(right) }
    }

    pub fn is_temporal(&self) -> bool {
        matches!(self, Formula::Eventually(..) | Formula::Always(..) | Formula::Until { .. })
    }

    pub fn contains_temporal(&self) -> bool {
        match self {
            Formula::True | Formula::Pred(_) => false,
            Formula::And(cs) | Formula::Or(cs) => cs.iter().any(Formula::contains_temporal),
            _ => true,
        }
    }

    pub fn contains_until(&self) -> bool {
        match self {
            Formula::True | Formula::Pred(_) => false,
            Formula::And(cs) | Formula::Or(cs) => cs.iter().any(Formula::contains_until),
            Formula::Eventually(_, c) | Formula::Always(_, c) => c.contains_until(),
            Formula::Until { .. } => true,
        }
    }

    /// Stratum of a well-formed fragment formula, `None` outside the fragment.
    pub fn stratum(&self) -> Option<Stratum> {
        super::fragment::classify(self).ok()
    }

    /// Predicate symbols in order of first appearance.
    pub fn predicate_ids(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit_preds(&mut |p| {
            if !out.iter().any(|q: &String| q == p) {
                out.push(p.to_string());
            }
        });
        out
    }

    fn visit_preds(&self, f: &mut impl FnMut(&str)) {
        match self {
            Formula::True => {}
            Formula::Pred(p) => f(p),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| c.visit_preds(f)),
            Formula::Eventually(_, c) | Formula::Always(_, c) => c.visit_preds(f),
            Formula::Until { left, right, .. } => {
                left.visit_preds(f);
                right.visit_preds(f);
            }
        }
    }

    /// Number of `F` and `G` nodes (each `U` counts as one `G` plus one `F`
    /// once desugared, so callers usually desugar first).
    pub fn temporal_count(&self) -> usize {
        match self {
            Formula::True | Formula::Pred(_) => 0,
            Formula::And(cs) | Formula::Or(cs) => cs.iter().map(Formula::temporal_count).sum(),
            Formula::Eventually(_, c) | Formula::Always(_, c) => 1 + c.temporal_count(),
            Formula::Until { left, right, .. } => 2 + left.temporal_count() + right.temporal_count(),
        }
    }

    fn needs_parens_as_operand(&self) -> bool {
        matches!(self, Formula::And(_) | Formula::Or(_) | Formula::Until { .. })
    }
}

struct Operand<'a>(&'a Formula);

impl fmt::Display for Operand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.needs_parens_as_operand() {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Prints the concrete syntax accepted by [`super::parse_formula`]; nested
/// binary operators are parenthesized so printing and parsing round-trip.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::Pred(p) => write!(f, "{p}"),
            Formula::And(cs) | Formula::Or(cs) => {
                let sep = if matches!(self, Formula::And(_)) { " & " } else { " | " };
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(sep)?;
                    }
                    write!(f, "{}", Operand(c))?;
                }
                Ok(())
            }
            Formula::Eventually(w, c) => write!(f, "F{w}({c})"),
            Formula::Always(w, c) => write!(f, "G{w}({c})"),
            Formula::Until { window, left, right } => {
                write!(f, "{} U{window} {}", Operand(left), Operand(right))
            }
        }
    }
}
