use std::collections::BTreeSet;

use thiserror::Error;

use super::ast::{Formula, Stratum};

#[derive(Debug, Clone, Error, PartialEq)]
#[error("`{subformula}` is outside the supported fragment: {reason}")]
pub struct FragmentError {
    pub subformula: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentReport {
    pub stratum: Stratum,
    /// Predicate symbols the formula depends on.
    pub predicates: BTreeSet<String>,
}

fn fail(f: &Formula, reason: &str) -> FragmentError {
    FragmentError { subformula: f.to_string(), reason: reason.to_string() }
}

pub(crate) fn classify(f: &Formula) -> Result<Stratum, FragmentError> {
    match f {
        Formula::True | Formula::Pred(_) => Ok(Stratum::Psi),
        Formula::And(cs) | Formula::Or(cs) => {
            if cs.is_empty() {
                return Err(fail(f, "empty boolean operator"));
            }
            let strata = cs.iter().map(classify).collect::<Result<Vec<_>, _>>()?;
            if strata.iter().all(|s| *s == Stratum::Psi) {
                Ok(Stratum::Psi)
            } else if strata.iter().all(|s| *s == Stratum::Phi) {
                Ok(Stratum::Phi)
            } else {
                Err(fail(f, "boolean operator mixes temporal and non-temporal operands"))
            }
        }
        Formula::Eventually(w, c) | Formula::Always(w, c) => {
            if !w.is_valid() {
                return Err(fail(f, "interval must satisfy 0 <= a <= b"));
            }
            match classify(c)? {
                Stratum::Psi => Ok(Stratum::Phi),
                Stratum::Phi => Err(fail(f, "nested temporal operator")),
            }
        }
        Formula::Until { window, left, right } => {
            if !window.is_valid() {
                return Err(fail(f, "interval must satisfy 0 <= a <= b"));
            }
            if classify(left)? == Stratum::Phi || classify(right)? == Stratum::Phi {
                return Err(fail(f, "until operands must be free of temporal operators"));
            }
            Ok(Stratum::Phi)
        }
    }
}

/// Confirms the two-layer stratification and collects the predicate symbols.
pub fn validate_fragment(formula: &Formula) -> Result<FragmentReport, FragmentError> {
    let stratum = classify(formula)?;
    Ok(FragmentReport { stratum, predicates: formula.predicate_ids().into_iter().collect() })
}
