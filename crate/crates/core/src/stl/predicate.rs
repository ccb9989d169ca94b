//! Concave C¹ predicate functions and the symbol registry formulas bind to.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::linalg::{dot, Mat};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum PredicateForm<S> {
    /// `h(x) = r² − ‖S x − c‖²`
    Ball2 { rows: Mat<S>, center: Vec<S>, radius: S },
    /// `h(x) = aᵀx + d`
    Affine { a: Vec<S>, d: S },
    /// `h(x) = v`; used for the `true` literal.
    Constant(S),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate<S> {
    pub id: String,
    pub form: PredicateForm<S>,
}

#[derive(Debug, Error, PartialEq)]
pub enum PredicateError {
    #[error("predicate `{id}`: {reason}")]
    Shape { id: String, reason: String },
    #[error("predicate `{0}` is defined twice")]
    Duplicate(String),
    #[error("`{0}` is not a valid predicate identifier")]
    BadIdentifier(String),
}

impl<S: Scalar> Predicate<S> {
    pub fn ball2(id: impl Into<String>, rows: Mat<S>, center: Vec<S>, radius: S) -> Result<Self, PredicateError> {
        let id = id.into();
        if rows.nrows() != center.len() {
            return Err(PredicateError::Shape {
                id,
                reason: format!("selection has {} rows but center has {} entries", rows.nrows(), center.len()),
            });
        }
        if !(radius >= S::zero()) || !radius.is_finite() {
            return Err(PredicateError::Shape { id, reason: "radius must be finite and nonnegative".into() });
        }
        Ok(Self { id, form: PredicateForm::Ball2 { rows, center, radius } })
    }

    /// Ball over a subset of state coordinates, `r² − Σ (x[sel_i] − c_i)²`.
    pub fn ball2_select(id: impl Into<String>, dim: usize, select: &[usize], center: Vec<S>, radius: S) -> Result<Self, PredicateError> {
        let id = id.into();
        let mut rows = Mat::zeros(select.len(), dim);
        for (r, &j) in select.iter().enumerate() {
            if j >= dim {
                return Err(PredicateError::Shape { id, reason: format!("selected index {j} exceeds state dimension {dim}") });
            }
            rows[(r, j)] = S::one();
        }
        Self::ball2(id, rows, center, radius)
    }

    pub fn affine(id: impl Into<String>, a: Vec<S>, d: S) -> Self {
        Self { id: id.into(), form: PredicateForm::Affine { a, d } }
    }

    pub fn constant(id: impl Into<String>, v: S) -> Self {
        Self { id: id.into(), form: PredicateForm::Constant(v) }
    }

    /// State dimension the predicate expects, if it constrains one.
    pub fn dim(&self) -> Option<usize> {
        match &self.form {
            PredicateForm::Ball2 { rows, .. } => Some(rows.ncols()),
            PredicateForm::Affine { a, .. } => Some(a.len()),
            PredicateForm::Constant(_) => None,
        }
    }

    pub fn eval(&self, x: &[S]) -> S {
        match &self.form {
            PredicateForm::Ball2 { rows, center, radius } => {
                let mut d2 = S::zero();
                for (i, &c) in center.iter().enumerate() {
                    let e = dot(rows.row(i), x) - c;
                    d2 += e * e;
                }
                *radius * *radius - d2
            }
            PredicateForm::Affine { a, d } => dot(a, x) + *d,
            PredicateForm::Constant(v) => *v,
        }
    }

    pub fn grad(&self, x: &[S]) -> Vec<S> {
        match &self.form {
            PredicateForm::Ball2 { rows, center, .. } => {
                let resid: Vec<S> = center.iter().enumerate().map(|(i, &c)| dot(rows.row(i), x) - c).collect();
                rows.tr_mul_vec(&resid).into_iter().map(|v| -S::lit(2.0) * v).collect()
            }
            PredicateForm::Affine { a, .. } => a.clone(),
            PredicateForm::Constant(_) => vec![S::zero(); x.len()],
        }
    }

    /// Supremum of `h` over the state space, when bounded.
    pub fn max_value(&self) -> Option<S> {
        match &self.form {
            PredicateForm::Ball2 { radius, .. } => Some(*radius * *radius),
            PredicateForm::Affine { a, d } => a.iter().all(|v| *v == S::zero()).then_some(*d),
            PredicateForm::Constant(v) => Some(*v),
        }
    }
}

/// What a formula symbol expands to.
#[derive(Debug, Clone, PartialEq)]
pub enum Binding<S> {
    Atom(Predicate<S>),
    /// Conjunction of atoms, e.g. an ∞-norm box split into half-spaces.
    Conjunction(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredicateRegistry<S> {
    entries: BTreeMap<String, Binding<S>>,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(s, "true" | "F" | "G" | "U")
}

impl<S: Scalar> PredicateRegistry<S> {
    pub fn new() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, p: Predicate<S>) -> Result<(), PredicateError> {
        if !is_identifier(&p.id) {
            return Err(PredicateError::BadIdentifier(p.id));
        }
        if self.entries.contains_key(&p.id) {
            return Err(PredicateError::Duplicate(p.id));
        }
        self.entries.insert(p.id.clone(), Binding::Atom(p));
        Ok(())
    }

    /// Registers `‖x[select]‖∞ ≤ radius` as the conjunction of the `2·|select|`
    /// affine predicates `radius ∓ x_j ≥ 0`, named `{id}_{j}_hi` and `{id}_{j}_lo`.
    pub fn insert_box_inf(&mut self, id: &str, dim: usize, select: &[usize], radius: S) -> Result<(), PredicateError> {
        if !is_identifier(id) {
            return Err(PredicateError::BadIdentifier(id.to_string()));
        }
        if self.entries.contains_key(id) {
            return Err(PredicateError::Duplicate(id.to_string()));
        }
        if select.is_empty() {
            return Err(PredicateError::Shape { id: id.into(), reason: "box needs at least one coordinate".into() });
        }
        let mut atoms = Vec::with_capacity(2 * select.len());
        for &j in select {
            if j >= dim {
                return Err(PredicateError::Shape { id: id.into(), reason: format!("selected index {j} exceeds state dimension {dim}") });
            }
            for (suffix, sign) in [("hi", -S::one()), ("lo", S::one())] {
                let mut a = vec![S::zero(); dim];
                a[j] = sign;
                let atom = format!("{id}_{j}_{suffix}");
                self.insert(Predicate::affine(atom.clone(), a, radius))?;
                atoms.push(atom);
            }
        }
        self.entries.insert(id.to_string(), Binding::Conjunction(atoms));
        Ok(())
    }

    pub fn binding(&self, id: &str) -> Option<&Binding<S>> {
        self.entries.get(id)
    }

    pub fn get(&self, id: &str) -> Option<&Predicate<S>> {
        match self.entries.get(id) {
            Some(Binding::Atom(p)) => Some(p),
            _ => None,
        }
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Predicate<S>> {
        self.entries.values().filter_map(|b| match b {
            Binding::Atom(p) => Some(p),
            Binding::Conjunction(_) => None,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
