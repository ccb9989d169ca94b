//! Task formulas: syntax tree, parser, fragment check and `U` rewriting.

mod ast;
mod desugar;
mod fragment;
mod parser;
mod predicate;

pub use ast::{Formula, Interval, Stratum};
pub use desugar::{desugar_until, WitnessPolicy};
pub use fragment::{validate_fragment, FragmentError, FragmentReport};
pub use parser::{parse_formula, parse_formula_unbound, ParseError};
pub use predicate::{Binding, Predicate, PredicateError, PredicateForm, PredicateRegistry};
