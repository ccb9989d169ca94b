//! Control barrier functions for a fragment of Signal Temporal Logic.
//!
//! A task formula is compiled into a tree of min/max compositions of
//! predicate functions and time funnels. The controller solves one small
//! quadratic program per active branch of that tree and applies the
//! cheapest feasible input.

pub mod artifacts;
pub mod barrier;
pub mod controller;
pub mod linalg;
pub mod monitor;
pub mod pipeline;
pub mod qp;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod stl;

pub use barrier::{build_bf_tree, BfTree, GammaFn, History, Tolerance};
pub use controller::{check_assumptions, control_input, ControlConfig};
pub use linalg::Mat;
pub use qp::{solve_qp, QpProblem, QpSolution};
pub use scalar::Scalar;
pub use scenario::Scenario;
pub use sim::{simulate, Trajectory};
pub use stl::{parse_formula, Formula, Predicate, PredicateRegistry};

pub type BfTree64 = BfTree<f64>;
pub type BfTree32 = BfTree<f32>;
pub type QpProblem64 = QpProblem<f64>;
pub type QpProblem32 = QpProblem<f32>;
pub type Registry64 = PredicateRegistry<f64>;
pub type ControlConfig64 = ControlConfig<f64>;
pub type Trajectory64 = Trajectory<f64>;
