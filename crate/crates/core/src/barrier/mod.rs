//! Barrier tree construction and evaluation.

mod gamma;
mod tree;

pub use gamma::{GammaError, GammaFn, GammaShape};
pub use tree::{
    build_bf_tree, BfNode, BfTree, BranchTriple, BranchValue, BuildError, GammaSpec, History, IndexSets, NodeId, NodeKind, Tolerance, TreeError,
    TreeEval,
};
