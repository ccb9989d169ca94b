//! The barrier tree `b₀` and its evaluation.
//!
//! Nodes are stored in preorder, so every child has a larger id than its
//! parent and bottom-up passes simply walk the ids in reverse.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gamma::{GammaError, GammaFn, GammaShape};
use crate::scalar::Scalar;
use crate::stl::{validate_fragment, Formula, FragmentError, Interval, Predicate, PredicateRegistry, Stratum};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind<S> {
    Leaf { predicate: Predicate<S> },
    Min,
    /// `tracked` marks a disjunction of temporal formulas, whose children are
    /// dropped for good once they go negative along the run.
    Max { tracked: bool },
    Eventually { window: Interval },
    Always { window: Interval },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfNode<S> {
    /// Hierarchical label: root `0`, its children `1, 2, ..`, then digits appended.
    pub label: String,
    pub kind: NodeKind<S>,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    pub gamma: Option<GammaFn<S>>,
    /// Deactivation time when no child has been disqualified.
    pub beta: S,
}

impl<S> BfNode<S> {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// Funnel parameters for one temporal node, in config units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    pub gamma_zero: f64,
    pub gamma_inf: f64,
    pub t_star: f64,
    #[serde(default = "affine_shape")]
    pub shape: GammaShape,
}

fn affine_shape() -> GammaShape {
    GammaShape::Affine
}

impl GammaSpec {
    pub fn resolve<S: Scalar>(&self, t1: S) -> Result<GammaFn<S>, GammaError> {
        GammaFn::new(t1, S::lit(self.gamma_zero), S::lit(self.gamma_inf), S::lit(self.t_star), self.shape)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error("formula still contains `U`; rewrite it before building")]
    UntilNotDesugared,
    #[error("formula is a predicate-only formula; wrap it in a temporal operator")]
    NotTemporal,
    #[error(transparent)]
    Fragment(#[from] FragmentError),
    #[error("predicate `{0}` is not in the registry")]
    UnknownPredicate(String),
    #[error("predicate `{id}` expects {got} states, others expect {expected}")]
    DimensionMismatch { id: String, expected: usize, got: usize },
    #[error("formula has {expected} temporal operators but {got} funnels were given")]
    GammaCount { expected: usize, got: usize },
    #[error("funnel of node {label}: {source}")]
    Gamma { label: String, source: GammaError },
    #[error("eventually node {label} on {window}: {reason}")]
    EventuallyFunnel { label: String, window: Interval, reason: String },
    #[error("always node {label} on {window}: funnel is {value} > 0 at t = {t}")]
    AlwaysFunnel { label: String, window: Interval, t: f64, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("no node with id {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not a leaf")]
    NotLeaf(NodeId),
    #[error("no qualified branch connects node {from} to leaf {leaf}")]
    EmptyPath { from: NodeId, leaf: NodeId },
    #[error("leaf {0} is not active at the root")]
    InactiveLeaf(NodeId),
    #[error("a branch needs two distinct leaves")]
    SameLeaf,
    #[error("branch point {0} is neither a min nor a max node")]
    BadBranchPoint(NodeId),
    #[error("history update at t = {t} precedes the previous update at {last}")]
    TimeRegression { t: f64, last: f64 },
}

/// Activity tolerance `rel · (1 + |b|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance<S> {
    pub rel: S,
}

impl<S: Scalar> Default for Tolerance<S> {
    fn default() -> Self {
        Self { rel: S::lit(1e-7).max(S::eps_times(64.0)) }
    }
}

impl<S: Scalar> Tolerance<S> {
    pub fn new(rel: S) -> Self {
        Self { rel }
    }

    pub fn at(&self, b: S) -> S {
        self.rel * (S::one() + b.abs())
    }
}

/// Children of tracked max nodes that have been negative at some past update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History<S> {
    pub disqualified: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub last_time: Option<S>,
}

impl<S: Scalar> History<S> {
    pub fn new() -> Self {
        Self { disqualified: BTreeMap::new(), last_time: None }
    }

    pub fn is_disqualified(&self, node: NodeId, child: NodeId) -> bool {
        self.disqualified.get(&node).is_some_and(|s| s.contains(&child))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfTree<S> {
    nodes: Vec<BfNode<S>>,
    leaves: Vec<NodeId>,
    state_dim: Option<usize>,
}

/// Value and first-order data of `h_k + Σ γ` along a branch, or of a switching function.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchValue<S> {
    pub value: S,
    /// Left-sided time derivative.
    pub dt: S,
    pub dx: Vec<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchTriple {
    /// Head of the branch toward `k`.
    pub i: NodeId,
    /// Head of the branch toward `l`.
    pub j: NodeId,
    /// Node where the two branches split.
    pub q: NodeId,
}

/// Active index sets of every node at one `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSets {
    pub qualified: Vec<Vec<NodeId>>,
    pub active: Vec<Vec<NodeId>>,
    pub active_leaves: Vec<Vec<NodeId>>,
}

struct Builder<'a, S> {
    nodes: Vec<BfNode<S>>,
    registry: &'a PredicateRegistry<S>,
    gammas: std::slice::Iter<'a, GammaFn<S>>,
    state_dim: Option<usize>,
}

impl<S: Scalar> Builder<'_, S> {
    fn push(&mut self, f: &Formula, label: String, parent: Option<NodeId>, stratum: Stratum) -> Result<NodeId, BuildError> {
        let id = self.nodes.len();
        let (kind, children): (NodeKind<S>, Vec<&Formula>) = match f {
            Formula::True => (NodeKind::Leaf { predicate: Predicate::constant("true", S::one()) }, vec![]),
            Formula::Pred(p) => {
                let pred = self.registry.get(p).ok_or_else(|| BuildError::UnknownPredicate(p.clone()))?;
                if let Some(d) = pred.dim() {
                    match self.state_dim {
                        Some(e) if e != d => return Err(BuildError::DimensionMismatch { id: p.clone(), expected: e, got: d }),
                        _ => self.state_dim = Some(d),
                    }
                }
                (NodeKind::Leaf { predicate: pred.clone() }, vec![])
            }
            Formula::And(cs) => (NodeKind::Min, cs.iter().collect()),
            Formula::Or(cs) => (NodeKind::Max { tracked: stratum == Stratum::Phi }, cs.iter().collect()),
            Formula::Eventually(w, c) => (NodeKind::Eventually { window: *w }, vec![c.as_ref()]),
            Formula::Always(w, c) => (NodeKind::Always { window: *w }, vec![c.as_ref()]),
            Formula::Until { .. } => return Err(BuildError::UntilNotDesugared),
        };
        let gamma = match kind {
            NodeKind::Eventually { .. } | NodeKind::Always { .. } => Some(*self.gammas.next().expect("funnel count checked before building")),
            _ => None,
        };
        self.nodes.push(BfNode { label: label.clone(), kind, children: vec![], parent, gamma, beta: S::infinity() });
        let child_stratum = match f {
            Formula::Eventually(..) | Formula::Always(..) => Stratum::Psi,
            _ => stratum,
        };
        let wide = children.len() > 9;
        for (j, c) in children.into_iter().enumerate() {
            let child_label = match (label.as_str(), wide) {
                ("0", _) => format!("{}", j + 1),
                (_, false) => format!("{label}{}", j + 1),
                (_, true) => format!("{label}.{}", j + 1),
            };
            let cid = self.push(c, child_label, Some(id), child_stratum)?;
            self.nodes[id].children.push(cid);
        }
        Ok(id)
    }
}

/// Builds the barrier tree of a `U`-free fragment formula.
///
/// `gammas` lists one funnel per `F`/`G` node in preorder. Every eventually
/// funnel must reach zero inside its window and every always funnel must be
/// nonpositive on its whole window.
pub fn build_bf_tree<S: Scalar>(formula: &Formula, registry: &PredicateRegistry<S>, gammas: &[GammaFn<S>]) -> Result<BfTree<S>, BuildError> {
    if formula.contains_until() {
        return Err(BuildError::UntilNotDesugared);
    }
    let report = validate_fragment(formula)?;
    if report.stratum != Stratum::Phi {
        return Err(BuildError::NotTemporal);
    }
    let expected = formula.temporal_count();
    if gammas.len() != expected {
        return Err(BuildError::GammaCount { expected, got: gammas.len() });
    }
    let mut b = Builder { nodes: Vec::new(), registry, gammas: gammas.iter(), state_dim: None };
    b.push(formula, "0".into(), None, Stratum::Phi)?;
    let mut nodes = b.nodes;
    let state_dim = b.state_dim;

    for id in (0..nodes.len()).rev() {
        let label = nodes[id].label.clone();
        let child_betas: Vec<S> = nodes[id].children.iter().map(|&c| nodes[c].beta).collect();
        let beta = match &nodes[id].kind {
            NodeKind::Leaf { .. } | NodeKind::Max { tracked: false } => S::infinity(),
            NodeKind::Min => child_betas.iter().copied().fold(S::neg_infinity(), S::max),
            NodeKind::Max { tracked: true } => child_betas.iter().copied().fold(S::infinity(), S::min),
            NodeKind::Eventually { window } => {
                let g = nodes[id].gamma.as_ref().unwrap();
                let (a, bb) = (S::lit(window.lo), S::lit(window.hi));
                let Some(beta) = g.first_nonpositive() else {
                    return Err(BuildError::EventuallyFunnel { label, window: *window, reason: "funnel never reaches zero".into() });
                };
                if beta > bb {
                    return Err(BuildError::EventuallyFunnel {
                        label,
                        window: *window,
                        reason: format!("funnel reaches zero at {} after the window closes", beta.as_f64()),
                    });
                }
                if beta < a {
                    return Err(BuildError::EventuallyFunnel {
                        label,
                        window: *window,
                        reason: format!("funnel reaches zero at {} before the window opens, which would switch the task off early", beta.as_f64()),
                    });
                }
                beta
            }
            NodeKind::Always { window } => {
                let g = nodes[id].gamma.as_ref().unwrap();
                for t in [window.lo, window.hi] {
                    let v = g.eval(S::lit(t));
                    if v > S::zero() {
                        return Err(BuildError::AlwaysFunnel { label, window: *window, t, value: v.as_f64() });
                    }
                }
                S::lit(window.hi)
            }
        };
        nodes[id].beta = beta;
    }
    let leaves = (0..nodes.len()).filter(|&i| nodes[i].is_leaf()).collect();
    Ok(BfTree { nodes, leaves, state_dim })
}

impl<S: Scalar> BfTree<S> {
    pub fn nodes(&self) -> &[BfNode<S>] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&BfNode<S>, TreeError> {
        self.nodes.get(id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf ids, i.e. the elementary index set.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn state_dim(&self) -> Option<usize> {
        self.state_dim
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.nodes[id].label
    }

    pub fn find(&self, label: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.label == label)
    }

    pub fn predicate(&self, leaf: NodeId) -> Result<&Predicate<S>, TreeError> {
        match &self.node(leaf)?.kind {
            NodeKind::Leaf { predicate } => Ok(predicate),
            _ => Err(TreeError::NotLeaf(leaf)),
        }
    }

    /// Largest finite deactivation time, the static horizon.
    pub fn horizon(&self) -> Option<S> {
        self.nodes.iter().map(|n| n.beta).filter(|b| b.is_finite()).reduce(S::max)
    }

    /// Deactivation time of the root under `hist`; `b₀ ≡ 0` afterwards.
    pub fn root_beta(&self, hist: &History<S>) -> S {
        self.betas(hist)[0]
    }

    /// All deactivation times given the disqualifications in `hist`.
    pub fn betas(&self, hist: &History<S>) -> Vec<S> {
        let mut betas: Vec<S> = self.nodes.iter().map(|n| n.beta).collect();
        for id in (0..self.nodes.len()).rev() {
            let n = &self.nodes[id];
            match n.kind {
                NodeKind::Min if !n.children.is_empty() => {
                    betas[id] = n.children.iter().map(|&c| betas[c]).fold(S::neg_infinity(), S::max);
                }
                NodeKind::Max { tracked: true } => {
                    betas[id] = n
                        .children
                        .iter()
                        .filter(|&&c| !hist.is_disqualified(id, c))
                        .map(|&c| betas[c])
                        .fold(S::infinity(), S::min);
                    if n.children.iter().all(|&c| hist.is_disqualified(id, c)) {
                        betas[id] = S::neg_infinity();
                    }
                }
                _ => {}
            }
        }
        betas
    }

    /// Sum of `γ` over nodes on `path`, with its left-sided derivative.
    fn gamma_sum(&self, path: &[NodeId], t: S) -> (S, S) {
        path.iter().filter_map(|&i| self.nodes[i].gamma.as_ref()).fold((S::zero(), S::zero()), |(v, d), g| (v + g.eval(t), d + g.deriv_left(t)))
    }

    fn gamma_at(&self, id: NodeId, t: S) -> S {
        self.nodes[id].gamma.as_ref().map_or(S::zero(), |g| g.eval(t))
    }

    /// Evaluates every node at `(t, x)`.
    pub fn at<'a>(&'a self, t: S, x: &'a [S], hist: &History<S>, tol: Tolerance<S>) -> TreeEval<'a, S> {
        let betas = self.betas(hist);
        let n = self.nodes.len();
        let mut qualified = vec![Vec::new(); n];
        let mut values = vec![S::zero(); n];
        for id in (0..n).rev() {
            let node = &self.nodes[id];
            qualified[id] = match node.kind {
                NodeKind::Min => node.children.iter().copied().filter(|&c| t <= betas[c]).collect(),
                NodeKind::Max { tracked: true } => node.children.iter().copied().filter(|&c| !hist.is_disqualified(id, c)).collect(),
                _ => node.children.clone(),
            };
            let live = t <= betas[id];
            let q = &qualified[id];
            values[id] = match &node.kind {
                NodeKind::Leaf { predicate } => predicate.eval(x),
                NodeKind::Min => q.iter().map(|&c| values[c]).reduce(S::min).unwrap_or(S::zero()),
                NodeKind::Max { tracked } => {
                    if *tracked && !live {
                        S::zero()
                    } else {
                        q.iter().map(|&c| values[c]).reduce(S::max).unwrap_or(S::zero())
                    }
                }
                NodeKind::Eventually { .. } | NodeKind::Always { .. } => {
                    if live {
                        values[node.children[0]] + self.gamma_at(id, t)
                    } else {
                        S::zero()
                    }
                }
            };
        }
        TreeEval { tree: self, t, x, values, betas, qualified, tol }
    }

    pub fn b0(&self, t: S, x: &[S], hist: &History<S>) -> S {
        self.at(t, x, hist, Tolerance::default()).values[0]
    }

    pub fn eval_node(&self, id: NodeId, t: S, x: &[S], hist: &History<S>) -> Result<S, TreeError> {
        self.node(id)?;
        Ok(self.at(t, x, hist, Tolerance::default()).values[id])
    }

    /// Qualified children at `t`; independent of the state.
    pub fn qualified_children(&self, id: NodeId, t: S, hist: &History<S>) -> Result<Vec<NodeId>, TreeError> {
        let node = self.node(id)?;
        let betas = self.betas(hist);
        Ok(match node.kind {
            NodeKind::Min => node.children.iter().copied().filter(|&c| t <= betas[c]).collect(),
            NodeKind::Max { tracked: true } => node.children.iter().copied().filter(|&c| !hist.is_disqualified(id, c)).collect(),
            _ => node.children.clone(),
        })
    }

    pub fn path_set(&self, i: NodeId, k: NodeId, t: S, hist: &History<S>) -> Result<Vec<NodeId>, TreeError> {
        self.node(i)?;
        self.predicate(k)?;
        let x = vec![S::zero(); self.state_dim.unwrap_or(0)];
        Ok(self.at(t, &x, hist, Tolerance::default()).path_set(i, k))
    }

    pub fn active_sets(&self, t: S, x: &[S], hist: &History<S>, tol: Tolerance<S>) -> IndexSets {
        self.at(t, x, hist, tol).index_sets()
    }

    pub fn eval_bk(&self, k: NodeId, t: S, x: &[S], hist: &History<S>) -> Result<BranchValue<S>, TreeError> {
        self.at(t, x, hist, Tolerance::default()).eval_bk(0, k)
    }

    pub fn branch_triple(&self, k: NodeId, l: NodeId, t: S, x: &[S], hist: &History<S>, tol: Tolerance<S>) -> Result<BranchTriple, TreeError> {
        self.at(t, x, hist, tol).branch_triple(k, l)
    }

    pub fn switch_fn(&self, k: NodeId, l: NodeId, t: S, x: &[S], hist: &History<S>, tol: Tolerance<S>) -> Result<BranchValue<S>, TreeError> {
        self.at(t, x, hist, tol).switch_fn(k, l)
    }

    /// Records children of live tracked max nodes whose value is below `-tol`.
    ///
    /// Dropping a child can change values further up, so the pass repeats
    /// until nothing new is dropped.
    pub fn update_history(&self, hist: &mut History<S>, t: S, x: &[S], tol: Tolerance<S>) -> Result<(), TreeError> {
        if let Some(last) = hist.last_time {
            if t < last {
                return Err(TreeError::TimeRegression { t: t.as_f64(), last: last.as_f64() });
            }
        }
        loop {
            let ev = self.at(t, x, hist, tol);
            let mut drops = Vec::new();
            for (id, node) in self.nodes.iter().enumerate() {
                if !matches!(node.kind, NodeKind::Max { tracked: true }) || t > ev.betas[id] {
                    continue;
                }
                for &c in &ev.qualified[id] {
                    let v = ev.values[c];
                    if v < -tol.at(v) {
                        drops.push((id, c));
                    }
                }
            }
            if drops.is_empty() {
                break;
            }
            for (id, c) in drops {
                hist.disqualified.entry(id).or_default().insert(c);
            }
        }
        hist.last_time = Some(t);
        Ok(())
    }

    /// Functional form of [`BfTree::update_history`].
    pub fn updated_history(&self, hist: &History<S>, t: S, x: &[S], tol: Tolerance<S>) -> Result<History<S>, TreeError> {
        let mut h = hist.clone();
        self.update_history(&mut h, t, x, tol)?;
        Ok(h)
    }
}

/// All node values at one `(t, x)` plus the queries built on them.
#[derive(Debug, Clone)]
pub struct TreeEval<'a, S> {
    tree: &'a BfTree<S>,
    pub t: S,
    x: &'a [S],
    pub values: Vec<S>,
    pub betas: Vec<S>,
    pub qualified: Vec<Vec<NodeId>>,
    pub tol: Tolerance<S>,
}

impl<S: Scalar> TreeEval<'_, S> {
    pub fn b0(&self) -> S {
        self.values[0]
    }

    pub fn value(&self, id: NodeId) -> S {
        self.values[id]
    }

    /// Branch from `i` down to leaf `k` through qualified children, empty if broken.
    pub fn path_set(&self, i: NodeId, k: NodeId) -> Vec<NodeId> {
        let mut path = vec![k];
        let mut cur = k;
        while cur != i {
            let Some(p) = self.tree.nodes[cur].parent else { return Vec::new() };
            if !self.qualified[p].contains(&cur) {
                return Vec::new();
            }
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Active children of node `i`.
    pub fn active(&self, i: NodeId) -> Vec<NodeId> {
        let bi = self.values[i];
        let gi = self.tree.gamma_at(i, self.t);
        self.qualified[i].iter().copied().filter(|&c| (bi - (self.values[c] + gi)).abs() <= self.tol.at(bi)).collect()
    }

    /// Leaves `k` with `b_i = h_k + Σ γ` along the qualified branch from `i`.
    pub fn active_leaves(&self, i: NodeId) -> Vec<NodeId> {
        let bi = self.values[i];
        self.tree
            .leaves
            .iter()
            .copied()
            .filter(|&k| {
                let path = self.path_set(i, k);
                if path.is_empty() {
                    return false;
                }
                let (g, _) = self.tree.gamma_sum(&path, self.t);
                (bi - (self.values[k] + g)).abs() <= self.tol.at(bi)
            })
            .collect()
    }

    pub fn index_sets(&self) -> IndexSets {
        let n = self.tree.nodes.len();
        IndexSets {
            qualified: self.qualified.clone(),
            active: (0..n).map(|i| self.active(i)).collect(),
            active_leaves: (0..n).map(|i| self.active_leaves(i)).collect(),
        }
    }

    /// `h_k + Σ γ` over the branch from `i` to `k`, with derivatives.
    pub fn eval_bk(&self, i: NodeId, k: NodeId) -> Result<BranchValue<S>, TreeError> {
        let pred = self.tree.predicate(k)?;
        let path = self.path_set(i, k);
        if path.is_empty() {
            return Err(TreeError::EmptyPath { from: i, leaf: k });
        }
        let (g, dg) = self.tree.gamma_sum(&path, self.t);
        Ok(BranchValue { value: pred.eval(self.x) + g, dt: dg, dx: pred.grad(self.x) })
    }

    pub fn branch_triple(&self, k: NodeId, l: NodeId) -> Result<BranchTriple, TreeError> {
        if k == l {
            return Err(TreeError::SameLeaf);
        }
        self.tree.predicate(k)?;
        self.tree.predicate(l)?;
        let root_active = self.active_leaves(0);
        for leaf in [k, l] {
            if !root_active.contains(&leaf) {
                return Err(TreeError::InactiveLeaf(leaf));
            }
        }
        Ok(self.split(k, l))
    }

    fn split(&self, k: NodeId, l: NodeId) -> BranchTriple {
        let pk = self.path_set(0, k);
        let pl = self.path_set(0, l);
        let common = pk.iter().zip(&pl).take_while(|(a, b)| a == b).count();
        BranchTriple { q: pk[common - 1], i: pk[common], j: pl[common] }
    }

    /// Switching function between the sections of active leaves `k` and `l`.
    pub fn switch_fn(&self, k: NodeId, l: NodeId) -> Result<BranchValue<S>, TreeError> {
        let BranchTriple { i, j, q } = self.branch_triple(k, l)?;
        let bk = self.eval_bk(i, k)?;
        let bl = self.eval_bk(j, l)?;
        let (plus, minus) = match self.tree.nodes[q].kind {
            NodeKind::Min => (bl, bk),
            NodeKind::Max { .. } => (bk, bl),
            _ => return Err(TreeError::BadBranchPoint(q)),
        };
        Ok(BranchValue {
            value: plus.value - minus.value,
            dt: plus.dt - minus.dt,
            dx: plus.dx.iter().zip(&minus.dx).map(|(a, b)| *a - *b).collect(),
        })
    }
}
