//! Offline checks on recorded trajectories: the barrier value along the
//! trace and the quantitative robustness of the original formula.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::barrier::{BfTree, History, Tolerance, TreeError};
use crate::scalar::Scalar;
use crate::sim::Trajectory;
use crate::stl::{Binding, Formula, Interval, PredicateRegistry};

/// Slack when matching window endpoints to sample times.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("state at sample {index} has dimension {got}, expected {expected}")]
    Dimension { index: usize, got: usize, expected: usize },
    #[error("predicate `{0}` is not defined")]
    UnknownPredicate(String),
    #[error("formula needs the trace up to t = {needed} but it ends at {end}")]
    WindowBeyondTrace { needed: f64, end: f64 },
    #[error("no sample at t = {0}")]
    TimeNotSampled(f64),
    #[error("a temporal window evaluated from t = {0} contains no sample")]
    EmptyWindow(f64),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinBarrier<S> {
    pub value: S,
    pub time: S,
    /// Smallest value over the recorded samples alone.
    pub sampled: S,
}

/// Minimum of `b₀(t, x(t))` along the trace, replaying the disjunction history
/// at each sample.
///
/// With `refine > 0`, that many evenly spaced points between consecutive
/// samples are also evaluated on the linearly interpolated state.
pub fn min_barrier<S: Scalar>(traj: &Trajectory<S>, tree: &BfTree<S>, tol: Tolerance<S>, refine: usize) -> Result<MinBarrier<S>, MonitorError> {
    if traj.is_empty() {
        return Err(MonitorError::EmptyTrajectory);
    }
    if let Some(n) = tree.state_dim() {
        if let Some((index, x)) = traj.states.iter().enumerate().find(|(_, x)| x.len() != n) {
            return Err(MonitorError::Dimension { index, got: x.len(), expected: n });
        }
    }
    let mut hist = History::new();
    let mut best = MinBarrier { value: S::infinity(), time: traj.times[0], sampled: S::infinity() };
    for j in 0..traj.len() {
        let (t, x) = (traj.times[j], &traj.states[j]);
        tree.update_history(&mut hist, t, x, tol)?;
        let b = tree.at(t, x, &hist, tol).b0();
        best.sampled = best.sampled.min(b);
        if b < best.value {
            best.value = b;
            best.time = t;
        }
        if j + 1 == traj.len() || refine == 0 {
            continue;
        }
        let (t1, x1) = (traj.times[j + 1], &traj.states[j + 1]);
        for r in 1..=refine {
            let w = S::lit(r as f64 / (refine + 1) as f64);
            let tau = t + w * (t1 - t);
            let xi: Vec<S> = x.iter().zip(x1).map(|(a, c)| *a + w * (*c - *a)).collect();
            let h = tree.updated_history(&hist, tau, &xi, tol)?;
            let b = tree.at(tau, &xi, &h, tol).b0();
            if b < best.value {
                best.value = b;
                best.time = tau;
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Satisfied,
    Violated,
    /// `|value| ≤ tol`
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessResult<S> {
    pub value: S,
    pub verdict: Verdict,
}

impl<S: Scalar> RobustnessResult<S> {
    pub fn new(value: S, tol: S) -> Self {
        let verdict = if value > tol {
            Verdict::Satisfied
        } else if value < -tol {
            Verdict::Violated
        } else {
            Verdict::Boundary
        };
        Self { value, verdict }
    }
}

/// Latest time offset the formula looks ahead from its evaluation time.
pub fn lookahead(formula: &Formula) -> f64 {
    match formula {
        Formula::True | Formula::Pred(_) => 0.0,
        Formula::And(cs) | Formula::Or(cs) => cs.iter().map(lookahead).fold(0.0, f64::max),
        Formula::Eventually(w, c) | Formula::Always(w, c) => w.hi + lookahead(c),
        Formula::Until { window, left, right } => window.hi + lookahead(left).max(lookahead(right)),
    }
}

struct Signals<'a, S> {
    traj: &'a Trajectory<S>,
    registry: &'a PredicateRegistry<S>,
    eps: S,
}

type Signal<S> = Vec<Option<S>>;

impl<S: Scalar> Signals<'_, S> {
    /// Sample indices whose time lies in `[t_i + lo, t_i + hi]`, or `None`
    /// when the window runs past the trace.
    fn window(&self, i: usize, w: Interval) -> Option<std::ops::Range<usize>> {
        let times = &self.traj.times;
        let (lo, hi) = (times[i] + S::lit(w.lo), times[i] + S::lit(w.hi));
        if hi > *times.last()? + self.eps {
            return None;
        }
        let start = times.partition_point(|&t| t < lo - self.eps);
        let end = times.partition_point(|&t| t <= hi + self.eps);
        (start < end).then_some(start..end)
    }

    fn atom(&self, id: &str) -> Result<Signal<S>, MonitorError> {
        match self.registry.binding(id) {
            Some(Binding::Atom(p)) => Ok(self.traj.states.iter().map(|x| Some(p.eval(x))).collect()),
            Some(Binding::Conjunction(ids)) => {
                let parts = ids.iter().map(|a| self.atom(a)).collect::<Result<Vec<_>, _>>()?;
                Ok(combine(parts, S::min))
            }
            None => Err(MonitorError::UnknownPredicate(id.to_string())),
        }
    }

    fn eval(&self, f: &Formula) -> Result<Signal<S>, MonitorError> {
        let n = self.traj.len();
        Ok(match f {
            Formula::True => vec![Some(S::infinity()); n],
            Formula::Pred(id) => self.atom(id)?,
            Formula::And(cs) => combine(cs.iter().map(|c| self.eval(c)).collect::<Result<_, _>>()?, S::min),
            Formula::Or(cs) => combine(cs.iter().map(|c| self.eval(c)).collect::<Result<_, _>>()?, S::max),
            Formula::Eventually(w, c) | Formula::Always(w, c) => {
                let child = self.eval(c)?;
                let pick = if matches!(f, Formula::Eventually(..)) { S::max } else { S::min };
                (0..n)
                    .map(|i| {
                        fold(child[self.window(i, *w)?].iter().copied(), pick)
                    })
                    .collect()
            }
            Formula::Until { window, left, right } => {
                let (l, r) = (self.eval(left)?, self.eval(right)?);
                (0..n)
                    .map(|i| {
                        let range = self.window(i, *window)?;
                        // Running minimum of the left operand over [t_i, t_j].
                        let mut hold = S::infinity();
                        let mut best = S::neg_infinity();
                        for j in i..range.end {
                            hold = hold.min(l[j]?);
                            if j >= range.start {
                                best = best.max(hold.min(r[j]?));
                            }
                        }
                        Some(best)
                    })
                    .collect()
            }
        })
    }
}

/// Reduces with `op`; `None` if any entry is undefined or there are none.
fn fold<S: Scalar>(mut items: impl Iterator<Item = Option<S>>, op: fn(S, S) -> S) -> Option<S> {
    let first = items.next()??;
    items.try_fold(first, |acc, v| Some(op(acc, v?)))
}

fn combine<S: Scalar>(parts: Vec<Signal<S>>, op: fn(S, S) -> S) -> Signal<S> {
    let n = parts.first().map_or(0, Vec::len);
    (0..n).map(|i| fold(parts.iter().map(|p| p[i]), op)).collect()
}

/// Discrete-time quantitative robustness of `formula` at sample time `t`.
///
/// Temporal windows take the max/min over the samples they contain; nothing
/// is interpolated. `tol` only decides the verdict.
pub fn stl_robustness<S: Scalar>(traj: &Trajectory<S>, formula: &Formula, registry: &PredicateRegistry<S>, t: S, tol: S) -> Result<RobustnessResult<S>, MonitorError> {
    if traj.is_empty() {
        return Err(MonitorError::EmptyTrajectory);
    }
    let eps = S::lit(TIME_EPS);
    let i = traj.times.iter().position(|&s| (s - t).abs() <= eps).ok_or(MonitorError::TimeNotSampled(t.as_f64()))?;
    let end = *traj.times.last().unwrap();
    let needed = t + S::lit(lookahead(formula));
    if needed > end + eps {
        return Err(MonitorError::WindowBeyondTrace { needed: needed.as_f64(), end: end.as_f64() });
    }
    let sig = Signals { traj, registry, eps }.eval(formula)?;
    let value = sig[i].ok_or(MonitorError::EmptyWindow(t.as_f64()))?;
    Ok(RobustnessResult::new(value, tol))
}

fn atoms_of<S: Scalar>(formula: &Formula, registry: &PredicateRegistry<S>) -> Result<BTreeSet<String>, MonitorError> {
    let mut out = BTreeSet::new();
    let mut todo = formula.predicate_ids();
    while let Some(id) = todo.pop() {
        match registry.binding(&id) {
            Some(Binding::Atom(_)) => {
                out.insert(id);
            }
            Some(Binding::Conjunction(ids)) => todo.extend(ids.iter().cloned()),
            None => return Err(MonitorError::UnknownPredicate(id)),
        }
    }
    Ok(out)
}

/// Error budget of sampled robustness: the steepest observed rate of change of
/// any predicate between samples times the largest sample spacing.
pub fn tol_sampling<S: Scalar>(traj: &Trajectory<S>, formula: &Formula, registry: &PredicateRegistry<S>) -> Result<S, MonitorError> {
    if traj.is_empty() {
        return Err(MonitorError::EmptyTrajectory);
    }
    let preds: Vec<_> = atoms_of(formula, registry)?.iter().filter_map(|id| registry.get(id)).collect();
    let mut rate = S::zero();
    let mut dt_max = S::zero();
    for j in 0..traj.len().saturating_sub(1) {
        let dt = traj.times[j + 1] - traj.times[j];
        dt_max = dt_max.max(dt);
        for p in &preds {
            rate = rate.max((p.eval(&traj.states[j + 1]) - p.eval(&traj.states[j])).abs() / dt);
        }
    }
    Ok(rate * dt_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Implication {
    /// Barrier stayed nonnegative and the formula is satisfied within the sampling budget.
    Holds,
    /// Barrier went negative, so nothing is claimed.
    Vacuous,
    /// Barrier stayed nonnegative but robustness fell below the budget.
    Counterexample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatisfactionReport<S> {
    pub min_barrier: MinBarrier<S>,
    pub robustness: S,
    pub tol_sampling: S,
    pub outcome: Implication,
}

/// Checks `min b₀ ≥ 0 ⇒ robustness ≥ −tol_sampling` on one run.
///
/// Formula windows are absolute, so robustness is taken at `t = 0`.
pub fn check_satisfaction<S: Scalar>(
    traj: &Trajectory<S>,
    tree: &BfTree<S>,
    formula: &Formula,
    registry: &PredicateRegistry<S>,
    tol: Tolerance<S>,
) -> Result<SatisfactionReport<S>, MonitorError> {
    let mb = min_barrier(traj, tree, tol, 0)?;
    let budget = tol_sampling(traj, formula, registry)?;
    let rob = stl_robustness(traj, formula, registry, S::zero(), budget)?;
    let outcome = if mb.value < S::zero() {
        Implication::Vacuous
    } else if rob.value >= -budget {
        Implication::Holds
    } else {
        Implication::Counterexample
    };
    Ok(SatisfactionReport { min_barrier: mb, robustness: rob.value, tol_sampling: budget, outcome })
}
