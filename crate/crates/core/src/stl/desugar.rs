use std::collections::BTreeMap;

use super::ast::{Formula, Interval};

/// Chooses the witness time `t′ ∈ [a,b]` used to rewrite
/// `ψ′ U[a,b] ψ″` into `G[0,t′]ψ′ ∧ F[a,t′]ψ″`.
///
/// The default is `t′ = b`. Overrides are keyed by the preorder index of the
/// `U` node among all `U` nodes of the formula and are clamped into `[a,b]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WitnessPolicy {
    pub overrides: BTreeMap<usize, f64>,
}

impl WitnessPolicy {
    pub fn upper_bound() -> Self {
        Self::default()
    }

    pub fn with_override(mut self, until_index: usize, t: f64) -> Self {
        self.overrides.insert(until_index, t);
        self
    }

    fn witness(&self, index: usize, window: Interval) -> f64 {
        self.overrides.get(&index).map_or(window.hi, |&t| t.clamp(window.lo, window.hi))
    }

    /// Overrides that name a missing `U` node or fall outside its window.
    pub fn invalid_overrides(&self, formula: &Formula) -> Vec<(usize, f64)> {
        let mut windows = Vec::new();
        collect_until_windows(formula, &mut windows);
        self.overrides
            .iter()
            .filter(|(i, t)| windows.get(**i).map_or(true, |w| !(w.lo <= **t && **t <= w.hi)))
            .map(|(i, t)| (*i, *t))
            .collect()
    }
}

fn collect_until_windows(f: &Formula, out: &mut Vec<Interval>) {
    match f {
        Formula::True | Formula::Pred(_) => {}
        Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| collect_until_windows(c, out)),
        Formula::Eventually(_, c) | Formula::Always(_, c) => collect_until_windows(c, out),
        Formula::Until { window, left, right } => {
            out.push(*window);
            collect_until_windows(left, out);
            collect_until_windows(right, out);
        }
    }
}

/// Rewrites every `U` node; formulas without `U` come back unchanged.
pub fn desugar_until(formula: &Formula, policy: &WitnessPolicy) -> Formula {
    let mut counter = 0;
    rewrite(formula, policy, &mut counter)
}

fn rewrite(f: &Formula, policy: &WitnessPolicy, counter: &mut usize) -> Formula {
    match f {
        Formula::True | Formula::Pred(_) => f.clone(),
        Formula::And(cs) => Formula::And(cs.iter().map(|c| rewrite(c, policy, counter)).collect()),
        Formula::Or(cs) => Formula::Or(cs.iter().map(|c| rewrite(c, policy, counter)).collect()),
        Formula::Eventually(w, c) => Formula::Eventually(*w, Box::new(rewrite(c, policy, counter))),
        Formula::Always(w, c) => Formula::Always(*w, Box::new(rewrite(c, policy, counter))),
        Formula::Until { window, left, right } => {
            let t = policy.witness(*counter, *window);
            *counter += 1;
            let left = rewrite(left, policy, counter);
            let right = rewrite(right, policy, counter);
            Formula::And(vec![
                Formula::Always(Interval::new(0.0, t), Box::new(left)),
                Formula::Eventually(Interval::new(window.lo, t), Box::new(right)),
            ])
        }
    }
}
