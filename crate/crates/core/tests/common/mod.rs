#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stlcbf::barrier::{build_bf_tree, BfTree, GammaFn, GammaShape};
use stlcbf::linalg::Mat;
use stlcbf::scenario::Scenario;
use stlcbf::stl::{Formula, Predicate, PredicateRegistry};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

pub fn load_scenario(name: &str) -> Scenario {
    Scenario::load(scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// A random two-dimensional task built from affine funnels.
pub struct RandomTask {
    pub formula: Formula,
    pub registry: PredicateRegistry<f64>,
    pub gammas: Vec<GammaFn<f64>>,
    pub tree: BfTree<f64>,
    pub horizon: f64,
}

fn random_predicate(rng: &mut ChaCha8Rng, id: String) -> Predicate<f64> {
    if rng.gen_bool(0.7) {
        let c = vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        Predicate::ball2(id, Mat::identity(2), c, rng.gen_range(1.0..4.0)).unwrap()
    } else {
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        Predicate::affine(id, vec![th.cos(), th.sin()], rng.gen_range(-1.0..3.0))
    }
}

fn split(rng: &mut ChaCha8Rng, items: Vec<Formula>, temporal: bool) -> Formula {
    if items.len() == 1 {
        return items.into_iter().next().unwrap();
    }
    let mut items = items;
    let groups = if items.len() > 2 && rng.gen_bool(0.4) {
        let cut = rng.gen_range(1..items.len());
        let rest = items.split_off(cut);
        vec![split(rng, items, temporal), split(rng, rest, temporal)]
    } else {
        items
    };
    if rng.gen_bool(if temporal { 0.6 } else { 0.5 }) {
        Formula::And(groups)
    } else {
        Formula::Or(groups)
    }
}

/// Funnel for a window: eventually funnels cross zero inside it, always
/// funnels are nonpositive on it.
pub fn random_gamma(rng: &mut ChaCha8Rng, eventually: bool, lo: f64, hi: f64) -> GammaFn<f64> {
    if eventually {
        let cross = rng.gen_range(lo.max(0.2)..=hi);
        let g0 = rng.gen_range(0.5..5.0);
        GammaFn::affine(0.0, g0, -g0, 2.0 * cross).unwrap()
    } else if lo >= 0.2 && rng.gen_bool(0.5) {
        let cross = rng.gen_range(0.2..=lo);
        let g0 = rng.gen_range(0.5..5.0);
        GammaFn::affine(0.0, g0, -g0, 2.0 * cross).unwrap()
    } else {
        let g0 = rng.gen_range(-2.0..=0.0);
        let rate = rng.gen_range(0.1..1.0);
        GammaFn::affine(0.0, g0, g0 - 5.0 * rate, 5.0).unwrap()
    }
}

/// At most `max_temporal` temporal nodes and `max_leaves` predicate leaves.
pub fn random_task(rng: &mut ChaCha8Rng, max_temporal: usize, max_leaves: usize) -> RandomTask {
    let n_t = rng.gen_range(1..=max_temporal.min(max_leaves));
    let mut leaves = vec![1usize; n_t];
    for _ in n_t..rng.gen_range(n_t..=max_leaves) {
        let i = rng.gen_range(0..n_t);
        leaves[i] += 1;
    }
    let mut registry = PredicateRegistry::new();
    let mut next = 0;
    let mut temporal = Vec::new();
    let mut windows = Vec::new();
    for &count in &leaves {
        let preds: Vec<Formula> = (0..count)
            .map(|_| {
                let id = format!("p{next}");
                next += 1;
                registry.insert(random_predicate(rng, id.clone())).unwrap();
                Formula::pred(id)
            })
            .collect();
        let inner = split(rng, preds, false);
        let lo = rng.gen_range(0.0..5.0);
        let hi = lo + rng.gen_range(1.0..5.0);
        let eventually = rng.gen_bool(0.5);
        windows.push((eventually, lo, hi));
        temporal.push(if eventually { Formula::eventually(lo, hi, inner) } else { Formula::always(lo, hi, inner) });
    }
    let formula = split(rng, temporal, true);
    // Funnels are consumed in preorder, which is the order the windows appear in the text.
    let mut order = Vec::new();
    collect_windows(&formula, &mut order);
    let gammas: Vec<GammaFn<f64>> = order.iter().map(|&(ev, lo, hi)| random_gamma(rng, ev, lo, hi)).collect();
    let tree = build_bf_tree(&formula, &registry, &gammas).expect("random task builds");
    let horizon = tree.horizon().unwrap();
    RandomTask { formula, registry, gammas, tree, horizon }
}

fn collect_windows(f: &Formula, out: &mut Vec<(bool, f64, f64)>) {
    match f {
        Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| collect_windows(c, out)),
        Formula::Eventually(w, _) => out.push((true, w.lo, w.hi)),
        Formula::Always(w, _) => out.push((false, w.lo, w.hi)),
        _ => {}
    }
}

/// Direct recursive evaluation of `b₀` with nothing disqualified.
pub struct Oracle<'a> {
    pub formula: &'a Formula,
    pub registry: &'a PredicateRegistry<f64>,
    pub gammas: &'a [GammaFn<f64>],
}

/// Decreasing funnels only: the line through `(t1, γ0)` and `(t*, γ∞)`, levelled off at `γ∞`,
/// with the corner replaced by a parabola on `[t* - w, t* + w]`.
fn gamma_value(g: &GammaFn<f64>, t: f64) -> f64 {
    let slope = (g.gamma_inf - g.gamma_zero) / (g.t_star - g.t1);
    let line = g.gamma_zero + slope * (t - g.t1);
    match g.shape {
        GammaShape::Affine => line,
        GammaShape::Clamped { blend: w } => {
            assert!(slope <= 0.0, "oracle covers decreasing funnels only");
            if t <= g.t_star - w {
                line
            } else if t >= g.t_star + w {
                g.gamma_inf
            } else {
                let d = t - g.t_star - w;
                g.gamma_inf - slope * d * d / (4.0 * w)
            }
        }
    }
}

/// First time the funnel reaches zero, by bisection.
fn gamma_zero_time(g: &GammaFn<f64>) -> f64 {
    if g.gamma_zero <= 0.0 {
        return g.t1;
    }
    let (mut lo, mut hi) = (g.t1, g.t1 + 1.0);
    while gamma_value(g, hi) > 0.0 {
        hi = g.t1 + 2.0 * (hi - g.t1);
        assert!(hi < 1e9, "funnel never reaches zero");
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gamma_value(g, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

impl Oracle<'_> {
    pub fn b0(&self, t: f64, x: &[f64]) -> f64 {
        let mut next = 0;
        self.walk(self.formula, t, x, &mut next).0.unwrap_or(0.0)
    }

    /// Deactivation times of every temporal node in preorder plus the root's.
    pub fn betas(&self) -> (Vec<f64>, f64) {
        let mut next = 0;
        let mut out = Vec::new();
        let root = self.beta_walk(self.formula, &mut next, &mut out);
        (out, root)
    }

    fn beta_walk(&self, f: &Formula, next: &mut usize, out: &mut Vec<f64>) -> f64 {
        match f {
            Formula::Eventually(_, _) => {
                let b = gamma_zero_time(&self.gammas[*next]);
                *next += 1;
                out.push(b);
                b
            }
            Formula::Always(w, _) => {
                *next += 1;
                out.push(w.hi);
                w.hi
            }
            Formula::And(cs) if f.contains_temporal() => cs.iter().map(|c| self.beta_walk(c, next, out)).fold(f64::NEG_INFINITY, f64::max),
            Formula::Or(cs) if f.contains_temporal() => cs.iter().map(|c| self.beta_walk(c, next, out)).fold(f64::INFINITY, f64::min),
            _ => f64::INFINITY,
        }
    }

    /// `(value, deactivation time)`; the value is `None` once the node is switched off.
    fn walk(&self, f: &Formula, t: f64, x: &[f64], next: &mut usize) -> (Option<f64>, f64) {
        match f {
            Formula::True => (Some(1.0), f64::INFINITY),
            Formula::Pred(p) => (Some(self.registry.get(p).unwrap().eval(x)), f64::INFINITY),
            Formula::Eventually(_, c) | Formula::Always(_, c) => {
                let g = &self.gammas[*next];
                *next += 1;
                let beta = match f {
                    Formula::Always(w, _) => w.hi,
                    _ => gamma_zero_time(g),
                };
                let (v, _) = self.walk(c, t, x, next);
                (if t <= beta { Some(v.unwrap() + gamma_value(g, t)) } else { None }, beta)
            }
            Formula::And(cs) | Formula::Or(cs) => {
                let kids: Vec<_> = cs.iter().map(|c| self.walk(c, t, x, next)).collect();
                let is_and = matches!(f, Formula::And(_));
                if !f.contains_temporal() {
                    let vals = kids.iter().map(|k| k.0.unwrap());
                    let v = if is_and { vals.fold(f64::INFINITY, f64::min) } else { vals.fold(f64::NEG_INFINITY, f64::max) };
                    return (Some(v), f64::INFINITY);
                }
                if is_and {
                    let beta = kids.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
                    let v = kids.iter().filter_map(|k| k.0).reduce(f64::min);
                    (if t <= beta { Some(v.unwrap_or(0.0)) } else { None }, beta)
                } else {
                    let beta = kids.iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
                    let v = kids.iter().filter_map(|k| k.0).reduce(f64::max);
                    (if t <= beta { v } else { None }, beta)
                }
            }
            Formula::Until { .. } => panic!("rewrite until first"),
        }
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(&l, &h)| rng.gen_range(l..=h)).collect()
}
