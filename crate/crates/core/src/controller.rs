//! Per-section QPs and the selection of the applied input.

use num_rational::BigRational;
use num_traits::{Num, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::barrier::{BfTree, History, NodeId, NodeKind, Tolerance, TreeError, TreeEval};
use crate::linalg::{dot, norm2, Mat};
use crate::qp::{solve_qp, QpError, QpProblem, QpSolution, QpStatus};
use crate::scalar::Scalar;
use crate::sim::Dynamics;

pub const DEFAULT_INPUT_BOUND: f64 = 1e6;
/// Objectives closer than this (relative) count as a tie; the smaller leaf id wins.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig<S> {
    pub q: Mat<S>,
    /// Gain of the linear class-K function `α(s) = κ s`.
    pub kappa: S,
    pub b_min: S,
    pub tol: Tolerance<S>,
    pub input_bounds: Option<(Vec<S>, Vec<S>)>,
}

impl<S: Scalar> ControlConfig<S> {
    pub fn new(q: Mat<S>, kappa: S, b_min: S) -> Self {
        let m = q.nrows();
        let big = S::lit(DEFAULT_INPUT_BOUND);
        Self { q, kappa, b_min, tol: Tolerance::default(), input_bounds: Some((vec![-big; m], vec![big; m])) }
    }

    pub fn alpha(&self, b: S) -> S {
        self.kappa * b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResult<S> {
    pub k: NodeId,
    /// `None` when the section QP is infeasible.
    pub u: Option<Vec<S>>,
    /// `uᵀQu`, or `+∞` when infeasible.
    pub objective: S,
    pub solution: QpSolution<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput<S> {
    pub u: Vec<S>,
    /// Selected leaf; `None` once the task horizon has passed.
    pub chosen: Option<NodeId>,
    pub objective: S,
    pub b0: S,
    pub active: Vec<NodeId>,
    pub candidates: Vec<CandidateResult<S>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("every section QP is infeasible at t = {t} (active leaves {active:?})")]
    AllInfeasible { t: f64, active: Vec<NodeId>, certificates: Vec<Option<Vec<f64>>> },
    #[error("no active leaf at t = {t} before the horizon")]
    NoActiveLeaf { t: f64 },
    #[error("leaf {0} is not active at the root")]
    Inactive(NodeId),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

fn check_dims<S: Scalar>(x: &[S], dynamics: &dyn Dynamics<S>, cfg: &ControlConfig<S>) -> Result<(), ControlError> {
    if x.len() != dynamics.state_dim() {
        return Err(ControlError::Dimension(format!("state has {} entries, dynamics expect {}", x.len(), dynamics.state_dim())));
    }
    if cfg.q.nrows() != dynamics.input_dim() {
        return Err(ControlError::Dimension(format!("Q is {}x{}, dynamics have {} inputs", cfg.q.nrows(), cfg.q.ncols(), dynamics.input_dim())));
    }
    Ok(())
}

/// Solves the section QP of leaf `k`, given an evaluated tree and its active leaves.
pub fn candidate_from_eval<S: Scalar>(
    ev: &TreeEval<'_, S>,
    active: &[NodeId],
    k: NodeId,
    x: &[S],
    dynamics: &dyn Dynamics<S>,
    cfg: &ControlConfig<S>,
) -> Result<CandidateResult<S>, ControlError> {
    if !active.contains(&k) {
        return Err(ControlError::Inactive(k));
    }
    let f = dynamics.drift(x);
    let g = dynamics.input_map(x);
    let m = dynamics.input_dim();
    let mut a = Mat::zeros(0, m);
    let mut c = Vec::with_capacity(active.len());

    let bk = ev.eval_bk(0, k)?;
    a.push_row(&g.tr_mul_vec(&bk.dx));
    c.push(-cfg.alpha(ev.b0()) - bk.dt - dot(&bk.dx, &f));
    for &l in active.iter().filter(|&&l| l != k) {
        let s = ev.switch_fn(k, l)?;
        a.push_row(&g.tr_mul_vec(&s.dx));
        c.push(-s.dt - dot(&s.dx, &f));
    }
    let mut problem = QpProblem::new(cfg.q.clone(), a, c);
    if let Some((lo, hi)) = &cfg.input_bounds {
        problem = problem.with_bounds(lo.clone(), hi.clone());
    }
    let solution = solve_qp(&problem)?;
    let (u, objective) = match solution.status {
        QpStatus::Optimal => (Some(solution.u.clone()), solution.objective),
        QpStatus::Infeasible => (None, S::infinity()),
    };
    Ok(CandidateResult { k, u, objective, solution })
}

pub fn candidate_input<S: Scalar>(
    k: NodeId,
    t: S,
    x: &[S],
    tree: &BfTree<S>,
    hist: &History<S>,
    dynamics: &dyn Dynamics<S>,
    cfg: &ControlConfig<S>,
) -> Result<CandidateResult<S>, ControlError> {
    check_dims(x, dynamics, cfg)?;
    let ev = tree.at(t, x, hist, cfg.tol);
    let active = ev.active_leaves(0);
    candidate_from_eval(&ev, &active, k, x, dynamics, cfg)
}

/// Solves every section QP and applies the cheapest feasible input.
pub fn control_input<S: Scalar>(
    t: S,
    x: &[S],
    tree: &BfTree<S>,
    hist: &History<S>,
    dynamics: &dyn Dynamics<S>,
    cfg: &ControlConfig<S>,
) -> Result<ControlOutput<S>, ControlError> {
    check_dims(x, dynamics, cfg)?;
    let m = dynamics.input_dim();
    let ev = tree.at(t, x, hist, cfg.tol);
    if t > ev.betas[0] {
        return Ok(ControlOutput { u: vec![S::zero(); m], chosen: None, objective: S::zero(), b0: ev.b0(), active: vec![], candidates: vec![] });
    }
    let active = ev.active_leaves(0);
    if active.is_empty() {
        return Err(ControlError::NoActiveLeaf { t: t.as_f64() });
    }
    let candidates = active.iter().map(|&k| candidate_from_eval(&ev, &active, k, x, dynamics, cfg)).collect::<Result<Vec<_>, _>>()?;

    let tie = S::lit(TIE_TOL);
    let mut best: Option<&CandidateResult<S>> = None;
    for cand in candidates.iter().filter(|c| c.u.is_some()) {
        match best {
            Some(b) if cand.objective >= b.objective - tie * (S::one() + b.objective.abs()) => {}
            _ => best = Some(cand),
        }
    }
    let Some(best) = best else {
        return Err(ControlError::AllInfeasible {
            t: t.as_f64(),
            active,
            certificates: candidates.iter().map(|c| c.solution.certificate.as_ref().map(|y| y.iter().map(|v| v.as_f64()).collect())).collect(),
        });
    };
    Ok(ControlOutput {
        u: best.u.clone().unwrap(),
        chosen: Some(best.k),
        objective: best.objective,
        b0: ev.b0(),
        active: active.clone(),
        candidates: candidates.clone(),
    })
}

/// `κ · b_min − max(0, rates…)`; positive means the decay condition holds.
pub fn class_k_margin<T: Num + PartialOrd + Clone>(kappa: T, b_min: T, rates: &[T]) -> T {
    let worst = rates.iter().cloned().fold(T::zero(), |a, r| if r > a { r } else { a });
    kappa * b_min - worst
}

/// `−dγ/dt` of the line through `(t1, γ₀)` and `(t*, γ∞)`.
pub fn affine_decay_rate<T: Num + Clone>(gamma_zero: T, gamma_inf: T, t1: T, t_star: T) -> T {
    (gamma_zero - gamma_inf) / (t_star - t1)
}

/// Box and time grid the assumption checks sample from.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub times: Vec<f64>,
    pub count: usize,
    pub seed: u64,
}

impl Sampler {
    pub fn points<S: Scalar>(&self) -> Vec<Vec<S>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count).map(|_| self.lo.iter().zip(&self.hi).map(|(&l, &h)| S::lit(rng.gen_range(l..=h))).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayCheck {
    pub lhs: f64,
    pub max_decrease_rate: f64,
    pub margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityFinding {
    pub predicate: String,
    pub samples: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderFlag {
    pub predicate: String,
    pub x: Vec<f64>,
    pub lg_norm: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub decay: DecayCheck,
    pub concavity: Vec<ConcavityFinding>,
    pub first_order: Vec<FirstOrderFlag>,
    /// Smallest sampled maximum of `b₀` over the sampler's times.
    pub b_min_estimate: Option<f64>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.decay.passed && self.concavity.iter().all(|c| c.violations == 0)
    }
}

fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite value")
}

/// Decay condition `κ b_min > max(−dγ/dt)` in exact rational arithmetic.
///
/// Each funnel falls fastest on its linear part, so its worst rate is the
/// slope of the line through its parameters.
pub fn decay_check<S: Scalar>(tree: &BfTree<S>, cfg: &ControlConfig<S>) -> DecayCheck {
    let rates: Vec<BigRational> = tree
        .nodes()
        .iter()
        .filter_map(|n| n.gamma.as_ref())
        .map(|g| affine_decay_rate(rational(g.gamma_zero.as_f64()), rational(g.gamma_inf.as_f64()), rational(g.t1.as_f64()), rational(g.t_star.as_f64())))
        .collect();
    let lhs = rational(cfg.kappa.as_f64()) * rational(cfg.b_min.as_f64());
    let margin = class_k_margin(rational(cfg.kappa.as_f64()), rational(cfg.b_min.as_f64()), &rates);
    let worst = lhs.clone() - margin.clone();
    let to_f64 = |r: &BigRational| r.to_f64().unwrap_or(f64::NAN);
    DecayCheck {
        lhs: to_f64(&lhs),
        max_decrease_rate: to_f64(&worst),
        margin: to_f64(&margin),
        passed: margin.is_positive() && !margin.is_zero(),
    }
}

pub fn check_assumptions<S: Scalar>(tree: &BfTree<S>, cfg: &ControlConfig<S>, dynamics: &dyn Dynamics<S>, sampler: &Sampler) -> AssumptionReport {
    let decay = decay_check(tree, cfg);
    let points: Vec<Vec<S>> = sampler.points();

    let mut preds = Vec::new();
    for &leaf in tree.leaves() {
        if let NodeKind::Leaf { predicate } = &tree.nodes()[leaf].kind {
            if !preds.iter().any(|p: &&crate::stl::Predicate<S>| p.id == predicate.id) {
                preds.push(predicate);
            }
        }
    }

    let mut concavity = Vec::new();
    let mut first_order = Vec::new();
    for p in &preds {
        let mut violations = 0;
        let mut samples = 0;
        for pair in points.windows(2) {
            let (x, y) = (&pair[0], &pair[1]);
            let (hx, hy) = (p.eval(x), p.eval(y));
            for lam in [0.25, 0.5, 0.75].map(S::lit) {
                let z: Vec<S> = x.iter().zip(y).map(|(a, b)| lam * *a + (S::one() - lam) * *b).collect();
                let chord = lam * hx + (S::one() - lam) * hy;
                samples += 1;
                if p.eval(&z) < chord - S::eps_times(1e4) * (S::one() + hx.abs() + hy.abs()) {
                    violations += 1;
                }
            }
        }
        concavity.push(ConcavityFinding { predicate: p.id.clone(), samples, violations });

        for x in &points {
            let grad = p.grad(x);
            let g = dynamics.input_map(x);
            let lg = g.tr_mul_vec(&grad);
            let (gn, ln) = (norm2(&grad), norm2(&lg));
            if gn > S::lit(1e-6) && ln <= S::lit(1e-8) * (S::one() + gn * g.max_abs()) {
                first_order.push(FirstOrderFlag {
                    predicate: p.id.clone(),
                    x: x.iter().map(|v| v.as_f64()).collect(),
                    lg_norm: ln.as_f64(),
                    grad_norm: gn.as_f64(),
                });
            }
        }
    }

    let hist = History::new();
    let horizon = tree.root_beta(&hist);
    let b_min_estimate = sampler
        .times
        .iter()
        .map(|&t| S::lit(t))
        .filter(|&t| t <= horizon)
        .filter_map(|t| points.iter().map(|x| tree.b0(t, x, &hist)).reduce(S::max))
        .reduce(S::min)
        .map(|v| v.as_f64());

    AssumptionReport { decay, concavity, first_order, b_min_estimate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{build_bf_tree, GammaFn};
    use crate::sim::SingleIntegrator;
    use crate::stl::{Formula, Predicate, PredicateRegistry};
    use num_rational::Ratio;

    fn one_dim(gamma: GammaFn<f64>) -> BfTree<f64> {
        let mut reg = PredicateRegistry::<f64>::new();
        reg.insert(Predicate::ball2_select("p", 1, &[0], vec![0.0], 1.0).unwrap()).unwrap();
        build_bf_tree(&Formula::always(0.0, 0.0, Formula::pred("p")), &reg, &[gamma]).unwrap()
    }

    #[test]
    fn slack_constraint_gives_zero_input() {
        let tree = one_dim(GammaFn::affine(0.0, 0.0, -1.0, 1e6).unwrap());
        let cfg = ControlConfig::new(Mat::identity(1), 1.0, 0.5);
        let out = control_input(0.0, &[0.9], &tree, &History::new(), &SingleIntegrator { dim: 1 }, &cfg).unwrap();
        assert_eq!(out.u, vec![0.0]);
        assert_eq!(out.active.len(), 1);
    }

    #[test]
    fn single_row_closed_form() {
        // h = 1 − x², γ̇ = −0.3, α(s) = s at x = 0.9: −1.8u − 0.3 ≥ −b₀.
        let tree = one_dim(GammaFn::affine(0.0, 0.0, -0.3, 1.0).unwrap());
        let cfg = ControlConfig::new(Mat::identity(1), 1.0, 0.5);
        let out = control_input(0.0, &[0.9], &tree, &History::new(), &SingleIntegrator { dim: 1 }, &cfg).unwrap();
        let b0 = 1.0 - 0.81;
        assert!((out.b0 - b0).abs() < 1e-15);
        let expect = -(0.3 - b0) / 1.8;
        assert!((out.u[0] - expect).abs() < 1e-12, "{} vs {expect}", out.u[0]);
        assert!((expect + 0.11 / 1.8).abs() < 1e-12);
    }

    #[test]
    fn zero_input_after_horizon() {
        let tree = one_dim(GammaFn::affine(0.0, 0.0, -1.0, 1.0).unwrap());
        let cfg = ControlConfig::new(Mat::identity(1), 1.0, 0.5);
        let out = control_input(0.5, &[5.0], &tree, &History::new(), &SingleIntegrator { dim: 1 }, &cfg).unwrap();
        assert_eq!(out.u, vec![0.0]);
        assert_eq!(out.chosen, None);
    }

    #[test]
    fn decay_condition_both_sides() {
        let r = |n: i64, d: i64| Ratio::new(n, d);
        assert_eq!(class_k_margin(r(1, 1), r(2, 1), &[r(1, 2)]), r(3, 2));
        assert_eq!(class_k_margin(r(1, 10), r(2, 1), &[r(1, 2)]), r(-3, 10));
        assert_eq!(class_k_margin(r(1, 4), r(2, 1), &[r(1, 2)]), r(0, 1));
        assert_eq!(affine_decay_rate(r(5, 1), r(-1, 1), r(0, 1), r(20, 1)), r(3, 10));
        assert_eq!(class_k_margin(r(1, 1), r(1, 1), &[r(-5, 1)]), r(1, 1));
    }

    #[test]
    fn report_uses_exact_rates() {
        let tree = one_dim(GammaFn::affine(0.0, 0.0, -0.5, 1.0).unwrap());
        let pass = decay_check(&tree, &ControlConfig::new(Mat::identity(1), 1.0, 2.0));
        assert!(pass.passed);
        assert!((pass.margin - 1.5).abs() < 1e-15);
        let fail = decay_check(&tree, &ControlConfig::new(Mat::identity(1), 0.1, 2.0));
        assert!(!fail.passed);
        assert!((fail.margin + 0.3).abs() < 1e-15);
        let edge = decay_check(&tree, &ControlConfig::new(Mat::identity(1), 0.25, 2.0));
        assert!(!edge.passed);
    }

    #[test]
    fn concave_ball_has_no_violations() {
        let tree = one_dim(GammaFn::affine(0.0, 0.0, -0.5, 1.0).unwrap());
        let cfg = ControlConfig::new(Mat::identity(1), 1.0, 2.0);
        let sampler = Sampler { lo: vec![-3.0], hi: vec![3.0], times: vec![0.0], count: 3334, seed: 7 };
        let rep = check_assumptions(&tree, &cfg, &SingleIntegrator { dim: 1 }, &sampler);
        assert_eq!(rep.concavity[0].violations, 0);
        assert!(rep.concavity[0].samples >= 10_000 - 3);
        assert!(rep.first_order.is_empty());
        assert!(rep.passed());
        assert!((rep.b_min_estimate.unwrap() - 1.0).abs() < 1e-2);
    }
}
