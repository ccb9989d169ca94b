mod common;

use common::{load_scenario, random_task, uniform, RandomTask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlcbf::barrier::{build_bf_tree, GammaFn, GammaShape, History, NodeKind, Tolerance};
use stlcbf::controller::{control_input, ControlConfig};
use stlcbf::linalg::Mat;
use stlcbf::monitor::stl_robustness;
use stlcbf::qp::{solve_qp, QpProblem, QpStatus};
use stlcbf::scenario::Compiled;
use stlcbf::sim::{integrate_step, Integrator, LinearSystem, Trajectory};
use stlcbf::stl::{desugar_until, parse_formula_unbound, validate_fragment, Formula, Interval, Predicate, PredicateRegistry, WitnessPolicy};

fn task(seed: u64) -> RandomTask {
    random_task(&mut ChaCha8Rng::seed_from_u64(seed), 4, 6)
}

// ---------- predicates ----------

fn predicate() -> impl Strategy<Value = Predicate<f64>> {
    prop_oneof![
        (prop::collection::vec(-3.0..3.0f64, 4), prop::collection::vec(-3.0..3.0f64, 2), 0.1..4.0f64)
            .prop_map(|(m, c, r)| Predicate::ball2("p", Mat::from_rows(&[m[..2].to_vec(), m[2..].to_vec()]), c, r).unwrap()),
        (prop::collection::vec(-3.0..3.0f64, 2), -3.0..3.0f64).prop_map(|(a, d)| Predicate::affine("p", a, d)),
    ]
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 2)
}

proptest! {
    #[test]
    fn predicates_are_concave(p in predicate(), x in point(), y in point(), lam in 0.0..=1.0f64) {
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        let chord = lam * p.eval(&x) + (1.0 - lam) * p.eval(&y);
        prop_assert!(p.eval(&z) >= chord - 1e-9 * (1.0 + chord.abs()));
    }

    #[test]
    fn predicate_gradient_matches_differences(p in predicate(), x in point()) {
        let h = 1e-6;
        let g = p.grad(&x);
        for j in 0..2 {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (p.eval(&a) - p.eval(&b)) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1.0), "{fd} vs {}", g[j]);
        }
    }
}

// ---------- formulas ----------

fn window() -> impl Strategy<Value = Interval> {
    (0.0..20.0f64, 0.0..20.0f64).prop_map(|(lo, len)| Interval::new(lo, lo + len))
}

fn psi() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![Just(Formula::True), "[a-e][0-9]?".prop_map(Formula::Pred)];
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::And), prop::collection::vec(inner, 2..4).prop_map(Formula::Or)]
    })
}

fn temporal() -> impl Strategy<Value = Formula> {
    prop_oneof![
        (window(), psi()).prop_map(|(w, c)| Formula::Eventually(w, Box::new(c))),
        (window(), psi()).prop_map(|(w, c)| Formula::Always(w, Box::new(c))),
        (window(), psi(), psi()).prop_map(|(w, l, r)| Formula::Until { window: w, left: Box::new(l), right: Box::new(r) }),
    ]
}

fn phi() -> impl Strategy<Value = Formula> {
    temporal().prop_recursive(2, 8, 3, |inner| {
        prop_oneof![prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::And), prop::collection::vec(inner, 2..4).prop_map(Formula::Or)]
    })
}

/// Formulas that break the two-layer grammar in one place.
fn outside() -> impl Strategy<Value = Formula> {
    prop_oneof![
        (window(), phi()).prop_map(|(w, c)| Formula::Eventually(w, Box::new(c))),
        (window(), phi()).prop_map(|(w, c)| Formula::Always(w, Box::new(c))),
        (window(), phi(), psi()).prop_map(|(w, l, r)| Formula::Until { window: w, left: Box::new(l), right: Box::new(r) }),
        (phi(), psi()).prop_map(|(a, b)| Formula::And(vec![a, b])),
        (psi(), phi()).prop_map(|(a, b)| Formula::Or(vec![a, b])),
        (1.0..10.0f64, 0.1..1.0f64, psi()).prop_map(|(hi, gap, c)| Formula::eventually(hi + gap, hi, c)),
        (0.1..5.0f64, psi()).prop_map(|(lo, c)| Formula::always(-lo, 1.0, c)),
        Just(Formula::And(vec![])),
    ]
}

fn has_until(f: &Formula) -> bool {
    f.contains_until()
}

/// Walks the original and rewritten formulas side by side.
fn check_rewrite(orig: &Formula, new: &Formula) -> Result<(), TestCaseError> {
    match (orig, new) {
        (Formula::Until { window, left, right }, Formula::And(parts)) => {
            prop_assert_eq!(parts.len(), 2);
            let (Formula::Always(g, l), Formula::Eventually(e, r)) = (&parts[0], &parts[1]) else {
                return Err(TestCaseError::fail(format!("unexpected rewrite {new}")));
            };
            prop_assert_eq!(g.lo, 0.0);
            prop_assert_eq!(e.lo, window.lo);
            prop_assert_eq!(g.hi, e.hi, "both operators must share the witness time");
            prop_assert!(window.lo <= e.hi && e.hi <= window.hi);
            prop_assert_eq!(l.as_ref(), left.as_ref());
            prop_assert_eq!(r.as_ref(), right.as_ref());
            Ok(())
        }
        (Formula::And(a), Formula::And(b)) | (Formula::Or(a), Formula::Or(b)) => {
            prop_assert_eq!(a.len(), b.len());
            a.iter().zip(b).try_for_each(|(x, y)| check_rewrite(x, y))
        }
        _ => {
            prop_assert_eq!(orig, new);
            Ok(())
        }
    }
}

proptest! {
    #[test]
    fn printing_then_parsing_is_identity(f in phi()) {
        let text = f.to_string();
        prop_assert_eq!(parse_formula_unbound(&text).unwrap(), f, "{}", text);
    }

    #[test]
    fn psi_formulas_round_trip(f in psi()) {
        prop_assert_eq!(parse_formula_unbound(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn fragment_accepts_the_grammar(f in phi()) {
        prop_assert!(validate_fragment(&f).is_ok(), "{}", f);
    }

    #[test]
    fn fragment_rejects_everything_else(bad in outside(), ctx in phi(), left in any::<bool>()) {
        prop_assert!(validate_fragment(&bad).is_err(), "{}", bad);
        let embedded = if left { Formula::And(vec![bad, ctx]) } else { Formula::Or(vec![ctx, bad]) };
        prop_assert!(validate_fragment(&embedded).is_err(), "{}", embedded);
    }

    #[test]
    fn desugaring_removes_until(f in phi(), overrides in prop::collection::vec(0.0..1.0f64, 0..4)) {
        let mut policy = WitnessPolicy::default();
        for (i, s) in overrides.iter().enumerate() {
            policy = policy.with_override(i, s * 40.0);
        }
        let out = desugar_until(&f, &policy);
        prop_assert!(!has_until(&out));
        prop_assert!(validate_fragment(&out).is_ok());
        check_rewrite(&f, &out)?;
    }
}

// ---------- funnels ----------

fn funnel() -> impl Strategy<Value = GammaFn<f64>> {
    (-2.0..2.0f64, -5.0..10.0f64, -5.0..5.0f64, 0.5..10.0f64, prop::option::of(0.0..=1.0f64)).prop_map(|(t1, g0, gi, span, blend)| {
        let shape = blend.map_or(GammaShape::Affine, |b| GammaShape::Clamped { blend: b * span });
        GammaFn::new(t1, g0, gi, t1 + span, shape).unwrap()
    })
}

fn single(eventually: bool, lo: f64, hi: f64, g: GammaFn<f64>) -> Result<stlcbf::BfTree<f64>, stlcbf::barrier::BuildError> {
    let mut reg = PredicateRegistry::new();
    reg.insert(Predicate::affine("p", vec![1.0], 0.0)).unwrap();
    let f = if eventually { Formula::eventually(lo, hi, Formula::pred("p")) } else { Formula::always(lo, hi, Formula::pred("p")) };
    build_bf_tree(&f, &reg, &[g])
}

proptest! {
    #[test]
    fn eventually_funnels_cross_inside_their_window(g in funnel(), lo in 0.0..5.0f64, len in 0.0..5.0f64) {
        let hi = lo + len;
        match single(true, lo, hi, g) {
            Ok(tree) => {
                let beta = tree.nodes()[0].beta;
                prop_assert!(lo <= beta && beta <= hi);
                prop_assert!(g.eval(beta) <= 1e-9);
                prop_assert!(beta <= g.t1 || g.eval(beta - 1e-6) > 0.0);
            }
            Err(_) => {
                // No time in the window is the first nonpositive one.
                let first = (0..=2000).map(|i| g.t1 + i as f64 * 0.01).find(|&t| g.eval(t) <= 0.0);
                if let Some(t) = first {
                    prop_assert!(t < lo + 0.02 || t > hi - 0.02 || t < lo || t > hi, "crossing {t} in [{lo}, {hi}]");
                }
            }
        }
    }

    #[test]
    fn always_funnels_stay_nonpositive(g in funnel(), lo in 0.0..5.0f64, len in 0.0..5.0f64) {
        let hi = lo + len;
        let worst = (0..=100).map(|i| g.eval(lo + len * i as f64 / 100.0)).fold(f64::NEG_INFINITY, f64::max);
        match single(false, lo, hi, g) {
            Ok(tree) => {
                prop_assert!(worst <= 1e-12, "funnel reaches {worst}");
                prop_assert_eq!(tree.nodes()[0].beta, hi);
            }
            Err(_) => prop_assert!(worst > 0.0),
        }
    }

    #[test]
    fn funnel_derivative_matches_differences(g in funnel(), s in 0.0..1.0f64) {
        let t = g.t1 - 1.0 + s * (g.t_star - g.t1 + 3.0);
        let w = match g.shape { GammaShape::Clamped { blend } => blend, GammaShape::Affine => f64::INFINITY };
        // Only a zero-width clamp has a kink.
        prop_assume!(w > 0.0 || (t - g.t_star).abs() > 1e-3);
        let h = 1e-6;
        let fd = (g.eval(t + h) - g.eval(t - h)) / (2.0 * h);
        let d = g.deriv(t);
        prop_assert!((fd - d).abs() <= 1e-5 * d.abs().max(1.0), "{fd} vs {d}");
        prop_assert!(d.abs() <= g.slope().abs() + 1e-12);
    }
}

// ---------- trees ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deactivation_times_follow_the_node_rules(seed in any::<u64>()) {
        let t = task(seed);
        let nodes = t.tree.nodes();
        let betas = t.tree.betas(&History::new());
        for (i, n) in nodes.iter().enumerate() {
            let kids: Vec<f64> = n.children.iter().map(|&c| betas[c]).collect();
            let expect = match &n.kind {
                NodeKind::Leaf { .. } | NodeKind::Max { tracked: false } => f64::INFINITY,
                NodeKind::Eventually { .. } => n.gamma.unwrap().first_nonpositive().unwrap(),
                NodeKind::Always { window } => window.hi,
                NodeKind::Min => kids.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                NodeKind::Max { tracked: true } => kids.iter().copied().fold(f64::INFINITY, f64::min),
            };
            prop_assert_eq!(betas[i], expect, "node {}", n.label);
            if !n.is_leaf() && !matches!(n.kind, NodeKind::Eventually { .. } | NodeKind::Always { .. }) {
                prop_assert!(n.gamma.is_none());
            }
            for &c in &n.children {
                prop_assert_eq!(nodes[c].parent, Some(i));
            }
        }
        let oracle = common::Oracle { formula: &t.formula, registry: &t.registry, gammas: &t.gammas };
        let root = oracle.betas().1;
        prop_assert!(root == betas[0] || (root - betas[0]).abs() <= 1e-9, "{} vs {}", root, betas[0]);
    }

    #[test]
    fn barrier_vanishes_after_the_horizon(seed in any::<u64>(), dt in 1e-9..10.0f64, x in point()) {
        let t = task(seed);
        prop_assert_eq!(t.tree.b0(t.horizon + dt, &x, &History::new()), 0.0);
    }

    #[test]
    fn active_sets_cover_the_live_horizon(seed in any::<u64>(), s in 0.0..=1.0f64, x in point()) {
        let t = task(seed);
        let hist = History::new();
        let time = s * t.tree.root_beta(&hist).min(t.horizon);
        let ev = t.tree.at(time, &x, &hist, Tolerance::default());
        let active = ev.active_leaves(0);
        prop_assert!(!active.is_empty());
        for k in active {
            let path = ev.path_set(0, k);
            prop_assert_eq!(path[0], 0);
            prop_assert_eq!(*path.last().unwrap(), k);
            for pair in path.windows(2) {
                prop_assert!(ev.qualified[pair[0]].contains(&pair[1]));
                prop_assert!(t.tree.nodes()[pair[0]].children.contains(&pair[1]));
            }
        }
    }

    #[test]
    fn disqualification_is_permanent(seed in any::<u64>(), walk in prop::collection::vec(point(), 1..30)) {
        let t = task(seed);
        let mut hist = History::new();
        let mut seen: Vec<(usize, usize)> = Vec::new();
        for (j, x) in walk.iter().enumerate() {
            let time = t.horizon * j as f64 / walk.len() as f64;
            t.tree.update_history(&mut hist, time, x, Tolerance::default()).unwrap();
            for &(n, c) in &seen {
                prop_assert!(hist.is_disqualified(n, c));
            }
            seen = hist.disqualified.iter().flat_map(|(&n, cs)| cs.iter().map(move |&c| (n, c))).collect();
            for &(n, _) in &seen {
                let tracked = matches!(t.tree.nodes()[n].kind, NodeKind::Max { tracked: true });
                prop_assert!(tracked, "node {} is not a tracked disjunction", n);
            }
        }
    }

    #[test]
    fn barrier_is_concave_within_a_section(seed in any::<u64>(), s in 0.0..=1.0f64) {
        let t = task(seed);
        let hist = History::new();
        let time = s * t.horizon;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let wide = Tolerance::new(1e-3);
        let section = |x: &[f64]| {
            let ev = t.tree.at(time, x, &hist, wide);
            let a = ev.active_leaves(0);
            (a.len() == 1).then(|| a[0])
        };
        for _ in 0..20 {
            let x = uniform(&mut rng, &[-5.0, -5.0], &[5.0, 5.0]);
            let y = uniform(&mut rng, &[-5.0, -5.0], &[5.0, 5.0]);
            let lam: f64 = rng.gen_range(0.0..=1.0);
            let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
            let (Some(k), Some(ky), Some(kz)) = (section(&x), section(&y), section(&z)) else { continue };
            if k != ky || k != kz {
                continue;
            }
            // Inside one section b0 is h_k plus a function of time alone.
            let h = t.tree.predicate(k).unwrap();
            let off = |p: &[f64]| t.tree.b0(time, p, &hist) - h.eval(p);
            prop_assert!((off(&x) - off(&y)).abs() <= 1e-9 * (1.0 + off(&x).abs()));
            let chord = lam * t.tree.b0(time, &x, &hist) + (1.0 - lam) * t.tree.b0(time, &y, &hist);
            prop_assert!(t.tree.b0(time, &z, &hist) >= chord - 1e-9 * (1.0 + chord.abs()));
        }
    }

    #[test]
    fn barrier_is_smooth_inside_a_section(seed in any::<u64>(), s in 0.0..=1.0f64, x in point()) {
        let t = task(seed);
        let hist = History::new();
        let time = s * t.horizon;
        let ev = t.tree.at(time, &x, &hist, Tolerance::new(1e-3));
        let active = ev.active_leaves(0);
        prop_assume!(active.len() == 1 && time < t.tree.root_beta(&hist));
        let grad = ev.eval_bk(0, active[0]).unwrap().dx;
        let h = 1e-6;
        for j in 0..2 {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (t.tree.b0(time, &a, &hist) - t.tree.b0(time, &b, &hist)) / (2.0 * h);
            prop_assert!((fd - grad[j]).abs() <= 1e-5 * grad[j].abs().max(1.0), "{fd} vs {}", grad[j]);
        }
    }
}

// ---------- QP ----------

fn qp_case() -> impl Strategy<Value = (Mat<f64>, Mat<f64>, Vec<f64>)> {
    (1usize..=4, 0usize..=6).prop_flat_map(|(m, p)| {
        (prop::collection::vec(-2.0..2.0f64, m * m), prop::collection::vec(-2.0..2.0f64, p * m), prop::collection::vec(-2.0..2.0f64, p)).prop_map(move |(q, a, c)| {
            let root = Mat::from_rows(&q.chunks(m).map(<[f64]>::to_vec).collect::<Vec<_>>());
            let mut qm = root.transpose().mul(&root);
            for i in 0..m {
                qm[(i, i)] += 0.5;
            }
            let rows: Vec<Vec<f64>> = a.chunks(m.max(1)).map(<[f64]>::to_vec).collect();
            let am = if p == 0 { Mat::zeros(0, m) } else { Mat::from_rows(&rows) };
            (qm, am, c)
        })
    })
}

proptest! {
    #[test]
    fn qp_cost_scaling_keeps_the_minimizer((q, a, c) in qp_case(), alpha in 0.01..100.0f64) {
        let base = solve_qp(&QpProblem::new(q.clone(), a.clone(), c.clone())).unwrap();
        let scaled = solve_qp(&QpProblem::new(q.scaled(alpha), a, c)).unwrap();
        prop_assert_eq!(base.status, scaled.status);
        if base.status == QpStatus::Optimal {
            for (u, v) in base.u.iter().zip(&scaled.u) {
                prop_assert!((u - v).abs() <= 1e-7 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn extra_constraints_never_lower_the_optimum((q, a, c) in qp_case(), row in prop::collection::vec(-2.0..2.0f64, 4), rhs in -2.0..2.0f64) {
        let base = solve_qp(&QpProblem::new(q.clone(), a.clone(), c.clone())).unwrap();
        let mut a2 = a.clone();
        a2.push_row(&row[..q.nrows()]);
        let mut c2 = c.clone();
        c2.push(rhs);
        let more = solve_qp(&QpProblem::new(q, a2, c2)).unwrap();
        match (base.status, more.status) {
            (QpStatus::Optimal, QpStatus::Optimal) => prop_assert!(more.objective >= base.objective - 1e-9 * (1.0 + base.objective.abs())),
            (QpStatus::Infeasible, s) => prop_assert_eq!(s, QpStatus::Infeasible),
            _ => {}
        }
    }

    #[test]
    fn qp_is_deterministic((q, a, c) in qp_case()) {
        let p = QpProblem::new(q, a, c);
        let (x, y) = (solve_qp(&p).unwrap(), solve_qp(&p).unwrap());
        prop_assert_eq!(x.status, y.status);
        prop_assert_eq!(x.u.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.u.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(x.objective.to_bits(), y.objective.to_bits());
    }
}

// ---------- controller ----------

struct Toy {
    c: Compiled<f64>,
    cfg: ControlConfig<f64>,
    t0: f64,
    betas: Vec<f64>,
}

fn toy(name: &str) -> Toy {
    let s = load_scenario(name);
    let c: Compiled<f64> = s.compile().unwrap();
    let cfg = c.control.clone();
    let betas = c.tree.betas(&History::new()).into_iter().filter(|b| b.is_finite()).collect();
    Toy { c, cfg, t0: s.run.t0, betas }
}

fn feasible_sample(toy: &Toy, rng: &mut ChaCha8Rng, gap: f64) -> (f64, Vec<f64>) {
    let hist = History::new();
    let horizon = toy.c.tree.horizon().unwrap();
    loop {
        let t = rng.gen_range(toy.t0..horizon);
        if toy.betas.iter().any(|b| (t - b).abs() < gap) {
            continue;
        }
        let x = uniform(rng, &toy.c.sampler.lo, &toy.c.sampler.hi);
        if toy.c.tree.b0(t, &x, &hist) >= 0.0 {
            return (t, x);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn returned_input_meets_the_decay_condition(seed in any::<u64>(), which in 0usize..3) {
        let toy = toy(["example1_toy", "eventually_1d", "always_2d"][which]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, x) = feasible_sample(&toy, &mut rng, 1e-3);
        let hist = History::new();
        let out = control_input(t, &x, &toy.c.tree, &hist, toy.c.dynamics.as_ref(), &toy.cfg).unwrap();
        let h = 1e-6;
        let xdot = toy.c.dynamics.rhs(&x, &out.u);
        let y: Vec<f64> = x.iter().zip(&xdot).map(|(a, v)| a + h * v).collect();
        let b = toy.c.tree.b0(t, &x, &hist);
        let rate = (toy.c.tree.b0(t + h, &y, &hist) - b) / h;
        let scale = 1.0 + out.u.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(rate >= -toy.cfg.kappa * b - 1e-4 * scale, "rate {rate} vs bound {}", -toy.cfg.kappa * b);
    }
}

#[test]
fn controller_accepts_deactivation_instants() {
    for name in ["example1_toy", "eventually_1d", "always_2d"] {
        let toy = toy(name);
        let hist = History::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &beta in &toy.betas {
            let mut tried = 0;
            for _ in 0..2000 {
                let x = uniform(&mut rng, &toy.c.sampler.lo, &toy.c.sampler.hi);
                if toy.c.tree.b0(beta, &x, &hist) < 0.0 {
                    continue;
                }
                tried += 1;
                let out = control_input(beta, &x, &toy.c.tree, &hist, toy.c.dynamics.as_ref(), &toy.cfg);
                assert!(out.is_ok(), "{name} at t = {beta}: {:?}", out.err());
                assert!(out.unwrap().u.iter().all(|v| v.is_finite()));
                if tried == 20 {
                    break;
                }
            }
            assert!(tried > 0, "{name}: no feasible state at t = {beta}");
        }
    }
}

// ---------- integration ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn integrators_converge_at_their_order(entries in prop::collection::vec(-1.0..1.0f64, 4), u in prop::collection::vec(-1.0..1.0f64, 2)) {
        let a = Mat::from_rows(&[entries[..2].to_vec(), entries[2..].to_vec()]);
        let sys = LinearSystem::new(a, Mat::identity(2)).unwrap();
        let x0 = vec![1.0, -0.5];
        let run = |n: usize, m: Integrator| {
            let h = 1.0 / n as f64;
            (0..n).fold(x0.clone(), |x, _| integrate_step(&sys, &x, &u, h, m))
        };
        let exact = run(4096, Integrator::Rk4);
        let err = |x: Vec<f64>| x.iter().zip(&exact).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let (e1, e2) = (err(run(50, Integrator::Euler)), err(run(100, Integrator::Euler)));
        if e1 > 1e-8 {
            prop_assert!((e1 / e2 - 2.0).abs() < 0.25, "euler ratio {}", e1 / e2);
        }
        let (r1, r2) = (err(run(5, Integrator::Rk4)), err(run(10, Integrator::Rk4)));
        if r1 > 1e-10 {
            prop_assert!(r1 / r2 > 12.0 && r1 / r2 < 20.0, "rk4 ratio {}", r1 / r2);
        }
    }
}

// ---------- monitor ----------

fn trace(values: &[f64], per_knot: usize) -> Trajectory<f64> {
    let mut tr = Trajectory::default();
    let dt = 1.0 / per_knot as f64;
    for i in 0..values.len() - 1 {
        for j in 0..per_knot {
            let s = j as f64 / per_knot as f64;
            let v = values[i] + s * (values[i + 1] - values[i]);
            tr.push((i * per_knot + j) as f64 * dt, vec![v], vec![0.0], 0.0, None, 0, 0);
        }
    }
    let last = values.len() - 1;
    tr.push(last as f64, vec![values[last]], vec![0.0], 0.0, None, 0, 0);
    tr
}

fn line_registry(offset: f64) -> PredicateRegistry<f64> {
    let mut reg = PredicateRegistry::new();
    reg.insert(Predicate::affine("p", vec![1.0], -offset)).unwrap();
    reg.insert(Predicate::affine("q", vec![1.0], -offset - 0.5)).unwrap();
    reg
}

fn monotone_phi() -> impl Strategy<Value = Formula> {
    let w = (0usize..4, 0usize..4).prop_map(|(lo, len)| Interval::new(lo as f64, (lo + len) as f64));
    let atom = prop_oneof![Just(Formula::pred("p")), Just(Formula::pred("q"))];
    let op = prop_oneof![
        (w.clone(), atom.clone()).prop_map(|(w, c)| Formula::Eventually(w, Box::new(c))),
        (w.clone(), atom.clone()).prop_map(|(w, c)| Formula::Always(w, Box::new(c))),
        (w, atom.clone(), atom).prop_map(|(w, l, r)| Formula::Until { window: w, left: Box::new(l), right: Box::new(r) }),
    ];
    op.prop_recursive(2, 6, 3, |inner| {
        prop_oneof![prop::collection::vec(inner.clone(), 2..3).prop_map(Formula::And), prop::collection::vec(inner, 2..3).prop_map(Formula::Or)]
    })
}

proptest! {
    #[test]
    fn robustness_matches_window_extremes(knots in prop::collection::vec(-5.0..5.0f64, 9), lo in 0usize..4, len in 0usize..4, offset in -2.0..2.0f64) {
        let tr = trace(&knots, 10);
        let reg = line_registry(offset);
        let (a, b) = (lo, lo + len);
        let window = &knots[a..=b];
        let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max) - offset;
        let low = window.iter().copied().fold(f64::INFINITY, f64::min) - offset;
        let ev = stl_robustness(&tr, &Formula::eventually(a as f64, b as f64, Formula::pred("p")), &reg, 0.0, 0.0).unwrap();
        let al = stl_robustness(&tr, &Formula::always(a as f64, b as f64, Formula::pred("p")), &reg, 0.0, 0.0).unwrap();
        prop_assert!((ev.value - hi).abs() <= 1e-9, "{} vs {hi}", ev.value);
        prop_assert!((al.value - low).abs() <= 1e-9, "{} vs {low}", al.value);
    }

    #[test]
    fn robustness_is_monotone_in_the_trace(base in prop::collection::vec(-5.0..5.0f64, 9), lift in prop::collection::vec(0.0..2.0f64, 9), f in monotone_phi()) {
        let upper: Vec<f64> = base.iter().zip(&lift).map(|(a, d)| a + d).collect();
        let reg = line_registry(0.0);
        let r_low = stl_robustness(&trace(&base, 4), &f, &reg, 0.0, 0.0).unwrap().value;
        let r_high = stl_robustness(&trace(&upper, 4), &f, &reg, 0.0, 0.0).unwrap().value;
        prop_assert!(r_high >= r_low - 1e-12, "{f}: {r_high} < {r_low}");
    }
}

// ---------- closed loop ----------

#[test]
fn inputs_are_continuous_on_smooth_segments() {
    for name in ["example1_toy", "eventually_1d", "always_2d"] {
        let mut s = load_scenario(name);
        s.run.ctrl_rate = 100.0;
        let c: Compiled<f64> = s.compile().unwrap();
        let traj = stlcbf::simulate(c.dynamics.as_ref(), &c.tree, &c.control, &c.run).unwrap();
        let betas: Vec<f64> = c.tree.betas(&History::new()).into_iter().filter(|b| b.is_finite()).collect();
        let peak = traj.inputs.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let threshold = 0.05 * (1.0 + peak);
        let dt = 1.0 / s.run.ctrl_rate;
        let mut jumps = Vec::new();
        for j in 1..traj.len() {
            let (t0, t1) = (traj.times[j - 1], traj.times[j]);
            if traj.chosen[j] != traj.chosen[j - 1] || traj.active_count[j] != traj.active_count[j - 1] {
                continue;
            }
            if betas.iter().any(|b| *b >= t0 - dt && *b <= t1 + dt) {
                continue;
            }
            let du = traj.inputs[j].iter().zip(&traj.inputs[j - 1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if du > threshold {
                jumps.push((t1, du));
            }
        }
        assert!(jumps.is_empty(), "{name}: input jumps above {threshold} at {jumps:?}");
    }
}
