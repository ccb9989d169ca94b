//! Dense strictly convex QP: `min uᵀQu  s.t.  A u ≥ c`, optionally with a box on `u`.
//!
//! Solved with the Goldfarb–Idnani dual active-set method. It starts at the
//! unconstrained minimum `u = 0` and adds violated rows one at a time, so an
//! empty feasible set shows up as a row that no multiplier step can satisfy.
//! That row and the current multipliers form a Farkas certificate.

use thiserror::Error;

use crate::linalg::{dot, norm2, norm_inf, Cholesky, Mat};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<S> {
    pub q: Mat<S>,
    pub a: Mat<S>,
    pub c: Vec<S>,
    /// Optional `lo ≤ u ≤ hi`, handled as extra rows after those of `a`.
    pub bounds: Option<(Vec<S>, Vec<S>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<S> {
    pub status: QpStatus,
    /// Minimizer; the last iterate when infeasible.
    pub u: Vec<S>,
    /// One multiplier per row of `a`, with `2Qu = Aᵀλ + (bound terms)`.
    pub multipliers: Vec<S>,
    /// Multipliers of `u ≥ lo` then `-u ≥ -hi`, empty without bounds.
    pub bound_multipliers: Vec<S>,
    /// Nonnegative `y` over all rows (general then bounds) with `Σ yᵢ nᵢ = 0`
    /// and `Σ yᵢ cᵢ > 0`, present when infeasible.
    pub certificate: Option<Vec<S>>,
    pub objective: S,
    pub kkt_residual: S,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("cost matrix is not symmetric")]
    NotSymmetric,
    #[error("cost matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("active constraint normals became numerically dependent")]
    Degenerate,
    #[error("no convergence after {0} iterations")]
    IterationLimit(usize),
    #[error("KKT check needs an optimal solution")]
    NotOptimal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport<S> {
    /// `‖2Qu − Σ λᵢ nᵢ‖∞`
    pub stationarity: S,
    /// Largest row violation `max(0, cᵢ − nᵢᵀu)`.
    pub primal: S,
    /// `max |λᵢ (nᵢᵀu − cᵢ)|`
    pub complementarity: S,
    /// Most negative multiplier, as a positive number.
    pub dual: S,
    pub scale: S,
}

impl<S: Scalar> KktReport<S> {
    pub fn max_residual(&self) -> S {
        self.stationarity.max(self.primal).max(self.complementarity).max(self.dual)
    }

    /// All residuals within `rel · scale`.
    pub fn passes(&self, rel: S) -> bool {
        self.max_residual() <= rel * self.scale
    }
}

impl<S: Scalar> QpProblem<S> {
    pub fn new(q: Mat<S>, a: Mat<S>, c: Vec<S>) -> Self {
        Self { q, a, c, bounds: None }
    }

    pub fn unconstrained(q: Mat<S>) -> Self {
        let m = q.ncols();
        Self::new(q, Mat::zeros(0, m), Vec::new())
    }

    pub fn with_bounds(mut self, lo: Vec<S>, hi: Vec<S>) -> Self {
        self.bounds = Some((lo, hi));
        self
    }

    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    /// `1 + ‖A‖∞ + ‖c‖∞` over the general rows.
    pub fn scale(&self) -> S {
        S::one() + self.a.norm_inf() + norm_inf(&self.c)
    }

    fn validate(&self) -> Result<(), QpError> {
        let m = self.q.nrows();
        if self.q.ncols() != m {
            return Err(QpError::Dimension(format!("Q is {}x{}", m, self.q.ncols())));
        }
        if self.a.ncols() != m && self.a.nrows() > 0 {
            return Err(QpError::Dimension(format!("A has {} columns, Q has {m}", self.a.ncols())));
        }
        if self.a.nrows() != self.c.len() {
            return Err(QpError::Dimension(format!("A has {} rows, c has {}", self.a.nrows(), self.c.len())));
        }
        if let Some((lo, hi)) = &self.bounds {
            if lo.len() != m || hi.len() != m {
                return Err(QpError::Dimension("bounds must match the input dimension".into()));
            }
        }
        let sym_tol = S::lit(1e-12).max(S::eps_times(100.0)) * (S::one() + self.q.max_abs());
        if !self.q.is_symmetric(sym_tol) {
            return Err(QpError::NotSymmetric);
        }
        Ok(())
    }

    /// Every row as `(normal, rhs)`: general rows, then `u ≥ lo`, then `-u ≥ -hi`.
    fn rows(&self) -> Vec<(Vec<S>, S)> {
        let m = self.dim();
        let mut rows: Vec<(Vec<S>, S)> = (0..self.a.nrows()).map(|i| (self.a.row(i).to_vec(), self.c[i])).collect();
        if let Some((lo, hi)) = &self.bounds {
            for (j, &l) in lo.iter().enumerate() {
                let mut n = vec![S::zero(); m];
                n[j] = S::one();
                rows.push((n, l));
            }
            for (j, &h) in hi.iter().enumerate() {
                let mut n = vec![S::zero(); m];
                n[j] = -S::one();
                rows.push((n, -h));
            }
        }
        rows
    }

    pub fn objective(&self, u: &[S]) -> S {
        dot(u, &self.q.mul_vec(u))
    }
}

fn row_tol<S: Scalar>(n: &[S], c: S) -> S {
    S::eps_times(1e4) * (S::one() + norm2(n) + c.abs())
}

pub fn solve_qp<S: Scalar>(problem: &QpProblem<S>) -> Result<QpSolution<S>, QpError> {
    problem.validate()?;
    let m = problem.dim();
    let g = problem.q.scaled(S::lit(2.0));
    let chol = Cholesky::new(&g).ok_or(QpError::NotPositiveDefinite)?;
    let rows = problem.rows();
    let nrows = rows.len();
    let tols: Vec<S> = rows.iter().map(|(n, c)| row_tol(n, *c)).collect();

    let mut u = vec![S::zero(); m];
    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<S> = Vec::new();
    let max_iter = 50 * (nrows + m) + 100;
    let mut iterations = 0;

    let finish = |status, u: Vec<S>, active: &[usize], lambda: &[S], cert: Option<Vec<S>>, iterations| {
        let mut all = vec![S::zero(); nrows];
        for (&r, &l) in active.iter().zip(lambda) {
            all[r] = l;
        }
        let general = problem.a.nrows();
        let mut sol = QpSolution {
            status,
            objective: if status == QpStatus::Optimal { problem.objective(&u) } else { S::infinity() },
            u,
            multipliers: all[..general].to_vec(),
            bound_multipliers: all[general..].to_vec(),
            certificate: cert,
            kkt_residual: S::zero(),
            iterations,
        };
        if status == QpStatus::Optimal {
            sol.kkt_residual = kkt_report(problem, &sol).max_residual();
        } else {
            sol.kkt_residual = S::infinity();
        }
        sol
    };

    loop {
        // Most violated inactive row, by slack relative to the row norm.
        let mut pick: Option<(usize, S)> = None;
        for (i, (n, c)) in rows.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let s = dot(n, &u) - *c;
            if s < -tols[i] {
                let score = s / (S::one() + norm2(n));
                if pick.map_or(true, |(_, best)| score < best) {
                    pick = Some((i, score));
                }
            }
        }
        let Some((p, _)) = pick else {
            let sol = finish(QpStatus::Optimal, u.clone(), &active, &lambda, None, iterations);
            if let Some((pu, pl)) = polish(&chol, &rows, &active) {
                let alt = finish(QpStatus::Optimal, pu, &active, &pl, None, iterations);
                if alt.kkt_residual <= sol.kkt_residual && pl.iter().all(|&l| l >= S::zero()) {
                    return Ok(alt);
                }
            }
            return Ok(sol);
        };
        let np = &rows[p].0;
        let mut lambda_p = S::zero();

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit(max_iter));
            }
            let w = chol.solve(np);
            let (r, ginv_n_r) = if active.is_empty() {
                (Vec::new(), vec![S::zero(); m])
            } else {
                let ginv_n: Vec<Vec<S>> = active.iter().map(|&j| chol.solve(&rows[j].0)).collect();
                let qa = active.len();
                let mut mm = Mat::zeros(qa, qa);
                for a in 0..qa {
                    for b in 0..qa {
                        mm[(a, b)] = dot(&rows[active[a]].0, &ginv_n[b]);
                    }
                }
                let rhs: Vec<S> = active.iter().map(|&j| dot(&rows[j].0, &w)).collect();
                let mch = Cholesky::new(&mm).ok_or(QpError::Degenerate)?;
                let r = mch.solve(&rhs);
                let mut acc = vec![S::zero(); m];
                for (gn, &rj) in ginv_n.iter().zip(&r) {
                    for (a, v) in acc.iter_mut().zip(gn) {
                        *a += rj * *v;
                    }
                }
                (r, acc)
            };
            let z: Vec<S> = w.iter().zip(&ginv_n_r).map(|(a, b)| *a - *b).collect();
            let zn = dot(&z, np);
            let wn = dot(&w, np);
            let sp = dot(np, &u) - rows[p].1;

            // Partial step: largest dual step keeping active multipliers nonnegative.
            let mut t1 = S::infinity();
            let mut block = None;
            for (idx, &rj) in r.iter().enumerate() {
                if rj > S::zero() {
                    let ratio = lambda[idx] / rj;
                    if ratio < t1 {
                        t1 = ratio;
                        block = Some(idx);
                    }
                }
            }
            // `zn` is `wn` minus the projection onto the active normals; judge it
            // against the size of what cancelled, not against `wn` alone.
            let cancelled: S = active.iter().zip(&r).map(|(&j, &rj)| (rj * dot(np, &chol.solve(&rows[j].0))).abs()).fold(S::zero(), |a, b| a + b);
            let dependent = active.len() >= m || zn <= S::eps_times(1e4) * (wn + cancelled);
            let t2 = if dependent { S::infinity() } else { -sp / zn };

            if t1.is_infinite() && t2.is_infinite() {
                let mut y = vec![S::zero(); nrows];
                y[p] = S::one();
                for (&j, &rj) in active.iter().zip(&r) {
                    y[j] = -rj;
                }
                return Ok(finish(QpStatus::Infeasible, u, &active, &lambda, Some(y), iterations));
            }
            let t = t1.min(t2);
            if !dependent {
                for (ui, zi) in u.iter_mut().zip(&z) {
                    *ui += t * *zi;
                }
            }
            for (l, rj) in lambda.iter_mut().zip(&r) {
                *l -= t * *rj;
            }
            lambda_p += t;
            if t2 <= t1 {
                active.push(p);
                lambda.push(lambda_p);
                break;
            }
            let b = block.expect("finite partial step has a blocking row");
            active.remove(b);
            lambda.remove(b);
        }
    }
}

/// Re-solves the equality problem on the final active set, `2Qu = Nλ`, `Nᵀu = c`,
/// with one round of refinement. The incremental updates of the main loop lose
/// accuracy when the multipliers get large.
fn polish<S: Scalar>(chol: &Cholesky<S>, rows: &[(Vec<S>, S)], active: &[usize]) -> Option<(Vec<S>, Vec<S>)> {
    if active.is_empty() {
        return None;
    }
    let ginv_n: Vec<Vec<S>> = active.iter().map(|&j| chol.solve(&rows[j].0)).collect();
    let q = active.len();
    let mut mm = Mat::zeros(q, q);
    for a in 0..q {
        for b in 0..q {
            mm[(a, b)] = dot(&rows[active[a]].0, &ginv_n[b]);
        }
    }
    let mch = Cholesky::new(&mm)?;
    let m = ginv_n[0].len();
    let combine = |lam: &[S]| {
        let mut u = vec![S::zero(); m];
        for (gn, &l) in ginv_n.iter().zip(lam) {
            for (a, v) in u.iter_mut().zip(gn) {
                *a += l * *v;
            }
        }
        u
    };
    let rhs: Vec<S> = active.iter().map(|&j| rows[j].1).collect();
    let mut lam = mch.solve(&rhs);
    let mut u = combine(&lam);
    let resid: Vec<S> = active.iter().zip(&rhs).map(|(&j, &c)| c - dot(&rows[j].0, &u)).collect();
    let dl = mch.solve(&resid);
    for (l, d) in lam.iter_mut().zip(&dl) {
        *l += *d;
    }
    for (a, d) in u.iter_mut().zip(combine(&dl)) {
        *a += d;
    }
    (u.iter().chain(&lam).all(|v| v.is_finite())).then_some((u, lam))
}

fn kkt_report<S: Scalar>(problem: &QpProblem<S>, sol: &QpSolution<S>) -> KktReport<S> {
    let rows = problem.rows();
    let lam: Vec<S> = sol.multipliers.iter().chain(&sol.bound_multipliers).copied().collect();
    let mut grad: Vec<S> = problem.q.mul_vec(&sol.u).into_iter().map(|v| v * S::lit(2.0)).collect();
    let mut primal = S::zero();
    let mut comp = S::zero();
    let mut dual = S::zero();
    for ((n, c), &l) in rows.iter().zip(&lam) {
        for (g, v) in grad.iter_mut().zip(n) {
            *g -= l * *v;
        }
        let s = dot(n, &sol.u) - *c;
        primal = primal.max(-s);
        comp = comp.max((l * s).abs());
        dual = dual.max(-l);
    }
    KktReport { stationarity: norm_inf(&grad), primal, complementarity: comp, dual, scale: problem.scale() }
}

/// Residuals of the optimality conditions at a returned optimum.
pub fn check_kkt<S: Scalar>(problem: &QpProblem<S>, sol: &QpSolution<S>) -> Result<KktReport<S>, QpError> {
    if sol.status != QpStatus::Optimal {
        return Err(QpError::NotOptimal);
    }
    if sol.u.len() != problem.dim() || sol.multipliers.len() != problem.a.nrows() {
        return Err(QpError::Dimension("solution does not match the problem".into()));
    }
    Ok(kkt_report(problem, sol))
}

/// Checks `y ≥ 0`, `Σ yᵢ nᵢ ≈ 0` and `Σ yᵢ cᵢ > 0`, which rules out any feasible point.
pub fn verify_certificate<S: Scalar>(problem: &QpProblem<S>, y: &[S]) -> bool {
    let rows = problem.rows();
    if y.len() != rows.len() || y.iter().any(|v| *v < S::zero() || !v.is_finite()) {
        return false;
    }
    let m = problem.dim();
    let mut combo = vec![S::zero(); m];
    let mut rhs = S::zero();
    let mut mag = S::zero();
    for ((n, c), &yi) in rows.iter().zip(y) {
        for (a, v) in combo.iter_mut().zip(n) {
            *a += yi * *v;
        }
        rhs += yi * *c;
        mag += yi * (norm2(n) + c.abs());
    }
    let tol = S::eps_times(1e6) * (S::one() + mag);
    norm_inf(&combo) <= tol && rhs > tol
}
