use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dynamics::Dynamics;
use super::trajectory::Trajectory;
use crate::barrier::{BfTree, History, TreeError};
use crate::controller::{control_input, ControlConfig, ControlError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<S> {
    pub t0: S,
    pub t_end: S,
    pub x0: Vec<S>,
    /// Controller rate in Hz.
    pub ctrl_rate: S,
    pub integrator: Integrator,
    /// Integration steps per control tick.
    pub substeps: usize,
}

impl SimError {
    /// Ticks recorded before the failure.
    pub fn partial(&self) -> Option<&Trajectory<f64>> {
        match self {
            SimError::Controller { partial, .. } | SimError::NonFinite { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

impl<S: Scalar> SimConfig<S> {
    pub fn new(t0: S, t_end: S, x0: Vec<S>, ctrl_rate: S) -> Self {
        Self { t0, t_end, x0, ctrl_rate, integrator: Integrator::Rk4, substeps: 10 }
    }

    pub fn ticks(&self) -> usize {
        ((self.t_end - self.t0) * self.ctrl_rate).round().to_usize().unwrap_or(0)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid run settings: {0}")]
    Config(String),
    #[error("controller failed at t = {t} with x = {x:?}: {source}")]
    Controller { t: f64, x: Vec<f64>, source: ControlError, partial: Box<Trajectory<f64>> },
    #[error("history update failed: {0}")]
    History(#[from] TreeError),
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64, partial: Box<Trajectory<f64>> },
}

/// One step of `ẋ = f(x) + g(x) u` with `u` held.
pub fn integrate_step<S: Scalar>(dynamics: &dyn Dynamics<S>, x: &[S], u: &[S], h: S, method: Integrator) -> Vec<S> {
    let shift = |base: &[S], k: &[S], s: S| -> Vec<S> { base.iter().zip(k).map(|(a, b)| *a + s * *b).collect() };
    match method {
        Integrator::Euler => shift(x, &dynamics.rhs(x, u), h),
        Integrator::Rk4 => {
            let half = h / S::lit(2.0);
            let k1 = dynamics.rhs(x, u);
            let k2 = dynamics.rhs(&shift(x, &k1, half), u);
            let k3 = dynamics.rhs(&shift(x, &k2, half), u);
            let k4 = dynamics.rhs(&shift(x, &k3, h), u);
            let sixth = h / S::lit(6.0);
            (0..x.len()).map(|i| x[i] + sixth * (k1[i] + S::lit(2.0) * (k2[i] + k3[i]) + k4[i])).collect()
        }
    }
}

fn to_f64<S: Scalar>(tr: &Trajectory<S>) -> Trajectory<f64> {
    let v = |x: &Vec<S>| x.iter().map(|a| a.as_f64()).collect::<Vec<_>>();
    Trajectory {
        times: tr.times.iter().map(|a| a.as_f64()).collect(),
        states: tr.states.iter().map(v).collect(),
        inputs: tr.inputs.iter().map(v).collect(),
        b0: tr.b0.iter().map(|a| a.as_f64()).collect(),
        chosen: tr.chosen.clone(),
        active_count: tr.active_count.clone(),
        infeasible_count: tr.infeasible_count.clone(),
        tick_seconds: tr.tick_seconds.clone(),
    }
}

/// Runs the sampled-data closed loop.
///
/// At each tick the disjunction history is updated with the current state,
/// the input is computed, and the system is integrated with that input held
/// for one period. The final tick is recorded but not integrated past.
pub fn simulate<S: Scalar>(dynamics: &dyn Dynamics<S>, tree: &BfTree<S>, cfg: &ControlConfig<S>, run: &SimConfig<S>) -> Result<Trajectory<S>, SimError> {
    if run.x0.len() != dynamics.state_dim() {
        return Err(SimError::Config(format!("x0 has {} entries, dynamics expect {}", run.x0.len(), dynamics.state_dim())));
    }
    if !(run.ctrl_rate > S::zero()) || !(run.t_end > run.t0) || run.substeps == 0 {
        return Err(SimError::Config("need ctrl_rate > 0, t_end > t0 and at least one substep".into()));
    }
    let ticks = run.ticks();
    let dt = S::one() / run.ctrl_rate;
    let h = dt / S::lit(run.substeps as f64);
    let mut hist = History::new();
    let mut x = run.x0.clone();
    let mut traj = Trajectory::default();

    for k in 0..=ticks {
        let t = run.t0 + S::lit(k as f64) * dt;
        tree.update_history(&mut hist, t, &x, cfg.tol)?;
        let start = Instant::now();
        let out = control_input(t, &x, tree, &hist, dynamics, cfg)
            .map_err(|source| SimError::Controller { t: t.as_f64(), x: x.iter().map(|v| v.as_f64()).collect(), source, partial: Box::new(to_f64(&traj)) })?;
        traj.tick_seconds.push(start.elapsed().as_secs_f64());
        let infeasible = out.candidates.iter().filter(|c| c.u.is_none()).count();
        let label = out.chosen.map(|c| tree.label(c).to_string());
        traj.push(t, x.clone(), out.u.clone(), out.b0, label, out.active.len(), infeasible);
        if k == ticks {
            break;
        }
        for _ in 0..run.substeps {
            x = integrate_step(dynamics, &x, &out.u, h, run.integrator);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite { t: (t + dt).as_f64(), partial: Box::new(to_f64(&traj)) });
        }
    }
    Ok(traj)
}
