//! End-to-end run of one scenario: compile, check, simulate, monitor, write.

use std::path::PathBuf;

use thiserror::Error;

use crate::artifacts::{write_all, ArtifactError, PathLayout};
use crate::controller::{check_assumptions, AssumptionReport};
use crate::monitor::{check_satisfaction, min_barrier, MinBarrier, MonitorError, SatisfactionReport};
use crate::scenario::{Compiled, DynamicsDef, Scenario, ScenarioError};
use crate::sim::{simulate, SimError, Trajectory};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub rate: Option<f64>,
    /// Simulate even when the assumption checks fail.
    pub force: bool,
    pub check_only: bool,
    pub seed: Option<u64>,
    /// Skip writing artifacts.
    pub dry: bool,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("compile: {0}")]
    Compile(#[from] ScenarioError),
    #[error("check: assumptions not met (decay margin {margin}, concavity violations {concavity})", margin = .0.decay.margin, concavity = .0.concavity.iter().map(|c| c.violations).sum::<usize>())]
    Assumptions(Box<AssumptionReport>),
    #[error("simulate: {0}")]
    Simulate(#[from] SimError),
    #[error("monitor: {0}")]
    Monitor(#[from] MonitorError),
    #[error("output: {0}")]
    Output(#[from] ArtifactError),
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub assumptions: AssumptionReport,
    pub trajectory: Option<Trajectory<f64>>,
    pub min_barrier: Option<MinBarrier<f64>>,
    pub satisfaction: Option<SatisfactionReport<f64>>,
    pub mean_tick_seconds: Option<f64>,
    pub artifacts: Vec<PathBuf>,
}

fn layout(s: &Scenario) -> PathLayout {
    match &s.dynamics {
        DynamicsDef::OmniRobotTeam { gains, .. } => PathLayout::agents(gains.len()),
        other => PathLayout::for_state_dim(other.state_dim()),
    }
}

/// Applies command-line overrides to a scenario.
pub fn with_options(scenario: &Scenario, opts: &RunOptions) -> Scenario {
    let mut s = scenario.clone();
    if let Some(rate) = opts.rate {
        s.run.ctrl_rate = rate;
    }
    if let Some(seed) = opts.seed {
        s.check.seed = seed;
    }
    if let Some(dir) = &opts.out_dir {
        s.output.dir = Some(dir.clone());
    }
    s
}

pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<RunReport, PipelineError> {
    let s = with_options(scenario, opts);
    let c: Compiled<f64> = s.compile()?;
    let assumptions = check_assumptions(&c.tree, &c.control, c.dynamics.as_ref(), &c.sampler);
    let mut report = RunReport { assumptions, trajectory: None, min_barrier: None, satisfaction: None, mean_tick_seconds: None, artifacts: Vec::new() };
    if opts.check_only {
        return Ok(report);
    }
    if !report.assumptions.passed() && !opts.force {
        return Err(PipelineError::Assumptions(Box::new(report.assumptions)));
    }
    let traj = match simulate(c.dynamics.as_ref(), &c.tree, &c.control, &c.run) {
        Ok(t) => t,
        Err(e) => {
            if let (false, Some(partial)) = (opts.dry, e.partial().filter(|p| !p.is_empty())) {
                write_all(partial, &s.output_dir(), &layout(&s), s.output.plots)?;
            }
            return Err(e.into());
        }
    };
    report.min_barrier = Some(min_barrier(&traj, &c.tree, c.control.tol, s.check.refine)?);
    report.satisfaction = Some(check_satisfaction(&traj, &c.tree, &c.formula, &c.registry, c.control.tol)?);
    report.mean_tick_seconds = traj.mean_tick_seconds();
    if !opts.dry {
        report.artifacts = write_all(&traj, &s.output_dir(), &layout(&s), s.output.plots)?;
    }
    report.trajectory = Some(traj);
    Ok(report)
}
