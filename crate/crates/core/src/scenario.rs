//! JSON scenario files: task, predicates, funnels, dynamics, controller and run settings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barrier::{build_bf_tree, BfTree, BuildError, GammaError, GammaSpec, Tolerance};
use crate::controller::{ControlConfig, Sampler, DEFAULT_INPUT_BOUND};
use crate::linalg::Mat;
use crate::scalar::{vec_from_f64, Scalar};
use crate::sim::{Dynamics, Integrator, LinearSystem, OmniRobotTeam, SimConfig, SingleIntegrator};
use crate::stl::{desugar_until, parse_formula, Formula, ParseError, Predicate, PredicateError, PredicateRegistry, WitnessPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub formula: String,
    pub predicates: Vec<PredicateDef>,
    /// One funnel per temporal operator of the rewritten formula, in preorder.
    pub gammas: Vec<GammaSpec>,
    /// Witness time per `U` operator, keyed by its preorder index among `U` operators.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub until_witness: BTreeMap<usize, f64>,
    pub dynamics: DynamicsDef,
    pub control: ControlDef,
    pub run: RunDef,
    #[serde(default)]
    pub check: CheckDef,
    #[serde(default)]
    pub output: OutputDef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredicateDef {
    /// `radius² − ‖S x − center‖²`; `S` is given as `rows` or as selected coordinates.
    Ball2 {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rows: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        select: Option<Vec<usize>>,
        center: Vec<f64>,
        radius: f64,
    },
    /// `aᵀx + d`
    Affine { id: String, a: Vec<f64>, d: f64 },
    /// `‖x[select]‖∞ ≤ radius`, expanded into half-space atoms.
    BoxInf { id: String, select: Vec<usize>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsDef {
    SingleIntegrator {
        dim: usize,
    },
    Linear {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
    },
    OmniRobotTeam {
        gains: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        wheel_radius: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        body_radius: Option<f64>,
    },
}

impl DynamicsDef {
    pub fn state_dim(&self) -> usize {
        match self {
            DynamicsDef::SingleIntegrator { dim } => *dim,
            DynamicsDef::Linear { a, .. } => a.len(),
            DynamicsDef::OmniRobotTeam { gains, .. } => 3 * gains.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            DynamicsDef::SingleIntegrator { dim } => *dim,
            DynamicsDef::Linear { b, .. } => b.first().map_or(0, Vec::len),
            DynamicsDef::OmniRobotTeam { gains, .. } => 3 * gains.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputBounds {
    Symmetric(f64),
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_diag: Option<Vec<f64>>,
    pub kappa: f64,
    pub b_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_bounds: Option<InputBounds>,
}

fn default_rate() -> f64 {
    50.0
}

fn default_integrator() -> Integrator {
    Integrator::Rk4
}

fn default_substeps() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDef {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub x0: Vec<f64>,
    #[serde(default = "default_rate")]
    pub ctrl_rate: f64,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_samples() -> usize {
    200
}

fn default_time_points() -> usize {
    25
}

fn default_refine() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckDef {
    /// Sampled states for the concavity, first-order and `b_min` checks.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Sampling box; defaults to `x0 ± 10`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    /// Number of evenly spaced check times between `t0` and the horizon.
    #[serde(default = "default_time_points")]
    pub time_points: usize,
    /// Interpolated points between samples when scanning `b₀`.
    #[serde(default = "default_refine")]
    pub refine: usize,
}

impl Default for CheckDef {
    fn default() -> Self {
        Self { samples: default_samples(), seed: 0, lo: None, hi: None, time_points: default_time_points(), refine: default_refine() }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDef {
    /// Defaults to `out/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub plots: bool,
}

impl Default for OutputDef {
    fn default() -> Self {
        Self { dir: None, plots: true }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error("formula: {0}")]
    Parse(#[from] ParseError),
    #[error("until witness {index} = {t} is outside its window or names no `U`")]
    Witness { index: usize, t: f64 },
    #[error("funnel {index}: {source}")]
    Gamma { index: usize, source: GammaError },
    #[error("barrier construction: {0}")]
    Build(#[from] BuildError),
    #[error("{0}")]
    Shape(String),
}

/// Everything a run needs, instantiated at scalar type `S`.
pub struct Compiled<S: Scalar> {
    pub formula: Formula,
    pub rewritten: Formula,
    pub registry: PredicateRegistry<S>,
    pub tree: BfTree<S>,
    pub dynamics: Box<dyn Dynamics<S>>,
    pub control: ControlConfig<S>,
    pub run: SimConfig<S>,
    pub sampler: Sampler,
}

fn shape(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Shape(msg.into())
}

fn matrix<S: Scalar>(rows: &[Vec<f64>], what: &str) -> Result<Mat<S>, ScenarioError> {
    let m = Mat::<f64>::try_from_rows(rows).ok_or_else(|| shape(format!("{what} rows must be non-empty and equally long")))?;
    Ok(Mat::from_rows(&m.to_rows().iter().map(|r| vec_from_f64(r)).collect::<Vec<_>>()))
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }

    pub fn registry<S: Scalar>(&self) -> Result<PredicateRegistry<S>, ScenarioError> {
        let n = self.dynamics.state_dim();
        let mut reg = PredicateRegistry::new();
        for def in &self.predicates {
            match def {
                PredicateDef::Ball2 { id, rows, select, center, radius } => {
                    let p = match (rows, select) {
                        (Some(rows), None) => Predicate::ball2(id.clone(), matrix(rows, id)?, vec_from_f64(center), S::lit(*radius))?,
                        (None, Some(sel)) => Predicate::ball2_select(id.clone(), n, sel, vec_from_f64(center), S::lit(*radius))?,
                        _ => return Err(shape(format!("ball2 `{id}` needs exactly one of `rows` and `select`"))),
                    };
                    if p.dim() != Some(n) {
                        return Err(shape(format!("predicate `{id}` acts on {:?} states, the system has {n}", p.dim())));
                    }
                    reg.insert(p)?;
                }
                PredicateDef::Affine { id, a, d } => {
                    if a.len() != n {
                        return Err(shape(format!("affine `{id}` has {} coefficients, the system has {n} states", a.len())));
                    }
                    reg.insert(Predicate::affine(id.clone(), vec_from_f64(a), S::lit(*d)))?;
                }
                PredicateDef::BoxInf { id, select, radius } => reg.insert_box_inf(id, n, select, S::lit(*radius))?,
            }
        }
        Ok(reg)
    }

    pub fn witness_policy(&self) -> WitnessPolicy {
        WitnessPolicy { overrides: self.until_witness.clone() }
    }

    pub fn build_dynamics<S: Scalar>(&self) -> Result<Box<dyn Dynamics<S>>, ScenarioError> {
        Ok(match &self.dynamics {
            DynamicsDef::SingleIntegrator { dim } => {
                if *dim == 0 {
                    return Err(shape("single_integrator needs dim > 0"));
                }
                Box::new(SingleIntegrator { dim: *dim })
            }
            DynamicsDef::Linear { a, b } => {
                let sys = LinearSystem::new(matrix(a, "A")?, matrix(b, "B")?).ok_or_else(|| shape("A must be square and B must have as many rows as A"))?;
                Box::new(sys)
            }
            DynamicsDef::OmniRobotTeam { gains, wheel_radius, body_radius } => {
                if gains.is_empty() || gains.iter().any(|k| !(*k >= 0.0)) {
                    return Err(shape("omni_robot_team needs at least one agent and nonnegative gains"));
                }
                let wheel = wheel_radius.unwrap_or(crate::sim::WHEEL_RADIUS);
                let body = body_radius.unwrap_or(crate::sim::BODY_RADIUS);
                if !(wheel > 0.0 && body > 0.0) {
                    return Err(shape("wheel and body radius must be positive"));
                }
                Box::new(OmniRobotTeam::with_geometry(vec_from_f64(gains), S::lit(wheel), S::lit(body)))
            }
        })
    }

    pub fn control_config<S: Scalar>(&self) -> Result<ControlConfig<S>, ScenarioError> {
        let m = self.dynamics.input_dim();
        let c = &self.control;
        let q = match (&c.q, &c.q_diag) {
            (Some(q), None) => matrix(q, "Q")?,
            (None, Some(d)) => Mat::diag(&vec_from_f64(d)),
            (None, None) => Mat::identity(m),
            _ => return Err(shape("give at most one of `q` and `q_diag`")),
        };
        if q.nrows() != m || q.ncols() != m {
            return Err(shape(format!("Q is {}x{}, the system has {m} inputs", q.nrows(), q.ncols())));
        }
        if !(c.kappa > 0.0) || !(c.b_min > 0.0) {
            return Err(shape("kappa and b_min must be positive"));
        }
        let mut cfg = ControlConfig::new(q, S::lit(c.kappa), S::lit(c.b_min));
        if let Some(rel) = c.tol {
            cfg.tol = Tolerance::new(S::lit(rel));
        }
        cfg.input_bounds = match &c.input_bounds {
            None => Some((vec![S::lit(-DEFAULT_INPUT_BOUND); m], vec![S::lit(DEFAULT_INPUT_BOUND); m])),
            Some(InputBounds::Symmetric(r)) if *r > 0.0 => Some((vec![S::lit(-r); m], vec![S::lit(*r); m])),
            Some(InputBounds::Box { lo, hi }) if lo.len() == m && hi.len() == m && lo.iter().zip(hi).all(|(l, h)| l <= h) => {
                Some((vec_from_f64(lo), vec_from_f64(hi)))
            }
            Some(_) => return Err(shape(format!("input bounds must be a positive number or lo <= hi vectors of length {m}"))),
        };
        Ok(cfg)
    }

    pub fn sim_config<S: Scalar>(&self) -> Result<SimConfig<S>, ScenarioError> {
        let r = &self.run;
        if r.x0.len() != self.dynamics.state_dim() {
            return Err(shape(format!("x0 has {} entries, the system has {} states", r.x0.len(), self.dynamics.state_dim())));
        }
        if !(r.ctrl_rate > 0.0) || !(r.t_end > r.t0) || r.substeps == 0 {
            return Err(shape("run needs ctrl_rate > 0, t_end > t0 and substeps >= 1"));
        }
        let mut sc = SimConfig::new(S::lit(r.t0), S::lit(r.t_end), vec_from_f64(&r.x0), S::lit(r.ctrl_rate));
        sc.integrator = r.integrator;
        sc.substeps = r.substeps;
        Ok(sc)
    }

    /// Sampling box and times for the assumption checks, ending at `horizon`.
    pub fn sampler(&self, horizon: f64) -> Result<Sampler, ScenarioError> {
        let n = self.dynamics.state_dim();
        let lo = self.check.lo.clone().unwrap_or_else(|| self.run.x0.iter().map(|v| v - 10.0).collect());
        let hi = self.check.hi.clone().unwrap_or_else(|| self.run.x0.iter().map(|v| v + 10.0).collect());
        if lo.len() != n || hi.len() != n || lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(shape(format!("check box needs lo <= hi vectors of length {n}")));
        }
        let end = if horizon.is_finite() { horizon.max(self.run.t0) } else { self.run.t_end };
        let k = self.check.time_points.max(1);
        let times = (0..k).map(|i| if k == 1 { self.run.t0 } else { self.run.t0 + (end - self.run.t0) * i as f64 / (k - 1) as f64 }).collect();
        Ok(Sampler { lo, hi, times, count: self.check.samples, seed: self.check.seed })
    }

    pub fn compile<S: Scalar>(&self) -> Result<Compiled<S>, ScenarioError> {
        let registry = self.registry::<S>()?;
        let formula = parse_formula(&self.formula, &registry)?;
        let policy = self.witness_policy();
        if let Some(&(index, t)) = policy.invalid_overrides(&formula).first() {
            return Err(ScenarioError::Witness { index, t });
        }
        let rewritten = desugar_until(&formula, &policy);
        let t1 = S::lit(self.run.t0);
        let gammas = self
            .gammas
            .iter()
            .enumerate()
            .map(|(index, g)| g.resolve(t1).map_err(|source| ScenarioError::Gamma { index, source }))
            .collect::<Result<Vec<_>, _>>()?;
        let tree = build_bf_tree(&rewritten, &registry, &gammas)?;
        let dynamics = self.build_dynamics::<S>()?;
        let control = self.control_config::<S>()?;
        let run = self.sim_config::<S>()?;
        let sampler = self.sampler(tree.horizon().map_or(f64::INFINITY, |h| h.as_f64()))?;
        Ok(Compiled { formula, rewritten, registry, tree, dynamics, control, run, sampler })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{
        "name": "toy",
        "formula": "G[0,5](inside) & F[1,4](right)",
        "predicates": [
            {"kind": "ball2", "id": "inside", "select": [0, 1], "center": [0, 0], "radius": 3},
            {"kind": "affine", "id": "right", "a": [1, 0], "d": -1}
        ],
        "gammas": [
            {"gamma_zero": 0, "gamma_inf": -0.5, "t_star": 5},
            {"gamma_zero": 3, "gamma_inf": -0.2, "t_star": 3}
        ],
        "dynamics": {"kind": "single_integrator", "dim": 2},
        "control": {"kappa": 2, "b_min": 1},
        "run": {"t_end": 6, "x0": [0, 0]}
    }"#;

    #[test]
    fn compiles_toy() {
        let s = Scenario::from_json(TOY).unwrap();
        let c = s.compile::<f64>().unwrap();
        assert_eq!(c.tree.leaves().len(), 2);
        assert_eq!(c.run.substeps, 10);
        assert_eq!(c.control.input_bounds.as_ref().unwrap().1, vec![1e6, 1e6]);
        assert_eq!(s.output_dir(), PathBuf::from("out/toy"));
    }

    #[test]
    fn round_trips() {
        let s = Scenario::from_json(TOY).unwrap();
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_shapes() {
        assert!(Scenario::from_json(&TOY.replace("\"kappa\"", "\"kapa\"")).is_err());
        let s = Scenario::from_json(&TOY.replace("\"x0\": [0, 0]", "\"x0\": [0]")).unwrap();
        assert!(matches!(s.compile::<f64>(), Err(ScenarioError::Shape(_))));
        let s = Scenario::from_json(&TOY.replace("F[1,4](right)", "F[1,4](left)")).unwrap();
        assert!(matches!(s.compile::<f64>(), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn funnel_count_must_match() {
        let mut s = Scenario::from_json(TOY).unwrap();
        s.gammas.pop();
        assert!(matches!(s.compile::<f64>(), Err(ScenarioError::Build(BuildError::GammaCount { .. }))));
    }

    #[test]
    fn until_witness_checked() {
        let mut s = Scenario::from_json(TOY).unwrap();
        s.formula = "(inside) U[1,4] (right)".into();
        s.until_witness.insert(0, 9.0);
        assert!(matches!(s.compile::<f64>(), Err(ScenarioError::Witness { index: 0, .. })));
        s.until_witness.insert(0, 2.0);
        s.gammas[1].t_star = 2.0;
        let c = s.compile::<f64>().unwrap();
        assert_eq!(c.rewritten, Formula::And(vec![Formula::always(0.0, 2.0, Formula::pred("inside")), Formula::eventually(1.0, 2.0, Formula::pred("right"))]));
    }
}
