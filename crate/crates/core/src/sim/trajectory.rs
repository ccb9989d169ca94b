use std::io::{Read, Write};

use thiserror::Error;

use crate::scalar::Scalar;

/// Closed-loop record sampled at the control ticks.
///
/// `inputs[j]` is the input computed at `times[j]` and held until the next tick.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory<S> {
    pub times: Vec<S>,
    pub states: Vec<Vec<S>>,
    pub inputs: Vec<Vec<S>>,
    pub b0: Vec<S>,
    /// Label of the leaf whose section QP supplied the input.
    pub chosen: Vec<Option<String>>,
    /// Number of active leaves at each tick.
    pub active_count: Vec<usize>,
    /// Number of infeasible section QPs at each tick.
    pub infeasible_count: Vec<usize>,
    /// Wall-clock seconds spent in the controller per tick; not persisted.
    pub tick_seconds: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory is empty")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad trajectory header: {0}")]
    Header(String),
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
}

impl<S: Scalar> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn push(&mut self, t: S, x: Vec<S>, u: Vec<S>, b0: S, chosen: Option<String>, active: usize, infeasible: usize) {
        self.times.push(t);
        self.states.push(x);
        self.inputs.push(u);
        self.b0.push(b0);
        self.chosen.push(chosen);
        self.active_count.push(active);
        self.infeasible_count.push(infeasible);
    }

    pub fn mean_tick_seconds(&self) -> Option<f64> {
        (!self.tick_seconds.is_empty()).then(|| self.tick_seconds.iter().sum::<f64>() / self.tick_seconds.len() as f64)
    }

    /// Writes columns `t, x0.., u0.., b0, chosen_k`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TrajectoryError> {
        if self.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.state_dim()).map(|i| format!("x{i}")));
        header.extend((0..self.input_dim()).map(|i| format!("u{i}")));
        header.push("b0".into());
        header.push("chosen_k".into());
        out.write_record(&header)?;
        for j in 0..self.len() {
            let mut rec = vec![self.times[j].as_f64().to_string()];
            rec.extend(self.states[j].iter().map(|v| v.as_f64().to_string()));
            rec.extend(self.inputs[j].iter().map(|v| v.as_f64().to_string()));
            rec.push(self.b0[j].as_f64().to_string());
            rec.push(self.chosen[j].clone().unwrap_or_default());
            out.write_record(&rec)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, TrajectoryError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        if names.first() != Some(&"t") || names.len() < 3 || names[names.len() - 2] != "b0" || names[names.len() - 1] != "chosen_k" {
            return Err(TrajectoryError::Header(names.join(",")));
        }
        let n = names.iter().filter(|h| h.starts_with('x')).count();
        let m = names.iter().filter(|h| h.starts_with('u')).count();
        if n + m + 3 != names.len() {
            return Err(TrajectoryError::Header(names.join(",")));
        }
        let mut traj = Trajectory::default();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<S, TrajectoryError> {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .map(S::lit)
                    .ok_or_else(|| TrajectoryError::Row { row, reason: format!("column {i} is not a number") })
            };
            let t = num(0)?;
            let x = (1..=n).map(num).collect::<Result<Vec<_>, _>>()?;
            let u = (n + 1..=n + m).map(num).collect::<Result<Vec<_>, _>>()?;
            let b0 = num(n + m + 1)?;
            let chosen = rec.get(n + m + 2).filter(|s| !s.is_empty()).map(str::to_string);
            if traj.times.last().is_some_and(|&last| t <= last) {
                return Err(TrajectoryError::Row { row, reason: "times must increase".into() });
            }
            traj.push(t, x, u, b0, chosen, 0, 0);
        }
        Ok(traj)
    }
}
