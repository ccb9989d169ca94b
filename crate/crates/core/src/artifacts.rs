//! CSV and SVG output for a finished run.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sim::{Trajectory, TrajectoryError};

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("trajectory is empty")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, ArtifactError> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

/// `t, b0, chosen_k, active, infeasible`
pub fn write_barrier_csv(traj: &Trajectory<f64>, path: &Path) -> Result<(), ArtifactError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t", "b0", "chosen_k", "active", "infeasible"])?;
    for j in 0..traj.len() {
        w.write_record([
            traj.times[j].to_string(),
            traj.b0[j].to_string(),
            traj.chosen[j].clone().unwrap_or_default(),
            traj.active_count.get(j).copied().unwrap_or(0).to_string(),
            traj.infeasible_count.get(j).copied().unwrap_or(0).to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

/// `t, u0..`
pub fn write_inputs_csv(traj: &Trajectory<f64>, path: &Path) -> Result<(), ArtifactError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["t".to_string()];
    header.extend((0..traj.input_dim()).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for j in 0..traj.len() {
        let mut rec = vec![traj.times[j].to_string()];
        rec.extend(traj.inputs[j].iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(path))
}

/// How state coordinates map to planar paths.
#[derive(Debug, Clone, PartialEq)]
pub enum PathLayout {
    /// One path per `(x index, y index)` pair.
    Planar(Vec<(usize, usize)>),
    /// Each coordinate against time.
    OverTime,
}

impl PathLayout {
    /// Agents with `[p_x, p_y, ρ]` blocks.
    pub fn agents(count: usize) -> Self {
        PathLayout::Planar((0..count).map(|i| (3 * i, 3 * i + 1)).collect())
    }

    pub fn for_state_dim(n: usize) -> Self {
        if n >= 2 {
            PathLayout::Planar(vec![(0, 1)])
        } else {
            PathLayout::OverTime
        }
    }
}

const PALETTE: [&str; 9] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series], equal_aspect: bool) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = pts.fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |(a, b, c, d), &(x, y)| {
        (a.min(x), b.max(x), c.min(y), d.max(y))
    });
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    if equal_aspect {
        let sx = (x1 - x0) / (W - 2.0 * MARGIN);
        let sy = (y1 - y0) / (H - 2.0 * MARGIN);
        let s = sx.max(sy);
        let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        let (hw, hh) = (s * (W - 2.0 * MARGIN) / 2.0, s * (H - 2.0 * MARGIN) / 2.0);
        return (cx - hw, cx + hw, cy - hh, cy + hh);
    }
    (x0, x1, y0, y1)
}

fn svg_plot(title: &str, xlabel: &str, series: &[Series], equal_aspect: bool, zero_line: bool) -> String {
    let (x0, x1, y0, y1) = bounds(series, equal_aspect);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{title}</text>"#, W / 2.0);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black" stroke-width="0.8"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for (v, anchor_x) in [(x0, MARGIN), (x1, W - MARGIN)] {
        let _ = writeln!(s, r#"<text x="{anchor_x:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{v:.3}</text>"#, H - MARGIN + 14.0);
    }
    for (v, anchor_y) in [(y0, H - MARGIN), (y1, MARGIN)] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{anchor_y:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.3}</text>"#, MARGIN - 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 12.0);
    if zero_line && y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="gray" stroke-dasharray="4 3"/>"#, py(0.0), W - MARGIN);
    }
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#, pts.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" fill="{color}">{}</text>"#,
            W - MARGIN + 4.0,
            MARGIN + 12.0 * (i as f64 + 1.0),
            ser.label
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write_text(path: &Path, text: &str) -> Result<(), ArtifactError> {
    fs::write(path, text).map_err(io_err(path))
}

pub fn paths_svg(traj: &Trajectory<f64>, layout: &PathLayout) -> String {
    match layout {
        PathLayout::Planar(pairs) => {
            let series: Vec<Series> = pairs
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| Series { label: format!("path {}", i + 1), points: traj.states.iter().map(|x| (x[a], x[b])).collect() })
                .collect();
            svg_plot("paths", "x", &series, true, false)
        }
        PathLayout::OverTime => {
            let series: Vec<Series> = (0..traj.state_dim())
                .map(|i| Series { label: format!("x{i}"), points: traj.times.iter().zip(&traj.states).map(|(t, x)| (*t, x[i])).collect() })
                .collect();
            svg_plot("state", "t", &series, false, false)
        }
    }
}

pub fn barrier_svg(traj: &Trajectory<f64>) -> String {
    let series = [Series { label: "b0".into(), points: traj.times.iter().copied().zip(traj.b0.iter().copied()).collect() }];
    svg_plot("b0(t, x(t))", "t", &series, false, true)
}

pub fn inputs_svg(traj: &Trajectory<f64>) -> String {
    let series: Vec<Series> = (0..traj.input_dim())
        .map(|i| {
            // Held inputs drawn as steps.
            let mut pts = Vec::with_capacity(2 * traj.len());
            for j in 0..traj.len() {
                if j > 0 {
                    pts.push((traj.times[j], traj.inputs[j - 1][i]));
                }
                pts.push((traj.times[j], traj.inputs[j][i]));
            }
            Series { label: format!("u{i}"), points: pts }
        })
        .collect();
    svg_plot("inputs", "t", &series, false, false)
}

/// Writes the three CSVs and, with `plots`, the three SVGs into `dir`.
pub fn write_all(traj: &Trajectory<f64>, dir: &Path, layout: &PathLayout, plots: bool) -> Result<Vec<PathBuf>, ArtifactError> {
    if traj.is_empty() {
        return Err(ArtifactError::Empty);
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let p = dir.join("trajectory.csv");
    traj.write_csv(create(&p)?)?;
    written.push(p);
    let p = dir.join("barrier.csv");
    write_barrier_csv(traj, &p)?;
    written.push(p);
    let p = dir.join("inputs.csv");
    write_inputs_csv(traj, &p)?;
    written.push(p);
    if plots {
        for (name, text) in [("paths.svg", paths_svg(traj, layout)), ("barrier.svg", barrier_svg(traj)), ("inputs.svg", inputs_svg(traj))] {
            let p = dir.join(name);
            write_text(&p, &text)?;
            written.push(p);
        }
    }
    Ok(written)
}
