//! Post-hoc analyses of trained runs: information-plane curves, per-variable
//! allocation of the KL budget, Bhattacharyya co-embedding clusters, and
//! their CSV/SVG export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bottleneck::{GaussianEmbedding, Mode, Model};
use crate::error::{Error, Result};
use crate::pendulum::{Dataset, PendulumConfig, State};
use crate::rng::Rng;
use crate::trainer::{RunLog, RunManifest, RunPaths, TrainRunConfig};

/// Bhattacharyya coefficient `∫√(p·q)` of two diagonal Gaussians.
pub fn bhattacharyya_coefficient(a: &GaussianEmbedding, b: &GaussianEmbedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let mut distance = 0.0;
    for d in 0..a.dim() {
        let (la, lb) = (a.log_var[d], b.log_var[d]);
        let mid = 0.5 * (la + lb);
        // ratio = σ̄² / (σa σb), exactly 1 for equal variances.
        let ratio = 0.5 * ((la - mid).exp() + (lb - mid).exp());
        let dm = a.mean[d] - b.mean[d];
        distance += dm * dm / (8.0 * ratio * mid.exp()) + 0.5 * ratio.ln();
    }
    Ok((-distance).exp())
}

/// States whose posterior overlaps a reference posterior by at least
/// `bc_threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoEmbedSet {
    pub reference: State,
    pub bc_threshold: f64,
    /// The reference first, then qualifying sample states in sample order.
    pub members: Vec<State>,
    pub member_bc: Vec<f64>,
    /// Second-mass `(x, y)` of each member.
    pub positions: Vec<(f64, f64)>,
}

impl CoEmbedSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Full-state posterior of each state; DIB posteriors are concatenated into
/// their product.
pub fn state_posteriors(model: &Model, states: &[State]) -> Result<Vec<GaussianEmbedding>> {
    Ok(model
        .posteriors(states)?
        .into_iter()
        .map(|p| match model.mode() {
            Mode::Ib => p.into_iter().next().expect("one bottleneck"),
            Mode::Dib => GaussianEmbedding::concat(&p),
        })
        .collect())
}

pub fn co_embedded_states(
    model: &Model,
    pendulum: &PendulumConfig,
    sample: &[State],
    reference: State,
    bc_threshold: f64,
) -> Result<CoEmbedSet> {
    if !(bc_threshold > 0.0 && bc_threshold <= 1.0) {
        return Err(Error::OutOfRange(format!("bc_threshold must lie in (0, 1], got {bc_threshold}")));
    }
    let mut states = Vec::with_capacity(sample.len() + 1);
    states.push(reference);
    states.extend_from_slice(sample);
    let post = state_posteriors(model, &states)?;
    let mut set = CoEmbedSet {
        reference,
        bc_threshold,
        members: vec![reference],
        member_bc: vec![1.0],
        positions: vec![pendulum.second_mass_position(&reference)],
    };
    for (s, p) in sample.iter().zip(&post[1..]) {
        let bc = bhattacharyya_coefficient(&post[0], p)?;
        if bc >= bc_threshold {
            set.members.push(*s);
            set.member_bc.push(bc);
            set.positions.push(pendulum.second_mass_position(s));
        }
    }
    Ok(set)
}

/// `n` states drawn uniformly (with replacement) from all saved states.
pub fn sample_states(data: &Dataset, n: usize, rng: &mut Rng) -> Result<Vec<State>> {
    if data.is_empty() || data.n_steps() == 0 {
        return Err(Error::Empty("dataset has no states".into()));
    }
    Ok((0..n)
        .map(|_| {
            let t = rng.random_range(0..data.len());
            let i = rng.random_range(0..data.trajectories[t].states.len());
            data.trajectories[t].states[i]
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPoint {
    pub step: u64,
    pub kl_total: f64,
    /// Fraction of `kl_total` carried by θ₁, ω₁, θ₂, ω₂.
    pub shares: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AllocationProfile {
    pub points: Vec<AllocationPoint>,
}

/// Below this total the shares are division noise.
pub const MIN_KL_FOR_SHARES: f64 = 1e-6;

pub fn allocation_profile(log: &RunLog) -> Result<AllocationProfile> {
    if log.mode != Mode::Dib {
        return Err(Error::ModeMismatch(
            "allocation needs a DIB run log with per-variable KL columns; this log is from an IB run".into(),
        ));
    }
    let mut points = Vec::new();
    for p in &log.points {
        if p.kl_total < MIN_KL_FOR_SHARES {
            continue;
        }
        let mut shares = [0.0; 4];
        for (s, kl) in shares.iter_mut().zip(&p.kl_per_variable) {
            *s = kl / p.kl_total;
        }
        points.push(AllocationPoint {
            step: p.step,
            kl_total: p.kl_total,
            shares,
        });
    }
    Ok(AllocationProfile { points })
}

impl AllocationProfile {
    /// Mean shares over points with `kl_total` in `[lo, hi]`, or `None` if none qualify.
    pub fn mean_shares_in(&self, lo: f64, hi: f64) -> Option<[f64; 4]> {
        let inside: Vec<_> = self.points.iter().filter(|p| p.kl_total >= lo && p.kl_total <= hi).collect();
        if inside.is_empty() {
            return None;
        }
        let mut mean = [0.0; 4];
        for p in &inside {
            mean.iter_mut().zip(p.shares).for_each(|(m, s)| *m += s);
        }
        mean.iter_mut().for_each(|m| *m /= inside.len() as f64);
        Some(mean)
    }
}

/// One run's information-plane trajectory, ordered by `kl_total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoPlaneCurve {
    pub label: String,
    pub delta: f64,
    pub split_index: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// `(kl_total, mi_estimate)` in nats.
    pub points: Vec<(f64, f64)>,
}

/// Curves sharing one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoPlaneGroup {
    pub delta: f64,
    pub curves: Vec<InfoPlaneCurve>,
}

/// A run log with the config that produced it.
#[derive(Debug, Clone)]
pub struct LabeledLog {
    pub config: TrainRunConfig,
    pub log: RunLog,
}

/// Read `manifest.json` and `runlog.csv` from a run directory.
pub fn load_run(dir: impl AsRef<Path>) -> Result<LabeledLog> {
    let paths = RunPaths::new(dir.as_ref());
    let manifest = RunManifest::load(paths.manifest())?;
    let log = RunLog::read_csv(paths.runlog())?;
    Ok(LabeledLog {
        config: manifest.config,
        log,
    })
}

/// Every run directory at or directly below `root`, in name order.
pub fn load_runs(root: impl AsRef<Path>) -> Result<Vec<LabeledLog>> {
    let root = root.as_ref();
    if RunPaths::new(root).manifest().exists() {
        return Ok(vec![load_run(root)?]);
    }
    let mut dirs: Vec<_> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| RunPaths::new(p).runlog().exists())
        .collect();
    dirs.sort();
    dirs.iter().map(load_run).collect()
}

/// Centered moving average over `window` neighbours, truncated at the ends.
fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return values.to_vec();
    }
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + window - half).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

pub fn assemble_info_plane(runs: &[LabeledLog], window: usize) -> Result<Vec<InfoPlaneGroup>> {
    let first = runs.first().ok_or_else(|| Error::Empty("no run logs to assemble".into()))?;
    let batch = first.config.batch_size;
    if let Some(r) = runs.iter().find(|r| r.config.batch_size != batch) {
        return Err(Error::InvalidConfig(format!(
            "runs mix batch sizes {batch} and {}; their estimates have different ceilings",
            r.config.batch_size
        )));
    }
    let mut groups: BTreeMap<u64, InfoPlaneGroup> = BTreeMap::new();
    for r in runs {
        let mut pts: Vec<(f64, f64)> = r.log.points.iter().map(|p| (p.kl_total, p.mi_estimate)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let points = smooth(&x, window).into_iter().zip(smooth(&y, window)).collect();
        let c = &r.config;
        groups
            .entry(c.delta.to_bits())
            .or_insert_with(|| InfoPlaneGroup {
                delta: c.delta,
                curves: vec![],
            })
            .curves
            .push(InfoPlaneCurve {
                label: format!("Δ={} s, split {}, seed {}", c.delta, c.split_index, c.seed),
                delta: c.delta,
                split_index: c.split_index,
                seed: c.seed,
                batch_size: c.batch_size,
                points,
            });
    }
    let mut out: Vec<_> = groups.into_values().collect();
    out.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesStyle {
    Line,
    Markers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub style: SeriesStyle,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

/// A 2-D chart that renders to SVG and mirrors its data to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed axis ranges; derived from the data when `None`.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn data_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Roughly five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = vec![];
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: vec![],
            x_range: None,
            y_range: None,
        }
    }

    /// Add a series with the next palette color.
    pub fn push(&mut self, label: impl Into<String>, style: SeriesStyle, points: Vec<(f64, f64)>) -> &mut Self {
        let color = PALETTE[self.series.len() % PALETTE.len()].to_string();
        self.series.push(Series {
            label: label.into(),
            style,
            color,
            points,
        });
        self
    }

    pub fn to_svg(&self) -> String {
        let (x0, x1) = self
            .x_range
            .unwrap_or_else(|| data_range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0))));
        let (y0, y1) = self
            .y_range
            .unwrap_or_else(|| data_range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1))));
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        for t in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{0:.2}" x2="{x:.2}" y2="{1:.2}" stroke="#333"/><text x="{x:.2}" y="{2:.2}" text-anchor="middle">{t}</text>"##,
                MARGIN_TOP + ph,
                MARGIN_TOP + ph + 5.0,
                MARGIN_TOP + ph + 18.0
            );
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r##"<line x1="{0:.2}" y1="{y:.2}" x2="{MARGIN_LEFT}" y2="{y:.2}" stroke="#333"/><text x="{1:.2}" y="{2:.2}" text-anchor="end">{t}</text>"##,
                MARGIN_LEFT - 5.0,
                MARGIN_LEFT - 8.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            MARGIN_TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let _ = writeln!(
            s,
            r#"<clipPath id="plot-area"><rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}"/></clipPath>"#
        );
        let _ = writeln!(s, r#"<g clip-path="url(#plot-area)">"#);
        for series in &self.series {
            let visible = series.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
            match series.style {
                SeriesStyle::Line => {
                    let pts: Vec<String> = visible.map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                        series.color,
                        pts.join(" ")
                    );
                }
                SeriesStyle::Markers => {
                    let _ = writeln!(s, r#"<g fill="{}">"#, series.color);
                    for &(x, y) in visible {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, sx(x), sy(y));
                    }
                    let _ = writeln!(s, "</g>");
                }
            }
        }
        let _ = writeln!(s, "</g>");

        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        for (i, series) in self.series.iter().enumerate() {
            let y = MARGIN_TOP + 10.0 + 18.0 * i as f64;
            match series.style {
                SeriesStyle::Line => {
                    let _ = write!(
                        s,
                        r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/>"#,
                        lx + 18.0,
                        series.color
                    );
                }
                SeriesStyle::Markers => {
                    let _ = write!(
                        s,
                        r#"<circle cx="{}" cy="{y}" r="3.5" fill="{}"/>"#,
                        lx + 9.0,
                        series.color
                    );
                }
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}">{}</text>"#,
                lx + 24.0,
                y + 4.0,
                escape(&series.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn write_svg(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_svg()).map_err(|e| Error::io(path, e))
    }

    /// One row per plotted point: `series,x,y`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["series", "x", "y"])?;
        for s in &self.series {
            for &(x, y) in &s.points {
                w.write_record([s.label.clone(), x.to_string(), y.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Series labels and points from a CSV written by [`Plot::write_csv`].
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<(f64, f64)>)>> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let mut out: Vec<(String, Vec<(f64, f64)>)> = vec![];
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad number {:?} in {}", &rec[i], path.display())))
            };
            let point = (num(1)?, num(2)?);
            match out.last_mut() {
                Some((label, pts)) if label == &rec[0] => pts.push(point),
                _ => out.push((rec[0].to_string(), vec![point])),
            }
        }
        Ok(out)
    }
}

/// Information plane: every curve as a line, colored by horizon.
pub fn info_plane_plot(groups: &[InfoPlaneGroup]) -> Plot {
    let mut plot = Plot::new("Information plane", "KL divergence (nats)", "InfoNCE estimate (nats)");
    for (g, group) in groups.iter().enumerate() {
        for c in &group.curves {
            plot.series.push(Series {
                label: c.label.clone(),
                style: SeriesStyle::Line,
                color: PALETTE[g % PALETTE.len()].to_string(),
                points: c.points.clone(),
            });
        }
    }
    plot
}

/// Share of the KL budget held by each variable against the total.
pub fn allocation_plot(profile: &AllocationProfile) -> Plot {
    let mut plot = Plot::new("Information allocation", "total KL divergence (nats)", "share of KL");
    plot.y_range = Some((0.0, 1.0));
    for (k, name) in ["theta1", "omega1", "theta2", "omega2"].into_iter().enumerate() {
        let pts = profile.points.iter().map(|p| (p.kl_total, p.shares[k])).collect();
        plot.push(name, SeriesStyle::Line, pts);
    }
    plot
}

/// Second-mass positions of the sample (gray) and of the co-embedded set.
pub fn coembed_plot(set: &CoEmbedSet, sample_positions: &[(f64, f64)], reach: f64) -> Plot {
    let mut plot = Plot::new(
        format!("States with BC ≥ {}", set.bc_threshold),
        "x of second mass (m)",
        "y of second mass (m)",
    );
    plot.x_range = Some((-reach, reach));
    plot.y_range = Some((-reach, reach));
    plot.series.push(Series {
        label: "sample".into(),
        style: SeriesStyle::Markers,
        color: "#bbbbbb".into(),
        points: sample_positions.to_vec(),
    });
    plot.series.push(Series {
        label: "co-embedded".into(),
        style: SeriesStyle::Markers,
        color: PALETTE[1].into(),
        points: set.positions[1..].to_vec(),
    });
    plot.series.push(Series {
        label: "reference".into(),
        style: SeriesStyle::Markers,
        color: "#000000".into(),
        points: set.positions[..1].to_vec(),
    });
    plot
}
