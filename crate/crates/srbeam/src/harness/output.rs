//! CSV and SVG emission.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 14] = [
    "experiment",
    "method",
    "M",
    "I",
    "N",
    "C_bps_hz",
    "E_T_J",
    "E_T_dB",
    "iterations",
    "converged",
    "rank_residual",
    "wall_s",
    "seed",
    "trial",
];

/// One optimization run. `e_t_db` is `10·log10(E_T / 1 J)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    #[serde(rename = "M")]
    pub m: u32,
    #[serde(rename = "I")]
    pub i: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "C_bps_hz")]
    pub c_bps_hz: f64,
    #[serde(rename = "E_T_J")]
    pub e_t_j: f64,
    #[serde(rename = "E_T_dB")]
    pub e_t_db: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rank_residual: f64,
    pub wall_s: f64,
    pub seed: u64,
    pub trial: usize,
}

pub fn energy_db(e: f64) -> f64 {
    10.0 * e.log10()
}

/// Row order: trial, sweep value, then the remaining keys.
pub fn row_order(a: &ResultRow, b: &ResultRow) -> Ordering {
    a.trial
        .cmp(&b.trial)
        .then_with(|| a.experiment.cmp(&b.experiment))
        .then_with(|| a.c_bps_hz.total_cmp(&b.c_bps_hz))
        .then_with(|| a.method.cmp(&b.method))
        .then_with(|| a.m.cmp(&b.m))
        .then_with(|| a.i.cmp(&b.i))
        .then_with(|| a.n.cmp(&b.n))
}

/// `%.9g`-style formatting.
pub fn fmt_g(x: f64) -> String {
    fmt_g_digits(x, 9)
}

pub fn fmt_g_digits(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let p = digits.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let mant = trim_zeros(mant);
        format!("{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn record(r: &ResultRow) -> [String; 14] {
    [
        r.experiment.clone(),
        r.method.clone(),
        r.m.to_string(),
        r.i.to_string(),
        r.n.to_string(),
        fmt_g(r.c_bps_hz),
        fmt_g(r.e_t_j),
        fmt_g(r.e_t_db),
        r.iterations.to_string(),
        r.converged.to_string(),
        fmt_g(r.rank_residual),
        fmt_g(r.wall_s),
        r.seed.to_string(),
        r.trial.to_string(),
    ]
}

/// Writes rows sorted by [`row_order`].
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no rows to write".into()));
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(row_order);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(CSV_HEADER).map_err(|e| Error::Io(e.to_string()))?;
    for r in &sorted {
        w.write_record(record(r)).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    let header: Vec<String> = r.headers().map_err(|e| Error::Io(e.to_string()))?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(|e| Error::Io(e.to_string()))).collect()
}

/// Writes a CSV with a free-form header, floats formatted by [`fmt_g`].
pub fn emit_table(header: &[&str], rows: &[Vec<Cell>], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Dimension(format!("{} cells for {} columns", r.len(), header.len())));
        }
        w.write_record(r.iter().map(Cell::render)).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Float(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(k) => k.to_string(),
            Cell::Float(x) => fmt_g(*x),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k as i64)
    }
}

impl From<u64> for Cell {
    fn from(k: u64) -> Self {
        Cell::Int(k as i64)
    }
}

impl From<u32> for Cell {
    fn from(k: u32) -> Self {
        Cell::Int(k as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxesSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Self-contained SVG line plot, one polyline per series.
pub fn render_svg(series: &[Series], axes: &AxesSpec) -> Result<String> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("nothing to plot".into()));
    }
    let ty = |y: f64| if axes.log_y { y.log10() } else { y };
    let mut pts: Vec<Vec<(f64, f64)>> = Vec::with_capacity(series.len());
    for s in series {
        let p: Vec<(f64, f64)> =
            s.points.iter().map(|&(x, y)| (x, ty(y))).filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        if p.len() < 2 {
            return Err(Error::InvalidArgument(format!("series {:?} has fewer than 2 points", s.label)));
        }
        pts.push(p);
    }
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let (w, h, ml, mr, mt, mb) = (640.0, 420.0, 70.0, 150.0, 40.0, 55.0);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (ml + w - mr) / 2.0, escape(&axes.title));
    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - ml - mr,
        h - mt - mb
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let ylab = if axes.log_y { format!("1e{}", fmt_g_digits(fy, 3)) } else { fmt_g_digits(fy, 4) };
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(fx), h - mb + 16.0, fmt_g_digits(fx, 4));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ml - 6.0, py(fy) + 4.0, ylab);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (ml + w - mr) / 2.0, h - 12.0, escape(&axes.x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (mt + h - mb) / 2.0,
        escape(&axes.y_label)
    );
    for (k, (ser, p)) in series.iter().zip(&pts).enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, coords.join(" "));
        let ly = mt + 16.0 * (k as f64 + 1.0);
        let _ = writeln!(s, r#"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{colour}" stroke-width="2"/>"#, w - mr + 10.0, ly - 4.0, w - mr + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, w - mr + 35.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(series: &[Series], axes: &AxesSpec, path: &Path) -> Result<()> {
    let svg = render_svg(series, axes)?;
    std::fs::write(path, svg)?;
    Ok(())
}
