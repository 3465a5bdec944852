//! Minimal SVG charts: line, scatter and bar.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::output::read_csv;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    #[default]
    Line,
    Scatter,
    Bar,
}

impl std::str::FromStr for ChartKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(ChartKind::Line),
            "scatter" => Ok(ChartKind::Scatter),
            "bar" => Ok(ChartKind::Bar),
            other => Err(Error::Config(format!("unknown chart kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: ChartKind,
    pub x: String,
    pub y: String,
    /// Column whose values split the rows into series.
    pub series: Option<String>,
    /// Keep only rows whose column equals the value.
    pub filter: Option<(String, String)>,
    pub title: Option<String>,
    pub width: u32,
    pub height: u32,
}

impl PlotSpec {
    pub fn new(kind: ChartKind, x: &str, y: &str) -> Self {
        PlotSpec {
            kind,
            x: x.into(),
            y: y.into(),
            series: None,
            filter: None,
            title: None,
            width: 720,
            height: 440,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub kind: ChartKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub width: u32,
    pub height: u32,
}

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Builds a chart from CSV rows. Line and bar charts average repeated x values
/// within a series, so seeds collapse to their mean trace.
pub fn chart_from_csv(path: &Path, spec: &PlotSpec) -> Result<Chart> {
    let (header, rows) = read_csv(path)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let mut wanted = vec![spec.x.as_str(), spec.y.as_str()];
    wanted.extend(spec.series.as_deref());
    wanted.extend(spec.filter.as_ref().map(|f| f.0.as_str()));
    let missing: Vec<String> = wanted.iter().filter(|c| col(c).is_none()).map(|c| c.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns {
            path: path.display().to_string(),
            columns: missing,
        });
    }
    let (xi, yi) = (col(&spec.x).unwrap(), col(&spec.y).unwrap());
    let si = spec.series.as_deref().and_then(col);
    let filter = spec.filter.as_ref().map(|(c, v)| (col(c).unwrap(), v.as_str()));

    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in &rows {
        if let Some((fi, v)) = filter {
            if row[fi] != v {
                continue;
            }
        }
        let (Ok(x), Ok(y)) = (row[xi].parse::<f64>(), row[yi].parse::<f64>()) else {
            continue;
        };
        let name = si.map(|i| row[i].clone()).unwrap_or_else(|| spec.y.clone());
        groups.entry(name).or_default().push((x, y));
    }
    let series = groups
        .into_iter()
        .map(|(name, pts)| Series {
            name,
            points: match spec.kind {
                ChartKind::Scatter => pts,
                _ => average_by_x(pts),
            },
        })
        .collect();
    Ok(Chart {
        kind: spec.kind,
        title: spec.title.clone().unwrap_or_else(|| format!("{} vs {}", spec.y, spec.x)),
        x_label: spec.x.clone(),
        y_label: spec.y.clone(),
        series,
        width: spec.width,
        height: spec.height,
    })
}

fn average_by_x(pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut acc: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for (x, y) in pts {
        // order-preserving key for finite floats
        let bits = x.to_bits();
        let key = if x.is_sign_negative() { !bits } else { bits | (1 << 63) };
        let e = acc.entry(key).or_insert((x, 0.0, 0));
        e.1 += y;
        e.2 += 1;
    }
    acc.into_values().map(|(x, s, n)| (x, s / n as f64)).collect()
}

pub fn emit_plot(csv_path: &Path, spec: &PlotSpec, out: &Path) -> Result<()> {
    let chart = chart_from_csv(csv_path, spec)?;
    std::fs::write(out, render_svg(&chart))?;
    Ok(())
}

/// Round tick spacing covering `[lo, hi]` with about `target` ticks.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_svg(c: &Chart) -> String {
    let (w, h) = (c.width as f64, c.height as f64);
    let (left, right, top, bottom) = (64.0, 150.0, 40.0, 52.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let all: Vec<(f64, f64)> = c.series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (mut x0, mut x1) = bounds(all.iter().map(|p| p.0));
    let (mut y0, mut y1) = bounds(all.iter().map(|p| p.1));
    if c.kind == ChartKind::Bar {
        y0 = y0.min(0.0);
        let gap = min_gap(&all);
        x0 -= gap / 2.0;
        x1 += gap / 2.0;
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = (y1 - y0) * 0.05;
    if c.kind != ChartKind::Bar || y0 < 0.0 {
        y0 -= pad;
    }
    y1 += pad;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(&c.title)
    );
    for t in nice_ticks(x0, x1, 8) {
        let x = sx(t);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e5e5e5"/>"##, top, top + ph);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, top + ph + 16.0, fmt_tick(t));
    }
    for t in nice_ticks(y0, y1, 6) {
        let y = sy(t);
        let _ = writeln!(s, r##"<line x1="{left:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e5e5"/>"##, left + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        escape(&c.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(&c.y_label)
    );

    let n = c.series.len().max(1) as f64;
    let bar_w = min_gap(&all) / (x1 - x0) * pw * 0.8 / n;
    for (k, ser) in c.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        match c.kind {
            ChartKind::Line => {
                let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            ChartKind::Scatter => {
                for &(x, y) in &ser.points {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.75"/>"#,
                        sx(x),
                        sy(y)
                    );
                }
            }
            ChartKind::Bar => {
                let base = sy(y0.max(0.0));
                for &(x, y) in &ser.points {
                    let cx = sx(x) - bar_w * n / 2.0 + bar_w * k as f64;
                    let top_y = sy(y).min(base);
                    let _ = writeln!(
                        s,
                        r#"<rect x="{cx:.2}" y="{top_y:.2}" width="{bar_w:.2}" height="{:.2}" fill="{color}"/>"#,
                        (sy(y) - base).abs()
                    );
                }
            }
        }
        let ly = top + 14.0 + 18.0 * k as f64;
        let lx = left + pw + 14.0;
        let _ = writeln!(s, r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#, ly - 10.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 18.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
        .pipe_finite()
}

trait PipeFinite {
    fn pipe_finite(self) -> Self;
}

impl PipeFinite for (f64, f64) {
    fn pipe_finite(self) -> Self {
        if self.0.is_finite() && self.1.is_finite() {
            self
        } else {
            (0.0, 1.0)
        }
    }
}

fn min_gap(pts: &[(f64, f64)]) -> f64 {
    let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min).min(1.0e12).max(1e-9)
        .pipe_or(1.0)
}

trait PipeOr {
    fn pipe_or(self, d: f64) -> f64;
}

impl PipeOr for f64 {
    fn pipe_or(self, d: f64) -> f64 {
        if self.is_finite() && self < 1.0e12 { self } else { d }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> std::path::PathBuf {
        let p = dir.join("data.csv");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn line_chart_averages_seeds_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "generation,rho,reset\n1,0.2,both\n1,0.4,both\n2,0.5,both\n1,0.1,none\n2,0.2,none\n",
        );
        let mut spec = PlotSpec::new(ChartKind::Line, "generation", "rho");
        spec.series = Some("reset".into());
        let c = chart_from_csv(&p, &spec).unwrap();
        assert_eq!(c.series[0].name, "both");
        assert!((c.series[0].points[0].1 - 0.3).abs() < 1e-12);
        let a = render_svg(&c);
        assert_eq!(a, render_svg(&chart_from_csv(&p, &spec).unwrap()));
        assert!(a.contains("<polyline") && a.contains(">none</text>"));
    }

    #[test]
    fn missing_columns_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a,b\n1,2\n");
        let mut spec = PlotSpec::new(ChartKind::Scatter, "a", "rho");
        spec.series = Some("seed".into());
        match chart_from_csv(&p, &spec) {
            Err(Error::MissingColumns { columns, .. }) => assert_eq!(columns, vec!["rho", "seed"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scatter_and_bar_render() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bin_low,count\n-1,0\n-0.8,3\n0.8,10\n");
        let bars = render_svg(&chart_from_csv(&p, &PlotSpec::new(ChartKind::Bar, "bin_low", "count")).unwrap());
        assert_eq!(bars.matches("<rect").count(), 3 + 3);
        let dots = render_svg(&chart_from_csv(&p, &PlotSpec::new(ChartKind::Scatter, "bin_low", "count")).unwrap());
        assert_eq!(dots.matches("<circle").count(), 3);
    }

    #[test]
    fn ticks_are_round() {
        assert_eq!(nice_ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(nice_ticks(0.0, 20.0, 4), vec![0.0, 5.0, 10.0, 15.0, 20.0]);
    }
}
