//! Report files: full JSON, flat CSV and a self-contained SVG scatter plot.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use super::ExperimentReport;
use crate::error::{Error, Result};
use crate::grid::write_atomic;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Svg];

    fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Svg => "svg",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

pub fn render_json(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn render_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Config(format!("cannot write CSV: {e}"));
    w.write_record(&report.columns).map_err(err)?;
    for row in &report.rows {
        w.write_record(row.iter().map(cell)).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("cannot write CSV: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Scatter plot of the report's plot columns; an axis-only frame when there is nothing to draw.
pub fn render_svg(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let Some(plot) = &report.plot else {
        let _ = writeln!(out, r#"<text x="{}" y="30" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(&report.id));
        out.push_str("</svg>\n");
        return out;
    };
    let tx = |v: f64| if plot.log_x { v.log10() } else { v };
    let ty = |v: f64| if plot.log_y { v.log10() } else { v };
    let xs = report.column(&plot.x).unwrap_or_default();
    let series: Vec<(String, Vec<(f64, f64)>)> = plot
        .y
        .iter()
        .map(|name| {
            let ys = report.column(name).unwrap_or_default();
            let pts = xs
                .iter()
                .zip(&ys)
                .map(|(&x, &y)| (tx(x), ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect();
            (name.clone(), pts)
        })
        .collect();
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.1.iter().copied()).collect();
    let range = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo <= 1e-12 * lo.abs().max(1.0) {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = range(&|p| p.0);
    let (y0, y1) = range(&|p| p.1);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&plot.title));
    let _ = writeln!(
        out,
        r#"<path d="M{m} {t} L{m} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let label = |v: f64, log: bool| if log { format!("1e{v:.2}") } else { format!("{v:.4}") };
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, MARGIN, HEIGHT - MARGIN + 16.0, label(x0, plot.log_x));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH - MARGIN, HEIGHT - MARGIN + 16.0, label(x1, plot.log_x));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, HEIGHT - MARGIN, label(y0, plot.log_y));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, MARGIN + 4.0, label(y1, plot.log_y));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 20.0, escape(&plot.x));
    for (j, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[j % COLORS.len()];
        let _ = writeln!(out, r#"<g fill="{color}">"#);
        for &(x, y) in pts {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, px(x), py(y));
        }
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, WIDTH - MARGIN - 120.0, MARGIN + 16.0 * j as f64, escape(name));
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `{id}.{ext}` for each format into `dir`, atomically; returns the paths written.
pub fn emit_report(report: &ExperimentReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for &fmt in formats {
        let body = match fmt {
            ReportFormat::Json => render_json(report)?,
            ReportFormat::Csv => render_csv(report)?,
            ReportFormat::Svg => render_svg(report),
        };
        let path = dir.join(format!("{}.{}", report.id, fmt.extension()));
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{num, ExperimentConfig, ExperimentKind, PlotSpec};

    fn sample() -> ExperimentReport {
        let cfg = ExperimentConfig::new(ExperimentKind::Pogorelov);
        let mut r = ExperimentReport::empty(&cfg, &["case", "h_section", "f_scale", "tau", "max_hess", "lambda_min", "pass"]);
        for i in 0..3 {
            let s = i as f64 * 0.5;
            r.push_row(vec![
                Value::from(format!("c{i}")),
                num(1.0),
                num(s),
                num(0.1),
                num(1.0 + s),
                num(0.5),
                Value::Bool(true),
            ]);
        }
        r.plot = Some(PlotSpec {
            title: "t".into(),
            x: "f_scale".into(),
            y: vec!["max_hess".into()],
            log_x: false,
            log_y: false,
        });
        r
    }

    #[test]
    fn empty_report_is_valid_json_with_zero_rows() {
        let cfg = ExperimentConfig::new(ExperimentKind::Growth);
        let r = ExperimentReport::empty(&cfg, &["a"]);
        let v: Value = serde_json::from_str(&render_json(&r).unwrap()).unwrap();
        assert_eq!(v["rows"].as_array().unwrap().len(), 0);
        assert_eq!(render_csv(&r).unwrap(), "a\n");
        assert!(render_svg(&r).ends_with("</svg>\n"));
    }

    #[test]
    fn csv_header_and_rows() {
        let csv = render_csv(&sample()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "case,h_section,f_scale,tau,max_hess,lambda_min,pass");
        assert_eq!(lines.next().unwrap(), "c0,1.0,0.0,0.1,1.0,0.5,true");
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn svg_has_one_marker_per_point() {
        let svg = render_svg(&sample());
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn emission_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample();
        let a = emit_report(&r, dir.path(), &ReportFormat::ALL).unwrap();
        let first: Vec<Vec<u8>> = a.iter().map(|p| std::fs::read(p).unwrap()).collect();
        let b = emit_report(&r, dir.path(), &ReportFormat::ALL).unwrap();
        assert_eq!(a, b);
        let second: Vec<Vec<u8>> = b.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
        assert!(a[0].ends_with("pogorelov.json"));
    }
}
