//! CSV tables and SVG line charts.
//!
//! Numbers are written with six significant digits in plain decimal
//! notation where that stays readable, so files diff cleanly and a parsed
//! value re-emits to the same text.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use synthgap_core::analysis::CurveFit;

use crate::error::{IoContext, Result};

/// Six significant digits: decimal for magnitudes in `[1e-4, 1e6)`,
/// scientific otherwise; trailing zeros are trimmed.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // Round first so the exponent reflects any carry (e.g. 9.999999 -> 10).
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.to_string()
    }
}

/// Split `text` into rows of fields after checking the header line. Fields
/// never contain commas or quotes in the files written here.
pub fn parse_csv(text: &str, header: &str) -> std::result::Result<Vec<Vec<String>>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        Some(h) => return Err(format!("unexpected header {h:?}, expected {header:?}")),
        None => return Err("empty file".into()),
    }
    let width = header.split(',').count();
    lines
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            let row: Vec<String> = l.split(',').map(str::to_string).collect();
            if row.len() == width {
                Ok(row)
            } else {
                Err(format!("row {} has {} fields, expected {width}", i + 2, row.len()))
            }
        })
        .collect()
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub top1_mean: Option<f64>,
    pub top1_std: Option<f64>,
    pub top5_mean: Option<f64>,
    pub top5_std: Option<f64>,
    pub train_loss: Option<f64>,
    /// Run directory the numbers were read from.
    pub run_dir: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportTable {
    pub title: String,
    pub rows: Vec<ReportRow>,
}

pub const TABLE_HEADER: &str = "experiment,top1_mean,top1_std,top5_mean,top5_std,train_loss,run_dir";

fn opt(x: Option<f64>) -> String {
    x.map(format_sig6).unwrap_or_default()
}

impl ReportTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{TABLE_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.experiment,
                opt(r.top1_mean),
                opt(r.top1_std),
                opt(r.top5_mean),
                opt(r.top5_std),
                opt(r.train_loss),
                r.run_dir.display()
            );
        }
        out
    }

    /// Percentages with `mean ± std`, the layout of a paper table.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.experiment.len()).max().unwrap_or(0).max(10);
        let pct = |m: Option<f64>, s: Option<f64>| match (m, s) {
            (Some(m), Some(s)) => format!("{:6.2} ± {:5.2}", m * 100.0, s * 100.0),
            _ => format!("{:>15}", "failed"),
        };
        let mut out = format!(
            "{}\n{:width$}  {:>15}  {:>15}  {:>10}\n",
            self.title, "experiment", "top-1", "top-5", "train loss"
        );
        for r in &self.rows {
            let loss = r.train_loss.map(|l| format!("{l:10.4}")).unwrap_or_else(|| format!("{:>10}", "-"));
            let _ = writeln!(
                out,
                "{:width$}  {}  {}  {}",
                r.experiment,
                pct(r.top1_mean, r.top1_std),
                pct(r.top5_mean, r.top5_std),
                loss
            );
        }
        out
    }
}

pub fn emit_csv(table: &ReportTable, path: impl AsRef<Path>) -> Result<()> {
    if table.rows.is_empty() {
        return Err(synthgap_core::Error::Validation("refusing to write an empty table".into()).into());
    }
    let path = path.as_ref();
    fs::write(path, table.to_csv()).at(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// A horizontal reference line.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub label: String,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
    /// Fitted `a ln x + b` curves drawn over the x range.
    pub fits: Vec<(String, CurveFit)>,
    pub baselines: Vec<Baseline>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

impl Plot {
    /// Render a standalone SVG 1.1 document. Output depends only on `self`.
    pub fn to_svg(&self) -> Result<String> {
        let pts: Vec<(f64, f64)> = self.series.iter().flat_map(|s| s.points.iter().copied()).collect();
        if self.series.is_empty() || pts.is_empty() {
            return Err(synthgap_core::Error::Validation("a plot needs at least one non-empty series".into()).into());
        }
        if self.log_x && pts.iter().any(|p| p.0 <= 0.0) {
            return Err(synthgap_core::Error::Validation("logarithmic x axis needs positive x values".into()).into());
        }
        let tx = |x: f64| if self.log_x { x.log2() } else { x };
        let (mut x0, mut x1) =
            pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(tx(p.0)), b.max(tx(p.0))));
        let ys = pts.iter().map(|p| p.1).chain(self.baselines.iter().map(|b| b.y));
        let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = (y1 - y0) * 0.05;
        let (y0, y1) = (y0 - pad, y1 + pad);
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}"/></g>"#,
            TOP + ph,
            LEFT + pw,
            TOP + ph,
            TOP + ph
        );
        let xticks: Vec<f64> = if self.log_x {
            let (lo, hi) = (x0.floor() as i32, x1.ceil() as i32);
            (lo..=hi).map(|e| 2f64.powi(e)).filter(|&v| tx(v) >= x0 - 1e-9 && tx(v) <= x1 + 1e-9).collect()
        } else {
            nice_ticks(x0, x1, 6)
        };
        for t in xticks {
            let x = sx(t);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                TOP + ph,
                TOP + ph + 5.0,
                TOP + ph + 18.0,
                format_sig6(t)
            );
        }
        for t in nice_ticks(y0, y1, 6) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                y + 4.0,
                format_sig6(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let mut legend: Vec<(String, String, &str)> = Vec::new();
        for (i, b) in self.baselines.iter().enumerate() {
            let color = PALETTE[(self.series.len() + i) % PALETTE.len()];
            let y = sy(b.y);
            let _ = writeln!(
                s,
                r#"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-dasharray="6 4"/>"#,
                LEFT + pw
            );
            legend.push((b.label.clone(), color.into(), "6 4"));
        }
        for (i, (label, fit)) in self.fits.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut d = String::new();
            for j in 0..=48 {
                let u = x0 + (x1 - x0) * j as f64 / 48.0;
                let x = if self.log_x { 2f64.powf(u) } else { u };
                if x <= 0.0 {
                    continue;
                }
                let cmd = if d.is_empty() { 'M' } else { 'L' };
                let _ = write!(d, "{cmd}{:.1},{:.1} ", sx(x), sy(fit.eval(x)));
            }
            let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-dasharray="2 3"/>"#, d.trim_end());
            legend.push((label.clone(), color.into(), "2 3"));
        }
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let coords: Vec<String> =
                series.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                coords.join(" ")
            );
            for &(x, y) in &series.points {
                let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
            }
            legend.push((series.label.clone(), color.into(), ""));
        }
        let lx = W - RIGHT + 15.0;
        for (i, (label, color, dash)) in legend.iter().enumerate() {
            let y = TOP + 10.0 + i as f64 * 18.0;
            let dash = if dash.is_empty() { String::new() } else { format!(r#" stroke-dasharray="{dash}""#) };
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 20.0,
                lx + 25.0,
                y + 4.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

pub fn emit_plot_svg(plot: &Plot, path: impl AsRef<Path>) -> Result<()> {
    let svg = plot.to_svg()?;
    let path = path.as_ref();
    fs::write(path, svg).at(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_examples() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(0.876), "0.876");
        assert_eq!(format_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(9.9999996), "10");
        assert_eq!(format_sig6(-2.23), "-2.23");
        assert_eq!(format_sig6(0.00012345678), "0.000123457");
        assert_eq!(format_sig6(1.5e-7), "1.5e-7");
        assert_eq!(format_sig6(2.5e9), "2.5e9");
        assert_eq!(format_sig6(0.004898979485566356), "0.00489898");
    }

    proptest::proptest! {
        #[test]
        fn sig6_is_a_fixed_point_after_one_round(x in -1e12f64..1e12) {
            let once = format_sig6(x);
            let parsed: f64 = once.parse().unwrap();
            proptest::prop_assert_eq!(format_sig6(parsed), once.clone());
            let rel = ((parsed - x) / x).abs();
            proptest::prop_assert!(x == 0.0 || rel <= 5e-6, "{} -> {}", x, once);
        }
    }

    #[test]
    fn csv_parsing_checks_shape() {
        assert_eq!(parse_csv("a,b\n1,2\n", "a,b").unwrap(), vec![vec!["1".to_string(), "2".to_string()]]);
        assert!(parse_csv("a,c\n", "a,b").is_err());
        assert!(parse_csv("a,b\n1\n", "a,b").is_err());
        assert!(parse_csv("", "a,b").is_err());
    }

    fn plot(series: Vec<Series>) -> Plot {
        Plot {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: false,
            series,
            fits: vec![],
            baselines: vec![],
        }
    }

    #[test]
    fn single_series_yields_one_polyline() {
        let svg = plot(vec![Series { label: "a".into(), points: vec![(1.0, 2.0), (2.0, 3.0), (4.0, 1.0)] }])
            .to_svg()
            .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let start = svg.find("points=\"").unwrap() + 8;
        let coords = &svg[start..start + svg[start..].find('"').unwrap()];
        assert_eq!(coords.split(' ').count(), 3);
        assert!(coords.split(' ').all(|p| p.split(',').count() == 2));
    }

    #[test]
    fn empty_plots_are_rejected() {
        assert!(plot(vec![]).to_svg().is_err());
        assert!(plot(vec![Series { label: "a".into(), points: vec![] }]).to_svg().is_err());
    }

    #[test]
    fn overlays_and_determinism() {
        let mut p = plot(vec![
            Series {
                label: "with <pretraining>".into(),
                points: vec![(1.0, 85.0), (2.0, 83.0), (4.0, 81.0), (8.0, 79.0)],
            },
            Series { label: "without".into(), points: vec![(1.0, 85.0), (2.0, 80.0), (4.0, 74.0), (8.0, 66.0)] },
        ]);
        p.log_x = true;
        p.fits.push(("fit".into(), CurveFit { a: -2.23, b: 85.61, rms_residual: 0.0, n_points: 4 }));
        p.baselines.push(Baseline { label: "upper".into(), y: 88.0 });
        let a = p.to_svg().unwrap();
        assert_eq!(a, p.to_svg().unwrap());
        assert_eq!(a.matches("<polyline").count(), 2);
        assert_eq!(a.matches("<path").count(), 1);
        assert!(a.contains("&lt;pretraining&gt;"));
        assert!(a.contains("stroke-dasharray=\"6 4\""));
    }
}

/// Rendered outputs for one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub id: String,
    pub protocol: String,
    pub table: ReportTable,
    /// `top-1 % = a ln(reduction factor) + b`, per arm.
    pub fits: Vec<(String, CurveFit)>,
    pub gap_pp: Option<f64>,
    pub files: Vec<PathBuf>,
}

#[derive(serde::Serialize)]
struct FitJson {
    a: f64,
    b: f64,
    rms: f64,
    n: usize,
}

#[derive(serde::Serialize)]
struct SummaryJson<'a> {
    id: &'a str,
    protocol: &'a str,
    gap_pp: Option<f64>,
    fits: std::collections::BTreeMap<&'a str, FitJson>,
}

fn table_for(sweep: &crate::lab::SweepResult) -> ReportTable {
    let rows = sweep
        .baselines
        .iter()
        .chain(&sweep.rows)
        .map(|r| ReportRow {
            experiment: format!("{}:{}", r.protocol, r.param),
            top1_mean: r.stats.map(|s| s.top1_mean),
            top1_std: r.stats.map(|s| s.top1_std),
            top5_mean: r.stats.map(|s| s.top5_mean),
            top5_std: r.stats.map(|s| s.top5_std),
            train_loss: r.final_train_loss,
            run_dir: r.run_dir.clone(),
        })
        .collect();
    ReportTable { title: sweep.id.clone(), rows }
}

fn series_of<'a>(rows: impl Iterator<Item = &'a crate::lab::SweepRow>, label: &str) -> Series {
    let mut points: Vec<(f64, f64)> = rows.filter_map(|r| r.top1().map(|t| (r.x, t * 100.0))).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Series { label: label.to_string(), points }
}

fn baseline_lines(sweep: &crate::lab::SweepResult) -> Vec<Baseline> {
    [(crate::lab::REAL, "real only"), (crate::lab::SYNTH, "synthetic only")]
        .iter()
        .filter_map(|(which, label)| {
            sweep.baseline(which).and_then(|r| r.top1()).map(|t| Baseline { label: (*label).into(), y: t * 100.0 })
        })
        .collect()
}

/// Arm names of a reduction sweep in order of first appearance.
fn reduction_arms(sweep: &crate::lab::SweepResult) -> Vec<String> {
    let mut arms: Vec<String> = Vec::new();
    for r in &sweep.rows {
        if let Some((arm, _)) = r.param.split_once('@') {
            if !arms.iter().any(|a| a == arm) {
                arms.push(arm.to_string());
            }
        }
    }
    arms
}

/// Curve fits of every reduction arm with at least two distinct factors.
pub fn reduction_fits(sweep: &crate::lab::SweepResult) -> Vec<(String, CurveFit)> {
    reduction_arms(sweep)
        .into_iter()
        .filter_map(|arm| {
            let s = series_of(sweep.rows.iter().filter(|r| r.param.starts_with(&format!("{arm}@"))), &arm);
            synthgap_core::analysis::fit_log_curve(&s.points).ok().map(|f| (arm, f))
        })
        .collect()
}

/// Write `reports/<sweep_id>/` for every recorded sweep.
pub fn write_reports(ws: &crate::run::Workspace) -> Result<Vec<SweepReport>> {
    let sweeps = crate::lab::load_registry(ws)?;
    if sweeps.is_empty() {
        return Err(
            synthgap_core::Error::Validation(format!("no sweeps recorded under {}", ws.runs_dir().display())).into()
        );
    }
    let mut reports = Vec::new();
    for sweep in &sweeps {
        let dir = ws.reports_dir().join(&sweep.id);
        fs::create_dir_all(&dir).at(&dir)?;
        let table = table_for(sweep);
        let mut files = vec![dir.join("table.csv"), dir.join("table.txt")];
        emit_csv(&table, &files[0])?;
        fs::write(&files[1], table.to_text()).at(&files[1])?;
        let mut fits = Vec::new();
        let plot = |title: &str,
                    x_label: &str,
                    log_x: bool,
                    series: Vec<Series>,
                    fits: Vec<(String, CurveFit)>,
                    baselines: Vec<Baseline>| Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: "top-1 accuracy on real val (%)".into(),
            log_x,
            series,
            fits,
            baselines,
        };
        let mut plots = Vec::new();
        if sweep.protocol.starts_with("transfer-") {
            let s = series_of(sweep.rows.iter(), &sweep.protocol);
            plots.push((
                "accuracy.svg",
                plot(&sweep.id, "transferred units N", false, vec![s], vec![], baseline_lines(sweep)),
            ));
        } else if sweep.protocol == "reduce" {
            fits = reduction_fits(sweep);
            let series: Vec<Series> = reduction_arms(sweep)
                .iter()
                .map(|arm| series_of(sweep.rows.iter().filter(|r| r.param.starts_with(&format!("{arm}@"))), arm))
                .filter(|s| !s.points.is_empty())
                .collect();
            let fit_labels: Vec<(String, CurveFit)> = fits.iter().map(|(a, f)| (format!("fit: {a}"), *f)).collect();
            plots.push((
                "reduction.svg",
                plot(&sweep.id, "reduction factor", false, series.clone(), fit_labels.clone(), vec![]),
            ));
            plots.push((
                "reduction-log.svg",
                plot(&sweep.id, "reduction factor (log scale)", true, series, fit_labels, vec![]),
            ));
        } else if sweep.protocol == "ablate-fidelity" {
            let s = series_of(sweep.rows.iter(), "proxy fidelity");
            plots.push((
                "fidelity.svg",
                plot(&sweep.id, "proxy fidelity", false, vec![s], vec![], baseline_lines(sweep)),
            ));
        }
        for (name, p) in plots {
            if p.series.iter().all(|s| s.points.is_empty()) {
                continue;
            }
            let path = dir.join(name);
            emit_plot_svg(&p, &path)?;
            files.push(path);
        }
        let summary = SummaryJson {
            id: &sweep.id,
            protocol: &sweep.protocol,
            gap_pp: sweep.gap_pp(),
            fits: fits
                .iter()
                .map(|(a, f)| (a.as_str(), FitJson { a: f.a, b: f.b, rms: f.rms_residual, n: f.n_points }))
                .collect(),
        };
        let path = dir.join("summary.json");
        fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes")).at(&path)?;
        files.push(path);
        reports.push(SweepReport {
            id: sweep.id.clone(),
            protocol: sweep.protocol.clone(),
            table,
            gap_pp: sweep.gap_pp(),
            fits,
            files,
        });
    }
    Ok(reports)
}
