//! Accuracy-vs-budget and lambda sweep charts as standalone SVG, each with a
//! gnuplot-friendly TSV of the plotted values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::records::RunRecord;
use crate::summary::mean_se;
use crate::{io_err, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: f64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Tick labels for evenly spaced categorical x positions `0, 1, ...`.
    pub x_categories: Option<Vec<String>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn padded(lo: f64, hi: f64, min_pad: f64) -> (f64, f64) {
    if !(hi > lo) {
        return (lo - min_pad, hi + min_pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let pts = self.series.iter().flat_map(|s| &s.points);
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for p in pts {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.mean - p.se);
            y1 = y1.max(p.mean + p.se);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        let (x0, x1) = padded(x0, x1, 0.5);
        let (y0, y1) = padded(y0, y1, 0.05);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

        let mut o = String::new();
        let w = &mut o;
        writeln!(
            w,
            r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        )
        .unwrap();
        writeln!(
            w,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        )
        .unwrap();
        for i in 0..=5 {
            let y = y0 + (y1 - y0) * i as f64 / 5.0;
            let py = sy(y);
            writeln!(
                w,
                r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                py + 4.0,
                fmt_tick(y)
            )
            .unwrap();
        }
        let mut xticks: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.x))
            .collect();
        xticks.sort_by(f64::total_cmp);
        xticks.dedup();
        for x in xticks {
            let label = match &self.x_categories {
                Some(c) => c.get(x as usize).cloned().unwrap_or_default(),
                None => fmt_tick(x),
            };
            writeln!(
                w,
                r#"<line x1="{px:.2}" y1="{yb:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                TOP + ph + 5.0,
                TOP + ph + 18.0,
                escape(&label),
                px = sx(x),
                yb = TOP + ph,
            )
            .unwrap();
        }
        writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label)
        )
        .unwrap();
        writeln!(
            w,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        )
        .unwrap();

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let path: Vec<String> = s
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean)))
                .collect();
            if path.len() > 1 {
                writeln!(
                    w,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                    path.join(" ")
                )
                .unwrap();
            }
            for p in &s.points {
                let (px, lo, hi) = (sx(p.x), sy(p.mean - p.se), sy(p.mean + p.se));
                writeln!(
                    w,
                    r#"<g stroke="{color}"><line x1="{px:.2}" y1="{lo:.2}" x2="{px:.2}" y2="{hi:.2}"/><line x1="{:.2}" y1="{lo:.2}" x2="{:.2}" y2="{lo:.2}"/><line x1="{:.2}" y1="{hi:.2}" x2="{:.2}" y2="{hi:.2}"/></g><circle cx="{px:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    px - 4.0,
                    px + 4.0,
                    px - 4.0,
                    px + 4.0,
                    sy(p.mean)
                )
                .unwrap();
            }
            let ly = TOP + 10.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 15.0;
            writeln!(
                w,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 20.0,
                lx + 26.0,
                ly + 4.0,
                escape(&s.name)
            )
            .unwrap();
        }
        o.push_str("</svg>\n");
        o
    }

    /// `name`, `x`, `mean`, `se`, one row per point, with `x` rendered
    /// through the category labels when present.
    pub fn to_tsv(&self, name_col: &str, x_col: &str) -> String {
        let mut out = format!("{name_col}\t{x_col}\tmean\tse\n");
        for s in &self.series {
            for p in &s.points {
                let x = match &self.x_categories {
                    Some(c) => c.get(p.x as usize).cloned().unwrap_or_default(),
                    None => p.x.to_string(),
                };
                writeln!(out, "{}\t{x}\t{}\t{}", s.name, p.mean, p.se).unwrap();
            }
        }
        out
    }
}

fn distinct<T: PartialEq>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Validation accuracy against budget, one series per method. When the
/// records mix several `k` or `lambda_ot` values, those become part of the
/// series name.
pub fn accuracy_chart(dataset: &str, records: &[&RunRecord]) -> Chart {
    let ks = distinct(records.iter().map(|r| r.k));
    let lambdas = distinct(
        records
            .iter()
            .filter(|r| r.ot == Some(true))
            .filter_map(|r| r.lambda_ot.map(f64::to_bits)),
    );
    let name = |r: &RunRecord| {
        let mut n = r.label();
        if lambdas.len() > 1 {
            if let (Some(l), Some(true)) = (r.lambda_ot, r.ot) {
                write!(n, " lambda_ot={l}").unwrap();
            }
        }
        if ks.len() > 1 {
            write!(n, " k={}", r.k).unwrap();
        }
        n
    };
    let names = distinct(records.iter().map(|r| name(r)));
    let mut budgets = distinct(records.iter().map(|r| r.budget));
    budgets.sort();
    let series = names
        .into_iter()
        .map(|n| {
            let points = budgets
                .iter()
                .filter_map(|&b| {
                    let vals: Vec<f64> = records
                        .iter()
                        .filter(|r| r.budget == b && name(r) == n)
                        .map(|r| r.val_accuracy)
                        .collect();
                    (!vals.is_empty()).then(|| {
                        let (mean, se) = mean_se(&vals);
                        Point {
                            x: b as f64,
                            mean,
                            se,
                        }
                    })
                })
                .collect();
            Series { name: n, points }
        })
        .collect();
    Chart {
        title: format!("Validation accuracy on {dataset}"),
        x_label: "label budget B".into(),
        y_label: "validation accuracy".into(),
        series,
        x_categories: None,
    }
}

/// Validation accuracy of RAMBO against `lambda_ot`, one series per budget,
/// over runs with the OT component on. `lambda_ot` values sit at evenly
/// spaced positions.
pub fn lambda_chart(dataset: &str, records: &[&RunRecord]) -> Option<Chart> {
    let rambo: Vec<&RunRecord> = records
        .iter()
        .copied()
        .filter(|r| r.ot == Some(true))
        .collect();
    let mut lambdas: Vec<f64> = distinct(rambo.iter().filter_map(|r| r.lambda_ot));
    if lambdas.len() < 2 {
        return None;
    }
    lambdas.sort_by(f64::total_cmp);
    let mut budgets = distinct(rambo.iter().map(|r| r.budget));
    budgets.sort();
    let series = budgets
        .iter()
        .map(|&b| {
            let points = lambdas
                .iter()
                .enumerate()
                .filter_map(|(i, &l)| {
                    let vals: Vec<f64> = rambo
                        .iter()
                        .filter(|r| r.budget == b && r.lambda_ot == Some(l))
                        .map(|r| r.val_accuracy)
                        .collect();
                    (!vals.is_empty()).then(|| {
                        let (mean, se) = mean_se(&vals);
                        Point {
                            x: i as f64,
                            mean,
                            se,
                        }
                    })
                })
                .collect();
            Series {
                name: format!("B={b}"),
                points,
            }
        })
        .collect();
    Some(Chart {
        title: format!("Choice of lambda_ot on {dataset}"),
        x_label: "lambda_ot".into(),
        y_label: "validation accuracy".into(),
        series,
        x_categories: Some(lambdas.iter().map(|l| l.to_string()).collect()),
    })
}

/// Writes one accuracy chart per dataset, plus a lambda chart when the
/// records hold a sweep. Returns the written paths.
pub fn emit_plots(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
        Ok(())
    };
    for dataset in distinct(records.iter().map(|r| r.dataset.as_str())) {
        let subset: Vec<&RunRecord> = records.iter().filter(|r| r.dataset == dataset).collect();
        let stem = file_safe(dataset);
        let chart = accuracy_chart(dataset, &subset);
        write(format!("accuracy_{stem}.svg"), chart.to_svg())?;
        write(
            format!("accuracy_{stem}.tsv"),
            chart.to_tsv("method", "budget"),
        )?;
        if let Some(chart) = lambda_chart(dataset, &subset) {
            write(format!("lambda_ot_{stem}.svg"), chart.to_svg())?;
            write(
                format!("lambda_ot_{stem}.tsv"),
                chart.to_tsv("budget", "lambda_ot"),
            )?;
        }
    }
    Ok(written)
}
