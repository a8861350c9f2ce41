//! Tables (CSV and Markdown) and grouped-bar plot data.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{files, write_atomic, Metric, RunConfig};
use crate::error::Result;
use crate::stats::{AggregateCell, CellKey, Comparison};
use crate::taxonomy::TaskCategory;

pub const MISSING: &str = "—";
pub const CATEGORY_COLUMNS: [TaskCategory; 8] = TaskCategory::ALL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// `mean (se)` at two decimals.
pub fn format_cell(cell: Option<&AggregateCell>) -> String {
    match cell {
        Some(c) => format!("{:.2} ({:.2})", c.mean, c.se),
        None => MISSING.to_string(),
    }
}

fn index(cells: &[AggregateCell]) -> HashMap<&CellKey, &AggregateCell> {
    cells.iter().map(|c| (&c.key, c)).collect()
}

fn metrics_present(config: &RunConfig, cells: &[AggregateCell]) -> Vec<&'static str> {
    Metric::ALL
        .iter()
        .map(|m| m.record_name())
        .filter(|name| cells.iter().any(|c| c.key.metric == *name))
        .filter(|name| Metric::ALL.iter().any(|m| m.record_name() == *name && config.enabled(*m)))
        .collect()
}

fn table_rows(config: &RunConfig, cells: &[AggregateCell], metric: &str) -> Result<Vec<Vec<String>>> {
    let idx = index(cells);
    let mut rows = Vec::new();
    for model in &config.models {
        for strategy in config.strategy_specs()? {
            let mut row = vec![model.clone(), strategy.label()];
            for category in CATEGORY_COLUMNS {
                let key = CellKey {
                    model: model.clone(),
                    strategy: strategy.label(),
                    category,
                    metric: metric.to_string(),
                };
                row.push(format_cell(idx.get(&key).copied()));
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

fn header() -> Vec<String> {
    let mut h = vec!["model".to_string(), "strategy".to_string()];
    h.extend(CATEGORY_COLUMNS.iter().map(|c| c.code().to_string()));
    h
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| e.into_error()).map_err(|e| crate::Error::io("csv buffer", e))
}

fn markdown(metric: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = format!("### {metric}\n\n");
    let line = |cells: &[String]| format!("| {} |\n", cells.iter().map(|c| c.replace('|', "\\|")).collect::<Vec<_>>().join(" | "));
    s.push_str(&line(header));
    s.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for r in rows {
        s.push_str(&line(r));
    }
    s.push('\n');
    for c in CATEGORY_COLUMNS {
        let _ = writeln!(s, "- {}: {}", c.code(), c.name());
    }
    s
}

/// One table per metric: rows (model, strategy) in config order, one column
/// per category, cells `mean (se)` or a dash.
pub fn emit_tables(config: &RunConfig, cells: &[AggregateCell], format: TableFormat) -> Result<Vec<PathBuf>> {
    let dir = config.output_dir.join(files::TABLES_DIR);
    let mut written = Vec::new();
    for metric in metrics_present(config, cells) {
        let rows = table_rows(config, cells, metric)?;
        let (path, bytes) = match format {
            TableFormat::Csv => (dir.join(format!("{metric}.csv")), csv_bytes(&header(), &rows)?),
            TableFormat::Markdown => (
                dir.join(format!("{metric}.md")),
                markdown(metric, &header(), &rows).into_bytes(),
            ),
        };
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn fixed(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else if x.is_nan() {
        MISSING.to_string()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Task-anchored versus general comparisons, per category and pooled.
pub fn emit_significance(config: &RunConfig, comparisons: &[Comparison]) -> Result<PathBuf> {
    let header: Vec<String> = [
        "model", "metric", "treatment", "baseline", "category", "n_treatment", "n_baseline",
        "treatment_mean", "baseline_mean", "t", "df", "p", "significant",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = comparisons
        .iter()
        .map(|c| {
            let test = |f: &dyn Fn(&crate::stats::TestResult) -> String| c.test.as_ref().map_or(MISSING.to_string(), f);
            vec![
                c.model.clone(),
                c.metric.clone(),
                c.treatment.clone(),
                c.baseline.clone(),
                c.category.map_or("pooled".to_string(), |x| x.code().to_string()),
                c.n_treatment.to_string(),
                c.n_baseline.to_string(),
                c.treatment_mean.map_or(MISSING.to_string(), fixed),
                c.baseline_mean.map_or(MISSING.to_string(), fixed),
                test(&|t| fixed(t.t)),
                test(&|t| fixed(t.df)),
                test(&|t| fixed(t.p)),
                test(&|t| t.significant.to_string()),
            ]
        })
        .collect();
    let path = config.output_dir.join(files::TABLES_DIR).join("significance.csv");
    write_atomic(&path, &csv_bytes(&header, &rows)?)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub category: TaskCategory,
    pub strategy: String,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// Grouped bars for one model: categories on x, one bar per strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub model: String,
    pub metric: String,
    pub y_min: f64,
    pub y_max: f64,
    pub strategies: Vec<String>,
    pub rows: Vec<PlotRow>,
}

/// Functional-diversity plot data for `model`, bars in config strategy order.
pub fn plot_data(config: &RunConfig, cells: &[AggregateCell], model: &str) -> Result<PlotData> {
    let metric = Metric::Functional.record_name();
    let idx = index(cells);
    let strategies: Vec<String> = config.strategy_specs()?.iter().map(|s| s.label()).collect();
    let mut rows = Vec::new();
    for category in CATEGORY_COLUMNS {
        for strategy in &strategies {
            let key = CellKey {
                model: model.to_string(),
                strategy: strategy.clone(),
                category,
                metric: metric.to_string(),
            };
            if let Some(c) = idx.get(&key) {
                rows.push(PlotRow {
                    category,
                    strategy: strategy.clone(),
                    mean: c.mean,
                    se: c.se,
                    n: c.n,
                });
            }
        }
    }
    Ok(PlotData {
        model: model.to_string(),
        metric: metric.to_string(),
        y_min: 1.0,
        y_max: config.k as f64,
        strategies,
        rows,
    })
}

fn plot_csv(data: &PlotData) -> Result<Vec<u8>> {
    let header: Vec<String> = ["model", "category", "strategy", "mean", "se", "n"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = data
        .rows
        .iter()
        .map(|r| {
            vec![
                data.model.clone(),
                r.category.code().to_string(),
                r.strategy.clone(),
                format!("{:.6}", r.mean),
                format!("{:.6}", r.se),
                r.n.to_string(),
            ]
        })
        .collect();
    csv_bytes(&header, &rows)
}

const PALETTE: [&str; 7] = ["#c6dbef", "#6baed6", "#2171b5", "#fdae6b", "#e6550d", "#a1d99b", "#31a354"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Minimal SVG rendering of [`PlotData`].
pub fn render_svg(data: &PlotData) -> String {
    let categories: Vec<TaskCategory> = CATEGORY_COLUMNS
        .into_iter()
        .filter(|c| data.rows.iter().any(|r| r.category == *c))
        .collect();
    let bar = 10.0;
    let gap = 16.0;
    let group = bar * data.strategies.len() as f64 + gap;
    let (left, top, plot_h) = (50.0, 30.0, 240.0);
    let width = left + group * categories.len().max(1) as f64 + 20.0;
    let legend_y = top + plot_h + 40.0;
    let height = legend_y + 16.0 * data.strategies.len() as f64 + 10.0;
    let span = (data.y_max - data.y_min).max(1e-9);
    let y = |v: f64| top + plot_h * (1.0 - (v.clamp(data.y_min, data.y_max) - data.y_min) / span);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="10" data-y-min="{}" data-y-max="{}">"#,
        data.y_min, data.y_max
    );
    let _ = writeln!(s, r#"<text x="{left}" y="16" font-size="12">{} ({})</text>"#, escape(&data.model), escape(&data.metric));
    let ticks = (data.y_max - data.y_min).round().max(1.0) as usize;
    for i in 0..=ticks {
        let v = data.y_min + span * i as f64 / ticks as f64;
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.0}</text>"##,
            width - 20.0,
            y(v),
            y(v),
            left - 4.0,
            y(v) + 3.0
        );
    }
    for (gi, category) in categories.iter().enumerate() {
        let x0 = left + gap / 2.0 + group * gi as f64;
        for (si, strategy) in data.strategies.iter().enumerate() {
            let Some(r) = data.rows.iter().find(|r| r.category == *category && &r.strategy == strategy) else {
                continue;
            };
            let x = x0 + bar * si as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="{bar:.1}" height="{:.1}" fill="{}"><title>{} {}: {:.2} ({:.2})</title></rect>"#,
                y(r.mean),
                y(data.y_min) - y(r.mean),
                PALETTE[si % PALETTE.len()],
                category.code(),
                escape(strategy),
                r.mean,
                r.se
            );
            let cx = x + bar / 2.0;
            let _ = writeln!(
                s,
                r##"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="#333"/>"##,
                y(r.mean + r.se),
                y(r.mean - r.se)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + bar * data.strategies.len() as f64 / 2.0,
            top + plot_h + 14.0,
            category.code()
        );
    }
    for (si, strategy) in data.strategies.iter().enumerate() {
        let ly = legend_y + 16.0 * si as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            ly - 9.0,
            PALETTE[si % PALETTE.len()],
            left + 14.0,
            ly,
            escape(strategy)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Per model: `<model>_functional.csv` plot data and a rendered SVG.
pub fn emit_plots(config: &RunConfig, cells: &[AggregateCell]) -> Result<Vec<PathBuf>> {
    let dir = config.output_dir.join(files::PLOTS_DIR);
    let mut written = Vec::new();
    if !cells.iter().any(|c| c.key.metric == Metric::Functional.record_name()) {
        return Ok(written);
    }
    for model in &config.models {
        let data = plot_data(config, cells, model)?;
        let stem: String = model
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect();
        let csv_path = dir.join(format!("{stem}_functional.csv"));
        write_atomic(&csv_path, &plot_csv(&data)?)?;
        let svg_path = dir.join(format!("{stem}_functional.svg"));
        write_atomic(&svg_path, render_svg(&data).as_bytes())?;
        written.push(csv_path);
        written.push(svg_path);
    }
    Ok(written)
}
