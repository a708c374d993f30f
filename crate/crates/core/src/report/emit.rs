//! Deterministic text renderings of an [`AnalysisReport`].
//!
//! Percentages carry 2 decimals and correlations 4. Values are rounded once
//! to integer hundredths (or ten-thousandths) and every derived column is
//! computed from the rounded integers, so re-parsing an emitted table and
//! recomputing a gap or strength band gives back the emitted value.

use std::fmt::Write as _;

use super::{AnalysisReport, CellReport, ReportError, SubsetScore};
use crate::metrics::{classify_strength, Strength};
use crate::prompts::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Markdown => "md",
        }
    }
}

/// Four-way subset columns, left to right.
pub const HEATMAP_COLUMNS: [&str; 4] = [
    "D_J+^Correct_A",
    "D_J+^Incorrect_A",
    "D_J-^Correct_A",
    "D_J-^Incorrect_A",
];

fn hundredths(fraction: f64) -> i64 {
    (fraction * 10_000.0).round() as i64
}

fn ten_thousandths(value: f64) -> i64 {
    (value * 10_000.0).round() as i64
}

fn fixed(units: i64, decimals: u32) -> String {
    let scale = 10i64.pow(decimals);
    let sign = if units < 0 { "-" } else { "" };
    let a = units.abs();
    format!("{sign}{}.{:0width$}", a / scale, a % scale, width = decimals as usize)
}

/// Fraction rendered as a percentage with 2 decimals.
fn pct(fraction: f64) -> String {
    fixed(hundredths(fraction), 2)
}

fn corr(value: f64) -> String {
    fixed(ten_thousandths(value), 4)
}

fn strength_name(s: Strength) -> &'static str {
    match s {
        Strength::Weak => "Weak",
        Strength::Moderate => "Moderate",
        Strength::Strong => "Strong",
    }
}

fn cell<'a>(report: &'a AnalysisReport, judge: &str, task: &str, strategy: Strategy) -> Result<&'a CellReport, ReportError> {
    report
        .cell(judge, task, strategy)
        .ok_or_else(|| ReportError::IncompleteReport(format!("judge `{judge}`, task `{task}`, strategy {}", strategy.slug())))
}

fn render(format: TableFormat, header: &[String], rows: &[Vec<String>]) -> Vec<u8> {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header).expect("in-memory write");
            for r in rows {
                w.write_record(r).expect("in-memory write");
            }
            w.into_inner().expect("in-memory flush")
        }
        TableFormat::Markdown => {
            let esc = |s: &String| s.replace('|', "\\|");
            let mut out = String::new();
            let line = |cells: Vec<String>| format!("| {} |\n", cells.join(" | "));
            out += &line(header.iter().map(esc).collect());
            out += &line(
                header
                    .iter()
                    .enumerate()
                    .map(|(i, _)| if i == 0 { "---".into() } else { "---:".into() })
                    .collect(),
            );
            for r in rows {
                out += &line(r.iter().map(esc).collect());
            }
            out.into_bytes()
        }
    }
}

/// D_J+ F1 (✓), D_J- F1 (✗) and their gap Δ per task, one row per judge.
///
/// A subset without scorable judgments shows F1 0.00, the zero-denominator
/// convention of the metrics.
pub fn emit_judge_table(report: &AnalysisReport, strategy: Strategy, format: TableFormat) -> Result<Vec<u8>, ReportError> {
    let tasks = report.tasks_for(strategy);
    let mut header = vec!["Judge model".to_string()];
    for t in &tasks {
        header.extend([format!("{t} ✓"), format!("{t} ✗"), format!("{t} Δ")]);
    }
    let mut rows = Vec::new();
    for judge in report.judges_for(strategy) {
        let mut row = vec![judge.to_string()];
        for t in &tasks {
            let c = cell(report, judge, t, strategy)?;
            let plus = hundredths(c.two_way.judge_correct.f1);
            let minus = hundredths(c.two_way.judge_incorrect.f1);
            row.extend([fixed(plus, 2), fixed(minus, 2), fixed(plus - minus, 2)]);
        }
        rows.push(row);
    }
    Ok(render(format, &header, &rows))
}

fn heatmap(
    report: &AnalysisReport,
    task: &str,
    strategy: Strategy,
    format: TableFormat,
    value: impl Fn(&SubsetScore) -> Option<f64>,
) -> Result<Vec<u8>, ReportError> {
    let mut header = vec!["judge".to_string()];
    header.extend(HEATMAP_COLUMNS.iter().map(|s| s.to_string()));
    let mut rows = Vec::new();
    for judge in report.judges_for(strategy) {
        let c = cell(report, judge, task, strategy)?;
        let mut row = vec![judge.to_string()];
        for s in c.four_way.subsets() {
            row.push(match value(s) {
                Some(v) if !s.is_empty() => pct(v),
                _ => "NA".into(),
            });
        }
        rows.push(row);
    }
    Ok(render(format, &header, &rows))
}

/// Four-way subset F1 per judge; subsets without scorable judgments are "NA".
pub fn emit_heatmap_matrix(
    report: &AnalysisReport,
    task: &str,
    strategy: Strategy,
    format: TableFormat,
) -> Result<Vec<u8>, ReportError> {
    heatmap(report, task, strategy, format, |s| Some(s.f1))
}

/// Four-way subset judgment accuracy (share of verdicts matching the label).
///
/// Every label in an `Incorrect_A` subset is negative, so binary F1 with
/// `Correct` as the positive class is 0 there by construction; accuracy
/// stays informative.
pub fn emit_heatmap_accuracy_matrix(
    report: &AnalysisReport,
    task: &str,
    strategy: Strategy,
    format: TableFormat,
) -> Result<Vec<u8>, ReportError> {
    heatmap(report, task, strategy, format, |s| s.accuracy)
}

/// Overconfidence in percent per task plus the sample-weighted mean.
pub fn emit_overconfidence_table(
    report: &AnalysisReport,
    strategy: Strategy,
    format: TableFormat,
) -> Result<Vec<u8>, ReportError> {
    let tasks = report.tasks_for(strategy);
    let mut header = vec!["Judge model".to_string()];
    header.extend(tasks.iter().map(|t| t.to_string()));
    header.push("Weighted mean".into());
    let na = || "NA".to_string();
    let mut rows = Vec::new();
    for judge in report.judges_for(strategy) {
        let mut row = vec![judge.to_string()];
        for t in &tasks {
            row.push(cell(report, judge, t, strategy)?.overconfidence.map(pct).unwrap_or_else(na));
        }
        let mean = report
            .overconfidence_weighted
            .iter()
            .find(|w| w.judge == judge && w.strategy == strategy)
            .and_then(|w| w.value);
        row.push(mean.map(pct).unwrap_or_else(na));
        rows.push(row);
    }
    Ok(render(format, &header, &rows))
}

/// Partial correlation r(G,J|A) with its strength band per task.
pub fn emit_correlation_table(
    report: &AnalysisReport,
    strategy: Strategy,
    format: TableFormat,
) -> Result<Vec<u8>, ReportError> {
    let tasks = report.tasks_for(strategy);
    let mut header = vec!["Judge model".to_string()];
    for t in &tasks {
        header.extend([format!("{t} r"), format!("{t} strength"), format!("{t} degenerate")]);
    }
    let mut rows = Vec::new();
    for judge in report.judges_for(strategy) {
        let mut row = vec![judge.to_string()];
        for t in &tasks {
            match cell(report, judge, t, strategy)?.partial_correlation {
                Some(p) => {
                    let units = ten_thousandths(p.value);
                    let band = classify_strength(units as f64 / 10_000.0)?;
                    row.extend([fixed(units, 4), strength_name(band).into(), p.degenerate.to_string()]);
                }
                None => row.extend(["NA".into(), "NA".into(), "NA".into()]),
            }
        }
        rows.push(row);
    }
    Ok(render(format, &header, &rows))
}

/// One row per cell with the full metric set.
pub fn emit_metrics_table(report: &AnalysisReport, format: TableFormat) -> Result<Vec<u8>, ReportError> {
    let header: Vec<String> = [
        "judge",
        "task",
        "strategy",
        "generation_accuracy",
        "precision",
        "recall",
        "f1",
        "tp",
        "fp",
        "fn",
        "tn",
        "invalid",
        "failures",
        "r_gj",
        "r_ga",
        "r_ja",
        "r_gj_given_a",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    for c in &report.cells {
        let k = c.judgment.counts;
        let r = |v: Option<f64>| v.map(corr).unwrap_or_else(|| "NA".into());
        rows.push(vec![
            c.judge.clone(),
            c.task.clone(),
            c.strategy.slug().to_string(),
            pct(c.generation_accuracy),
            pct(c.judgment.precision),
            pct(c.judgment.recall),
            pct(c.judgment.f1),
            k.tp.to_string(),
            k.fp.to_string(),
            k.fn_.to_string(),
            k.tn.to_string(),
            c.invalid.to_string(),
            c.failures.to_string(),
            r(c.pearson.map(|p| p.gj.value)),
            r(c.pearson.map(|p| p.ga.value)),
            r(c.pearson.map(|p| p.ja.value)),
            r(c.partial_correlation.map(|p| p.value)),
        ]);
    }
    Ok(render(format, &header, &rows))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scatter {
    pub csv: Vec<u8>,
    pub svg: Vec<u8>,
}

const PLOT_ORIGIN: (f64, f64) = (50.0, 350.0);
const PLOT_SIZE: f64 = 300.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Generation accuracy against overall judgment F1, one point per judge.
pub fn emit_scatter(report: &AnalysisReport, task: &str, strategy: Strategy) -> Result<Scatter, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["judge", "generation_accuracy", "judgment_f1"])
        .expect("in-memory write");
    let mut points = Vec::new();
    for judge in report.judges_for(strategy) {
        let c = cell(report, judge, task, strategy)?;
        w.write_record([
            judge.to_string(),
            c.generation_accuracy.to_string(),
            c.judgment.f1.to_string(),
        ])
        .expect("in-memory write");
        points.push((judge, c.generation_accuracy, c.judgment.f1));
    }
    let csv = w.into_inner().expect("in-memory flush");

    let (x0, y0) = PLOT_ORIGIN;
    let (x1, y1) = (x0 + PLOT_SIZE, y0 - PLOT_SIZE);
    let mut svg = String::new();
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\" viewBox=\"0 0 400 400\">\n";
    let _ = writeln!(svg, "<title>{} ({})</title>", xml_escape(task), strategy.slug());
    let _ = writeln!(svg, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>");
    let _ = writeln!(svg, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>");
    let _ = writeln!(svg, "<text x=\"{}\" y=\"385\" text-anchor=\"middle\">generation accuracy</text>", x0 + PLOT_SIZE / 2.0);
    let _ = writeln!(
        svg,
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">judgment F1</text>",
        y0 - PLOT_SIZE / 2.0,
        y0 - PLOT_SIZE / 2.0
    );
    let _ = writeln!(svg, "<text x=\"{x0}\" y=\"367\" text-anchor=\"middle\">0</text>");
    let _ = writeln!(svg, "<text x=\"{x1}\" y=\"367\" text-anchor=\"middle\">1</text>");
    let _ = writeln!(svg, "<text x=\"40\" y=\"{y1}\" text-anchor=\"end\">1</text>");
    svg += "<g>\n";
    for (judge, acc, f1) in points {
        let (cx, cy) = (x0 + acc * PLOT_SIZE, y0 - f1 * PLOT_SIZE);
        let _ = writeln!(svg, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"4\"/>");
        let _ = writeln!(svg, "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>", cx + 6.0, cy - 6.0, xml_escape(judge));
    }
    svg += "</g>\n</svg>\n";
    Ok(Scatter {
        csv,
        svg: svg.into_bytes(),
    })
}
