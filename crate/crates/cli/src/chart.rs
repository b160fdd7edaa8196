//! Self-contained SVG line charts: one series per arm, metric vs round,
//! averaged over repetitions and servers. No plotting dependency — the
//! documents are assembled by hand so chart output is byte-deterministic.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedmint_core::simulation::{ExperimentReport, RoundServerMetrics};

use crate::{report, CliError};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 62.0;
const RIGHT: f64 = 616.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 352.0;

/// Matplotlib's default cycle — familiar, high-contrast colors.
const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

/// Write `rewards.svg`, `accuracy.svg`, and `mse.svg`; returns the paths
/// actually written (a chart with no data, e.g. MSE for a vanilla-only
/// run, is skipped).
pub fn write_charts(dir: &Path, data: &ExperimentReport) -> Result<Vec<PathBuf>, CliError> {
    let charts = [
        (
            "rewards.svg",
            "Mean cohort reward per round",
            series(data, |row| Some(row.mean_reward)),
        ),
        (
            "accuracy.svg",
            "Global accuracy per round",
            series(data, |row| Some(row.global_accuracy)),
        ),
        (
            "mse.svg",
            "Bootstrap cross-validated MSE per round",
            series(data, |row| row.bootstrap_mse),
        ),
    ];
    let mut written = Vec::new();
    for (name, title, lines) in charts {
        if lines.is_empty() {
            continue;
        }
        let path = dir.join(name);
        report::write_file(&path, &render(title, &lines))?;
        written.push(path);
    }
    Ok(written)
}

/// Per-arm `(round, mean)` points in arm declaration order, skipping
/// rounds where the metric is absent.
fn series(
    data: &ExperimentReport,
    metric: impl Fn(&RoundServerMetrics) -> Option<f64>,
) -> Vec<(String, Vec<(u32, f64)>)> {
    let mut sums: BTreeMap<(fedmint_core::Arm, u32), (f64, usize)> = BTreeMap::new();
    for row in data.rows() {
        if let Some(value) = metric(row) {
            let cell = sums.entry((row.arm, row.round)).or_insert((0.0, 0));
            cell.0 += value;
            cell.1 += 1;
        }
    }
    let mut by_arm: BTreeMap<fedmint_core::Arm, Vec<(u32, f64)>> = BTreeMap::new();
    for ((arm, round), (sum, count)) in sums {
        by_arm
            .entry(arm)
            .or_default()
            .push((round, sum / count as f64));
    }
    by_arm
        .into_iter()
        .map(|(arm, points)| (arm.name().to_string(), points))
        .collect()
}

fn render(title: &str, lines: &[(String, Vec<(u32, f64)>)]) -> String {
    let rounds: Vec<u32> = lines
        .iter()
        .flat_map(|(_, points)| points.iter().map(|&(round, _)| round))
        .collect();
    let values: Vec<f64> = lines
        .iter()
        .flat_map(|(_, points)| points.iter().map(|&(_, value)| value))
        .collect();
    let (x_lo, x_hi) = span_u32(&rounds);
    let (y_lo, y_hi) = padded_span(&values);

    let x = |round: u32| -> f64 {
        if x_hi == x_lo {
            (LEFT + RIGHT) / 2.0
        } else {
            LEFT + (round - x_lo) as f64 / (x_hi - x_lo) as f64 * (RIGHT - LEFT)
        }
    };
    let y = |value: f64| -> f64 { BOTTOM - (value - y_lo) / (y_hi - y_lo) * (BOTTOM - TOP) };

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        (LEFT + RIGHT) / 2.0
    );

    // Horizontal gridlines and y tick labels.
    for tick in 0..=4 {
        let value = y_lo + (y_hi - y_lo) * tick as f64 / 4.0;
        let py = y(value);
        let _ = write!(
            svg,
            "<line x1=\"{LEFT}\" y1=\"{py:.1}\" x2=\"{RIGHT}\" y2=\"{py:.1}\" \
             stroke=\"#dddddd\"/>\n\
             <text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            LEFT - 6.0,
            py + 4.0,
            tick_label(value, y_hi - y_lo)
        );
    }

    // X ticks on whole rounds, thinned to at most ~15 labels.
    let step = (((x_hi - x_lo) as usize / 15) + 1) as u32;
    let mut round = x_lo;
    while round <= x_hi {
        let px = x(round);
        let _ = write!(
            svg,
            "<line x1=\"{px:.1}\" y1=\"{BOTTOM}\" x2=\"{px:.1}\" y2=\"{}\" stroke=\"#333333\"/>\n\
             <text x=\"{px:.1}\" y=\"{}\" text-anchor=\"middle\">{round}</text>\n",
            BOTTOM + 5.0,
            BOTTOM + 19.0
        );
        round += step;
    }

    // Axes.
    let _ = write!(
        svg,
        "<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{BOTTOM}\" stroke=\"#333333\"/>\n\
         <line x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\" stroke=\"#333333\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">round</text>\n",
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 38.0
    );

    // Series polylines, point markers, and legend entries.
    for (index, (name, points)) in lines.iter().enumerate() {
        let color = PALETTE[index % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(round, value)| format!("{:.1},{:.1}", x(round), y(value)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
            path.join(" ")
        );
        for &(round, value) in points {
            let _ = writeln!(
                svg,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.4\" fill=\"{color}\"/>",
                x(round),
                y(value)
            );
        }
        let ly = TOP + 6.0 + 16.0 * index as f64;
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{ly:.1}\" x2=\"{}\" y2=\"{ly:.1}\" stroke=\"{color}\" \
             stroke-width=\"1.8\"/>\n\
             <text x=\"{}\" y=\"{:.1}\">{name}</text>\n",
            RIGHT - 180.0,
            RIGHT - 158.0,
            RIGHT - 152.0,
            ly + 4.0
        );
    }

    svg.push_str("</svg>\n");
    svg
}

fn span_u32(values: &[u32]) -> (u32, u32) {
    let lo = values.iter().copied().min().unwrap_or(0);
    let hi = values.iter().copied().max().unwrap_or(1);
    (lo, hi)
}

/// Value range padded 5% each side; a flat series still gets breathing
/// room so its line sits mid-plot.
fn padded_span(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.05).max(hi.abs().max(1.0) * 0.01);
    (lo - pad, hi + pad)
}

/// Tick precision scaled to the axis range.
fn tick_label(value: f64, range: f64) -> String {
    if range < 0.2 {
        format!("{value:.3}")
    } else if range < 20.0 {
        format!("{value:.2}")
    } else {
        format!("{value:.0}")
    }
}
