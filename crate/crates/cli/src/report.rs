//! Metric export: the per-round CSV table and the experiment summary.

use std::fs;
use std::path::Path;

use fedmint_core::simulation::{ExperimentConfig, ExperimentReport};
use serde::Serialize;

use crate::CliError;

/// Pinned schema of `rounds.csv`; one data row per
/// (repetition, round, arm, server).
pub const ROUNDS_CSV_HEADER: &str =
    "rep,round,arm,server_id,global_accuracy,mean_reward,cohort_size,bootstrap_inquiries,bootstrap_mse";

/// Render the full CSV, floats fixed to six decimals so identical runs
/// serialize byte-identically. An absent MSE is an empty field.
pub fn rounds_csv(report: &ExperimentReport) -> String {
    let mut out = String::with_capacity(64 * (report.rows().count() + 1));
    out.push_str(ROUNDS_CSV_HEADER);
    out.push('\n');
    for row in report.rows() {
        let mse = match row.bootstrap_mse {
            Some(value) => format!("{value:.6}"),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{},{},{}\n",
            row.rep,
            row.round,
            row.arm,
            row.server_id,
            row.global_accuracy,
            row.mean_reward,
            row.cohort_size,
            row.bootstrap_inquiries,
            mse,
        ));
    }
    out
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    /// Per-arm aggregates keyed by arm name.
    arms: &'a std::collections::BTreeMap<String, fedmint_core::simulation::ArmSummary>,
    rows: usize,
    repetitions: Vec<RepetitionDigest>,
}

#[derive(Serialize)]
struct RepetitionDigest {
    rep: u32,
    rows: usize,
    warnings: usize,
}

/// Render `summary.json`: the resolved configuration, per-arm means,
/// and per-repetition row/warning counts.
pub fn summary_json(
    config: &ExperimentConfig,
    report: &ExperimentReport,
) -> Result<String, CliError> {
    let summary = Summary {
        config,
        arms: &report.summary,
        rows: report.rows().count(),
        repetitions: report
            .repetitions
            .iter()
            .map(|rep| RepetitionDigest {
                rep: rep.rep,
                rows: rep.rows.len(),
                warnings: rep.warnings.len(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).map_err(CliError::runtime)?;
    text.push('\n');
    Ok(text)
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|err| CliError::Runtime(format!("write {}: {err}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedmint_core::simulation::run_experiment_sequential;

    fn tiny_report() -> (ExperimentConfig, ExperimentReport) {
        let config = ExperimentConfig {
            rounds: 2,
            repetitions: 1,
            initial_devices: 30,
            arrivals_per_round: 4,
            ..ExperimentConfig::default()
        };
        let report = run_experiment_sequential(&config).unwrap();
        (config, report)
    }

    #[test]
    fn csv_has_pinned_header_and_full_grid() {
        let (config, report) = tiny_report();
        let text = rounds_csv(&report);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(ROUNDS_CSV_HEADER));
        let data_rows = lines.count();
        let expected = (config.rounds as usize) * config.arms.len() * config.servers as usize;
        assert_eq!(data_rows, expected);
        // Every row has exactly the header's column count, even when the
        // trailing MSE field is empty.
        for line in text.lines().skip(1) {
            assert_eq!(line.split(',').count(), ROUNDS_CSV_HEADER.split(',').count());
        }
    }

    #[test]
    fn summary_reports_each_arm_and_rep() {
        let (config, report) = tiny_report();
        let text = summary_json(&config, &report).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["config"]["rounds"], 2);
        assert_eq!(value["rows"], 12);
        assert!(value["arms"]["fedmint"]["mean_reward"].is_f64());
        assert!(value["arms"]["vanilla"]["mean_final_accuracy"].is_f64());
        assert_eq!(value["repetitions"][0]["rows"], 12);
    }
}
