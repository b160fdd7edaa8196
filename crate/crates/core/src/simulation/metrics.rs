//! Per-round metric records and experiment-level summaries.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::domain::{DeviceId, ServerId};

use super::config::Arm;

/// One (repetition, round, arm, server) observation — the grain of the
/// exported metrics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundServerMetrics {
    pub rep: u32,
    pub round: u32,
    pub arm: Arm,
    pub server_id: ServerId,
    /// Test-size-weighted accuracy of the round's cohort; carried over
    /// from the previous round when the cohort is empty.
    pub global_accuracy: f64,
    /// Mean total reward over the cohort (0 for an empty cohort).
    pub mean_reward: f64,
    pub cohort_size: usize,
    pub cohort: Vec<DeviceId>,
    /// Paid bootstrap inquiries the server issued this round.
    pub bootstrap_inquiries: u32,
    /// Newcomers this server had to score with the default prior.
    pub bootstrap_refusals: u32,
    /// Cross-validated MSE of the tree on the arm's pooled interaction
    /// data (fraction² units); absent while the pool is too small.
    pub bootstrap_mse: Option<f64>,
}

/// Everything one repetition produced, rows ordered by round, then arm
/// (in configured order), then server id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionReport {
    pub rep: u32,
    pub rows: Vec<RoundServerMetrics>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSummary {
    /// Mean of `mean_reward` over every (rep, round, server) row.
    pub mean_reward: f64,
    /// Mean final-round global accuracy over (rep, server) pairs.
    pub mean_final_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub repetitions: Vec<RepetitionReport>,
    /// Keyed by arm name.
    pub summary: BTreeMap<String, ArmSummary>,
}

impl ExperimentReport {
    pub fn new(repetitions: Vec<RepetitionReport>, rounds: u32) -> Self {
        let summary = summarize(&repetitions, rounds);
        ExperimentReport {
            repetitions,
            summary,
        }
    }

    /// All rows across repetitions, in export order.
    pub fn rows(&self) -> impl Iterator<Item = &RoundServerMetrics> {
        self.repetitions.iter().flat_map(|rep| rep.rows.iter())
    }
}

fn summarize(
    repetitions: &[RepetitionReport],
    rounds: u32,
) -> BTreeMap<String, ArmSummary> {
    struct Tally {
        reward_sum: f64,
        reward_count: usize,
        final_acc_sum: f64,
        final_acc_count: usize,
    }
    let mut tallies: BTreeMap<Arm, Tally> = BTreeMap::new();
    for row in repetitions.iter().flat_map(|rep| rep.rows.iter()) {
        let tally = tallies.entry(row.arm).or_insert(Tally {
            reward_sum: 0.0,
            reward_count: 0,
            final_acc_sum: 0.0,
            final_acc_count: 0,
        });
        tally.reward_sum += row.mean_reward;
        tally.reward_count += 1;
        if row.round == rounds {
            tally.final_acc_sum += row.global_accuracy;
            tally.final_acc_count += 1;
        }
    }
    tallies
        .into_iter()
        .map(|(arm, tally)| {
            (
                arm.name().to_string(),
                ArmSummary {
                    mean_reward: tally.reward_sum / tally.reward_count.max(1) as f64,
                    mean_final_accuracy: tally.final_acc_sum / tally.final_acc_count.max(1) as f64,
                },
            )
        })
        .collect()
}
