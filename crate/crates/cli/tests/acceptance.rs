//! Acceptance audit: one test per release criterion, each ending in a
//! single `PASS criterion N` / `FAIL criterion N` line (visible with
//! `cargo test --test acceptance -- --nocapture`). Criteria 5–7 share
//! one 20-repetition experiment at the default configuration.
//!
//! Tolerances and thresholds are pinned here on purpose; loosening them
//! is a release decision, not a test fix.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use fedmint_core::bootstrap::stats::{self, Attribute};
use fedmint_core::bootstrap::tree::{build_tree, TreeNode, TreeParams};
use fedmint_core::bootstrap::update_calls;
use fedmint_core::domain::InteractionRecord;
use fedmint_core::economics::{accuracy_gap_std, total_reward};
use fedmint_core::matching::{brute_force_stable, run_matching, Matching, MatchingProblem};
use fedmint_core::simulation::{run_experiment, RepetitionReport};
use fedmint_core::{AccuracyFraction, Arm, DeviceId, ExperimentConfig, ExperimentReport, ServerId};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Print the verdict line and fail the test on a miss.
fn check(criterion: u32, label: &str, pass: bool, details: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("{verdict} criterion {criterion}: {label} ({details})");
    assert!(pass, "criterion {criterion} failed: {label} ({details})");
}

fn acc(value: f64) -> AccuracyFraction {
    AccuracyFraction::new(value).unwrap()
}

/// The worked-example interaction dataset (14 records).
fn reference_records() -> Vec<InteractionRecord> {
    [
        ("P4", "Asia", "Watch", 73.69),
        ("P1", "Asia", "Phone", 65.05),
        ("P4", "America", "Security", 67.62),
        ("P3", "America", "Lock", 58.54),
        ("P1", "America", "Phone", 53.85),
        ("P2", "Africa", "Lock", 56.37),
        ("P1", "Europe", "Watch", 53.85),
        ("P4", "America", "Security", 82.42),
        ("P3", "Asia", "Phone", 95.92),
        ("P1", "Europe", "Watch", 55.56),
        ("P1", "America", "Security", 56.80),
        ("P2", "Africa", "Watch", 52.88),
        ("P4", "Asia", "Watch", 90.00),
        ("P3", "Asia", "Security", 55.00),
    ]
    .into_iter()
    .map(|(provider, region, device_type, accuracy)| {
        InteractionRecord::new(provider, region, device_type, accuracy).unwrap()
    })
    .collect()
}

struct SharedRun {
    config: ExperimentConfig,
    report: ExperimentReport,
    runtime: Duration,
}

/// The 20-repetition default-configuration experiment criteria 5–7 read.
fn shared_run() -> &'static SharedRun {
    static RUN: OnceLock<SharedRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let config = ExperimentConfig {
            repetitions: 20,
            ..ExperimentConfig::default()
        };
        let started = Instant::now();
        let report = run_experiment(&config).expect("default experiment runs");
        SharedRun {
            config,
            report,
            runtime: started.elapsed(),
        }
    })
}

fn rep_rows(rep: &RepetitionReport, arm: Arm) -> impl Iterator<Item = &fedmint_core::simulation::RoundServerMetrics> {
    rep.rows.iter().filter(move |row| row.arm == arm)
}

fn rep_mean_reward(rep: &RepetitionReport, arm: Arm) -> f64 {
    let rows: Vec<f64> = rep_rows(rep, arm).map(|row| row.mean_reward).collect();
    rows.iter().sum::<f64>() / rows.len() as f64
}

#[test]
fn criterion_1_bootstrap_tree_reproduces_the_worked_example() {
    let records = reference_records();
    let started = Instant::now();

    let values: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let mut misses: Vec<String> = Vec::new();
    let mut expect = |label: &str, actual: f64, target: f64, tolerance: f64| {
        if (actual - target).abs() > tolerance {
            misses.push(format!("{label}: {actual:.4} not within {tolerance} of {target}"));
        }
    };

    expect("mean", stats::sample_mean(&values).unwrap(), 65.53, 0.02);
    let sd = stats::population_sd(&values).unwrap();
    expect("sd", sd, 13.96, 0.01);
    expect(
        "cv",
        stats::coefficient_of_variation(&values).unwrap(),
        21.31,
        0.05,
    );
    expect(
        "sd(provider)",
        stats::sd_after_split(&records, Attribute::Provider).unwrap(),
        8.13,
        0.02,
    );
    expect(
        "sdr(provider)",
        stats::sdr(&records, Attribute::Provider).unwrap(),
        5.83,
        0.03,
    );
    expect(
        "sdr(region)",
        stats::sdr(&records, Attribute::Region).unwrap(),
        4.45,
        0.03,
    );
    expect(
        "sdr(device_type)",
        stats::sdr(&records, Attribute::DeviceType).unwrap(),
        1.67,
        0.03,
    );

    let tree = build_tree(
        &records,
        TreeParams {
            min_instances: 3,
            cv_threshold: 10.0,
        },
    )
    .unwrap();
    let root_ok = matches!(
        tree,
        TreeNode::Split {
            attribute: Attribute::Provider,
            ..
        }
    );
    if !root_ok {
        misses.push("tree does not root on provider".to_string());
    }

    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(1) {
        misses.push(format!("took {elapsed:.2?}, bound 1s"));
    }
    check(
        1,
        "worked-example statistics, reductions, and root split",
        misses.is_empty(),
        if misses.is_empty() {
            format!("n=14, 7 golden values within tolerance, root=provider, {elapsed:.2?}")
        } else {
            misses.join("; ")
        },
    );
}

/// Random instance within the enumeration bound: up to 8 devices and 3
/// servers, independent 80%-dense shuffled preference lists, capacities
/// 0–3.
fn random_instance(rng: &mut ChaCha8Rng) -> MatchingProblem {
    let n_devices = rng.gen_range(1..=8);
    let n_servers = rng.gen_range(1..=3);
    let device_ids: Vec<DeviceId> = (0..n_devices)
        .map(|i| DeviceId::from(format!("d{i}").as_str()))
        .collect();
    let server_ids: Vec<ServerId> = (0..n_servers)
        .map(|i| ServerId::from(format!("s{i}").as_str()))
        .collect();
    let mut problem = MatchingProblem::default();
    for device in &device_ids {
        let mut listed: Vec<ServerId> = server_ids
            .iter()
            .filter(|_| rng.gen_bool(0.8))
            .cloned()
            .collect();
        listed.shuffle(rng);
        problem.device_prefs.insert(device.clone(), listed);
    }
    for server in &server_ids {
        let mut listed: Vec<DeviceId> = device_ids
            .iter()
            .filter(|_| rng.gen_bool(0.8))
            .cloned()
            .collect();
        listed.shuffle(rng);
        problem.server_prefs.insert(server.clone(), listed);
        problem.capacities.insert(server.clone(), rng.gen_range(0..=3));
    }
    problem
}

/// A device's rank of its assignment, lower is better; unmatched sits
/// below every listed server.
fn assignment_rank(problem: &MatchingProblem, matching: &Matching, device: &DeviceId) -> usize {
    match matching.server_of(device) {
        Some(server) => problem.device_prefs[device]
            .iter()
            .position(|s| s == server)
            .expect("assigned server is ranked"),
        None => usize::MAX,
    }
}

#[test]
fn criterion_2_engine_is_stable_and_device_optimal_on_1000_instances() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE97);
    let mut failure = None;
    for index in 0..1000 {
        let problem = random_instance(&mut rng);
        let engine = run_matching(&problem).unwrap();
        let stable_set = brute_force_stable(&problem).unwrap();
        if !stable_set.contains(&engine) {
            failure = Some(format!("instance {index}: output not in the stable set"));
            break;
        }
        let optimal = stable_set.iter().all(|other| {
            problem.device_prefs.keys().all(|device| {
                assignment_rank(&problem, &engine, device)
                    <= assignment_rank(&problem, other, device)
            })
        });
        if !optimal {
            failure = Some(format!("instance {index}: a device does better elsewhere"));
            break;
        }
    }
    let elapsed = started.elapsed();
    if failure.is_none() && elapsed >= Duration::from_secs(30) {
        failure = Some(format!("took {elapsed:.2?}, bound 30s"));
    }
    check(
        2,
        "1000 random instances: stable-set membership and device optimality",
        failure.is_none(),
        failure.unwrap_or(format!("1000/1000 in {elapsed:.2?}")),
    );
}

#[test]
fn criterion_3_reward_arithmetic_properties_and_examples() {
    use proptest::prelude::*;
    use proptest::test_runner::{Config as PropConfig, TestRunner};

    let mut runner = TestRunner::new(PropConfig {
        cases: 50,
        ..PropConfig::default()
    });
    let properties = runner.run(
        &(
            0.0f64..10.0,
            0.0f64..10.0,
            0.0f64..5.0,
            0.0f64..=1.0,
            0.0f64..=1.0,
        ),
        |(op, tr, bump, device, global)| {
            let reward = total_reward(op, tr, acc(device), acc(global)).unwrap();
            prop_assert!(reward.penalty_factor >= 0.5 && reward.penalty_factor <= 1.0);
            // More promised earnings never pay less.
            let more_op = total_reward(op + bump, tr, acc(device), acc(global)).unwrap();
            let more_tr = total_reward(op, tr + bump, acc(device), acc(global)).unwrap();
            prop_assert!(more_op.total >= reward.total);
            prop_assert!(more_tr.total >= reward.total);
            // A wider accuracy gap never pays more.
            let aligned = total_reward(op, tr, acc(global), acc(global)).unwrap();
            prop_assert!(aligned.total >= reward.total - 1e-12);
            prop_assert!(
                (reward.total - (op + tr) * (1.0 - accuracy_gap_std(acc(device), acc(global))))
                    .abs()
                    < 1e-12
            );
            Ok(())
        },
    );

    let mut misses: Vec<String> = Vec::new();
    if let Err(err) = properties {
        misses.push(format!("property sweep failed: {err}"));
    }
    for (label, actual, expected) in [
        (
            "earnings 1.6+0.56 at gap 0.1",
            total_reward(1.6, 0.56, acc(0.7), acc(0.8)).unwrap().total,
            2.052,
        ),
        (
            "zero earnings",
            total_reward(0.0, 0.0, acc(0.2), acc(0.9)).unwrap().total,
            0.0,
        ),
        (
            "no gap",
            total_reward(1.0, 1.0, acc(0.9), acc(0.9)).unwrap().total,
            2.0,
        ),
    ] {
        if (actual - expected).abs() > 1e-9 {
            misses.push(format!("{label}: {actual} != {expected}"));
        }
    }
    check(
        3,
        "50 reward property cases and three pinned examples at 1e-9",
        misses.is_empty(),
        if misses.is_empty() {
            "monotone, penalty in [0.5,1], examples 2.052/0/2.0".to_string()
        } else {
            misses.join("; ")
        },
    );
}

#[test]
fn criterion_4_motivation_function_examples_and_monotonicity() {
    let mut misses: Vec<String> = Vec::new();
    for (calls_prev, ccont, dr, expected) in
        [(0, 0, 0.0, 1), (5, 3, 0.5, 10), (2, 4, 1.0, 11)]
    {
        let actual = update_calls(calls_prev, ccont, dr);
        if actual != expected {
            misses.push(format!(
                "update_calls({calls_prev}, {ccont}, {dr}) = {actual}, want {expected}"
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let calls_prev = rng.gen_range(0..10_000u64);
        let step = rng.gen_range(1..100u64);
        let ccont = rng.gen_range(0..1_000u64);
        let dr = rng.gen_range(0.0..=1.0);
        if update_calls(calls_prev + step, ccont, dr) <= update_calls(calls_prev, ccont, dr) {
            misses.push(format!(
                "not strictly increasing at calls_prev={calls_prev}, step={step}, ccont={ccont}, dr={dr}"
            ));
            break;
        }
    }
    check(
        4,
        "budget growth rule: pinned examples and strict growth in prior calls",
        misses.is_empty(),
        if misses.is_empty() {
            "examples 1/10/11, 200 random increments strictly increase".to_string()
        } else {
            misses.join("; ")
        },
    );
}

#[test]
fn criterion_5_matching_dominates_random_selection() {
    let run = shared_run();
    let reps = run.report.repetitions.len();

    let reward_wins = run
        .report
        .repetitions
        .iter()
        .filter(|rep| rep_mean_reward(rep, Arm::Fedmint) >= rep_mean_reward(rep, Arm::Vanilla))
        .count();

    let mut cells = 0usize;
    let mut accuracy_wins = 0usize;
    for rep in &run.report.repetitions {
        let vanilla: BTreeMap<(u32, &ServerId), f64> = rep_rows(rep, Arm::Vanilla)
            .map(|row| ((row.round, &row.server_id), row.global_accuracy))
            .collect();
        for row in rep_rows(rep, Arm::Fedmint).filter(|row| row.round >= 3) {
            cells += 1;
            if row.global_accuracy >= vanilla[&(row.round, &row.server_id)] {
                accuracy_wins += 1;
            }
        }
    }

    let reward_ok = reward_wins * 10 >= reps * 9;
    let cells_ok = accuracy_wins * 10 >= cells * 9;
    let time_ok = run.runtime < Duration::from_secs(120);
    check(
        5,
        "reward and accuracy dominance over uniform selection (20 reps)",
        reward_ok && cells_ok && time_ok,
        format!(
            "reward wins {reward_wins}/{reps} (need 18), accuracy cells {accuracy_wins}/{cells} \
             (need 90%), runtime {:.2?} (bound 120s)",
            run.runtime
        ),
    );
}

#[test]
fn criterion_6_bootstrap_beats_random_newcomer_scores_early() {
    let run = shared_run();
    let reps = run.report.repetitions.len();
    let early_mean = |rep: &RepetitionReport, arm: Arm| -> f64 {
        let rows: Vec<f64> = rep_rows(rep, arm)
            .filter(|row| row.round <= 5)
            .map(|row| row.global_accuracy)
            .collect();
        rows.iter().sum::<f64>() / rows.len() as f64
    };
    let wins = run
        .report
        .repetitions
        .iter()
        .filter(|rep| {
            early_mean(rep, Arm::Fedmint) >= early_mean(rep, Arm::FedmintRandomBootstrap)
        })
        .count();
    check(
        6,
        "rounds 1-5 accuracy: tree-scored newcomers vs uniform guesses",
        wins * 10 >= reps * 8,
        format!("{wins}/{reps} repetitions (need 16)"),
    );
}

#[test]
fn criterion_7_bootstrap_model_error_is_low_and_falls() {
    let run = shared_run();
    let rounds = run.config.rounds;
    let mse_at = |rep: &RepetitionReport, round: u32| -> f64 {
        rep_rows(rep, Arm::Fedmint)
            .find(|row| row.round == round)
            .and_then(|row| row.bootstrap_mse)
            .expect("pooled data covers a k-fold split from round 1")
    };

    let round5: Vec<f64> = run
        .report
        .repetitions
        .iter()
        .map(|rep| mse_at(rep, 5))
        .collect();
    let mean5 = round5.iter().sum::<f64>() / round5.len() as f64;

    let reps = run.report.repetitions.len();
    let falls = run
        .report
        .repetitions
        .iter()
        .filter(|rep| mse_at(rep, rounds) <= mse_at(rep, 1))
        .count();

    let mean_ok = mean5 <= 0.02;
    let falls_ok = falls * 10 >= reps * 7;
    check(
        7,
        "pooled 10-fold MSE: small by round 5 and shrinking by round 15",
        mean_ok && falls_ok,
        format!("round-5 mean {mean5:.5} (bound 0.02), improves in {falls}/{reps} (need 14)"),
    );
}

#[test]
fn criterion_8_seeded_runs_export_identical_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    for out in [&first, &second] {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_fedmint"))
            .args(["run", "--seed", "7", "--out", out.to_str().unwrap()])
            .output()
            .expect("binary runs");
        assert!(
            status.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&status.stderr)
        );
    }
    let bytes_a = std::fs::read(first.join("rounds.csv")).unwrap();
    let bytes_b = std::fs::read(second.join("rounds.csv")).unwrap();
    check(
        8,
        "two `fedmint run --seed 7` invocations",
        bytes_a == bytes_b,
        format!("rounds.csv identical, {} bytes", bytes_a.len()),
    );
}

#[test]
fn criterion_9_capacity_and_uniqueness_hold_in_every_recorded_round() {
    let run = shared_run();
    let capacity = run.config.clients_per_server;
    let mut cells = 0usize;
    let mut failure = None;

    'outer: for rep in &run.report.repetitions {
        let mut seen: BTreeMap<(u32, Arm), BTreeMap<&DeviceId, &ServerId>> = BTreeMap::new();
        for row in &rep.rows {
            cells += 1;
            if row.cohort.len() != row.cohort_size || row.cohort_size > capacity {
                failure = Some(format!(
                    "rep {} round {} {} {}: cohort {} exceeds capacity {capacity}",
                    rep.rep, row.round, row.arm, row.server_id, row.cohort_size
                ));
                break 'outer;
            }
            let round_arm = seen.entry((row.round, row.arm)).or_default();
            for device in &row.cohort {
                if let Some(previous) = round_arm.insert(device, &row.server_id) {
                    failure = Some(format!(
                        "rep {} round {} {}: device {device} matched to {previous} and {}",
                        rep.rep, row.round, row.arm, row.server_id
                    ));
                    break 'outer;
                }
            }
        }
    }
    check(
        9,
        "no double assignment, no over-capacity cohort in any recorded round",
        failure.is_none(),
        failure.unwrap_or(format!("{cells} round-server records audited")),
    );
}
