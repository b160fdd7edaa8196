//! `fedmint run`: execute the configured experiment and export
//! `rounds.csv`, `summary.json`, and charts into the output directory.

use std::fs;
use std::time::Instant;

use fedmint_core::simulation::{run_experiment, run_experiment_sequential};

use crate::{chart, config, report, CliError, RunArgs};

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let resolved = config::load(args)?;
    let experiment = &resolved.experiment;

    let started = Instant::now();
    let data = match resolved.jobs {
        Some(1) => run_experiment_sequential(experiment),
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(CliError::runtime)?
            .install(|| run_experiment(experiment)),
        None => run_experiment(experiment),
    }
    .map_err(CliError::runtime)?;
    let elapsed = started.elapsed();

    let dir = &resolved.output.dir;
    fs::create_dir_all(dir)
        .map_err(|err| CliError::Runtime(format!("create {}: {err}", dir.display())))?;

    let csv_path = dir.join("rounds.csv");
    report::write_file(&csv_path, &report::rounds_csv(&data))?;
    let summary_path = dir.join("summary.json");
    report::write_file(&summary_path, &report::summary_json(experiment, &data)?)?;
    let mut written = vec![csv_path, summary_path];
    if resolved.output.charts {
        written.extend(chart::write_charts(dir, &data)?);
    }

    println!(
        "{} repetition(s) x {} rounds x {} arm(s): {} rows in {:.2}s",
        experiment.repetitions,
        experiment.rounds,
        experiment.arms.len(),
        data.rows().count(),
        elapsed.as_secs_f64(),
    );
    for (arm, summary) in &data.summary {
        println!(
            "{arm}: mean reward {:.4}, final accuracy {:.4}",
            summary.mean_reward, summary.mean_final_accuracy
        );
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
