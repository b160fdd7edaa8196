//! `fedmint tree`: fit the variance-reduction regression tree to an
//! interaction-record CSV and print the dataset statistics, the
//! per-attribute split table, and the fitted tree.

use std::fs::File;

use fedmint_core::bootstrap::{
    read_records_csv, stats,
    tree::{build_tree, TreeParams},
    ATTRIBUTES,
};

use crate::{CliError, TreeArgs};

pub fn cmd_tree(args: &TreeArgs) -> Result<(), CliError> {
    if args.min_instances == 0 {
        return Err(CliError::Input("--min-instances must be positive".into()));
    }
    if !(args.cv >= 0.0) {
        return Err(CliError::Input("--cv must be nonnegative".into()));
    }

    let path = &args.dataset;
    let file = File::open(path)
        .map_err(|err| CliError::Input(format!("{}: {err}", path.display())))?;
    let records = read_records_csv(file)
        .map_err(|err| CliError::Input(format!("{}: {err}", path.display())))?;
    if records.is_empty() {
        return Err(CliError::Input(format!(
            "{}: dataset has no records",
            path.display()
        )));
    }

    let values: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let mean = stats::sample_mean(&values).map_err(CliError::input)?;
    let sd = stats::population_sd(&values).map_err(CliError::input)?;
    let cv = stats::coefficient_of_variation(&values).map_err(CliError::input)?;
    println!("records: {}", records.len());
    println!("mean accuracy: {mean:.4}");
    println!("sd: {sd:.4}");
    println!("cv: {cv:.4}%");
    println!();

    println!("{:<14} {:>10} {:>10}", "attribute", "split sd", "reduction");
    for attribute in ATTRIBUTES {
        let split_sd = stats::sd_after_split(&records, attribute).map_err(CliError::input)?;
        println!(
            "{:<14} {:>10.4} {:>10.4}",
            attribute.name(),
            split_sd,
            sd - split_sd
        );
    }
    println!();

    let tree = build_tree(
        &records,
        TreeParams {
            min_instances: args.min_instances,
            cv_threshold: args.cv,
        },
    )
    .map_err(CliError::input)?;
    print!("{}", tree.render());
    Ok(())
}
