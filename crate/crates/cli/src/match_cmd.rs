//! `fedmint match`: solve a two-sided matching instance from JSON,
//! print the assignment, and verify stability — optionally against the
//! exhaustive oracle on small instances.

use std::fs;

use fedmint_core::matching::{
    brute_force_stable, is_stable, run_matching, MatchingError, MatchingProblem,
};

use crate::{CliError, MatchArgs};

pub fn cmd_match(args: &MatchArgs) -> Result<(), CliError> {
    let path = &args.problem;
    let text = fs::read_to_string(path)
        .map_err(|err| CliError::Input(format!("{}: {err}", path.display())))?;
    let problem: MatchingProblem = serde_json::from_str(&text)
        .map_err(|err| CliError::Input(format!("{}: {err}", path.display())))?;

    let matching = run_matching(&problem).map_err(|err| match err {
        MatchingError::UnknownServer { .. }
        | MatchingError::UnknownDevice { .. }
        | MatchingError::DuplicateEntry { .. }
        | MatchingError::MissingCapacity(_) => CliError::input(err),
        other => CliError::runtime(other),
    })?;

    for (server, capacity) in &problem.capacities {
        let cohort = matching.devices_of(server);
        let names: Vec<String> = cohort.iter().map(ToString::to_string).collect();
        println!(
            "{server} [{}/{capacity}]: {}",
            cohort.len(),
            if names.is_empty() {
                "-".to_string()
            } else {
                names.join(" ")
            }
        );
    }
    let unmatched: Vec<String> = problem
        .device_prefs
        .keys()
        .filter(|device| matching.server_of(device).is_none())
        .map(ToString::to_string)
        .collect();
    if !unmatched.is_empty() {
        println!("unmatched: {}", unmatched.join(" "));
    }
    println!("stable: {}", is_stable(&matching, &problem));

    if args.oracle {
        let stable_set = match brute_force_stable(&problem) {
            Err(err @ MatchingError::OracleBound { .. }) => {
                return Err(CliError::Refused(err.to_string()));
            }
            other => other.map_err(CliError::runtime)?,
        };
        println!(
            "oracle: {} stable matching(s); engine output is a member: {}",
            stable_set.len(),
            stable_set.contains(&matching)
        );
    }
    Ok(())
}
