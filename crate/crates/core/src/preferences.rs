//! Construction of both sides' ordered preference lists. Devices rank
//! servers by the reward they would earn there; servers rank devices by
//! known accuracy, falling back to a bootstrap inquiry (or a configured
//! prior) for newcomers without history.

use std::collections::BTreeMap;
use std::fmt;

use crate::bootstrap::{BootstrapError, DeviceFeatures, InquiryCapability};
use crate::domain::{
    AccuracyFraction, DeviceId, DeviceProfile, LatencyMatrix, ServerId, ServerProfile,
    ValidationError,
};
use crate::economics;

/// An owner's ranking of the compatible counterparts, best first, with
/// the score that produced each position.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceList<O, C: Ord> {
    pub owner: O,
    pub ranking: Vec<C>,
    pub scores: BTreeMap<C, f64>,
}

impl<O, C: Ord + Clone> PreferenceList<O, C> {
    /// Position of a counterpart in the ranking (0 is best).
    pub fn rank_of(&self, counterpart: &C) -> Option<usize> {
        self.ranking.iter().position(|c| c == counterpart)
    }

    pub fn score_of(&self, counterpart: &C) -> Option<f64> {
        self.scores.get(counterpart).copied()
    }

    /// Sort scored counterparts descending, ties broken by id ascending.
    fn from_scores(owner: O, scores: BTreeMap<C, f64>) -> Self {
        let mut ranking: Vec<C> = scores.keys().cloned().collect();
        ranking.sort_by(|a, b| {
            let sa = scores[a];
            let sb = scores[b];
            sb.total_cmp(&sa).then_with(|| a.cmp(b))
        });
        PreferenceList {
            owner,
            ranking,
            scores,
        }
    }
}

pub type DevicePreferences = PreferenceList<DeviceId, ServerId>;
pub type ServerPreferences = PreferenceList<ServerId, DeviceId>;

#[derive(Debug)]
pub enum PreferenceError {
    MissingGlobalAccuracy(ServerId),
    Economics(ValidationError),
    Bootstrap(BootstrapError),
}

impl fmt::Display for PreferenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreferenceError::MissingGlobalAccuracy(server) => {
                write!(f, "no previous-round global accuracy recorded for {server}")
            }
            PreferenceError::Economics(err) => write!(f, "reward computation failed: {err}"),
            PreferenceError::Bootstrap(err) => write!(f, "bootstrap inquiry failed: {err}"),
        }
    }
}

impl std::error::Error for PreferenceError {}

impl From<ValidationError> for PreferenceError {
    fn from(err: ValidationError) -> Self {
        PreferenceError::Economics(err)
    }
}

/// Rank the data-type-compatible servers for one device by the total
/// reward the device would earn there. The server's previous-round
/// global accuracy feeds the penalty term (the current round's value
/// does not exist until after matching), and `device_accuracy` is the
/// device's last known — or, for newcomers, predicted — local accuracy.
pub fn build_device_preferences(
    device: &DeviceProfile,
    servers: &[ServerProfile],
    latency: &LatencyMatrix,
    acc_global_prev: &BTreeMap<ServerId, AccuracyFraction>,
    device_accuracy: AccuracyFraction,
) -> Result<DevicePreferences, PreferenceError> {
    let mut scores = BTreeMap::new();
    for server in servers {
        if !device
            .available_data_types
            .contains(&server.requested_data_type)
        {
            continue;
        }
        let global = acc_global_prev
            .get(&server.server_id)
            .copied()
            .ok_or_else(|| PreferenceError::MissingGlobalAccuracy(server.server_id.clone()))?;
        let operational = economics::operational_earnings(
            device.cpu_promised,
            device.ram_promised,
            server.price_cpu,
            server.price_ram,
        )?;
        let scaled = latency.scaled(&server.server_id, &device.device_id)?;
        let traffic = economics::traffic_earnings(device.bandwidth_promised, server.price_band, scaled)?;
        let reward = economics::total_reward(operational, traffic, device_accuracy, global)?;
        scores.insert(server.server_id.clone(), reward.total);
    }
    Ok(PreferenceList::from_scores(device.device_id.clone(), scores))
}

/// Rank the data-type-compatible devices for one server by accuracy:
/// the most recent local accuracy when the device has history, otherwise
/// a bootstrap prediction. Inquiries that get refused (budget exhausted,
/// no pooled data) degrade to `default_prior` and emit a warning rather
/// than failing the round.
///
/// Takes the server's identity and requested type rather than its
/// profile because the inquiry capability holds the server registry
/// mutably while budgets move.
pub fn build_server_preferences(
    server_id: &ServerId,
    requested_data_type: &str,
    devices: &[DeviceProfile],
    bootstrap: &mut dyn InquiryCapability,
    default_prior: AccuracyFraction,
) -> Result<(ServerPreferences, Vec<String>), PreferenceError> {
    let mut scores = BTreeMap::new();
    let mut warnings = Vec::new();
    for device in devices {
        if !device
            .available_data_types
            .contains(requested_data_type)
        {
            continue;
        }
        let accuracy = match device.last_accuracy() {
            Some(known) => known,
            None => {
                let features = DeviceFeatures::of_device(device);
                match bootstrap.inquire(server_id, &device.device_id, &features) {
                    Ok(predicted) => predicted,
                    Err(refusal @ (BootstrapError::BudgetExhausted(_)
                    | BootstrapError::NoTrainingData)) => {
                        warnings.push(format!(
                            "{server_id}: scored newcomer {} with prior {}: {refusal}",
                            device.device_id,
                            default_prior.value(),
                        ));
                        default_prior
                    }
                    Err(other) => return Err(PreferenceError::Bootstrap(other)),
                }
            }
        };
        scores.insert(device.device_id.clone(), accuracy.value());
    }
    Ok((
        PreferenceList::from_scores(server_id.clone(), scores),
        warnings,
    ))
}
