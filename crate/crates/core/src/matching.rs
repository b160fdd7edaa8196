//! Capacitated device-proposing deferred acceptance, the blocking-pair
//! and stability predicates that define its contract, and a brute-force
//! enumeration oracle for small instances.
//!
//! The distributed propose/accept/reject message protocol is simulated
//! as an in-process event loop: free devices propose down their lists,
//! servers drain FIFO proposal queues, and a saturated server bumps its
//! worst tentative device when a strictly better proposer arrives.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{DeviceId, ServerId};
use crate::preferences::{DevicePreferences, ServerPreferences};

/// A matching-game instance: both sides' rankings (best first) and each
/// server's cohort capacity. Serializable so instances can be stored and
/// replayed as JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchingProblem {
    #[serde(default)]
    pub device_prefs: BTreeMap<DeviceId, Vec<ServerId>>,
    #[serde(default)]
    pub server_prefs: BTreeMap<ServerId, Vec<DeviceId>>,
    #[serde(default)]
    pub capacities: BTreeMap<ServerId, usize>,
}

impl MatchingProblem {
    /// Assemble a problem from built preference lists.
    pub fn from_preferences(
        device_prefs: impl IntoIterator<Item = DevicePreferences>,
        server_prefs: impl IntoIterator<Item = ServerPreferences>,
        capacities: BTreeMap<ServerId, usize>,
    ) -> Self {
        MatchingProblem {
            device_prefs: device_prefs
                .into_iter()
                .map(|p| (p.owner, p.ranking))
                .collect(),
            server_prefs: server_prefs
                .into_iter()
                .map(|p| (p.owner, p.ranking))
                .collect(),
            capacities,
        }
    }

    /// Every ranked counterpart must exist and appear at most once;
    /// every ranking server must have a capacity.
    pub fn validate(&self) -> Result<(), MatchingError> {
        for (device, ranking) in &self.device_prefs {
            let mut seen = BTreeSet::new();
            for server in ranking {
                if !self.capacities.contains_key(server) {
                    return Err(MatchingError::UnknownServer {
                        server: server.clone(),
                        listed_by: device.to_string(),
                    });
                }
                if !seen.insert(server) {
                    return Err(MatchingError::DuplicateEntry {
                        owner: device.to_string(),
                        entry: server.to_string(),
                    });
                }
            }
        }
        for (server, ranking) in &self.server_prefs {
            if !self.capacities.contains_key(server) {
                return Err(MatchingError::MissingCapacity(server.clone()));
            }
            let mut seen = BTreeSet::new();
            for device in ranking {
                if !self.device_prefs.contains_key(device) {
                    return Err(MatchingError::UnknownDevice {
                        device: device.clone(),
                        listed_by: server.to_string(),
                    });
                }
                if !seen.insert(device) {
                    return Err(MatchingError::DuplicateEntry {
                        owner: server.to_string(),
                        entry: device.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    fn server_ranking(&self, server: &ServerId) -> &[DeviceId] {
        self.server_prefs
            .get(server)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// True when the pair list each other.
    pub fn mutually_listed(&self, device: &DeviceId, server: &ServerId) -> bool {
        self.device_prefs
            .get(device)
            .is_some_and(|r| r.contains(server))
            && self.server_ranking(server).contains(device)
    }

    /// Position-lookup tables for both sides (lower index = preferred).
    fn rank_tables(&self) -> RankTables {
        let device_rank = self
            .device_prefs
            .iter()
            .map(|(d, ranking)| {
                let table = ranking
                    .iter()
                    .enumerate()
                    .map(|(pos, s)| (s.clone(), pos))
                    .collect();
                (d.clone(), table)
            })
            .collect();
        let server_rank = self
            .server_prefs
            .iter()
            .map(|(s, ranking)| {
                let table = ranking
                    .iter()
                    .enumerate()
                    .map(|(pos, d)| (d.clone(), pos))
                    .collect();
                (s.clone(), table)
            })
            .collect();
        RankTables {
            device_rank,
            server_rank,
        }
    }
}

struct RankTables {
    device_rank: BTreeMap<DeviceId, BTreeMap<ServerId, usize>>,
    server_rank: BTreeMap<ServerId, BTreeMap<DeviceId, usize>>,
}

impl RankTables {
    fn device_ranks(&self, device: &DeviceId, server: &ServerId) -> Option<usize> {
        self.device_rank
            .get(device)
            .and_then(|t| t.get(server))
            .copied()
    }

    fn server_ranks(&self, server: &ServerId, device: &DeviceId) -> Option<usize> {
        self.server_rank
            .get(server)
            .and_then(|t| t.get(device))
            .copied()
    }
}

/// A many-to-one assignment kept bidirectionally consistent: a device
/// appears in a server's cohort exactly when the device maps to it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Matching {
    device_to_server: BTreeMap<DeviceId, ServerId>,
    server_to_devices: BTreeMap<ServerId, BTreeSet<DeviceId>>,
}

impl Matching {
    pub fn new() -> Self {
        Matching::default()
    }

    pub fn assign(&mut self, device: DeviceId, server: ServerId) {
        self.unassign(&device);
        self.server_to_devices
            .entry(server.clone())
            .or_default()
            .insert(device.clone());
        self.device_to_server.insert(device, server);
    }

    pub fn unassign(&mut self, device: &DeviceId) {
        if let Some(server) = self.device_to_server.remove(device) {
            if let Some(cohort) = self.server_to_devices.get_mut(&server) {
                cohort.remove(device);
                if cohort.is_empty() {
                    self.server_to_devices.remove(&server);
                }
            }
        }
    }

    pub fn server_of(&self, device: &DeviceId) -> Option<&ServerId> {
        self.device_to_server.get(device)
    }

    fn cohort(&self, server: &ServerId) -> Option<&BTreeSet<DeviceId>> {
        self.server_to_devices.get(server)
    }

    pub fn devices_of(&self, server: &ServerId) -> BTreeSet<DeviceId> {
        self.cohort(server).cloned().unwrap_or_default()
    }

    pub fn cohort_size(&self, server: &ServerId) -> usize {
        self.cohort(server).map_or(0, BTreeSet::len)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&DeviceId, &ServerId)> {
        self.device_to_server.iter()
    }

    /// Number of matched devices.
    pub fn len(&self) -> usize {
        self.device_to_server.len()
    }

    pub fn is_empty(&self) -> bool {
        self.device_to_server.is_empty()
    }

    /// Audit the structural invariants: bidirectional consistency, each
    /// device matched at most once (structural to the map), and no
    /// server over capacity. Run after every round in the simulator.
    pub fn verify_invariants(
        &self,
        capacities: &BTreeMap<ServerId, usize>,
    ) -> Result<(), MatchingError> {
        for (device, server) in &self.device_to_server {
            let listed = self
                .cohort(server)
                .is_some_and(|cohort| cohort.contains(device));
            if !listed {
                return Err(MatchingError::Inconsistent {
                    device: device.clone(),
                    server: server.clone(),
                });
            }
        }
        for (server, cohort) in &self.server_to_devices {
            for device in cohort {
                if self.device_to_server.get(device) != Some(server) {
                    return Err(MatchingError::Inconsistent {
                        device: device.clone(),
                        server: server.clone(),
                    });
                }
            }
            let capacity = capacities
                .get(server)
                .copied()
                .ok_or_else(|| MatchingError::MissingCapacity(server.clone()))?;
            if cohort.len() > capacity {
                return Err(MatchingError::CapacityExceeded {
                    server: server.clone(),
                    assigned: cohort.len(),
                    capacity,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum MatchingError {
    UnknownServer { server: ServerId, listed_by: String },
    UnknownDevice { device: DeviceId, listed_by: String },
    DuplicateEntry { owner: String, entry: String },
    MissingCapacity(ServerId),
    CapacityExceeded { server: ServerId, assigned: usize, capacity: usize },
    Inconsistent { device: DeviceId, server: ServerId },
    OracleBound { devices: usize, servers: usize },
    ProposalBoundExceeded,
}

impl fmt::Display for MatchingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchingError::UnknownServer { server, listed_by } => {
                write!(f, "{listed_by} ranks unknown server {server}")
            }
            MatchingError::UnknownDevice { device, listed_by } => {
                write!(f, "{listed_by} ranks unknown device {device}")
            }
            MatchingError::DuplicateEntry { owner, entry } => {
                write!(f, "{owner} ranks {entry} more than once")
            }
            MatchingError::MissingCapacity(server) => {
                write!(f, "no capacity declared for server {server}")
            }
            MatchingError::CapacityExceeded {
                server,
                assigned,
                capacity,
            } => write!(
                f,
                "server {server} holds {assigned} devices, capacity {capacity}"
            ),
            MatchingError::Inconsistent { device, server } => {
                write!(f, "matching maps {device} and {server} inconsistently")
            }
            MatchingError::OracleBound { devices, servers } => write!(
                f,
                "instance with {devices} devices and {servers} servers exceeds the \
                 enumeration bound ({ORACLE_MAX_DEVICES} devices, {ORACLE_MAX_SERVERS} servers)"
            ),
            MatchingError::ProposalBoundExceeded => {
                write!(f, "proposal count exceeded the preference-list bound")
            }
        }
    }
}

impl std::error::Error for MatchingError {}

/// Device-proposing deferred acceptance with capacities.
///
/// Each free device proposes to the best server it has not yet tried;
/// each server drains its proposal queue in arrival order, accepting
/// while below capacity, bumping its worst tentative device when a
/// strictly better proposer arrives, and rejecting otherwise. Rejecting
/// a proposer also discards every queued proposer the server ranks
/// strictly below it — they could never displace anyone the rejected
/// proposer could not (verified against a discard-free engine in tests).
pub fn run_matching(problem: &MatchingProblem) -> Result<Matching, MatchingError> {
    problem.validate()?;
    let ranks = problem.rank_tables();

    let mut next_choice: BTreeMap<&DeviceId, usize> =
        problem.device_prefs.keys().map(|d| (d, 0)).collect();
    let mut free: VecDeque<&DeviceId> = problem.device_prefs.keys().collect();
    let mut queues: BTreeMap<&ServerId, VecDeque<&DeviceId>> = BTreeMap::new();
    let mut accepted: BTreeMap<&ServerId, BTreeSet<&DeviceId>> = BTreeMap::new();

    let proposal_bound: usize = problem.device_prefs.values().map(Vec::len).sum();
    let mut proposals = 0usize;

    loop {
        // Propose: every free device queues at its next untried server.
        while let Some(device) = free.pop_front() {
            let ranking = &problem.device_prefs[device];
            let position = next_choice.get_mut(device).expect("device registered");
            if *position >= ranking.len() {
                continue; // list exhausted; stays unmatched
            }
            let server = &ranking[*position];
            *position += 1;
            proposals += 1;
            if proposals > proposal_bound {
                return Err(MatchingError::ProposalBoundExceeded);
            }
            queues.entry(server).or_default().push_back(device);
        }

        // Decide: servers drain their queues in id order.
        let mut rejected: Vec<&DeviceId> = Vec::new();
        for (&server, queue) in queues.iter_mut() {
            let capacity = problem.capacities[server];
            let cohort = accepted.entry(server).or_default();
            while let Some(proposer) = queue.pop_front() {
                let Some(rank) = ranks.server_ranks(server, proposer) else {
                    // Unranked proposers are unacceptable; nobody ranks
                    // strictly below them, so nothing else is discarded.
                    rejected.push(proposer);
                    continue;
                };
                if cohort.len() < capacity {
                    cohort.insert(proposer);
                    continue;
                }
                let bump = if capacity == 0 {
                    None
                } else {
                    let worst = cohort
                        .iter()
                        .copied()
                        .max_by_key(|d| {
                            ranks.server_ranks(server, d).expect("accepted are ranked")
                        })
                        .expect("saturated nonzero-capacity cohort is nonempty");
                    let worst_rank = ranks
                        .server_ranks(server, worst)
                        .expect("accepted are ranked");
                    (rank < worst_rank).then_some(worst)
                };
                match bump {
                    Some(worst) => {
                        cohort.remove(worst);
                        cohort.insert(proposer);
                        rejected.push(worst);
                    }
                    None => {
                        rejected.push(proposer);
                        // Queued proposers this server ranks strictly
                        // below the rejected one cannot be accepted
                        // either; reject them in the same pass.
                        let discarded: Vec<&DeviceId> = queue
                            .iter()
                            .copied()
                            .filter(|d| {
                                ranks.server_ranks(server, d).is_none_or(|r| r > rank)
                            })
                            .collect();
                        queue.retain(|d| !discarded.contains(d));
                        rejected.extend(discarded);
                    }
                }
            }
        }
        queues.retain(|_, q| !q.is_empty());

        if rejected.is_empty() && free.is_empty() {
            break;
        }
        free.extend(rejected);
    }

    let mut matching = Matching::new();
    for (server, cohort) in accepted {
        for device in cohort {
            matching.assign(device.clone(), server.clone());
        }
    }
    matching.verify_invariants(&problem.capacities)?;
    Ok(matching)
}

fn blocking_pair_with(
    matching: &Matching,
    device: &DeviceId,
    server: &ServerId,
    problem: &MatchingProblem,
    ranks: &RankTables,
) -> bool {
    if !problem.mutually_listed(device, server) {
        return false;
    }
    let proposed_rank = ranks
        .device_ranks(device, server)
        .expect("mutually listed pair has a device rank");

    let device_improves = match matching.server_of(device) {
        None => true,
        Some(current) if current == server => false,
        Some(current) => ranks
            .device_ranks(device, current)
            .is_none_or(|current_rank| proposed_rank < current_rank),
    };
    if !device_improves {
        return false;
    }

    let capacity = problem.capacities.get(server).copied().unwrap_or(0);
    let cohort = matching.cohort(server);
    if cohort.map_or(0, BTreeSet::len) < capacity {
        return true;
    }
    let device_rank = ranks
        .server_ranks(server, device)
        .expect("mutually listed pair has a server rank");
    cohort.is_some_and(|held_set| {
        held_set.iter().any(|held| {
            // A held device the server never ranked is weaker than any
            // ranked challenger.
            ranks
                .server_ranks(server, held)
                .is_none_or(|held_rank| device_rank < held_rank)
        })
    })
}

/// True when `device` and `server` list each other, the device strictly
/// prefers the server to its current assignment (or is unmatched), and
/// the server has room or strictly prefers the device to the worst
/// device it currently holds.
pub fn is_blocking_pair(
    matching: &Matching,
    device: &DeviceId,
    server: &ServerId,
    problem: &MatchingProblem,
) -> bool {
    blocking_pair_with(matching, device, server, problem, &problem.rank_tables())
}

fn stable_with(matching: &Matching, problem: &MatchingProblem, ranks: &RankTables) -> bool {
    if matching.verify_invariants(&problem.capacities).is_err() {
        return false;
    }
    for (device, server) in matching.pairs() {
        if !problem.mutually_listed(device, server) {
            return false;
        }
    }
    for device in problem.device_prefs.keys() {
        for server in problem.capacities.keys() {
            if blocking_pair_with(matching, device, server, problem, ranks) {
                return false;
            }
        }
    }
    // A server left under capacity while a mutually-acceptable device
    // sits unmatched is already a blocking pair; the clause is restated
    // because it is the saturation condition people forget to check.
    for (server, &capacity) in &problem.capacities {
        if matching.cohort_size(server) < capacity {
            let willing_unmatched = problem.device_prefs.keys().any(|device| {
                matching.server_of(device).is_none() && problem.mutually_listed(device, server)
            });
            if willing_unmatched {
                return false;
            }
        }
    }
    true
}

/// Stability: the structural invariants hold, every matched pair is
/// mutually listed, and no mutually-listed pair blocks.
pub fn is_stable(matching: &Matching, problem: &MatchingProblem) -> bool {
    stable_with(matching, problem, &problem.rank_tables())
}

/// Largest instance the enumeration oracle accepts.
pub const ORACLE_MAX_DEVICES: usize = 8;
pub const ORACLE_MAX_SERVERS: usize = 3;

/// Enumerate every stable matching of a small instance by assigning each
/// device to nothing or to a mutually-acceptable server with remaining
/// capacity, then filtering with [`is_stable`]. Test oracle only.
pub fn brute_force_stable(problem: &MatchingProblem) -> Result<Vec<Matching>, MatchingError> {
    problem.validate()?;
    let devices: Vec<&DeviceId> = problem.device_prefs.keys().collect();
    let n_servers = problem.capacities.len();
    if devices.len() > ORACLE_MAX_DEVICES || n_servers > ORACLE_MAX_SERVERS {
        return Err(MatchingError::OracleBound {
            devices: devices.len(),
            servers: n_servers,
        });
    }

    let ranks = problem.rank_tables();
    let mut stable = Vec::new();
    let mut remaining = problem.capacities.clone();
    let mut current = Matching::new();
    enumerate(
        problem,
        &ranks,
        &devices,
        0,
        &mut remaining,
        &mut current,
        &mut stable,
    );
    Ok(stable)
}

fn enumerate(
    problem: &MatchingProblem,
    ranks: &RankTables,
    devices: &[&DeviceId],
    index: usize,
    remaining: &mut BTreeMap<ServerId, usize>,
    current: &mut Matching,
    stable: &mut Vec<Matching>,
) {
    let Some(&device) = devices.get(index) else {
        if stable_with(current, problem, ranks) {
            stable.push(current.clone());
        }
        return;
    };
    // Leave the device unmatched…
    enumerate(problem, ranks, devices, index + 1, remaining, current, stable);
    // …or match it to any mutually-acceptable server with room.
    for server in &problem.device_prefs[device] {
        if !problem.server_ranking(server).contains(device) {
            continue;
        }
        {
            let slots = remaining.get_mut(server).expect("validated server");
            if *slots == 0 {
                continue;
            }
            *slots -= 1;
        }
        current.assign(device.clone(), server.clone());
        enumerate(problem, ranks, devices, index + 1, remaining, current, stable);
        current.unassign(device);
        *remaining.get_mut(server).expect("validated server") += 1;
    }
}
