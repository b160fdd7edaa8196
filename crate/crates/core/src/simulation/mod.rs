//! Multi-round experiment driver: seeded population growth, per-arm
//! round execution (preference matching, random-selection baseline, and
//! the random-score ablation), the accuracy proxy standing in for local
//! training, and metrics collection.
//!
//! All arms of a repetition share one population stream — the same
//! devices, shards, and link latencies — and a device's training-noise
//! draw depends only on (seed, repetition, round, device), not on the
//! arm. Arms are therefore paired observations under common random
//! numbers: metric differences reflect selection decisions, never
//! noise luck. Each arm evolves its own copy of the state with its own
//! dynamics RNG for selection randomness (baseline shuffles, ablation
//! guesses, fold shuffles).

pub mod config;
pub mod metrics;
pub mod population;

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregation;
use crate::bootstrap::{
    tree, BootstrapCoordinator, BootstrapError, DeviceFeatures, InquiryCapability, TreeParams,
};
use crate::domain::{
    AccuracyFraction, DeviceId, DeviceProfile, InteractionRecord, LatencyMatrix, ServerId,
    ServerProfile, ValidationError,
};
use crate::economics;
use crate::matching::{self, Matching, MatchingError, MatchingProblem};
use crate::preferences::{self, PreferenceError};

pub use config::{Arm, ExperimentConfig, ProxyParams};
pub use metrics::{ArmSummary, ExperimentReport, RepetitionReport, RoundServerMetrics};
pub use population::{assign_noniid_data, generate_population, generate_servers, DataShard};

#[derive(Debug)]
pub enum SimulationError {
    Config(ValidationError),
    Round {
        rep: u32,
        round: u32,
        arm: Arm,
        source: RoundError,
    },
}

impl fmt::Display for SimulationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimulationError::Config(err) => write!(f, "invalid configuration: {err}"),
            SimulationError::Round {
                rep,
                round,
                arm,
                source,
            } => write!(f, "rep {rep}, round {round}, arm {arm}: {source}"),
        }
    }
}

impl std::error::Error for SimulationError {}

#[derive(Debug)]
pub enum RoundError {
    Preferences(PreferenceError),
    Matching(MatchingError),
    Bootstrap(BootstrapError),
    Evaluation(ValidationError),
}

impl fmt::Display for RoundError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundError::Preferences(err) => write!(f, "{err}"),
            RoundError::Matching(err) => write!(f, "{err}"),
            RoundError::Bootstrap(err) => write!(f, "{err}"),
            RoundError::Evaluation(err) => write!(f, "{err}"),
        }
    }
}

impl std::error::Error for RoundError {}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_POPULATION: u64 = 0;
const STREAM_SERVERS: u64 = 1;

fn arm_stream(arm: Arm) -> u64 {
    match arm {
        Arm::Fedmint => 2,
        Arm::Vanilla => 3,
        Arm::FedmintRandomBootstrap => 4,
    }
}

/// Decorrelated seed for one (repetition, purpose) RNG stream.
fn derive_seed(base: u64, rep: u32, stream: u64) -> u64 {
    debug_assert!(stream < 8);
    splitmix64(base ^ splitmix64((u64::from(rep) << 3) | stream))
}

/// Training-noise draw shared by every arm: a function of the device
/// and the round only, so the same device training in the same round
/// scores identically no matter which arm selected it.
fn device_noise(seed: u64, rep: u32, round: u32, device_id: &DeviceId, magnitude: f64) -> f64 {
    if magnitude <= 0.0 {
        return 0.0;
    }
    let mut h = splitmix64(seed ^ 0x0D1C_E0F0_CAFE);
    h = splitmix64(h ^ u64::from(rep));
    h = splitmix64(h ^ u64::from(round));
    for byte in device_id.to_string().bytes() {
        h = splitmix64(h ^ u64::from(byte));
    }
    ChaCha8Rng::seed_from_u64(h).gen_range(-magnitude..=magnitude)
}

/// The deterministic accuracy proxy with an explicit noise term: a base
/// rising with shard size and label diversity, a capped experience
/// gain, then clipping. Exposed separately from the sampling wrapper so
/// zero-noise values can be asserted exactly.
pub fn accuracy_proxy_value(
    data_size: u32,
    label_count: usize,
    participation: u32,
    noise: f64,
    params: &ProxyParams,
    data_size_range: (u32, u32),
) -> AccuracyFraction {
    let (lo, hi) = data_size_range;
    let normalized = if hi > lo {
        (f64::from(data_size) - f64::from(lo)) / (f64::from(hi) - f64::from(lo))
    } else {
        0.0
    };
    let base = params.base
        + params.data_weight * normalized
        + params.label_weight * label_count.saturating_sub(1) as f64
        + params.experience_weight * f64::from(participation.min(params.experience_cap));
    AccuracyFraction::clamped((base + noise).clamp(params.floor, params.ceiling))
}

/// Sample the proxy for a device, drawing noise from `rng`.
pub fn accuracy_proxy(
    device: &DeviceProfile,
    participation: u32,
    rng: &mut impl Rng,
    params: &ProxyParams,
    data_size_range: (u32, u32),
) -> AccuracyFraction {
    let noise = if params.noise > 0.0 {
        rng.gen_range(-params.noise..=params.noise)
    } else {
        0.0
    };
    accuracy_proxy_value(
        device.data_size,
        device.data_labels.len(),
        participation,
        noise,
        params,
        data_size_range,
    )
}

/// The baseline selector: shuffle the device pool and deal `k` devices
/// to each server in id order, disjointly and ignoring preferences.
/// When devices run short, later servers get smaller cohorts.
pub fn vanilla_select(
    devices: &[DeviceProfile],
    servers: &[ServerProfile],
    k: usize,
    rng: &mut impl Rng,
) -> Matching {
    let mut ids: Vec<&DeviceId> = devices.iter().map(|d| &d.device_id).collect();
    ids.shuffle(rng);
    let mut matching = Matching::new();
    let mut dealt = ids.iter();
    for server in servers {
        for _ in 0..k {
            let Some(device) = dealt.next() else {
                return matching;
            };
            matching.assign((*device).clone(), server.server_id.clone());
        }
    }
    matching
}

/// Ablation inquiry source: a uniform random guess per device, pinned
/// for the round so every server sees the same score. Costs no budget.
///
/// Guesses substitute for tree predictions, so they are only issued once
/// some interaction data exists — exactly when a tree could have been
/// trained. Before that (round 1) this refuses like the real bootstrap,
/// keeping the ablation's only difference the prediction source.
struct RandomInquiry<'a> {
    rng: &'a mut ChaCha8Rng,
    trained: bool,
    predictions: BTreeMap<DeviceId, AccuracyFraction>,
}

impl InquiryCapability for RandomInquiry<'_> {
    fn inquire(
        &mut self,
        _requester: &ServerId,
        device: &DeviceId,
        _features: &DeviceFeatures,
    ) -> Result<AccuracyFraction, BootstrapError> {
        if !self.trained {
            return Err(BootstrapError::NoTrainingData);
        }
        if let Some(&cached) = self.predictions.get(device) {
            return Ok(cached);
        }
        let guess = AccuracyFraction::clamped(self.rng.gen_range(0.0..=1.0));
        self.predictions.insert(device.clone(), guess);
        Ok(guess)
    }
}

/// One arm's evolving world: its own device histories, server ledgers,
/// participation counts, and dynamics RNG.
struct ArmState {
    arm: Arm,
    devices: Vec<DeviceProfile>,
    servers: Vec<ServerProfile>,
    participation: BTreeMap<DeviceId, u32>,
    prev_global: BTreeMap<ServerId, AccuracyFraction>,
    rng: ChaCha8Rng,
}

fn run_arm_round(
    state: &mut ArmState,
    config: &ExperimentConfig,
    latency: &LatencyMatrix,
    rep: u32,
    round: u32,
) -> Result<(Vec<RoundServerMetrics>, Vec<String>), RoundError> {
    let tree_params = TreeParams {
        min_instances: config.min_instances,
        cv_threshold: config.cv_threshold,
    };
    let prior = AccuracyFraction::clamped(config.default_prior);
    let mut warnings = Vec::new();
    let mut inquiries: BTreeMap<ServerId, u32> = BTreeMap::new();
    let mut refusals: BTreeMap<ServerId, u32> = BTreeMap::new();

    let matching = match state.arm {
        Arm::Vanilla => {
            let matched = vanilla_select(
                &state.devices,
                &state.servers,
                config.clients_per_server,
                &mut state.rng,
            );
            let requested = config.clients_per_server * state.servers.len();
            if state.devices.len() < requested {
                warnings.push(format!(
                    "rep {rep}, round {round}, arm {}: {} devices for {requested} requested slots",
                    state.arm,
                    state.devices.len(),
                ));
            }
            matched
        }
        Arm::Fedmint | Arm::FedmintRandomBootstrap => {
            let server_meta: Vec<(ServerId, String)> = state
                .servers
                .iter()
                .map(|s| (s.server_id.clone(), s.requested_data_type.clone()))
                .collect();

            let mut server_prefs = Vec::with_capacity(server_meta.len());
            let predictions: BTreeMap<DeviceId, AccuracyFraction> = if state.arm == Arm::Fedmint {
                let mut coordinator = BootstrapCoordinator::new(
                    &mut state.servers,
                    tree_params,
                    config.upload_fraction,
                );
                for (server_id, data_type) in &server_meta {
                    let (prefs, server_warnings) = preferences::build_server_preferences(
                        server_id,
                        data_type,
                        &state.devices,
                        &mut coordinator,
                        prior,
                    )
                    .map_err(RoundError::Preferences)?;
                    refusals.insert(server_id.clone(), server_warnings.len() as u32);
                    warnings.extend(server_warnings);
                    server_prefs.push(prefs);
                }
                for (server_id, _) in &server_meta {
                    inquiries.insert(server_id.clone(), coordinator.inquiries_issued(server_id));
                }
                coordinator.predictions().clone()
            } else {
                let trained = state
                    .servers
                    .iter()
                    .any(|server| !server.interaction_dataset.is_empty());
                let mut random = RandomInquiry {
                    rng: &mut state.rng,
                    trained,
                    predictions: BTreeMap::new(),
                };
                for (server_id, data_type) in &server_meta {
                    let (prefs, server_warnings) = preferences::build_server_preferences(
                        server_id,
                        data_type,
                        &state.devices,
                        &mut random,
                        prior,
                    )
                    .map_err(RoundError::Preferences)?;
                    refusals.insert(server_id.clone(), server_warnings.len() as u32);
                    warnings.extend(server_warnings);
                    server_prefs.push(prefs);
                }
                random.predictions
            };

            let mut device_prefs = Vec::with_capacity(state.devices.len());
            for device in &state.devices {
                let device_accuracy = device
                    .last_accuracy()
                    .or_else(|| predictions.get(&device.device_id).copied())
                    .unwrap_or(prior);
                let prefs = preferences::build_device_preferences(
                    device,
                    &state.servers,
                    latency,
                    &state.prev_global,
                    device_accuracy,
                )
                .map_err(RoundError::Preferences)?;
                device_prefs.push(prefs);
            }

            let capacities: BTreeMap<ServerId, usize> = state
                .servers
                .iter()
                .map(|s| (s.server_id.clone(), s.capacity))
                .collect();
            let problem =
                MatchingProblem::from_preferences(device_prefs, server_prefs, capacities);
            matching::run_matching(&problem).map_err(RoundError::Matching)?
        }
    };

    let rows = evaluate_round(
        state, config, latency, &matching, rep, round, &inquiries, &refusals, tree_params,
    )?;
    Ok((rows, warnings))
}

/// Post-matching bookkeeping shared by every arm: audit the matching,
/// score each cohort with the proxy, aggregate global accuracies, pay
/// rewards, grow interaction datasets and histories, and cross-validate
/// the pooled dataset.
#[allow(clippy::too_many_arguments)]
fn evaluate_round(
    state: &mut ArmState,
    config: &ExperimentConfig,
    latency: &LatencyMatrix,
    matching: &Matching,
    rep: u32,
    round: u32,
    inquiries: &BTreeMap<ServerId, u32>,
    refusals: &BTreeMap<ServerId, u32>,
    tree_params: TreeParams,
) -> Result<Vec<RoundServerMetrics>, RoundError> {
    // Always-on audit: uniqueness is structural to the matching, but
    // capacity and consistency are re-checked every recorded round.
    let capacities: BTreeMap<ServerId, usize> = state
        .servers
        .iter()
        .map(|s| (s.server_id.clone(), s.capacity))
        .collect();
    matching
        .verify_invariants(&capacities)
        .map_err(RoundError::Matching)?;

    let device_index: BTreeMap<DeviceId, usize> = state
        .devices
        .iter()
        .enumerate()
        .map(|(i, d)| (d.device_id.clone(), i))
        .collect();

    struct ServerOutcome {
        server_id: ServerId,
        global: AccuracyFraction,
        mean_reward: f64,
        cohort: Vec<DeviceId>,
    }

    let server_meta: Vec<(ServerId, f64, f64, f64)> = state
        .servers
        .iter()
        .map(|s| (s.server_id.clone(), s.price_cpu, s.price_ram, s.price_band))
        .collect();
    let mut outcomes = Vec::with_capacity(server_meta.len());

    for (s_idx, (server_id, price_cpu, price_ram, price_band)) in
        server_meta.iter().enumerate()
    {
        let cohort = matching.devices_of(server_id);

        // Pass 1: the proxy draw stands in for local training, with the
        // noise term shared across arms (common random numbers).
        let mut scored: Vec<(DeviceId, AccuracyFraction, u32)> = Vec::with_capacity(cohort.len());
        for device_id in &cohort {
            let index = device_index[device_id];
            let device = &state.devices[index];
            let participation = state.participation.get(device_id).copied().unwrap_or(0);
            let noise = device_noise(config.seed, rep, round, device_id, config.proxy.noise);
            let accuracy = accuracy_proxy_value(
                device.data_size,
                device.data_labels.len(),
                participation,
                noise,
                &config.proxy,
                config.data_size_range,
            );
            scored.push((device_id.clone(), accuracy, device.test_data_size));
        }

        // Pass 2: aggregate, falling back to the previous round's value
        // when nobody trained.
        let global = if scored.is_empty() {
            *state
                .prev_global
                .get(server_id)
                .expect("global accuracy seeded at arm start")
        } else {
            aggregation::global_accuracy(scored.iter().map(|&(_, acc, test)| (acc, test)))
                .map_err(RoundError::Evaluation)?
        };

        // Pass 3: pay each participant against the fresh global value.
        let mut reward_sum = 0.0;
        for (device_id, accuracy, _) in &scored {
            let device = &state.devices[device_index[device_id]];
            let operational = economics::operational_earnings(
                device.cpu_promised,
                device.ram_promised,
                *price_cpu,
                *price_ram,
            )
            .map_err(RoundError::Evaluation)?;
            let scaled = latency
                .scaled(server_id, device_id)
                .map_err(RoundError::Evaluation)?;
            let traffic =
                economics::traffic_earnings(device.bandwidth_promised, *price_band, scaled)
                    .map_err(RoundError::Evaluation)?;
            let reward = economics::total_reward(operational, traffic, *accuracy, global)
                .map_err(RoundError::Evaluation)?;
            reward_sum += reward.total;
        }
        let mean_reward = if scored.is_empty() {
            0.0
        } else {
            reward_sum / scored.len() as f64
        };

        // Pass 4: record the round in histories and the server's
        // interaction dataset (visible to inquiries from next round on).
        for (device_id, accuracy, _) in &scored {
            let device = &mut state.devices[device_index[device_id]];
            device.accuracy_history.push((round, *accuracy));
            let record = InteractionRecord::new(
                &device.provider,
                &device.region,
                &device.device_type,
                accuracy.value() * 100.0,
            )
            .map_err(RoundError::Evaluation)?;
            state.servers[s_idx].interaction_dataset.push(record);
            *state.participation.entry(device_id.clone()).or_insert(0) += 1;
        }

        outcomes.push(ServerOutcome {
            server_id: server_id.clone(),
            global,
            mean_reward,
            cohort: scored.into_iter().map(|(id, _, _)| id).collect(),
        });
    }

    for outcome in &outcomes {
        state
            .prev_global
            .insert(outcome.server_id.clone(), outcome.global);
    }

    // Cross-validate the arm's pooled interaction data once per round.
    let pooled: Vec<InteractionRecord> = state
        .servers
        .iter()
        .flat_map(|s| s.interaction_dataset.iter().cloned())
        .collect();
    let bootstrap_mse = if pooled.len() >= config.kfold {
        let report = tree::kfold_mse(&pooled, config.kfold, tree_params, state.rng.gen())
            .map_err(RoundError::Bootstrap)?;
        Some(report.mean_mse)
    } else {
        None
    };

    Ok(outcomes
        .into_iter()
        .map(|outcome| RoundServerMetrics {
            rep,
            round,
            arm: state.arm,
            server_id: outcome.server_id.clone(),
            global_accuracy: outcome.global.value(),
            mean_reward: outcome.mean_reward,
            cohort_size: outcome.cohort.len(),
            cohort: outcome.cohort,
            bootstrap_inquiries: inquiries.get(&outcome.server_id).copied().unwrap_or(0),
            bootstrap_refusals: refusals.get(&outcome.server_id).copied().unwrap_or(0),
            bootstrap_mse,
        })
        .collect())
}

/// Run one full repetition: shared population stream, every configured
/// arm, rounds 1..=R. Deterministic in (config, rep).
pub fn run_repetition(
    config: &ExperimentConfig,
    rep: u32,
) -> Result<RepetitionReport, SimulationError> {
    let mut population_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(config.seed, rep, STREAM_POPULATION));
    let mut server_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, rep, STREAM_SERVERS));

    let servers = population::generate_servers(config, &mut server_rng);
    let mut latency = LatencyMatrix::new(config.latency_range.0, config.latency_range.1)
        .map_err(SimulationError::Config)?;
    let mut next_index = 0u32;
    let initial = population::generate_population(config, 0, &mut population_rng, &mut next_index);
    population::sample_latencies(&mut latency, &servers, &initial, config, &mut population_rng);

    let prior = AccuracyFraction::clamped(config.default_prior);
    let mut arms: Vec<ArmState> = config
        .arms
        .iter()
        .map(|&arm| ArmState {
            arm,
            devices: initial.clone(),
            servers: servers.clone(),
            participation: BTreeMap::new(),
            prev_global: servers
                .iter()
                .map(|s| (s.server_id.clone(), prior))
                .collect(),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, rep, arm_stream(arm))),
        })
        .collect();

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for round in 1..=config.rounds {
        let newcomers =
            population::generate_population(config, round, &mut population_rng, &mut next_index);
        population::sample_latencies(&mut latency, &servers, &newcomers, config, &mut population_rng);
        for state in arms.iter_mut() {
            state.devices.extend(newcomers.iter().cloned());
            let (mut round_rows, mut round_warnings) =
                run_arm_round(state, config, &latency, rep, round).map_err(|source| {
                    SimulationError::Round {
                        rep,
                        round,
                        arm: state.arm,
                        source,
                    }
                })?;
            rows.append(&mut round_rows);
            warnings.append(&mut round_warnings);
        }
    }
    Ok(RepetitionReport {
        rep,
        rows,
        warnings,
    })
}

/// Run every repetition one after another on the current thread.
pub fn run_experiment_sequential(
    config: &ExperimentConfig,
) -> Result<ExperimentReport, SimulationError> {
    config.validate().map_err(SimulationError::Config)?;
    let repetitions = (0..config.repetitions)
        .map(|rep| run_repetition(config, rep))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentReport::new(repetitions, config.rounds))
}

/// Run repetitions in parallel (they are independent by construction).
/// Produces exactly the same report as the sequential runner.
#[cfg(feature = "parallel")]
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, SimulationError> {
    use rayon::prelude::*;

    config.validate().map_err(SimulationError::Config)?;
    let repetitions = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(config, rep))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExperimentReport::new(repetitions, config.rounds))
}

#[cfg(not(feature = "parallel"))]
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, SimulationError> {
    run_experiment_sequential(config)
}
