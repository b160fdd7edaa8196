//! Seeded population generation: device profiles with non-IID data
//! shards, server profiles with persistent prices, and link latencies.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::domain::{DeviceProfile, LatencyMatrix, ServerProfile};

use super::config::ExperimentConfig;

/// The non-IID data assignment for one device: a skewed label subset
/// and a shard size with its held-out test portion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataShard {
    pub labels: BTreeSet<u8>,
    pub data_size: u32,
    pub test_data_size: u32,
}

/// Draw a label-skewed shard: 1–4 of the label classes (inclusive
/// configured bounds), a size within the configured range, and a test
/// split of `ceil(test_split · data_size)`.
pub fn assign_noniid_data(config: &ExperimentConfig, rng: &mut impl Rng) -> DataShard {
    let label_count = rng.gen_range(config.labels_per_device.0..=config.labels_per_device.1);
    let mut classes: Vec<u8> = (0..config.label_classes).collect();
    classes.shuffle(rng);
    let labels: BTreeSet<u8> = classes.into_iter().take(label_count as usize).collect();

    let data_size = rng.gen_range(config.data_size_range.0..=config.data_size_range.1);
    let test_data_size = (config.test_split * f64::from(data_size)).ceil() as u32;
    DataShard {
        labels,
        data_size,
        test_data_size,
    }
}

fn pick<'a>(choices: &'a [String], rng: &mut impl Rng) -> &'a str {
    choices.choose(rng).expect("validated nonempty vocabulary")
}

fn generate_device(config: &ExperimentConfig, index: u32, rng: &mut impl Rng) -> DeviceProfile {
    let provider = pick(&config.providers, rng).to_string();
    let region = pick(&config.regions, rng).to_string();
    let device_type = pick(&config.device_types, rng).to_string();

    let cpu_capacity = rng.gen_range(config.cpu_range.0..=config.cpu_range.1);
    let ram_capacity = rng.gen_range(config.ram_range.0..=config.ram_range.1);
    let bandwidth_capacity = rng.gen_range(config.bandwidth_range.0..=config.bandwidth_range.1);
    let (frac_lo, frac_hi) = config.promised_fraction_range;
    let cpu_promised = cpu_capacity * rng.gen_range(frac_lo..=frac_hi);
    let ram_promised = ram_capacity * rng.gen_range(frac_lo..=frac_hi);
    let bandwidth_promised = bandwidth_capacity * rng.gen_range(frac_lo..=frac_hi);

    let shard = assign_noniid_data(config, rng);

    let type_count = rng.gen_range(config.types_per_device.0..=config.types_per_device.1);
    let mut types = config.data_types.clone();
    types.shuffle(rng);
    let available_data_types: BTreeSet<String> = types.into_iter().take(type_count).collect();

    DeviceProfile {
        device_id: format!("d{index:05}").as_str().into(),
        provider,
        region,
        device_type,
        cpu_capacity,
        ram_capacity,
        bandwidth_capacity,
        cpu_promised,
        ram_promised,
        bandwidth_promised,
        data_labels: shard.labels,
        data_size: shard.data_size,
        test_data_size: shard.test_data_size,
        available_data_types,
        accuracy_history: Vec::new(),
    }
    .validated()
    .expect("generated profile within configured ranges")
}

/// Devices arriving at `round`: the full initial fleet at round 0, a
/// batch of newcomers afterwards. `next_index` numbers devices across
/// calls so ids stay unique for the whole experiment.
pub fn generate_population(
    config: &ExperimentConfig,
    round: u32,
    rng: &mut impl Rng,
    next_index: &mut u32,
) -> Vec<DeviceProfile> {
    let count = if round == 0 {
        config.initial_devices
    } else {
        config.arrivals_per_round
    };
    (0..count)
        .map(|_| {
            let device = generate_device(config, *next_index, rng);
            *next_index += 1;
            device
        })
        .collect()
}

/// Servers with persistent prices drawn once at experiment start.
/// Requested data types cycle through the vocabulary so a two-server
/// experiment exercises the compatibility filter.
pub fn generate_servers(config: &ExperimentConfig, rng: &mut impl Rng) -> Vec<ServerProfile> {
    (0..config.servers)
        .map(|i| {
            ServerProfile {
                server_id: format!("s{:02}", i + 1).as_str().into(),
                requested_data_type: config.data_types[i as usize % config.data_types.len()]
                    .clone(),
                capacity: config.clients_per_server,
                price_cpu: rng.gen_range(config.price_cpu_range.0..=config.price_cpu_range.1),
                price_ram: rng.gen_range(config.price_ram_range.0..=config.price_ram_range.1),
                price_band: rng.gen_range(config.price_band_range.0..=config.price_band_range.1),
                interaction_dataset: Vec::new(),
                calls_budget: config.initial_calls_budget,
                cumulative_contributions: 0,
            }
            .validated()
            .expect("generated server within configured ranges")
        })
        .collect()
}

/// Draw raw link latencies for every (server, newcomer) pair.
pub fn sample_latencies(
    latency: &mut LatencyMatrix,
    servers: &[ServerProfile],
    devices: &[DeviceProfile],
    config: &ExperimentConfig,
    rng: &mut impl Rng,
) {
    for server in servers {
        for device in devices {
            let raw = rng.gen_range(config.latency_range.0..=config.latency_range.1);
            latency
                .insert(server.server_id.clone(), device.device_id.clone(), raw)
                .expect("draw within configured bounds");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_zero_yields_initial_fleet_and_later_rounds_newcomers() {
        let config = ExperimentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut next = 0;
        let initial = generate_population(&config, 0, &mut rng, &mut next);
        assert_eq!(initial.len(), 100);
        let arrivals = generate_population(&config, 3, &mut rng, &mut next);
        assert_eq!(arrivals.len(), 10);
        assert!(arrivals.iter().all(DeviceProfile::is_newcomer));
        assert_eq!(next, 110);
        // Ids keep counting across batches.
        assert_eq!(initial[0].device_id.to_string(), "d00000");
        assert_eq!(arrivals[0].device_id.to_string(), "d00100");
    }

    #[test]
    fn same_seed_reproduces_population() {
        let config = ExperimentConfig::default();
        let generate = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut next = 0;
            generate_population(&config, 0, &mut rng, &mut next)
        };
        assert_eq!(generate(), generate());
    }

    #[test]
    fn shards_respect_configured_bounds() {
        let config = ExperimentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let shard = assign_noniid_data(&config, &mut rng);
            assert!((1..=4).contains(&shard.labels.len()));
            assert!((100..=450).contains(&shard.data_size));
            assert_eq!(
                shard.test_data_size,
                (0.2 * f64::from(shard.data_size)).ceil() as u32
            );
            assert!(shard.labels.iter().all(|&l| l < config.label_classes));
        }
    }

    #[test]
    fn test_split_rounds_up() {
        let config = ExperimentConfig {
            data_size_range: (100, 100),
            ..ExperimentConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let shard = assign_noniid_data(&config, &mut rng);
        assert_eq!(shard.test_data_size, 20);
    }

    #[test]
    fn devices_stay_within_resource_ranges() {
        let config = ExperimentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut next = 0;
        for device in generate_population(&config, 0, &mut rng, &mut next) {
            assert!((300.0..=700.0).contains(&device.cpu_capacity));
            assert!((400.0..=900.0).contains(&device.ram_capacity));
            assert!((500.0..=900.0).contains(&device.bandwidth_capacity));
            assert!(device.cpu_promised <= device.cpu_capacity);
            assert!(device.cpu_promised >= 0.5 * device.cpu_capacity);
            assert!(!device.available_data_types.is_empty());
            assert!(config.providers.contains(&device.provider));
        }
    }

    #[test]
    fn servers_cycle_data_types_and_draw_prices_once() {
        let config = ExperimentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let servers = generate_servers(&config, &mut rng);
        assert_eq!(servers.len(), 2);
        assert_eq!(servers[0].server_id.to_string(), "s01");
        assert_eq!(servers[0].requested_data_type, "mnist");
        assert_eq!(servers[1].requested_data_type, "fashion_mnist");
        for server in &servers {
            assert!((0.001..=0.003).contains(&server.price_cpu));
            assert_eq!(server.capacity, 10);
            assert_eq!(server.calls_budget, 5);
        }
    }

    #[test]
    fn latencies_cover_every_link() {
        let config = ExperimentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let servers = generate_servers(&config, &mut rng);
        let mut next = 0;
        let devices = generate_population(&config, 1, &mut rng, &mut next);
        let mut latency =
            LatencyMatrix::new(config.latency_range.0, config.latency_range.1).unwrap();
        sample_latencies(&mut latency, &servers, &devices, &config, &mut rng);
        for server in &servers {
            for device in &devices {
                let raw = latency
                    .raw_seconds(&server.server_id, &device.device_id)
                    .unwrap();
                assert!((0.1..=5.0).contains(&raw));
            }
        }
    }
}
