//! Accuracy bootstrapping for newcomer devices: servers pool their
//! interaction histories, fit a regression tree, and predict what a
//! device with no track record will achieve. Issuing an inquiry costs
//! the asking server one call from its budget; uploading data to someone
//! else's inquiry earns calls back, so sharing is what keeps a server
//! able to ask.

pub mod stats;
pub mod tree;

use std::collections::BTreeMap;
use std::error::Error;
use std::fmt;
use std::io;

use crate::domain::{AccuracyFraction, DeviceId, InteractionRecord, ServerId, ServerProfile};

pub use stats::{Attribute, ATTRIBUTES};
pub use tree::{DeviceFeatures, KfoldReport, TreeNode, TreeParams};

#[derive(Debug)]
pub enum BootstrapError {
    EmptySample,
    ZeroMean,
    EmptyDataset,
    UnknownAttribute(String),
    TooFewRows { rows: usize, folds: usize },
    BudgetExhausted(ServerId),
    NoTrainingData,
    UnknownServer(ServerId),
    InvalidDataRate { uploaded: u64, total: u64 },
    InvalidUploadFraction(f64),
    InvalidRecord { row: usize, message: String },
    Csv(csv::Error),
}

impl fmt::Display for BootstrapError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BootstrapError::EmptySample => write!(f, "statistic requires at least one value"),
            BootstrapError::ZeroMean => {
                write!(f, "coefficient of variation is undefined for zero-mean values")
            }
            BootstrapError::EmptyDataset => write!(f, "interaction dataset is empty"),
            BootstrapError::UnknownAttribute(name) => write!(
                f,
                "unknown attribute `{name}` (expected provider, region, or device_type)"
            ),
            BootstrapError::TooFewRows { rows, folds } => {
                write!(f, "{rows} rows cannot be split into {folds} folds")
            }
            BootstrapError::BudgetExhausted(server) => {
                write!(f, "server {server} has no bootstrap calls left")
            }
            BootstrapError::NoTrainingData => {
                write!(f, "no server holds interaction records to train on")
            }
            BootstrapError::UnknownServer(server) => write!(f, "no server registered as {server}"),
            BootstrapError::InvalidDataRate { uploaded, total } => {
                if *total == 0 {
                    write!(f, "total uploaded size is zero")
                } else {
                    write!(f, "uploaded size {uploaded} exceeds total {total}")
                }
            }
            BootstrapError::InvalidUploadFraction(fraction) => {
                write!(f, "upload fraction must be in (0, 1], got {fraction}")
            }
            BootstrapError::InvalidRecord { row, message } => {
                write!(f, "invalid record on row {row}: {message}")
            }
            BootstrapError::Csv(err) => write!(f, "csv: {err}"),
        }
    }
}

impl Error for BootstrapError {
    fn source(&self) -> Option<&(dyn Error + 'static)> {
        match self {
            BootstrapError::Csv(err) => Some(err),
            _ => None,
        }
    }
}

impl From<csv::Error> for BootstrapError {
    fn from(err: csv::Error) -> Self {
        BootstrapError::Csv(err)
    }
}

/// Read interaction records from CSV with header
/// `provider,region,device_type,accuracy` (accuracy in percent).
pub fn read_records_csv<R: io::Read>(reader: R) -> Result<Vec<InteractionRecord>, BootstrapError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    for (idx, row) in rdr.deserialize::<InteractionRecord>().enumerate() {
        let record = row?;
        if !(0.0..=100.0).contains(&record.accuracy) {
            return Err(BootstrapError::InvalidRecord {
                // Header occupies row 1.
                row: idx + 2,
                message: format!("accuracy {} out of range [0, 100]", record.accuracy),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Write interaction records as CSV, accuracy formatted to two decimals.
pub fn write_records_csv<W: io::Write>(
    writer: W,
    records: &[InteractionRecord],
) -> Result<(), BootstrapError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["provider", "region", "device_type", "accuracy"])?;
    for record in records {
        wtr.write_record([
            record.provider.as_str(),
            record.region.as_str(),
            record.device_type.as_str(),
            &format!("{:.2}", record.accuracy),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Share of an inquiry's training data that one contributor supplied.
pub fn data_rate(uploaded_size: u64, total_uploaded: u64) -> Result<f64, BootstrapError> {
    if total_uploaded == 0 || uploaded_size > total_uploaded {
        return Err(BootstrapError::InvalidDataRate {
            uploaded: uploaded_size,
            total: total_uploaded,
        });
    }
    Ok(uploaded_size as f64 / total_uploaded as f64)
}

/// Motivation function: the calls budget a contributor holds after one
/// more contribution. Grows with the cumulative contribution count and
/// the share of data supplied, and always grants at least one call.
pub fn update_calls(calls_prev: u64, ccont: u64, dr: f64) -> u64 {
    let share = (ccont as f64 * dr).floor().max(0.0) as u64;
    calls_prev + ccont + share + 1
}

/// What one successful inquiry did: the prediction plus every
/// contributor's upload size and budget gain.
#[derive(Debug, Clone, PartialEq)]
pub struct InquiryOutcome {
    pub predicted_accuracy: AccuracyFraction,
    pub contributors: Vec<ContributorGrant>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContributorGrant {
    pub server_id: ServerId,
    pub rows_uploaded: usize,
    /// Increase in the contributor's calls budget from this inquiry.
    pub calls_granted: u64,
}

/// The most recent `fraction` of a server's records, the portion it
/// uploads when answering an inquiry.
fn uploaded_slice(records: &[InteractionRecord], fraction: f64) -> &[InteractionRecord] {
    let count = ((records.len() as f64 * fraction).ceil() as usize).min(records.len());
    &records[records.len() - count..]
}

/// Run one bootstrap inquiry: charge the requester a call, pool every
/// server's uploaded records, credit the contributors, fit the tree,
/// and predict the newcomer's accuracy.
///
/// Refusals are transactional: a zero budget or an empty pool leaves
/// every server untouched.
pub fn handle_inquiry(
    servers: &mut [ServerProfile],
    requester: &ServerId,
    features: &DeviceFeatures,
    params: TreeParams,
    upload_fraction: f64,
) -> Result<InquiryOutcome, BootstrapError> {
    if !(upload_fraction > 0.0 && upload_fraction <= 1.0) {
        return Err(BootstrapError::InvalidUploadFraction(upload_fraction));
    }
    let requester_idx = servers
        .iter()
        .position(|s| &s.server_id == requester)
        .ok_or_else(|| BootstrapError::UnknownServer(requester.clone()))?;
    if servers[requester_idx].calls_budget == 0 {
        return Err(BootstrapError::BudgetExhausted(requester.clone()));
    }

    let mut pooled: Vec<InteractionRecord> = Vec::new();
    let mut uploads: Vec<(usize, usize)> = Vec::new();
    for (idx, server) in servers.iter().enumerate() {
        let slice = uploaded_slice(&server.interaction_dataset, upload_fraction);
        pooled.extend_from_slice(slice);
        uploads.push((idx, slice.len()));
    }
    if pooled.is_empty() {
        return Err(BootstrapError::NoTrainingData);
    }

    servers[requester_idx].calls_budget -= 1;

    // The requester pays; everyone else who uploaded rows earns. Data
    // rates are shares of the contributed rows, not of the whole pool.
    let contributed_total: u64 = uploads
        .iter()
        .filter(|&&(idx, rows)| idx != requester_idx && rows > 0)
        .map(|&(_, rows)| rows as u64)
        .sum();
    let mut contributors = Vec::new();
    for &(idx, rows) in &uploads {
        if idx == requester_idx || rows == 0 {
            continue;
        }
        let dr = data_rate(rows as u64, contributed_total)?;
        let server = &mut servers[idx];
        server.cumulative_contributions += 1;
        let before = server.calls_budget;
        server.calls_budget = update_calls(before, server.cumulative_contributions, dr);
        contributors.push(ContributorGrant {
            server_id: server.server_id.clone(),
            rows_uploaded: rows,
            calls_granted: server.calls_budget - before,
        });
    }

    let fitted = tree::build_tree(&pooled, params)?;
    let percent = tree::predict(&fitted, features);
    Ok(InquiryOutcome {
        predicted_accuracy: AccuracyFraction::clamped(percent / 100.0),
        contributors,
    })
}

/// How a preference builder asks for a newcomer's estimated accuracy.
/// The production implementation runs the budgeted inquiry protocol; the
/// ablation arm substitutes random guesses.
pub trait InquiryCapability {
    fn inquire(
        &mut self,
        requester: &ServerId,
        device: &DeviceId,
        features: &DeviceFeatures,
    ) -> Result<AccuracyFraction, BootstrapError>;
}

/// Round-scoped inquiry broker. The first server to ask about a device
/// pays for the inquiry; the prediction is then pinned as that device's
/// accuracy for the round, so later askers reuse it for free.
pub struct BootstrapCoordinator<'a> {
    servers: &'a mut [ServerProfile],
    tree_params: TreeParams,
    upload_fraction: f64,
    predictions: BTreeMap<DeviceId, AccuracyFraction>,
    inquiries: BTreeMap<ServerId, u32>,
}

impl<'a> BootstrapCoordinator<'a> {
    pub fn new(
        servers: &'a mut [ServerProfile],
        tree_params: TreeParams,
        upload_fraction: f64,
    ) -> Self {
        BootstrapCoordinator {
            servers,
            tree_params,
            upload_fraction,
            predictions: BTreeMap::new(),
            inquiries: BTreeMap::new(),
        }
    }

    /// Predictions pinned so far this round.
    pub fn predictions(&self) -> &BTreeMap<DeviceId, AccuracyFraction> {
        &self.predictions
    }

    /// Paid inquiries a server issued this round.
    pub fn inquiries_issued(&self, server: &ServerId) -> u32 {
        self.inquiries.get(server).copied().unwrap_or(0)
    }
}

impl InquiryCapability for BootstrapCoordinator<'_> {
    fn inquire(
        &mut self,
        requester: &ServerId,
        device: &DeviceId,
        features: &DeviceFeatures,
    ) -> Result<AccuracyFraction, BootstrapError> {
        if let Some(&cached) = self.predictions.get(device) {
            return Ok(cached);
        }
        let outcome = handle_inquiry(
            self.servers,
            requester,
            features,
            self.tree_params,
            self.upload_fraction,
        )?;
        self.predictions
            .insert(device.clone(), outcome.predicted_accuracy);
        *self.inquiries.entry(requester.clone()).or_insert(0) += 1;
        Ok(outcome.predicted_accuracy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::stats::tests::golden_records;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn server(id: &str, rows: Vec<InteractionRecord>, budget: u64) -> ServerProfile {
        ServerProfile {
            server_id: id.into(),
            requested_data_type: "mnist".into(),
            capacity: 10,
            price_cpu: 0.002,
            price_ram: 0.002,
            price_band: 0.002,
            interaction_dataset: rows,
            calls_budget: budget,
            cumulative_contributions: 0,
        }
    }

    fn rows(n: usize, accuracy: f64) -> Vec<InteractionRecord> {
        (0..n)
            .map(|i| {
                InteractionRecord::new(format!("P{}", i % 4), "Asia", "Watch", accuracy).unwrap()
            })
            .collect()
    }

    #[test]
    fn data_rate_examples() {
        assert_abs_diff_eq!(data_rate(50, 200).unwrap(), 0.25, epsilon = 1e-12);
        assert_eq!(data_rate(0, 7).unwrap(), 0.0);
        assert_eq!(data_rate(7, 7).unwrap(), 1.0);
        assert!(data_rate(1, 0).is_err());
        assert!(data_rate(8, 7).is_err());
    }

    #[test]
    fn update_calls_examples() {
        assert_eq!(update_calls(0, 0, 0.0), 1);
        assert_eq!(update_calls(5, 3, 0.5), 10);
        assert_eq!(update_calls(2, 4, 1.0), 11);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn update_calls_strictly_increasing_in_prev(
            prev in 0u64..1000,
            ccont in 0u64..100,
            dr in 0.0f64..=1.0,
        ) {
            prop_assert!(update_calls(prev + 1, ccont, dr) > update_calls(prev, ccont, dr));
            prop_assert!(update_calls(prev, ccont, dr) > prev);
        }
    }

    #[test]
    fn inquiry_charges_requester_and_credits_contributors() {
        let mut servers = vec![
            server("s1", vec![], 1),
            server("s2", rows(60, 70.0), 3),
            server("s3", rows(40, 70.0), 3),
        ];
        let outcome = handle_inquiry(
            &mut servers,
            &"s1".into(),
            &DeviceFeatures::new("P0", "Asia", "Watch"),
            TreeParams::default(),
            1.0,
        )
        .unwrap();

        assert_eq!(servers[0].calls_budget, 0);
        // First contribution, DR 0.6: 3 + 1 + floor(0.6) + 1 = 5.
        assert_eq!(servers[1].calls_budget, 5);
        assert_eq!(servers[1].cumulative_contributions, 1);
        // DR 0.4 gives the same floor.
        assert_eq!(servers[2].calls_budget, 5);
        assert_eq!(
            outcome.contributors,
            vec![
                ContributorGrant {
                    server_id: "s2".into(),
                    rows_uploaded: 60,
                    calls_granted: 2,
                },
                ContributorGrant {
                    server_id: "s3".into(),
                    rows_uploaded: 40,
                    calls_granted: 2,
                },
            ]
        );
        // Constant 70% pool predicts 70%.
        assert_abs_diff_eq!(outcome.predicted_accuracy.value(), 0.70, epsilon = 1e-9);
    }

    #[test]
    fn zero_budget_refuses_without_side_effects() {
        let mut servers = vec![server("s1", vec![], 0), server("s2", rows(10, 60.0), 2)];
        let err = handle_inquiry(
            &mut servers,
            &"s1".into(),
            &DeviceFeatures::new("P0", "Asia", "Watch"),
            TreeParams::default(),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, BootstrapError::BudgetExhausted(_)));
        assert_eq!(servers[1].calls_budget, 2);
        assert_eq!(servers[1].cumulative_contributions, 0);
    }

    #[test]
    fn empty_pool_refuses_without_charging() {
        let mut servers = vec![server("s1", vec![], 1), server("s2", vec![], 1)];
        let err = handle_inquiry(
            &mut servers,
            &"s1".into(),
            &DeviceFeatures::new("P0", "Asia", "Watch"),
            TreeParams::default(),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, BootstrapError::NoTrainingData));
        // The failed inquiry must not burn the budget, or a data-less
        // federation could never recover.
        assert_eq!(servers[0].calls_budget, 1);
    }

    #[test]
    fn requester_data_trains_but_earns_nothing() {
        let mut servers = vec![server("s1", golden_records(), 2), server("s2", vec![], 5)];
        let outcome = handle_inquiry(
            &mut servers,
            &"s1".into(),
            &DeviceFeatures::new("P2", "Africa", "Phone"),
            TreeParams::default(),
            1.0,
        )
        .unwrap();
        assert!(outcome.contributors.is_empty());
        assert_eq!(servers[0].calls_budget, 1);
        assert_eq!(servers[1].calls_budget, 5);
        assert_abs_diff_eq!(outcome.predicted_accuracy.value(), 0.54625, epsilon = 1e-9);
    }

    #[test]
    fn partial_upload_takes_most_recent_rows() {
        let mut dataset = rows(4, 50.0);
        dataset.extend(rows(4, 90.0));
        let mut servers = vec![server("s1", vec![], 1), server("s2", dataset, 1)];
        let outcome = handle_inquiry(
            &mut servers,
            &"s1".into(),
            &DeviceFeatures::new("P0", "Asia", "Watch"),
            TreeParams::default(),
            0.5,
        )
        .unwrap();
        assert_eq!(outcome.contributors[0].rows_uploaded, 4);
        // Only the recent 90% rows were uploaded.
        assert_abs_diff_eq!(outcome.predicted_accuracy.value(), 0.90, epsilon = 1e-9);
    }

    #[test]
    fn unknown_requester_and_bad_fraction_are_errors() {
        let mut servers = vec![server("s1", rows(3, 60.0), 1)];
        let features = DeviceFeatures::new("P0", "Asia", "Watch");
        assert!(matches!(
            handle_inquiry(&mut servers, &"zz".into(), &features, TreeParams::default(), 1.0),
            Err(BootstrapError::UnknownServer(_))
        ));
        assert!(matches!(
            handle_inquiry(&mut servers, &"s1".into(), &features, TreeParams::default(), 0.0),
            Err(BootstrapError::InvalidUploadFraction(_))
        ));
    }

    #[test]
    fn coordinator_caches_predictions_within_round() {
        let mut servers = vec![
            server("s1", rows(10, 60.0), 2),
            server("s2", rows(10, 60.0), 2),
        ];
        let mut coordinator =
            BootstrapCoordinator::new(&mut servers, TreeParams::default(), 1.0);
        let device: DeviceId = "d1".into();
        let features = DeviceFeatures::new("P0", "Asia", "Watch");

        let first = coordinator
            .inquire(&"s1".into(), &device, &features)
            .unwrap();
        let second = coordinator
            .inquire(&"s2".into(), &device, &features)
            .unwrap();
        assert_eq!(first, second);
        assert_eq!(coordinator.inquiries_issued(&"s1".into()), 1);
        assert_eq!(coordinator.inquiries_issued(&"s2".into()), 0);
        assert_eq!(coordinator.predictions().len(), 1);
        // Only the first inquiry was paid for.
        assert_eq!(servers[0].calls_budget, 1);
    }

    #[test]
    fn csv_round_trip_preserves_records() {
        let records = golden_records();
        let mut buffer = Vec::new();
        write_records_csv(&mut buffer, &records).unwrap();
        let text = String::from_utf8(buffer.clone()).unwrap();
        assert!(text.starts_with("provider,region,device_type,accuracy\n"));
        assert!(text.contains("P4,Asia,Watch,73.69\n"));

        let reread = read_records_csv(buffer.as_slice()).unwrap();
        assert_eq!(reread, records);
    }

    #[test]
    fn csv_rejects_out_of_range_and_malformed_rows() {
        let bad_accuracy = "provider,region,device_type,accuracy\nP1,Asia,Watch,150.0\n";
        assert!(matches!(
            read_records_csv(bad_accuracy.as_bytes()),
            Err(BootstrapError::InvalidRecord { row: 2, .. })
        ));

        let missing_column = "provider,region,accuracy\nP1,Asia,80.0\n";
        assert!(matches!(
            read_records_csv(missing_column.as_bytes()),
            Err(BootstrapError::Csv(_))
        ));
    }
}
