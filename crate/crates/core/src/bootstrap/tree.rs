//! Regression tree over categorical device features, built top-down by
//! maximizing standard deviation reduction, plus k-fold cross-validation
//! of its predictions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{DeviceProfile, InteractionRecord};

use super::stats::{self, Attribute, ATTRIBUTES};
use super::BootstrapError;

/// Stopping thresholds for tree growth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// Nodes with fewer rows than this become leaves.
    pub min_instances: usize,
    /// Nodes whose target CV (percent) falls below this become leaves.
    pub cv_threshold: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_instances: 3,
            cv_threshold: 10.0,
        }
    }
}

/// The categorical feature vector a prediction is made from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceFeatures {
    pub provider: String,
    pub region: String,
    pub device_type: String,
}

impl DeviceFeatures {
    pub fn new(
        provider: impl Into<String>,
        region: impl Into<String>,
        device_type: impl Into<String>,
    ) -> Self {
        DeviceFeatures {
            provider: provider.into(),
            region: region.into(),
            device_type: device_type.into(),
        }
    }

    pub fn of_device(device: &DeviceProfile) -> Self {
        DeviceFeatures::new(&device.provider, &device.region, &device.device_type)
    }

    pub fn get(&self, attribute: Attribute) -> &str {
        match attribute {
            Attribute::Provider => &self.provider,
            Attribute::Region => &self.region,
            Attribute::DeviceType => &self.device_type,
        }
    }
}

/// A node of the fitted tree. Values are accuracy percentages.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
        rows: usize,
    },
    Split {
        attribute: Attribute,
        /// Mean target over the node's training rows; the prediction
        /// used when a query category has no branch.
        mean: f64,
        rows: usize,
        branches: BTreeMap<String, TreeNode>,
    },
}

impl TreeNode {
    pub fn rows(&self) -> usize {
        match self {
            TreeNode::Leaf { rows, .. } => *rows,
            TreeNode::Split { rows, .. } => *rows,
        }
    }

    /// Indented text rendering for terminal display.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0, None);
        out
    }

    fn render_into(&self, out: &mut String, depth: usize, branch: Option<&str>) {
        for _ in 0..depth {
            out.push_str("  ");
        }
        if let Some(category) = branch {
            let _ = write!(out, "{category}: ");
        }
        match self {
            TreeNode::Leaf { value, rows } => {
                let _ = writeln!(out, "leaf {value:.2} (n={rows})");
            }
            TreeNode::Split {
                attribute,
                mean,
                rows,
                branches,
            } => {
                let _ = writeln!(out, "split on {} (n={rows}, mean={mean:.2})", attribute.name());
                for (category, child) in branches {
                    child.render_into(out, depth + 1, Some(category));
                }
            }
        }
    }
}

/// Fit a tree to `records`. Growth stops at a node when it has fewer
/// than `min_instances` rows, its target CV drops below `cv_threshold`,
/// or every attribute has already been used on the path.
pub fn build_tree(
    records: &[InteractionRecord],
    params: TreeParams,
) -> Result<TreeNode, BootstrapError> {
    if records.is_empty() {
        return Err(BootstrapError::EmptyDataset);
    }
    let rows: Vec<&InteractionRecord> = records.iter().collect();
    Ok(build_node(&rows, &ATTRIBUTES, params))
}

fn build_node(
    rows: &[&InteractionRecord],
    available: &[Attribute],
    params: TreeParams,
) -> TreeNode {
    let values: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    // Nonempty by construction, so the stats calls cannot fail; a zero
    // mean implies zero spread, which the CV treats as 0.
    let mean = stats::sample_mean(&values).expect("node has rows");
    let cv = stats::coefficient_of_variation(&values).expect("node has rows");

    let stop = rows.len() < params.min_instances || cv < params.cv_threshold || available.is_empty();
    if stop {
        return TreeNode::Leaf {
            value: mean,
            rows: rows.len(),
        };
    }

    let owned: Vec<InteractionRecord> = rows.iter().map(|&r| r.clone()).collect();
    let mut best: Option<(Attribute, f64)> = None;
    for &attribute in available {
        let reduction = stats::sdr(&owned, attribute).expect("node has rows");
        // Strict comparison keeps the earliest attribute on ties.
        if best.is_none_or(|(_, r)| reduction > r) {
            best = Some((attribute, reduction));
        }
    }
    let (attribute, _) = best.expect("attributes available");

    let mut groups: BTreeMap<String, Vec<&InteractionRecord>> = BTreeMap::new();
    for &row in rows {
        groups
            .entry(attribute.of(row).to_string())
            .or_default()
            .push(row);
    }
    let remaining: Vec<Attribute> = available
        .iter()
        .copied()
        .filter(|&a| a != attribute)
        .collect();
    let branches = groups
        .into_iter()
        .map(|(category, group)| (category, build_node(&group, &remaining, params)))
        .collect();

    TreeNode::Split {
        attribute,
        mean,
        rows: rows.len(),
        branches,
    }
}

/// Predict the accuracy percentage for a feature vector. A category the
/// tree never saw falls back to the enclosing node's training mean.
pub fn predict(tree: &TreeNode, features: &DeviceFeatures) -> f64 {
    match tree {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            attribute,
            mean,
            branches,
            ..
        } => match branches.get(features.get(*attribute)) {
            Some(child) => predict(child, features),
            None => *mean,
        },
    }
}

/// Per-fold and mean squared prediction error, in fraction² units.
#[derive(Debug, Clone, PartialEq)]
pub struct KfoldReport {
    pub fold_mses: Vec<f64>,
    pub mean_mse: f64,
}

/// K-fold cross-validation of the tree: seeded shuffle, `k` contiguous
/// folds, train on k−1 and test on the held-out fold. Errors are
/// squared differences of accuracies as fractions (percent / 100).
pub fn kfold_mse(
    records: &[InteractionRecord],
    k: usize,
    params: TreeParams,
    seed: u64,
) -> Result<KfoldReport, BootstrapError> {
    if k < 2 || records.len() < k {
        return Err(BootstrapError::TooFewRows {
            rows: records.len(),
            folds: k,
        });
    }
    let mut shuffled: Vec<&InteractionRecord> = records.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    // First (n mod k) folds take one extra row.
    let base = shuffled.len() / k;
    let extra = shuffled.len() % k;
    let mut fold_mses = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let len = base + usize::from(fold < extra);
        let test = &shuffled[start..start + len];
        let train: Vec<InteractionRecord> = shuffled[..start]
            .iter()
            .chain(&shuffled[start + len..])
            .map(|&r| r.clone())
            .collect();
        start += len;

        let tree = build_tree(&train, params)?;
        let mse = test
            .iter()
            .map(|row| {
                let predicted = predict(&tree, &DeviceFeatures::new(
                    &row.provider,
                    &row.region,
                    &row.device_type,
                )) / 100.0;
                let actual = row.accuracy / 100.0;
                (predicted - actual) * (predicted - actual)
            })
            .sum::<f64>()
            / test.len() as f64;
        fold_mses.push(mse);
    }
    let mean_mse = fold_mses.iter().sum::<f64>() / fold_mses.len() as f64;
    Ok(KfoldReport { fold_mses, mean_mse })
}
