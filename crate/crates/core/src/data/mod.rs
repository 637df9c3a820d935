//! Classification shards, synthetic blob data and label-based partitioning.

#[cfg(feature = "idx")]
pub mod idx;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::params::ClientId;
use crate::rng::SimRng;

/// A row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShard {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
}

impl DatasetShard {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<usize>) -> Result<Self, DataError> {
        if labels.is_empty() {
            return Err(DataError::EmptyShard);
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(DataError::RaggedFeatures {
                features: features.len(),
                rows: labels.len(),
                dim,
            });
        }
        Ok(DatasetShard { features, dim, labels })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label_set(&self) -> BTreeSet<usize> {
        self.labels.iter().copied().collect()
    }

    pub fn max_label(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Rows at `indices`, in that order. `None` if `indices` is empty.
    pub fn select(&self, indices: &[usize]) -> Option<DatasetShard> {
        if indices.is_empty() {
            return None;
        }
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Some(DatasetShard {
            features,
            dim: self.dim,
            labels,
        })
    }

    /// Seeded shuffle, then the last `holdout_fraction` of rows become the held-out split.
    ///
    /// Both halves keep at least one row, so the shard needs two or more rows.
    pub fn split_holdout(&self, holdout_fraction: f64, seed: u64) -> Result<(DatasetShard, DatasetShard), DataError> {
        if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
            return Err(DataError::InvalidParams(format!(
                "holdout fraction {holdout_fraction} not in (0, 1)"
            )));
        }
        let n = self.rows();
        if n < 2 {
            return Err(DataError::InvalidParams(
                "need at least two rows to split off a held-out set".into(),
            ));
        }
        let mut order: Vec<usize> = (0..n).collect();
        SimRng::new(seed).shuffle(&mut order);
        let held = ((n as f64 * holdout_fraction).round() as usize).clamp(1, n - 1);
        let (train, test) = order.split_at(n - held);
        // both halves are non-empty by the clamp above
        Ok((self.select(train).unwrap(), self.select(test).unwrap()))
    }
}

/// Gaussian blobs around class means placed on a sphere of radius 3.
///
/// Rows are emitted class by class, `per_class` rows each.
pub fn gen_blobs(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    sigma: f64,
    seed: u64,
) -> Result<DatasetShard, DataError> {
    if num_classes < 2 || dim == 0 || per_class == 0 || sigma <= 0.0 || !sigma.is_finite() {
        return Err(DataError::InvalidParams(format!(
            "blobs need num_classes >= 2, dim >= 1, per_class >= 1, sigma > 0 \
             (got {num_classes}, {dim}, {per_class}, {sigma})"
        )));
    }
    const RADIUS: f64 = 3.0;
    let mut rng = SimRng::new(seed);
    let mut means = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        let mut m: Vec<f64> = loop {
            let draw: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
            if draw.iter().any(|v| *v != 0.0) {
                break draw;
            }
        };
        let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        m.iter_mut().for_each(|v| *v *= RADIUS / norm);
        means.push(m);
    }
    let mut features = Vec::with_capacity(num_classes * per_class * dim);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            features.extend(mean.iter().map(|mu| mu + sigma * rng.standard_normal()));
            labels.push(class);
        }
    }
    DatasetShard::new(features, dim, labels)
}

/// Which labels each client owns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub assignments: BTreeMap<ClientId, BTreeSet<usize>>,
}

impl PartitionPlan {
    pub fn new(assignments: BTreeMap<ClientId, BTreeSet<usize>>) -> Result<Self, DataError> {
        let plan = PartitionPlan { assignments };
        plan.validate()?;
        Ok(plan)
    }

    /// Client `k` (1-based) owns labels `{w(k-1), ..., wk-1}` for width `w`.
    ///
    /// With five clients and width two this is the `{0,1}, {2,3}, ...` split.
    pub fn contiguous(num_clients: usize, labels_per_client: usize) -> Self {
        let assignments = (0..num_clients)
            .map(|k| {
                let start = k * labels_per_client;
                (ClientId(k as u32 + 1), (start..start + labels_per_client).collect())
            })
            .collect();
        PartitionPlan { assignments }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let mut owner: BTreeMap<usize, ClientId> = BTreeMap::new();
        for (&client, labels) in &self.assignments {
            for &label in labels {
                if let Some(&first) = owner.get(&label) {
                    return Err(DataError::OverlappingLabel {
                        label,
                        first,
                        second: client,
                    });
                }
                owner.insert(label, client);
            }
        }
        Ok(())
    }

    pub fn owner_of(&self, label: usize) -> Option<ClientId> {
        self.assignments
            .iter()
            .find(|(_, labels)| labels.contains(&label))
            .map(|(id, _)| *id)
    }

    pub fn clients(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.assignments.keys().copied()
    }
}

/// Splits `shard` so each client gets exactly the rows whose label it owns.
///
/// Row order within each output shard follows the source.
pub fn partition_by_label(
    shard: &DatasetShard,
    plan: &PartitionPlan,
) -> Result<BTreeMap<ClientId, DatasetShard>, DataError> {
    plan.validate()?;
    let mut rows: BTreeMap<ClientId, Vec<usize>> = plan.assignments.keys().map(|&id| (id, Vec::new())).collect();
    for (i, &label) in shard.labels().iter().enumerate() {
        let owner = plan.owner_of(label).ok_or(DataError::UncoveredLabel(label))?;
        rows.get_mut(&owner).expect("owner is a plan key").push(i);
    }
    rows.into_iter()
        .map(|(id, idx)| {
            shard
                .select(&idx)
                .map(|s| (id, s))
                .ok_or(DataError::EmptyClientShard(id))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn blobs_collapse_onto_means_for_tiny_sigma() {
        let s = gen_blobs(4, 5, 10, 1e-6, 3).unwrap();
        for class in 0..4 {
            let first = s.row(class * 10).to_vec();
            // means are on the radius-3 sphere
            let r = first.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 3.0).abs() < 1e-4);
            for i in 0..10 {
                assert!(dist(s.row(class * 10 + i), &first) < 1e-4);
            }
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        assert_eq!(gen_blobs(3, 4, 7, 0.5, 9).unwrap(), gen_blobs(3, 4, 7, 0.5, 9).unwrap());
        assert_ne!(
            gen_blobs(3, 4, 7, 0.5, 9).unwrap(),
            gen_blobs(3, 4, 7, 0.5, 10).unwrap()
        );
    }

    #[test]
    fn blobs_reject_bad_params() {
        assert!(gen_blobs(1, 4, 7, 0.5, 9).is_err());
        assert!(gen_blobs(3, 4, 0, 0.5, 9).is_err());
        assert!(gen_blobs(3, 4, 7, 0.0, 9).is_err());
    }

    #[test]
    fn paired_partition_is_disjoint_and_complete() {
        let s = gen_blobs(10, 3, 6, 0.5, 1).unwrap();
        let plan = PartitionPlan::contiguous(5, 2);
        let parts = partition_by_label(&s, &plan).unwrap();
        assert_eq!(parts.len(), 5);
        assert_eq!(parts.values().map(|p| p.rows()).sum::<usize>(), s.rows());
        for (id, part) in &parts {
            let want: BTreeSet<usize> = plan.assignments[id].clone();
            assert_eq!(part.label_set(), want);
        }
    }

    #[test]
    fn single_owner_partition_is_identity() {
        let s = gen_blobs(3, 2, 4, 0.5, 1).unwrap();
        let plan = PartitionPlan::contiguous(1, 3);
        let parts = partition_by_label(&s, &plan).unwrap();
        assert_eq!(parts[&ClientId(1)], s);
    }

    #[test]
    fn row_order_is_preserved() {
        let s = DatasetShard::new(vec![0., 1., 2., 3., 4.], 1, vec![1, 0, 1, 0, 1]).unwrap();
        let plan = PartitionPlan::new(BTreeMap::from([
            (ClientId(1), BTreeSet::from([0])),
            (ClientId(2), BTreeSet::from([1])),
        ]))
        .unwrap();
        let parts = partition_by_label(&s, &plan).unwrap();
        assert_eq!(parts[&ClientId(1)].features(), &[1., 3.]);
        assert_eq!(parts[&ClientId(2)].features(), &[0., 2., 4.]);
    }

    #[test]
    fn partition_errors() {
        let s = DatasetShard::new(vec![0., 1., 2.], 1, vec![0, 1, 2]).unwrap();
        let uncovered = PartitionPlan::contiguous(1, 2);
        assert!(matches!(
            partition_by_label(&s, &uncovered),
            Err(DataError::UncoveredLabel(2))
        ));
        let overlap = PartitionPlan::new(BTreeMap::from([
            (ClientId(1), BTreeSet::from([0, 1])),
            (ClientId(2), BTreeSet::from([1, 2])),
        ]));
        assert!(matches!(overlap, Err(DataError::OverlappingLabel { label: 1, .. })));
        // label 3 has no rows: client 2 ends empty
        let starved = PartitionPlan::new(BTreeMap::from([
            (ClientId(1), BTreeSet::from([0, 1, 2])),
            (ClientId(2), BTreeSet::from([3])),
        ]))
        .unwrap();
        assert!(matches!(
            partition_by_label(&s, &starved),
            Err(DataError::EmptyClientShard(ClientId(2)))
        ));
        // an absent class only shrinks the owner's shard
        let partly = PartitionPlan::new(BTreeMap::from([
            (ClientId(1), BTreeSet::from([0, 1])),
            (ClientId(2), BTreeSet::from([2, 3])),
        ]))
        .unwrap();
        let parts = partition_by_label(&s, &partly).unwrap();
        assert_eq!(parts[&ClientId(2)].rows(), 1);
    }

    #[test]
    fn holdout_split_is_seeded_and_complete() {
        let s = gen_blobs(2, 2, 10, 0.5, 4).unwrap();
        let (train, test) = s.split_holdout(0.2, 11).unwrap();
        assert_eq!(train.rows(), 16);
        assert_eq!(test.rows(), 4);
        let (train2, test2) = s.split_holdout(0.2, 11).unwrap();
        assert_eq!((train, test), (train2, test2));
        let one = DatasetShard::new(vec![1.0], 1, vec![0]).unwrap();
        assert!(one.split_holdout(0.2, 1).is_err());
    }

    #[test]
    fn empty_shard_rejected() {
        assert!(matches!(
            DatasetShard::new(vec![], 3, vec![]),
            Err(DataError::EmptyShard)
        ));
        assert!(DatasetShard::new(vec![1.0, 2.0], 3, vec![0]).is_err());
    }
}
