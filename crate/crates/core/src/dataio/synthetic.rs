//! Clustered multi-label data with known structure.
//!
//! Every row belongs to one of `K` latent clusters. A cluster owns a label set
//! and a block of relevant features; a row draws `features_per_row` feature
//! occurrences, each from its cluster's block with probability
//! `signal_fraction` and uniformly from all features otherwise, and stores the
//! occurrence counts scaled to unit Euclidean norm. A cluster may also own a
//! few optional labels outside its set, each switched on independently with
//! probability `optional_label_rate`. Every resulting bit is then flipped with
//! probability `noise_rate`. Noise features belong to no cluster.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{LabelVector, MultiLabelDataset, SparseInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub l: usize,
    /// Number of latent clusters.
    pub k_true: usize,
    pub noise_rate: f64,
    pub irrelevant_feature_fraction: f64,
    pub seed: u64,
    /// Upper bound on the size of a cluster's label set.
    pub max_labels_per_cluster: usize,
    pub features_per_row: usize,
    pub signal_fraction: f64,
    /// Extra labels per cluster that appear at random.
    pub optional_labels_per_cluster: usize,
    pub optional_label_rate: f64,
}

impl SyntheticSpec {
    pub fn new(n: usize, d: usize, l: usize, k_true: usize) -> Self {
        Self {
            n,
            d,
            l,
            k_true,
            noise_rate: 0.05,
            irrelevant_feature_fraction: 0.5,
            seed: 0,
            max_labels_per_cluster: 3,
            features_per_row: 20,
            signal_fraction: 0.6,
            optional_labels_per_cluster: 0,
            optional_label_rate: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 || self.d == 0 || self.l == 0 || self.k_true == 0 {
            return bad("n, d, l and k_true must be positive".into());
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} must lie in [0, 1)", self.noise_rate));
        }
        if !(0.0..1.0).contains(&self.irrelevant_feature_fraction) {
            return bad(format!(
                "irrelevant_feature_fraction {} must lie in [0, 1)",
                self.irrelevant_feature_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.signal_fraction) {
            return bad(format!("signal_fraction {} must lie in [0, 1]", self.signal_fraction));
        }
        if !(0.0..=1.0).contains(&self.optional_label_rate) {
            return bad(format!("optional_label_rate {} must lie in [0, 1]", self.optional_label_rate));
        }
        if self.max_labels_per_cluster.min(self.l) + self.optional_labels_per_cluster > self.l {
            return bad("optional labels do not fit beside the largest label set".into());
        }
        if self.max_labels_per_cluster == 0 || self.features_per_row == 0 {
            return bad("max_labels_per_cluster and features_per_row must be positive".into());
        }
        if self.d - self.noise_feature_count() < self.k_true {
            return bad("fewer relevant features than clusters".into());
        }
        let m = self.max_labels_per_cluster.min(self.l);
        let distinct_sets: f64 = (1..=m).map(|s| binomial(self.l, s)).sum();
        if (self.k_true as f64) > distinct_sets {
            return bad(format!(
                "{} clusters cannot have distinct label sets of size at most {m} over {} labels",
                self.k_true, self.l
            ));
        }
        Ok(())
    }

    /// `round(irrelevant_feature_fraction · d)`.
    pub fn noise_feature_count(&self) -> usize {
        (self.irrelevant_feature_fraction * self.d as f64).round() as usize
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Generator state behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub cluster_ids: Vec<usize>,
    /// Distinct, nonempty.
    pub cluster_labels: Vec<LabelVector>,
    /// Disjoint from the cluster's set.
    pub cluster_optional: Vec<LabelVector>,
    pub optional_label_rate: f64,
    /// Sorted feature block of each cluster.
    pub cluster_features: Vec<Vec<usize>>,
    /// Sorted.
    pub noise_features: Vec<usize>,
    pub noise_rate: f64,
}

impl GroundTruth {
    pub fn is_relevant(&self, feature: usize) -> bool {
        self.noise_features.binary_search(&feature).is_err()
    }

    /// `p(y_l = 1)` given the row's true cluster.
    pub fn true_marginals(&self, row: usize) -> Vec<f64> {
        let k = self.cluster_ids[row];
        let (y, optional) = (&self.cluster_labels[k], &self.cluster_optional[k]);
        (0..y.num_labels())
            .map(|l| {
                let on = if y.contains(l) {
                    1.0
                } else if optional.contains(l) {
                    self.optional_label_rate
                } else {
                    0.0
                };
                on * (1.0 - self.noise_rate) + (1.0 - on) * self.noise_rate
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: MultiLabelDataset,
    pub truth: GroundTruth,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut features: Vec<usize> = (0..spec.d).collect();
    features.shuffle(&mut rng);
    let relevant = features.split_off(spec.noise_feature_count());
    let mut noise_features = features;
    noise_features.sort_unstable();

    let mut cluster_features = vec![Vec::new(); spec.k_true];
    for (i, &j) in relevant.iter().enumerate() {
        cluster_features[i % spec.k_true].push(j);
    }
    for block in &mut cluster_features {
        block.sort_unstable();
    }

    let max_size = spec.max_labels_per_cluster.min(spec.l);
    let mut cluster_labels: Vec<LabelVector> = Vec::with_capacity(spec.k_true);
    while cluster_labels.len() < spec.k_true {
        let size = rng.gen_range(1..=max_size);
        let y = LabelVector::new(spec.l, index::sample(&mut rng, spec.l, size))?;
        if !cluster_labels.contains(&y) {
            cluster_labels.push(y);
        }
    }

    let cluster_optional: Vec<LabelVector> = cluster_labels
        .iter()
        .map(|y| {
            let mut outside: Vec<usize> = (0..spec.l).filter(|&l| !y.contains(l)).collect();
            if spec.optional_labels_per_cluster > 0 {
                outside.shuffle(&mut rng);
            }
            outside.truncate(spec.optional_labels_per_cluster);
            LabelVector::new(spec.l, outside)
        })
        .collect::<Result<_>>()?;

    let mut instances = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    let mut cluster_ids = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let k = rng.gen_range(0..spec.k_true);
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for _ in 0..spec.features_per_row {
            let j = if rng.gen::<f64>() < spec.signal_fraction {
                cluster_features[k][rng.gen_range(0..cluster_features[k].len())]
            } else {
                rng.gen_range(0..spec.d)
            };
            *counts.entry(j).or_default() += 1.0;
        }
        let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
        instances.push(SparseInstance::new(spec.d, counts.into_iter().map(|(j, c)| (j, c / norm)).collect())?);
        let bits: Vec<bool> = (0..spec.l)
            .map(|l| {
                let on = cluster_labels[k].contains(l)
                    || (cluster_optional[k].contains(l) && rng.gen::<f64>() < spec.optional_label_rate);
                on ^ (rng.gen::<f64>() < spec.noise_rate)
            })
            .collect();
        labels.push(LabelVector::from_bits(&bits));
        cluster_ids.push(k);
    }

    Ok(SyntheticData {
        dataset: MultiLabelDataset::new(instances, labels, spec.d, spec.l)?,
        truth: GroundTruth {
            cluster_ids,
            cluster_labels,
            cluster_optional,
            optional_label_rate: spec.optional_label_rate,
            cluster_features,
            noise_features,
            noise_rate: spec.noise_rate,
        },
    })
}
