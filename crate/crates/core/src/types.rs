//! Shared data types: sparse instances, label vectors, datasets and support sets.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// A document in `R^D`, stored as strictly increasing `(index, value)` pairs.
///
/// Zero values are never stored; non-finite values are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseInstance {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseInstance {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInstance("dimension must be positive".into()));
        }
        let mut indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut previous: Option<usize> = None;
        for (index, value) in entries {
            if index >= dim {
                return Err(Error::InvalidInstance(format!(
                    "feature index {index} out of range for dimension {dim}"
                )));
            }
            if let Some(p) = previous {
                if index <= p {
                    return Err(Error::InvalidInstance(format!(
                        "feature indices not strictly increasing ({p} then {index})"
                    )));
                }
            }
            if !value.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "non-finite value {value} at index {index}"
                )));
            }
            previous = Some(index);
            if value != 0.0 {
                indices.push(index);
                values.push(value);
            }
        }
        Ok(Self {
            dim,
            indices,
            values,
        })
    }

    /// Builds an instance from a dense vector, dropping zeros.
    pub fn from_dense(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), values.iter().copied().enumerate().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Dot product with a dense weight vector of length at least `dim`.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(j, v)| v * dense[j]).sum()
    }

    /// Returns a copy living in dimension `dim + extra_dim`, with `extra`
    /// entries (offsets relative to the old dimension) appended.
    pub fn extended(&self, extra_dim: usize, extra: &[(usize, f64)]) -> Result<Self> {
        let mut entries: Vec<(usize, f64)> = self.iter().collect();
        entries.extend(extra.iter().map(|&(j, v)| (self.dim + j, v)));
        Self::new(self.dim + extra_dim, entries)
    }
}

/// A label combination `y ∈ {0,1}^L`, stored as a sorted set of label ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_labels: usize,
}

impl LabelVector {
    /// Builds a label vector; ids may arrive in any order but must be unique and `< num_labels`.
    pub fn new(num_labels: usize, ids: impl IntoIterator<Item = usize>) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::InvalidLabels("label space must be non-empty".into()));
        }
        let mut labels: Vec<usize> = ids.into_iter().collect();
        labels.sort_unstable();
        for w in labels.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidLabels(format!("duplicate label id {}", w[0])));
            }
        }
        if let Some(&last) = labels.last() {
            if last >= num_labels {
                return Err(Error::InvalidLabels(format!(
                    "label id {last} out of range for {num_labels} labels"
                )));
            }
        }
        Ok(Self { labels, num_labels })
    }

    pub fn empty(num_labels: usize) -> Self {
        Self {
            labels: Vec::new(),
            num_labels,
        }
    }

    pub fn full(num_labels: usize) -> Self {
        Self {
            labels: (0..num_labels).collect(),
            num_labels,
        }
    }

    /// Label vector whose bit `l` of `mask` says whether label `l` is present.
    pub fn from_mask(num_labels: usize, mask: u64) -> Self {
        debug_assert!(num_labels <= 64);
        Self {
            labels: (0..num_labels).filter(|l| mask >> l & 1 == 1).collect(),
            num_labels,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        Self {
            labels: bits
                .iter()
                .enumerate()
                .filter_map(|(l, &b)| b.then_some(l))
                .collect(),
            num_labels: bits.len(),
        }
    }

    pub fn to_mask(&self) -> u64 {
        self.labels.iter().fold(0u64, |m, &l| m | 1 << l)
    }

    pub fn to_bits(&self) -> Vec<bool> {
        let mut bits = vec![false; self.num_labels];
        for &l in &self.labels {
            bits[l] = true;
        }
        bits
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// `|y| = ||y||_1`.
    pub fn cardinality(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    /// Number of labels present in both vectors.
    pub fn intersection_size(&self, other: &LabelVector) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.labels.len() && j < other.labels.len() {
            match self.labels[i].cmp(&other.labels[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// Comma-joined sorted ids; the empty vector maps to the empty string.
    pub fn canonical_key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// `|y|` as a free function.
pub fn cardinality(y: &LabelVector) -> usize {
    y.cardinality()
}

/// A multi-label training or test set.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelDataset {
    instances: Vec<SparseInstance>,
    labels: Vec<LabelVector>,
    num_features: usize,
    num_labels: usize,
    label_names: Option<Vec<String>>,
    feature_names: Option<Vec<String>>,
}

impl MultiLabelDataset {
    pub fn new(
        instances: Vec<SparseInstance>,
        labels: Vec<LabelVector>,
        num_features: usize,
        num_labels: usize,
    ) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::InvalidDataset("dataset has no rows".into()));
        }
        if instances.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} instances but {} label vectors",
                instances.len(),
                labels.len()
            )));
        }
        for (i, x) in instances.iter().enumerate() {
            if x.dim() != num_features {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has dimension {} instead of {num_features}",
                    x.dim()
                )));
            }
        }
        for (i, y) in labels.iter().enumerate() {
            if y.num_labels() != num_labels {
                return Err(Error::InvalidDataset(format!(
                    "row {i} has label space {} instead of {num_labels}",
                    y.num_labels()
                )));
            }
        }
        Ok(Self {
            instances,
            labels,
            num_features,
            num_labels,
            label_names: None,
            feature_names: None,
        })
    }

    pub fn with_label_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_labels {
            return Err(Error::InvalidDataset(format!(
                "{} label names for {} labels",
                names.len(),
                self.num_labels
            )));
        }
        self.label_names = Some(names);
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_features {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} features",
                names.len(),
                self.num_features
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[SparseInstance] {
        &self.instances
    }

    pub fn labels(&self) -> &[LabelVector] {
        &self.labels
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn label_names(&self) -> Option<&[String]> {
        self.label_names.as_deref()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SparseInstance, &LabelVector)> {
        self.instances.iter().zip(self.labels.iter())
    }

    /// Rows at `rows`, in that order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let mut out = Self::new(
            rows.iter().map(|&i| self.instances[i].clone()).collect(),
            rows.iter().map(|&i| self.labels[i].clone()).collect(),
            self.num_features,
            self.num_labels,
        )?;
        out.label_names = self.label_names.clone();
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }
}

/// Distinct label combinations observed in a dataset, with occurrence counts.
///
/// Combinations are kept sorted by canonical key.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    combinations: Vec<LabelVector>,
    counts: Vec<usize>,
    total_count: usize,
    index: HashMap<String, usize>,
}

impl SupportSet {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a LabelVector>) -> Self {
        let mut counts: HashMap<String, (LabelVector, usize)> = HashMap::new();
        for y in labels {
            counts
                .entry(y.canonical_key())
                .or_insert_with(|| (y.clone(), 0))
                .1 += 1;
        }
        Self::from_counted(counts.into_values().collect())
    }

    /// Builds a support set from `(combination, count)` pairs; duplicate
    /// combinations have their counts merged and zero counts are dropped.
    pub fn from_counted(pairs: Vec<(LabelVector, usize)>) -> Self {
        let mut merged: HashMap<String, (LabelVector, usize)> = HashMap::new();
        for (y, c) in pairs.into_iter().filter(|(_, c)| *c > 0) {
            merged.entry(y.canonical_key()).or_insert_with(|| (y, 0)).1 += c;
        }
        let mut entries: Vec<(String, LabelVector, usize)> =
            merged.into_iter().map(|(k, (y, c))| (k, y, c)).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut combinations = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (key, y, c)) in entries.into_iter().enumerate() {
            index.insert(key, i);
            combinations.push(y);
            counts.push(c);
        }
        let total_count = counts.iter().sum();
        Self {
            combinations,
            counts,
            total_count,
            index,
        }
    }

    /// All `2^L` combinations, each with count 1.
    pub fn all_combinations(num_labels: usize) -> Result<Self> {
        if num_labels > 20 {
            return Err(Error::TooManyLabels(num_labels, 20));
        }
        Ok(Self::from_counted(
            (0..1u64 << num_labels)
                .map(|m| (LabelVector::from_mask(num_labels, m), 1))
                .collect(),
        ))
    }

    pub fn combinations(&self) -> &[LabelVector] {
        &self.combinations
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total_count(&self) -> usize {
        self.total_count
    }

    pub fn len(&self) -> usize {
        self.combinations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combinations.is_empty()
    }

    pub fn position(&self, y: &LabelVector) -> Option<usize> {
        self.index.get(&y.canonical_key()).copied()
    }

    pub fn contains(&self, y: &LabelVector) -> bool {
        self.position(y).is_some()
    }

    pub fn count(&self, y: &LabelVector) -> usize {
        self.position(y).map_or(0, |i| self.counts[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LabelVector, usize)> {
        self.combinations.iter().zip(self.counts.iter().copied())
    }
}

/// Distinct label vectors of `dataset` with their counts.
pub fn build_support(dataset: &MultiLabelDataset) -> SupportSet {
    SupportSet::from_labels(dataset.labels())
}
