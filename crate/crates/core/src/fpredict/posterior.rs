use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::estimators::JointEstimator;
use crate::linreg::log_sum_exp;
use crate::types::{LabelVector, SparseInstance, SupportSet};

/// A normalized distribution over a list of distinct label combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPosterior {
    num_labels: usize,
    combinations: Vec<LabelVector>,
    probabilities: Vec<f64>,
}

impl SupportPosterior {
    /// Probabilities must be nonnegative and sum to 1 within `1e-9`; they are
    /// rescaled to sum to 1 exactly (up to rounding).
    pub fn new(combinations: Vec<LabelVector>, probabilities: Vec<f64>) -> Result<Self> {
        let num_labels = Self::check(&combinations, probabilities.len())?;
        if probabilities.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidConfig("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self {
            num_labels,
            combinations,
            probabilities: probabilities.into_iter().map(|p| p / total).collect(),
        })
    }

    /// Softmax of unnormalized log scores, computed with max-subtraction.
    pub fn from_log_scores(combinations: Vec<LabelVector>, log_scores: &[f64]) -> Result<Self> {
        let num_labels = Self::check(&combinations, log_scores.len())?;
        let lse = log_sum_exp(log_scores);
        if !lse.is_finite() {
            return Err(Error::NonFiniteObjective(format!("log partition function {lse}")));
        }
        Ok(Self {
            num_labels,
            combinations,
            probabilities: log_scores.iter().map(|s| (s - lse).exp()).collect(),
        })
    }

    fn check(combinations: &[LabelVector], count: usize) -> Result<usize> {
        let first = combinations
            .first()
            .ok_or_else(|| Error::Empty("posterior has no combinations".into()))?;
        if count != combinations.len() {
            return Err(Error::InvalidConfig(format!(
                "{} combinations but {count} probabilities",
                combinations.len()
            )));
        }
        let mut seen = HashSet::with_capacity(combinations.len());
        for y in combinations {
            if y.num_labels() != first.num_labels() {
                return Err(Error::LabelSpaceMismatch {
                    expected: first.num_labels(),
                    actual: y.num_labels(),
                });
            }
            if !seen.insert(y) {
                return Err(Error::InvalidConfig(format!("duplicate combination {{{y}}}")));
            }
        }
        Ok(first.num_labels())
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn combinations(&self) -> &[LabelVector] {
        &self.combinations
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.combinations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combinations.is_empty()
    }

    /// Posterior probability of `y` (0 if not listed).
    pub fn probability(&self, y: &LabelVector) -> f64 {
        self.combinations
            .iter()
            .position(|c| c == y)
            .map_or(0.0, |i| self.probabilities[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LabelVector, f64)> {
        self.combinations.iter().zip(self.probabilities.iter().copied())
    }
}

/// `p(y|x)` renormalized over the combinations of `support`.
pub fn support_posterior(
    estimator: &dyn JointEstimator,
    x: &SparseInstance,
    support: &SupportSet,
) -> Result<SupportPosterior> {
    if support.is_empty() {
        return Err(Error::Empty("support is empty".into()));
    }
    let scores = estimator.log_joint_many(x, support.combinations())?;
    SupportPosterior::from_log_scores(support.combinations().to_vec(), &scores)
}

/// The most probable combination; ties go to the smallest canonical key.
pub fn support_map(post: &SupportPosterior) -> LabelVector {
    let mut best: Option<(&LabelVector, f64, String)> = None;
    for (y, p) in post.iter() {
        let better = match &best {
            None => true,
            Some((_, bp, key)) => p > *bp || (p == *bp && y.canonical_key() < *key),
        };
        if better {
            best = Some((y, p, y.canonical_key()));
        }
    }
    best.expect("posterior is nonempty").0.clone()
}

/// `p(y_l = 1, |y| = s | x)` for `s ∈ [1, L]`, plus `p(y = ∅ | x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalMatrix {
    num_labels: usize,
    /// Row-major `L × L`: entry `(l, s - 1)`.
    p: Vec<f64>,
    p_empty: f64,
}

impl MarginalMatrix {
    /// `rows[l][s - 1] = p(y_l = 1, |y| = s | x)`.
    pub fn new(rows: Vec<Vec<f64>>, p_empty: f64) -> Result<Self> {
        let l = rows.len();
        if l == 0 {
            return Err(Error::Empty("marginal matrix has no labels".into()));
        }
        if rows.iter().any(|r| r.len() != l) {
            return Err(Error::InvalidConfig("marginal matrix must be L × L".into()));
        }
        let p: Vec<f64> = rows.into_iter().flatten().collect();
        if p.iter().chain(std::iter::once(&p_empty)).any(|v| !(0.0..=1.0 + 1e-12).contains(v)) {
            return Err(Error::InvalidConfig("marginal entries must lie in [0, 1]".into()));
        }
        Ok(Self {
            num_labels: l,
            p,
            p_empty,
        })
    }

    pub(crate) fn from_parts(num_labels: usize, p: Vec<f64>, p_empty: f64) -> Self {
        Self {
            num_labels,
            p,
            p_empty,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// `p(y_l = 1, |y| = s | x)` with `s` 1-based.
    pub fn get(&self, label: usize, s: usize) -> f64 {
        assert!(label < self.num_labels && (1..=self.num_labels).contains(&s));
        self.p[label * self.num_labels + s - 1]
    }

    pub fn row(&self, label: usize) -> &[f64] {
        &self.p[label * self.num_labels..(label + 1) * self.num_labels]
    }

    pub fn p_empty(&self) -> f64 {
        self.p_empty
    }

    /// `q_s = (Σ_l p(y_l = 1, |y| = s)) / s`, the probability of cardinality `s ≥ 1`.
    pub fn cardinality_probability(&self, s: usize) -> f64 {
        (0..self.num_labels).map(|l| self.get(l, s)).sum::<f64>() / s as f64
    }
}

/// Exact marginals of a posterior (which need not be support-restricted).
pub fn marginals_from_posterior(post: &SupportPosterior) -> MarginalMatrix {
    let l = post.num_labels();
    let mut p = vec![0.0; l * l];
    let mut p_empty = 0.0;
    for (y, prob) in post.iter() {
        let s = y.cardinality();
        if s == 0 {
            p_empty += prob;
            continue;
        }
        for &label in y.labels() {
            p[label * l + s - 1] += prob;
        }
    }
    MarginalMatrix::from_parts(l, p, p_empty)
}

/// Empirical marginals of raw (not deduplicated) draws.
pub fn marginals_from_samples(samples: &[LabelVector], num_labels: usize) -> Result<MarginalMatrix> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    if num_labels == 0 {
        return Err(Error::InvalidConfig("label space is empty".into()));
    }
    let l = num_labels;
    let mut counts = vec![0usize; l * l];
    let mut empty = 0usize;
    for y in samples {
        if y.num_labels() != l {
            return Err(Error::LabelSpaceMismatch {
                expected: l,
                actual: y.num_labels(),
            });
        }
        let s = y.cardinality();
        if s == 0 {
            empty += 1;
        }
        for &label in y.labels() {
            counts[label * l + s - 1] += 1;
        }
    }
    let m = samples.len() as f64;
    Ok(MarginalMatrix::from_parts(
        l,
        counts.into_iter().map(|c| c as f64 / m).collect(),
        empty as f64 / m,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::BrModel;
    use crate::linreg::LinearModel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lv(l: usize, ids: &[usize]) -> LabelVector {
        LabelVector::new(l, ids.iter().copied()).unwrap()
    }

    fn toy() -> SupportPosterior {
        // labels {1}, {2}, {3} as ids 0, 1, 2
        SupportPosterior::new(vec![lv(3, &[0]), lv(3, &[1]), lv(3, &[2])], vec![0.5, 0.4, 0.1]).unwrap()
    }

    fn intercept_br(probs: &[f64]) -> BrModel {
        BrModel::new(
            probs
                .iter()
                .map(|p| LinearModel::from_parts(2, 1, vec![(p / (1.0 - p)).ln()], vec![vec![0.0]]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn toy_marginals() {
        let m = marginals_from_posterior(&toy());
        for (l, expected) in [0.5, 0.4, 0.1].into_iter().enumerate() {
            assert_eq!(m.get(l, 1), expected);
            assert_eq!(m.get(l, 2), 0.0);
            assert_eq!(m.get(l, 3), 0.0);
        }
        assert_eq!(m.p_empty(), 0.0);
        assert_eq!(support_map(&toy()), lv(3, &[0]));
    }

    #[test]
    fn all_mass_on_empty_set() {
        let post = SupportPosterior::new(vec![LabelVector::empty(4)], vec![1.0]).unwrap();
        let m = marginals_from_posterior(&post);
        assert_eq!(m.p_empty(), 1.0);
        assert!((0..4).all(|l| m.row(l).iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn matches_double_loop_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = 5;
        let combos: Vec<LabelVector> = (0..1u64 << l).map(|m| LabelVector::from_mask(l, m)).collect();
        let raw: Vec<f64> = combos.iter().map(|_| rng.gen::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let post = SupportPosterior::new(combos.clone(), raw.iter().map(|r| r / total).collect()).unwrap();
        let m = marginals_from_posterior(&post);
        for label in 0..l {
            for s in 1..=l {
                let mut expected = 0.0;
                for (y, p) in post.iter() {
                    if y.contains(label) && y.cardinality() == s {
                        expected += p;
                    }
                }
                assert_eq!(m.get(label, s), expected);
            }
        }
        let q: f64 = (1..=l).map(|s| m.cardinality_probability(s)).sum();
        assert!((q + m.p_empty() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sample_marginals() {
        let samples = vec![lv(3, &[0, 1]); 7];
        let m = marginals_from_samples(&samples, 3).unwrap();
        assert_eq!((m.get(0, 2), m.get(1, 2)), (1.0, 1.0));
        assert_eq!(m.get(2, 2), 0.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert!(marginals_from_samples(&[], 3).is_err());
        assert!(marginals_from_samples(&[lv(2, &[0])], 3).is_err());
    }

    #[test]
    fn posterior_over_support() {
        let x = SparseInstance::new(1, vec![]).unwrap();
        let br = intercept_br(&[0.5, 0.5]);
        let support = SupportSet::from_labels([&lv(2, &[0]), &lv(2, &[0, 1])]);
        let post = support_posterior(&br, &x, &support).unwrap();
        for p in post.probabilities() {
            assert!((p - 0.5).abs() < 1e-15);
        }
        let single = SupportSet::from_labels([&lv(2, &[1])]);
        assert_eq!(support_posterior(&br, &x, &single).unwrap().probabilities(), &[1.0]);
    }

    #[test]
    fn posterior_matches_naive_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let probs: Vec<f64> = (0..6).map(|_| rng.gen_range(0.05..0.95)).collect();
        let br = intercept_br(&probs);
        let x = SparseInstance::new(1, vec![]).unwrap();
        let picked: Vec<LabelVector> = (0..10).map(|_| LabelVector::from_mask(6, rng.gen_range(0..64))).collect();
        let support = SupportSet::from_labels(picked.iter());
        let post = support_posterior(&br, &x, &support).unwrap();
        let naive: Vec<f64> = support
            .combinations()
            .iter()
            .map(|y| (0..6).map(|l| if y.contains(l) { probs[l] } else { 1.0 - probs[l] }).product())
            .collect();
        let z: f64 = naive.iter().sum();
        for (p, n) in post.probabilities().iter().zip(&naive) {
            assert!((p - n / z).abs() < 1e-12);
        }
    }

    #[test]
    fn shifting_scores_leaves_posterior_unchanged() {
        let combos = vec![lv(2, &[0]), lv(2, &[1]), lv(2, &[])];
        let a = SupportPosterior::from_log_scores(combos.clone(), &[-1.0, -2.0, -0.5]).unwrap();
        let b = SupportPosterior::from_log_scores(combos, &[-1.0 + 700.0, -2.0 + 700.0, -0.5 + 700.0]).unwrap();
        for (p, q) in a.probabilities().iter().zip(b.probabilities()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn map_tie_prefers_smallest_key() {
        let post = SupportPosterior::new(vec![lv(2, &[1]), lv(2, &[0])], vec![0.5, 0.5]).unwrap();
        assert_eq!(support_map(&post), lv(2, &[0]));
    }

    #[test]
    fn invalid_posteriors() {
        assert!(SupportPosterior::new(vec![], vec![]).is_err());
        assert!(SupportPosterior::new(vec![lv(2, &[0]), lv(2, &[0])], vec![0.5, 0.5]).is_err());
        assert!(SupportPosterior::new(vec![lv(2, &[0])], vec![0.7]).is_err());
        assert!(SupportPosterior::new(vec![lv(2, &[0]), lv(3, &[0])], vec![0.5, 0.5]).is_err());
    }
}
