use crate::error::{Error, Result};
use crate::metrics::instance_f1;
use crate::types::LabelVector;

use super::{MarginalMatrix, SupportPosterior};

/// Largest label space the enumeration oracle accepts.
const MAX_ENUMERATION_LABELS: usize = 20;

/// A prediction with its expected F1 under the input distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct FPrediction {
    pub labels: LabelVector,
    pub expected_f1: f64,
    /// `|labels|`.
    pub cardinality: usize,
}

/// General F-measure maximizer.
///
/// With `Δ[l][s] = Σ_k p(y_l = 1, |y| = k) · 2 / (s + k)`, the best
/// prediction of size `s` holds the `s` labels of largest `Δ[·][s]` and its
/// expected F1 is their sum; the empty prediction scores `p(y = ∅)`. Ties go
/// to smaller label ids and then to smaller `s`.
pub fn gfm(m: &MarginalMatrix) -> FPrediction {
    let l = m.num_labels();
    let mut best = FPrediction {
        labels: LabelVector::empty(l),
        expected_f1: m.p_empty(),
        cardinality: 0,
    };
    let mut delta = vec![0.0; l];
    let mut order: Vec<usize> = (0..l).collect();
    for s in 1..=l {
        for (label, d) in delta.iter_mut().enumerate() {
            *d = m
                .row(label)
                .iter()
                .enumerate()
                .map(|(k, &p)| p * 2.0 / (s + k + 1) as f64)
                .sum();
        }
        order.sort_by(|&a, &b| delta[b].total_cmp(&delta[a]).then(a.cmp(&b)));
        let value: f64 = order[..s].iter().map(|&label| delta[label]).sum();
        if value > best.expected_f1 {
            best = FPrediction {
                labels: LabelVector::new(l, order[..s].iter().copied()).expect("distinct label ids"),
                expected_f1: value,
                cardinality: s,
            };
        }
    }
    best
}

/// `Σ_y p(y) F(y, candidate)` by enumerating the posterior.
pub fn brute_force_expected_f1(post: &SupportPosterior, candidate: &LabelVector) -> Result<f64> {
    if post.num_labels() > MAX_ENUMERATION_LABELS {
        return Err(Error::TooManyLabels(post.num_labels(), MAX_ENUMERATION_LABELS));
    }
    if candidate.num_labels() != post.num_labels() {
        return Err(Error::LabelSpaceMismatch {
            expected: post.num_labels(),
            actual: candidate.num_labels(),
        });
    }
    Ok(post.iter().map(|(y, p)| p * instance_f1(y, candidate)).sum())
}

/// Exhaustive argmax of the expected F1 over all `2^L` candidates (smallest
/// bit mask among exact ties).
pub fn brute_force_best(post: &SupportPosterior) -> Result<FPrediction> {
    let l = post.num_labels();
    if l > MAX_ENUMERATION_LABELS {
        return Err(Error::TooManyLabels(l, MAX_ENUMERATION_LABELS));
    }
    let mut best: Option<FPrediction> = None;
    for mask in 0..1u64 << l {
        let candidate = LabelVector::from_mask(l, mask);
        let value = brute_force_expected_f1(post, &candidate)?;
        if best.as_ref().is_none_or(|b| value > b.expected_f1) {
            best = Some(FPrediction {
                cardinality: candidate.cardinality(),
                labels: candidate,
                expected_f1: value,
            });
        }
    }
    Ok(best.expect("at least one candidate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpredict::{marginals_from_posterior, support_map};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lv(l: usize, ids: &[usize]) -> LabelVector {
        LabelVector::new(l, ids.iter().copied()).unwrap()
    }

    fn toy() -> SupportPosterior {
        SupportPosterior::new(vec![lv(3, &[0]), lv(3, &[1]), lv(3, &[2])], vec![0.5, 0.4, 0.1]).unwrap()
    }

    fn random_posterior(rng: &mut ChaCha8Rng, l: usize) -> SupportPosterior {
        let combos: Vec<LabelVector> = (0..1u64 << l).map(|m| LabelVector::from_mask(l, m)).collect();
        // sparse-ish weights so that some posteriors are peaked
        let raw: Vec<f64> = combos.iter().map(|_| rng.gen::<f64>().powi(4)).collect();
        let total: f64 = raw.iter().sum();
        SupportPosterior::new(combos, raw.iter().map(|r| r / total).collect()).unwrap()
    }

    #[test]
    fn toy_example() {
        let post = toy();
        let pred = gfm(&marginals_from_posterior(&post));
        assert_eq!(pred.labels, lv(3, &[0, 1]));
        assert_eq!(pred.cardinality, 2);
        assert!((pred.expected_f1 - 0.6).abs() < 1e-12);
        // the prediction lies outside the support
        assert_eq!(post.probability(&pred.labels), 0.0);
        assert!((brute_force_expected_f1(&post, &lv(3, &[0, 1])).unwrap() - 0.6).abs() < 1e-12);
        assert!((brute_force_expected_f1(&post, &support_map(&post)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_truth_gives_empty_prediction() {
        let post = SupportPosterior::new(vec![LabelVector::empty(3)], vec![1.0]).unwrap();
        let pred = gfm(&marginals_from_posterior(&post));
        assert!(pred.labels.is_empty());
        assert_eq!(pred.expected_f1, 1.0);
        assert_eq!(brute_force_expected_f1(&post, &LabelVector::empty(3)).unwrap(), 1.0);
    }

    #[test]
    fn point_mass() {
        let y = lv(4, &[1, 3]);
        let post = SupportPosterior::new(vec![y.clone()], vec![1.0]).unwrap();
        assert_eq!(brute_force_expected_f1(&post, &y).unwrap(), 1.0);
        assert_eq!(gfm(&marginals_from_posterior(&post)).labels, y);
    }

    #[test]
    fn matches_brute_force_and_beats_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..200 {
            let l = 1 + case % 8;
            let post = random_posterior(&mut rng, l);
            let pred = gfm(&marginals_from_posterior(&post));
            let oracle = brute_force_best(&post).unwrap();
            assert!((pred.expected_f1 - oracle.expected_f1).abs() < 1e-9, "L={l}");
            let achieved = brute_force_expected_f1(&post, &pred.labels).unwrap();
            assert!((achieved - pred.expected_f1).abs() < 1e-9);
            let map = brute_force_expected_f1(&post, &support_map(&post)).unwrap();
            assert!(achieved >= map - 1e-12);
        }
    }

    #[test]
    fn ties_prefer_smaller_ids_and_sizes() {
        // uniform over the singletons: every s = 1 choice ties
        let post = SupportPosterior::new(vec![lv(3, &[0]), lv(3, &[1]), lv(3, &[2])], vec![1.0 / 3.0; 3]).unwrap();
        let pred = gfm(&marginals_from_posterior(&post));
        let oracle = brute_force_best(&post).unwrap();
        assert!((pred.expected_f1 - oracle.expected_f1).abs() < 1e-12);
        assert_eq!(pred.labels.labels()[0], 0);
    }

    #[test]
    fn enumeration_bound() {
        let post = SupportPosterior::new(vec![LabelVector::empty(21)], vec![1.0]).unwrap();
        assert!(brute_force_best(&post).is_err());
        assert!(brute_force_expected_f1(&post, &LabelVector::empty(21)).is_err());
    }
}
