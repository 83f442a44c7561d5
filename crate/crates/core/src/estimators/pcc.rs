use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::linreg::{sigmoid, ElasticNetConfig, ElasticNetTrainer, LinearModel, Resumable, TrainingProblem};
use crate::types::{LabelVector, MultiLabelDataset, SparseInstance};

use super::{check_instance, check_labels, log_bernoulli, JointEstimator, TrainerBank};

/// Probabilistic classifier chain.
///
/// The model at chain position `j` predicts label `order[j]` from the `D` input
/// features followed by `j` indicator features for the labels earlier in the
/// chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PccModel {
    order: Vec<usize>,
    models: Vec<LinearModel>,
    num_features: usize,
}

fn check_order(order: &[usize]) -> Result<()> {
    let mut seen = vec![false; order.len()];
    for &l in order {
        if l >= order.len() || std::mem::replace(&mut seen[l], true) {
            return Err(Error::InvalidConfig(format!("{order:?} is not a permutation")));
        }
    }
    Ok(())
}

impl PccModel {
    pub fn new(order: Vec<usize>, models: Vec<LinearModel>) -> Result<Self> {
        check_order(&order)?;
        if order.is_empty() || models.len() != order.len() {
            return Err(Error::InvalidConfig(format!(
                "{} chain models for {} labels",
                models.len(),
                order.len()
            )));
        }
        let num_features = models[0].dim();
        for (j, m) in models.iter().enumerate() {
            if !m.is_binary() {
                return Err(Error::InvalidConfig("chain models must be binary".into()));
            }
            if m.dim() != num_features + j {
                return Err(Error::DimensionMismatch {
                    expected: num_features + j,
                    actual: m.dim(),
                });
            }
        }
        Ok(Self {
            order,
            models,
            num_features,
        })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn models(&self) -> &[LinearModel] {
        &self.models
    }

    /// Per-position logits restricted to the text features.
    fn base_logits(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        check_instance(x, self.num_features)?;
        Ok(self
            .models
            .iter()
            .map(|m| m.intercepts()[0] + x.dot(&m.weights()[0]))
            .collect())
    }

    /// Logit of position `j` given the chain values at positions `< j`.
    fn chain_logit(&self, base: &[f64], j: usize, previous: &[bool]) -> f64 {
        let w = &self.models[j].weights()[0][self.num_features..];
        base[j]
            + previous[..j]
                .iter()
                .zip(w)
                .filter(|(on, _)| **on)
                .map(|(_, w)| w)
                .sum::<f64>()
    }

    fn log_joint_with(&self, base: &[f64], y: &LabelVector) -> Result<f64> {
        check_labels(y, self.order.len())?;
        let chain: Vec<bool> = self.order.iter().map(|&l| y.contains(l)).collect();
        Ok((0..chain.len())
            .map(|j| {
                let (on, off) = log_bernoulli(self.chain_logit(base, j, &chain));
                if chain[j] {
                    on
                } else {
                    off
                }
            })
            .sum())
    }

    fn chain_to_labels(&self, chain: &[bool]) -> LabelVector {
        let mut bits = vec![false; chain.len()];
        for (j, &on) in chain.iter().enumerate() {
            bits[self.order[j]] = on;
        }
        LabelVector::from_bits(&bits)
    }

    /// `p(y_{order[j]} = 1 | x, previous)` for chain position `j`.
    pub fn conditional(&self, x: &SparseInstance, j: usize, previous: &[bool]) -> Result<f64> {
        if j >= self.order.len() || previous.len() < j {
            return Err(Error::InvalidConfig(format!("invalid chain position {j}")));
        }
        let base = self.base_logits(x)?;
        Ok(sigmoid(self.chain_logit(&base, j, previous)))
    }
}

impl JointEstimator for PccModel {
    fn num_labels(&self) -> usize {
        self.order.len()
    }

    fn num_features(&self) -> usize {
        self.num_features
    }

    fn log_joint(&self, x: &SparseInstance, y: &LabelVector) -> Result<f64> {
        self.log_joint_with(&self.base_logits(x)?, y)
    }

    fn log_joint_many(&self, x: &SparseInstance, ys: &[LabelVector]) -> Result<Vec<f64>> {
        let base = self.base_logits(x)?;
        ys.iter().map(|y| self.log_joint_with(&base, y)).collect()
    }

    fn sample(&self, x: &SparseInstance, rng: &mut dyn RngCore) -> Result<LabelVector> {
        Ok(self.sample_many(x, 1, rng)?.remove(0))
    }

    /// Ancestral sampling along the chain.
    fn sample_many(
        &self,
        x: &SparseInstance,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<LabelVector>> {
        let base = self.base_logits(x)?;
        let l = self.order.len();
        let mut chain = vec![false; l];
        Ok((0..count)
            .map(|_| {
                for j in 0..l {
                    chain[j] = rng.gen::<f64>() < sigmoid(self.chain_logit(&base, j, &chain));
                }
                self.chain_to_labels(&chain)
            })
            .collect())
    }
}

/// Approximate MAP by beam search over the chain, scoring partial assignments
/// by their exact partial log-probability.
///
/// Ties keep the earlier candidate, with label off expanded before label on.
pub fn pcc_map_beam(model: &PccModel, x: &SparseInstance, beam_width: usize) -> Result<LabelVector> {
    if beam_width == 0 {
        return Err(Error::InvalidConfig("beam width must be at least 1".into()));
    }
    let base = model.base_logits(x)?;
    let mut beam: Vec<(Vec<bool>, f64)> = vec![(Vec::with_capacity(model.order.len()), 0.0)];
    for j in 0..model.order.len() {
        let mut next = Vec::with_capacity(beam.len() * 2);
        for (chain, score) in &beam {
            let (on, off) = log_bernoulli(model.chain_logit(&base, j, chain));
            for (bit, lp) in [(false, off), (true, on)] {
                let mut extended = chain.clone();
                extended.push(bit);
                next.push((extended, score + lp));
            }
        }
        next.sort_by(|a, b| b.1.total_cmp(&a.1));
        next.truncate(beam_width);
        beam = next;
    }
    Ok(model.chain_to_labels(&beam[0].0))
}

/// Resumable trainer for all chain positions.
pub struct PccTrainer {
    order: Vec<usize>,
    bank: TrainerBank<'static>,
}

impl PccTrainer {
    /// `order` defaults to the native label order.
    pub fn new(dataset: &MultiLabelDataset, order: Option<&[usize]>, config: &ElasticNetConfig) -> Result<Self> {
        config.validate()?;
        let l = dataset.num_labels();
        let order: Vec<usize> = match order {
            Some(o) if o.len() != l => {
                return Err(Error::InvalidConfig(format!(
                    "chain order has {} entries for {l} labels",
                    o.len()
                )))
            }
            Some(o) => o.to_vec(),
            None => (0..l).collect(),
        };
        check_order(&order)?;
        let trainers = (0..l)
            .map(|j| {
                let rows = dataset
                    .instances()
                    .iter()
                    .zip(dataset.labels())
                    .map(|(x, y)| {
                        let previous: Vec<(usize, f64)> = order[..j]
                            .iter()
                            .enumerate()
                            .filter(|(_, &lab)| y.contains(lab))
                            .map(|(p, _)| (p, 1.0))
                            .collect();
                        x.extended(j, &previous)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let classes: Vec<usize> = dataset.labels().iter().map(|y| usize::from(y.contains(order[j]))).collect();
                ElasticNetTrainer::new(TrainingProblem::hard_owned(rows, &classes, 2)?, *config)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            order,
            bank: TrainerBank::new(trainers, config.max_iterations),
        })
    }

    pub fn model(&self) -> PccModel {
        PccModel::new(self.order.clone(), self.bank.models()).expect("consistent chain models")
    }

    /// Sum of the per-regression penalized objectives.
    pub fn objective(&self) -> f64 {
        self.bank.objective()
    }

    pub fn train(mut self) -> Result<PccModel> {
        self.bank.run_to_end()?;
        Ok(self.model())
    }
}

impl Resumable for PccTrainer {
    type Snapshot = PccModel;

    fn advance(&mut self, iterations: usize) -> Result<()> {
        self.bank.advance(iterations)
    }

    fn iterations(&self) -> usize {
        self.bank.iterations()
    }

    fn is_finished(&self) -> bool {
        self.bank.is_finished()
    }

    fn snapshot(&self) -> PccModel {
        self.model()
    }
}

/// Trains a classifier chain on ground-truth previous labels.
pub fn pcc_train(dataset: &MultiLabelDataset, order: Option<&[usize]>, config: &ElasticNetConfig) -> Result<PccModel> {
    PccTrainer::new(dataset, order, config)?.train()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::br_train;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_pcc(rng: &mut ChaCha8Rng, l: usize, d: usize) -> PccModel {
        let mut order: Vec<usize> = (0..l).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
        let models = (0..l)
            .map(|j| {
                let w: Vec<f64> = (0..d + j).map(|_| rng.gen_range(-2.0..2.0)).collect();
                LinearModel::from_parts(2, d + j, vec![rng.gen_range(-1.0..1.0)], vec![w]).unwrap()
            })
            .collect();
        PccModel::new(order, models).unwrap()
    }

    fn random_x(rng: &mut ChaCha8Rng, d: usize) -> SparseInstance {
        let dense: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        SparseInstance::from_dense(&dense).unwrap()
    }

    #[test]
    fn joint_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pcc = random_pcc(&mut rng, 6, 4);
        let x = random_x(&mut rng, 4);
        let ys: Vec<LabelVector> = (0..64).map(|m| LabelVector::from_mask(6, m)).collect();
        let total: f64 = pcc.log_joint_many(&x, &ys).unwrap().iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wide_beam_is_exact_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let pcc = random_pcc(&mut rng, 5, 3);
            let x = random_x(&mut rng, 3);
            let ys: Vec<LabelVector> = (0..32).map(|m| LabelVector::from_mask(5, m)).collect();
            let scores = pcc.log_joint_many(&x, &ys).unwrap();
            let best = (0..32).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
            let found = pcc_map_beam(&pcc, &x, 32).unwrap();
            assert!((pcc.log_joint(&x, &found).unwrap() - scores[best]).abs() < 1e-12);
        }
    }

    #[test]
    fn width_one_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pcc = random_pcc(&mut rng, 4, 3);
        let x = random_x(&mut rng, 3);
        let mut chain = Vec::new();
        for j in 0..4 {
            let p = pcc.conditional(&x, j, &chain).unwrap();
            chain.push(p > 0.5);
        }
        assert_eq!(pcc_map_beam(&pcc, &x, 1).unwrap(), pcc.chain_to_labels(&chain));
        assert!(pcc_map_beam(&pcc, &x, 0).is_err());
    }

    #[test]
    fn sampling_matches_enumerated_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pcc = random_pcc(&mut rng, 4, 3);
        let x = random_x(&mut rng, 3);
        let m = 50_000;
        let mut counts = [0usize; 16];
        for y in pcc.sample_many(&x, m, &mut rng).unwrap() {
            counts[y.to_mask() as usize] += 1;
        }
        let tv: f64 = (0..16u64)
            .map(|mask| {
                let p = pcc.log_joint(&x, &LabelVector::from_mask(4, mask)).unwrap().exp();
                (counts[mask as usize] as f64 / m as f64 - p).abs()
            })
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
    }

    #[test]
    fn copied_label_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<SparseInstance> = (0..200).map(|_| random_x(&mut rng, 3)).collect();
        let ys: Vec<LabelVector> = xs
            .iter()
            .map(|_| if rng.gen_bool(0.5) { LabelVector::full(2) } else { LabelVector::empty(2) })
            .collect();
        let data = MultiLabelDataset::new(xs.clone(), ys, 3, 2).unwrap();
        let pcc = pcc_train(&data, None, &ElasticNetConfig::new(1e-3, 0.5)).unwrap();
        for x in &xs[..20] {
            assert!(pcc.conditional(x, 1, &[true]).unwrap() >= 0.95);
            assert!(pcc.conditional(x, 1, &[false]).unwrap() <= 0.05);
        }
    }

    #[test]
    fn single_label_chain_equals_br() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let xs: Vec<SparseInstance> = (0..50).map(|_| random_x(&mut rng, 3)).collect();
        let ys: Vec<LabelVector> = xs
            .iter()
            .map(|x| if x.dot(&[2.0, -1.0, 0.0]) > 0.4 { LabelVector::full(1) } else { LabelVector::empty(1) })
            .collect();
        let data = MultiLabelDataset::new(xs, ys, 3, 1).unwrap();
        let config = ElasticNetConfig::new(0.01, 0.3);
        let pcc = pcc_train(&data, Some(&[0]), &config).unwrap();
        let br = br_train(&data, &config).unwrap();
        assert_eq!(pcc.models(), br.models());
    }

    #[test]
    fn rejects_bad_orders() {
        let data = MultiLabelDataset::new(
            vec![SparseInstance::new(2, vec![(0, 1.0)]).unwrap()],
            vec![LabelVector::empty(3)],
            2,
            3,
        )
        .unwrap();
        let config = ElasticNetConfig::default();
        assert!(PccTrainer::new(&data, Some(&[0, 1]), &config).is_err());
        assert!(PccTrainer::new(&data, Some(&[0, 1, 1]), &config).is_err());
        assert!(PccTrainer::new(&data, Some(&[2, 0, 1]), &config).is_ok());
    }
}
