//! Direct estimation of the GFM marginals.
//!
//! `p(y_l = 1, |y| = s | x)` is factored as `p(y_l = 1 | x) · p(|y| = s | x, y_l = 1)`,
//! with one binary model per label, one multinomial cardinality model per
//! label (fit on the rows containing that label) and a binary model for the
//! empty set.

use crate::error::{Error, Result};
use crate::estimators::{check_instance, label_column, BrModel, TrainerBank};
use crate::linreg::{ElasticNetConfig, ElasticNetTrainer, LinearModel, Resumable, TrainingProblem};
use crate::types::{MultiLabelDataset, SparseInstance};

use super::MarginalMatrix;

/// `p(|y| = s | x, y_l = 1)` over `s ∈ [1, L]`.
#[derive(Debug, Clone, PartialEq)]
pub enum CardinalityModel {
    /// Input-independent distribution, used when `L = 1` or the label never
    /// occurs in training.
    Fixed(Vec<f64>),
    /// Logistic regression with class `s - 1` for cardinality `s`.
    Linear(LinearModel),
}

impl CardinalityModel {
    pub fn distribution(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        match self {
            CardinalityModel::Fixed(p) => Ok(p.clone()),
            CardinalityModel::Linear(m) => m.predict_distribution(x),
        }
    }

    fn num_classes(&self) -> usize {
        match self {
            CardinalityModel::Fixed(p) => p.len(),
            CardinalityModel::Linear(m) => m.num_classes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsfModel {
    marginals: BrModel,
    cardinality: Vec<CardinalityModel>,
    empty: LinearModel,
}

impl LsfModel {
    pub fn new(marginals: BrModel, cardinality: Vec<CardinalityModel>, empty: LinearModel) -> Result<Self> {
        let l = marginals.models().len();
        let d = marginals.models()[0].dim();
        if cardinality.len() != l {
            return Err(Error::LabelSpaceMismatch {
                expected: l,
                actual: cardinality.len(),
            });
        }
        for c in &cardinality {
            if c.num_classes() != l {
                return Err(Error::InvalidConfig(format!(
                    "cardinality model has {} classes, expected {l}",
                    c.num_classes()
                )));
            }
            if let CardinalityModel::Linear(m) = c {
                if m.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        actual: m.dim(),
                    });
                }
            }
        }
        if !empty.is_binary() || empty.dim() != d {
            return Err(Error::InvalidConfig("empty-set model must be binary over the same features".into()));
        }
        Ok(Self {
            marginals,
            cardinality,
            empty,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.cardinality.len()
    }

    pub fn num_features(&self) -> usize {
        self.empty.dim()
    }

    pub fn marginal_model(&self) -> &BrModel {
        &self.marginals
    }

    pub fn cardinality_models(&self) -> &[CardinalityModel] {
        &self.cardinality
    }

    pub fn empty_model(&self) -> &LinearModel {
        &self.empty
    }
}

/// Product of the two factors for every label; not a coherent distribution in
/// general.
pub fn lsf_marginals(model: &LsfModel, x: &SparseInstance) -> Result<MarginalMatrix> {
    check_instance(x, model.num_features())?;
    let l = model.num_labels();
    let marginals = model.marginals.marginals(x)?;
    let mut p = Vec::with_capacity(l * l);
    for (m, card) in marginals.iter().zip(&model.cardinality) {
        p.extend(card.distribution(x)?.into_iter().map(|c| m * c));
    }
    Ok(MarginalMatrix::from_parts(l, p, model.empty.positive_probability(x)?))
}

enum CardinalitySlot {
    Fixed(Vec<f64>),
    /// Index into the trainer bank.
    Trained(usize),
}

/// Resumable trainer for every LSF regression.
pub struct LsfTrainer<'a> {
    num_labels: usize,
    num_features: usize,
    bank: TrainerBank<'a>,
    slots: Vec<CardinalitySlot>,
}

impl<'a> LsfTrainer<'a> {
    pub fn new(dataset: &'a MultiLabelDataset, config: &ElasticNetConfig) -> Result<Self> {
        config.validate()?;
        let l = dataset.num_labels();
        let d = dataset.num_features();
        let rows: Vec<&SparseInstance> = dataset.instances().iter().collect();

        // marginal models first, then the empty-set model, sharing columns
        let mut trainers: Vec<ElasticNetTrainer> = Vec::with_capacity(2 * l + 1);
        let zero = LinearModel::zeros(2, d)?;
        for label in 0..=l {
            let classes = if label < l {
                label_column(dataset.labels(), label)
            } else {
                dataset.labels().iter().map(|y| usize::from(y.is_empty())).collect()
            };
            let problem = TrainingProblem::hard(rows.clone(), &classes, 2)?;
            let trainer = match trainers.first() {
                Some(first) => ElasticNetTrainer::with_columns_of(problem, *config, &zero, first)?,
                None => ElasticNetTrainer::new(problem, *config)?,
            };
            trainers.push(trainer);
        }

        let prior = cardinality_prior(dataset);
        let mut slots = Vec::with_capacity(l);
        for label in 0..l {
            let (subset, classes): (Vec<&SparseInstance>, Vec<usize>) = dataset
                .iter()
                .filter(|(_, y)| y.contains(label))
                .map(|(x, y)| (x, y.cardinality() - 1))
                .unzip();
            if l == 1 {
                slots.push(CardinalitySlot::Fixed(vec![1.0]));
            } else if subset.is_empty() {
                slots.push(CardinalitySlot::Fixed(prior.clone()));
            } else {
                let problem = TrainingProblem::hard(subset, &classes, l)?;
                slots.push(CardinalitySlot::Trained(trainers.len()));
                trainers.push(ElasticNetTrainer::new(problem, *config)?);
            }
        }
        Ok(Self {
            num_labels: l,
            num_features: d,
            bank: TrainerBank::new(trainers, config.max_iterations),
            slots,
        })
    }

    pub fn model(&self) -> LsfModel {
        let mut models = self.bank.models();
        let card_models = models.split_off(self.num_labels + 1);
        let empty = models.pop().expect("empty-set model");
        let cardinality = self
            .slots
            .iter()
            .map(|slot| match slot {
                CardinalitySlot::Fixed(p) => CardinalityModel::Fixed(p.clone()),
                CardinalitySlot::Trained(i) => CardinalityModel::Linear(card_models[i - self.num_labels - 1].clone()),
            })
            .collect();
        let marginals = BrModel::new(models).expect("consistent marginal models");
        debug_assert_eq!(marginals.models()[0].dim(), self.num_features);
        LsfModel::new(marginals, cardinality, empty).expect("consistent LSF parts")
    }

    /// Sum of the per-regression penalized objectives.
    pub fn objective(&self) -> f64 {
        self.bank.objective()
    }

    pub fn train(mut self) -> Result<LsfModel> {
        self.bank.run_to_end()?;
        Ok(self.model())
    }
}

impl Resumable for LsfTrainer<'_> {
    type Snapshot = LsfModel;

    fn advance(&mut self, iterations: usize) -> Result<()> {
        self.bank.advance(iterations)
    }

    fn iterations(&self) -> usize {
        self.bank.iterations()
    }

    fn is_finished(&self) -> bool {
        self.bank.is_finished()
    }

    fn snapshot(&self) -> LsfModel {
        self.model()
    }
}

/// Empirical distribution of `|y|` over nonempty training rows (uniform if
/// every row is empty).
fn cardinality_prior(dataset: &MultiLabelDataset) -> Vec<f64> {
    let l = dataset.num_labels();
    let mut counts = vec![0usize; l];
    for y in dataset.labels() {
        if !y.is_empty() {
            counts[y.cardinality() - 1] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![1.0 / l as f64; l];
    }
    counts.into_iter().map(|c| c as f64 / total as f64).collect()
}

/// Trains the marginal, cardinality and empty-set models to convergence.
pub fn lsf_train(dataset: &MultiLabelDataset, config: &ElasticNetConfig) -> Result<LsfModel> {
    LsfTrainer::new(dataset, config)?.train()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LabelVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(rows: Vec<(Vec<f64>, Vec<usize>)>, l: usize) -> MultiLabelDataset {
        let (xs, ys): (Vec<_>, Vec<_>) = rows
            .into_iter()
            .map(|(x, y)| (SparseInstance::from_dense(&x).unwrap(), LabelVector::new(l, y).unwrap()))
            .unzip();
        let d = xs[0].dim();
        MultiLabelDataset::new(xs, ys, d, l).unwrap()
    }

    #[test]
    fn fixed_cardinality_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = (0..300)
            .map(|_| {
                let a = rng.gen_range(0..4);
                let b = (a + rng.gen_range(1..4)) % 4;
                (vec![rng.gen::<f64>(), rng.gen::<f64>()], vec![a, b])
            })
            .collect();
        let data = dataset(rows, 4);
        let model = lsf_train(&data, &ElasticNetConfig::new(1e-3, 0.5)).unwrap();
        let x = SparseInstance::from_dense(&[0.5, 0.5]).unwrap();
        for card in model.cardinality_models() {
            assert!(card.distribution(&x).unwrap()[1] >= 0.9);
        }
        assert!(lsf_marginals(&model, &x).unwrap().p_empty() < 0.05);
    }

    #[test]
    fn single_label_uses_the_marginal() {
        let rows = (0..40).map(|i| (vec![i as f64 / 40.0], if i % 3 == 0 { vec![0] } else { vec![] })).collect();
        let data = dataset(rows, 1);
        let model = lsf_train(&data, &ElasticNetConfig::new(1e-2, 0.5)).unwrap();
        let x = SparseInstance::from_dense(&[0.3]).unwrap();
        let m = lsf_marginals(&model, &x).unwrap();
        let direct = model.marginal_model().marginals(&x).unwrap()[0];
        assert_eq!(m.get(0, 1), direct);
    }

    #[test]
    fn unseen_label_falls_back_to_the_prior() {
        // label 2 never occurs; observed cardinalities are 1 (3 rows) and 2 (1 row)
        let rows = vec![
            (vec![1.0], vec![0]),
            (vec![0.0], vec![1]),
            (vec![1.0], vec![0]),
            (vec![0.5], vec![0, 1]),
            (vec![0.2], vec![]),
        ];
        let model = lsf_train(&dataset(rows, 3), &ElasticNetConfig::default()).unwrap();
        assert_eq!(model.cardinality_models()[2], CardinalityModel::Fixed(vec![0.75, 0.25, 0.0]));
    }

    #[test]
    fn dimension_checked() {
        let rows = vec![(vec![1.0], vec![0]), (vec![0.0], vec![1])];
        let model = lsf_train(&dataset(rows, 2), &ElasticNetConfig::default()).unwrap();
        assert!(lsf_marginals(&model, &SparseInstance::from_dense(&[1.0, 2.0]).unwrap()).is_err());
    }
}
