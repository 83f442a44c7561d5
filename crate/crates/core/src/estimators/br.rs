use rand::RngCore;

use crate::error::{Error, Result};
use crate::linreg::{sigmoid, ElasticNetConfig, ElasticNetTrainer, LinearModel, Resumable, TrainingProblem};
use crate::types::{LabelVector, MultiLabelDataset, SparseInstance};

use super::{
    check_instance, check_labels, label_column, log_bernoulli, sample_independent, JointEstimator,
    TrainerBank,
};

/// Binary relevance: one independent logistic regression per label.
#[derive(Debug, Clone, PartialEq)]
pub struct BrModel {
    models: Vec<LinearModel>,
    num_features: usize,
}

impl BrModel {
    pub fn new(models: Vec<LinearModel>) -> Result<Self> {
        let num_features = models
            .first()
            .ok_or_else(|| Error::Empty("binary relevance needs at least one label".into()))?
            .dim();
        for m in &models {
            if !m.is_binary() {
                return Err(Error::InvalidConfig("per-label models must be binary".into()));
            }
            if m.dim() != num_features {
                return Err(Error::DimensionMismatch {
                    expected: num_features,
                    actual: m.dim(),
                });
            }
        }
        Ok(Self {
            models,
            num_features,
        })
    }

    pub fn models(&self) -> &[LinearModel] {
        &self.models
    }

    pub fn logits(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        check_instance(x, self.num_features)?;
        self.models.iter().map(|m| m.logit(x)).collect()
    }

    /// `p(y_l = 1 | x)` for every label.
    pub fn marginals(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.into_iter().map(sigmoid).collect())
    }
}

impl JointEstimator for BrModel {
    fn num_labels(&self) -> usize {
        self.models.len()
    }

    fn num_features(&self) -> usize {
        self.num_features
    }

    fn log_joint(&self, x: &SparseInstance, y: &LabelVector) -> Result<f64> {
        Ok(self.log_joint_many(x, std::slice::from_ref(y))?[0])
    }

    fn log_joint_many(&self, x: &SparseInstance, ys: &[LabelVector]) -> Result<Vec<f64>> {
        let logs: Vec<(f64, f64)> = self.logits(x)?.into_iter().map(log_bernoulli).collect();
        let all_off: f64 = logs.iter().map(|l| l.1).sum();
        ys.iter()
            .map(|y| {
                check_labels(y, self.models.len())?;
                Ok(all_off + y.labels().iter().map(|&l| logs[l].0 - logs[l].1).sum::<f64>())
            })
            .collect()
    }

    fn sample(&self, x: &SparseInstance, rng: &mut dyn RngCore) -> Result<LabelVector> {
        Ok(sample_independent(&self.marginals(x)?, rng))
    }

    fn sample_many(
        &self,
        x: &SparseInstance,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<LabelVector>> {
        let probs = self.marginals(x)?;
        Ok((0..count).map(|_| sample_independent(&probs, rng)).collect())
    }
}

/// Resumable trainer advancing all per-label regressions together.
pub struct BrTrainer<'a> {
    bank: TrainerBank<'a>,
}

impl<'a> BrTrainer<'a> {
    pub fn new(dataset: &'a MultiLabelDataset, config: &ElasticNetConfig) -> Result<Self> {
        config.validate()?;
        let rows: Vec<&SparseInstance> = dataset.instances().iter().collect();
        let mut trainers: Vec<ElasticNetTrainer> = Vec::with_capacity(dataset.num_labels());
        for l in 0..dataset.num_labels() {
            let classes = label_column(dataset.labels(), l);
            let problem = TrainingProblem::hard(rows.clone(), &classes, 2)?;
            let trainer = match trainers.first() {
                Some(first) => {
                    let zero = LinearModel::zeros(2, dataset.num_features())?;
                    ElasticNetTrainer::with_columns_of(problem, *config, &zero, first)?
                }
                None => ElasticNetTrainer::new(problem, *config)?,
            };
            trainers.push(trainer);
        }
        Ok(Self {
            bank: TrainerBank::new(trainers, config.max_iterations),
        })
    }

    pub fn model(&self) -> BrModel {
        BrModel::new(self.bank.models()).expect("consistent per-label models")
    }

    /// Sum of the per-regression penalized objectives.
    pub fn objective(&self) -> f64 {
        self.bank.objective()
    }

    /// Trains every label to convergence or the iteration budget.
    pub fn train(mut self) -> Result<BrModel> {
        self.bank.run_to_end()?;
        Ok(self.model())
    }
}

impl Resumable for BrTrainer<'_> {
    type Snapshot = BrModel;

    fn advance(&mut self, iterations: usize) -> Result<()> {
        self.bank.advance(iterations)
    }

    fn iterations(&self) -> usize {
        self.bank.iterations()
    }

    fn is_finished(&self) -> bool {
        self.bank.is_finished()
    }

    fn snapshot(&self) -> BrModel {
        self.model()
    }
}

/// Trains one elastic-net logistic regression per label.
pub fn br_train(dataset: &MultiLabelDataset, config: &ElasticNetConfig) -> Result<BrModel> {
    BrTrainer::new(dataset, config)?.train()
}
