use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linreg::{
    elastic_net_penalty, log_sum_exp, ElasticNetConfig, ElasticNetTrainer, LinearModel, Resumable,
    TrainingProblem,
};
use crate::types::{LabelVector, MultiLabelDataset, SparseInstance};

use super::{check_instance, label_column, sample_index, BrModel, JointEstimator};

/// Mixing distribution `π(z = k | x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Gating {
    /// A single component with weight 1.
    Single,
    /// Multinomial regression over the `K ≥ 2` components.
    Linear(LinearModel),
}

impl Gating {
    pub fn num_components(&self) -> usize {
        match self {
            Gating::Single => 1,
            Gating::Linear(m) => m.num_classes(),
        }
    }

    pub fn log_weights(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        match self {
            Gating::Single => Ok(vec![0.0]),
            Gating::Linear(m) => m.log_distribution(x),
        }
    }
}

/// Conditional Bernoulli mixture: `p(y|x) = Σ_k π(k|x) Π_l b(y_l|x, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CbmModel {
    gating: Gating,
    components: Vec<BrModel>,
}

impl CbmModel {
    pub fn new(gating: Gating, components: Vec<BrModel>) -> Result<Self> {
        if components.len() != gating.num_components() {
            return Err(Error::InvalidConfig(format!(
                "gating has {} components but {} were given",
                gating.num_components(),
                components.len()
            )));
        }
        let first = &components[0];
        for c in &components {
            if c.num_labels() != first.num_labels() {
                return Err(Error::LabelSpaceMismatch {
                    expected: first.num_labels(),
                    actual: c.num_labels(),
                });
            }
            if c.num_features() != first.num_features() {
                return Err(Error::DimensionMismatch {
                    expected: first.num_features(),
                    actual: c.num_features(),
                });
            }
        }
        if let Gating::Linear(m) = &gating {
            if m.dim() != first.num_features() {
                return Err(Error::DimensionMismatch {
                    expected: first.num_features(),
                    actual: m.dim(),
                });
            }
        }
        Ok(Self { gating, components })
    }

    pub fn gating(&self) -> &Gating {
        &self.gating
    }

    pub fn components(&self) -> &[BrModel] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// `π(k|x)` for every component.
    pub fn component_weights(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        check_instance(x, self.num_features())?;
        Ok(self.gating.log_weights(x)?.into_iter().map(f64::exp).collect())
    }

    /// `p(y_l = 1 | x)` for every label.
    pub fn marginals(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        let pi = self.component_weights(x)?;
        let mut out = vec![0.0; self.num_labels()];
        for (c, w) in self.components.iter().zip(pi) {
            for (o, p) in out.iter_mut().zip(c.marginals(x)?) {
                *o += w * p;
            }
        }
        Ok(out)
    }

    /// `log π(k|x) + log p_k(y|x)` for every component.
    pub fn component_log_joints(&self, x: &SparseInstance, y: &LabelVector) -> Result<Vec<f64>> {
        check_instance(x, self.num_features())?;
        let log_pi = self.gating.log_weights(x)?;
        self.components
            .iter()
            .zip(log_pi)
            .map(|(c, lp)| Ok(lp + c.log_joint(x, y)?))
            .collect()
    }
}

impl JointEstimator for CbmModel {
    fn num_labels(&self) -> usize {
        self.components[0].num_labels()
    }

    fn num_features(&self) -> usize {
        self.components[0].num_features()
    }

    fn log_joint(&self, x: &SparseInstance, y: &LabelVector) -> Result<f64> {
        Ok(log_sum_exp(&self.component_log_joints(x, y)?))
    }

    fn log_joint_many(&self, x: &SparseInstance, ys: &[LabelVector]) -> Result<Vec<f64>> {
        check_instance(x, self.num_features())?;
        let log_pi = self.gating.log_weights(x)?;
        let per_component = self
            .components
            .iter()
            .map(|c| c.log_joint_many(x, ys))
            .collect::<Result<Vec<_>>>()?;
        let mut terms = vec![0.0; self.components.len()];
        Ok((0..ys.len())
            .map(|s| {
                for (k, t) in terms.iter_mut().enumerate() {
                    *t = log_pi[k] + per_component[k][s];
                }
                log_sum_exp(&terms)
            })
            .collect())
    }

    fn sample(&self, x: &SparseInstance, rng: &mut dyn RngCore) -> Result<LabelVector> {
        Ok(self.sample_many(x, 1, rng)?.remove(0))
    }

    /// Draws a component from the gating, then labels from that component.
    fn sample_many(
        &self,
        x: &SparseInstance,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<LabelVector>> {
        let pi = self.component_weights(x)?;
        let marginals = self
            .components
            .iter()
            .map(|c| c.marginals(x))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..count)
            .map(|_| {
                let k = sample_index(&pi, rng);
                super::sample_independent(&marginals[k], rng)
            })
            .collect())
    }
}

/// EM settings; the regression penalty comes from an [`ElasticNetConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbmConfig {
    /// Number of mixture components `K`.
    pub components: usize,
    pub max_em_iterations: usize,
    /// Solver iterations per M-step.
    pub inner_iterations: usize,
    /// Stop once the penalized objective changes by less than this (relative).
    pub em_tolerance: f64,
    /// Initial responsibilities mix the uniform distribution with weight
    /// `1 - init_noise` and a random point of the simplex with weight `init_noise`.
    pub init_noise: f64,
    pub seed: u64,
}

impl Default for CbmConfig {
    fn default() -> Self {
        Self {
            components: 20,
            max_em_iterations: 50,
            inner_iterations: 5,
            em_tolerance: 1e-7,
            init_noise: 0.5,
            seed: 0,
        }
    }
}

impl CbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::InvalidConfig("at least one mixture component is required".into()));
        }
        if self.max_em_iterations == 0 || self.inner_iterations == 0 {
            return Err(Error::InvalidConfig("iteration counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.init_noise) {
            return Err(Error::InvalidConfig("init_noise must lie in [0, 1]".into()));
        }
        if !(self.em_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("em_tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// Generalized EM trainer. Every [`Resumable::advance`] step is one M-step
/// (from the current responsibilities) followed by one E-step.
pub struct CbmTrainer<'a> {
    dataset: &'a MultiLabelDataset,
    config: CbmConfig,
    penalty: ElasticNetConfig,
    gating: Option<ElasticNetTrainer<'a>>,
    /// `K × L`, component-major.
    components: Vec<ElasticNetTrainer<'a>>,
    /// Row-major `N × K`.
    responsibilities: Vec<f64>,
    log_likelihoods: Vec<f64>,
    objectives: Vec<f64>,
    degenerate_rows: usize,
    iterations: usize,
    converged: bool,
}

impl<'a> CbmTrainer<'a> {
    pub fn new(dataset: &'a MultiLabelDataset, config: &CbmConfig, penalty: &ElasticNetConfig) -> Result<Self> {
        config.validate()?;
        penalty.validate()?;
        let (n, k, l) = (dataset.len(), config.components, dataset.num_labels());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut responsibilities = vec![0.0; n * k];
        for row in responsibilities.chunks_mut(k) {
            // uniform point on the simplex
            for r in row.iter_mut() {
                *r = -(1.0 - rng.gen::<f64>()).ln();
            }
            let total: f64 = row.iter().sum();
            for r in row.iter_mut() {
                *r = (1.0 - config.init_noise) / k as f64 + config.init_noise * *r / total;
            }
        }

        let rows: Vec<&SparseInstance> = dataset.instances().iter().collect();
        let normalizer = n as f64;
        let gating = if k > 1 {
            let problem = TrainingProblem::soft(rows.clone(), responsibilities.clone(), k)?;
            Some(ElasticNetTrainer::new(problem.with_normalizer(normalizer)?, *penalty)?)
        } else {
            None
        };
        let zero = LinearModel::zeros(2, dataset.num_features())?;
        let mut components: Vec<ElasticNetTrainer> = Vec::with_capacity(k * l);
        for _ in 0..k {
            for label in 0..l {
                let classes = label_column(dataset.labels(), label);
                let problem = TrainingProblem::hard(rows.clone(), &classes, 2)?.with_normalizer(normalizer)?;
                let trainer = match gating.as_ref().or(components.first()) {
                    Some(donor) => ElasticNetTrainer::with_columns_of(problem, *penalty, &zero, donor)?,
                    None => ElasticNetTrainer::new(problem, *penalty)?,
                };
                components.push(trainer);
            }
        }
        Ok(Self {
            dataset,
            config: *config,
            penalty: *penalty,
            gating,
            components,
            responsibilities,
            log_likelihoods: Vec::new(),
            objectives: Vec::new(),
            degenerate_rows: 0,
            iterations: 0,
            converged: false,
        })
    }

    pub fn model(&self) -> CbmModel {
        let l = self.dataset.num_labels();
        let gating = match &self.gating {
            Some(t) => Gating::Linear(t.model()),
            None => Gating::Single,
        };
        let components = self
            .components
            .chunks(l)
            .map(|c| BrModel::new(c.iter().map(|t| t.model()).collect()).expect("consistent components"))
            .collect();
        CbmModel::new(gating, components).expect("consistent mixture")
    }

    /// Mean observed-data log-likelihood after each EM iteration.
    pub fn log_likelihood_trace(&self) -> &[f64] {
        &self.log_likelihoods
    }

    /// Penalized objective (negative mean log-likelihood plus all penalties)
    /// after each EM iteration; non-increasing.
    pub fn objective_trace(&self) -> &[f64] {
        &self.objectives
    }

    /// Rows whose responsibilities could not be normalized and were reset to uniform.
    pub fn degenerate_rows(&self) -> usize {
        self.degenerate_rows
    }

    /// Row-major `N × K` responsibilities used by the next M-step.
    pub fn responsibilities(&self) -> &[f64] {
        &self.responsibilities
    }

    fn m_step(&mut self) -> Result<()> {
        let k = self.config.components;
        let l = self.dataset.num_labels();
        let inner = self.config.inner_iterations;
        if let Some(g) = self.gating.as_mut() {
            g.set_soft_targets(self.responsibilities.clone())?;
            g.run(inner)?;
        }
        let n = self.dataset.len();
        let columns: Vec<Vec<f64>> = (0..k)
            .map(|c| (0..n).map(|i| self.responsibilities[i * k + c]).collect())
            .collect();
        self.components
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(idx, t)| {
                let weights = &columns[idx / l];
                // a component with no mass contributes nothing to the objective
                if weights.iter().sum::<f64>() <= 0.0 {
                    return Ok(());
                }
                t.set_weights(weights.clone())?;
                t.run(inner).map(|_| ())
            })
    }

    /// Recomputes responsibilities from the current model; returns the mean
    /// observed-data log-likelihood.
    fn e_step(&mut self) -> Result<f64> {
        let model = self.model();
        let k = self.config.components;
        let rows: Vec<(Vec<f64>, f64)> = self
            .dataset
            .instances()
            .par_iter()
            .zip(self.dataset.labels().par_iter())
            .map(|(x, y)| {
                let terms = model.component_log_joints(x, y)?;
                let lse = log_sum_exp(&terms);
                Ok((terms, lse))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        for (i, (terms, lse)) in rows.into_iter().enumerate() {
            let out = &mut self.responsibilities[i * k..(i + 1) * k];
            if lse.is_finite() {
                for (r, t) in out.iter_mut().zip(&terms) {
                    *r = (t - lse).exp();
                }
                total += lse;
            } else {
                self.degenerate_rows += 1;
                out.iter_mut().for_each(|r| *r = 1.0 / k as f64);
                total += lse;
            }
        }
        let ll = total / self.dataset.len() as f64;
        if !ll.is_finite() {
            return Err(Error::NonFiniteObjective(format!("log-likelihood {ll}")));
        }
        Ok(ll)
    }

    fn total_penalty(&self) -> f64 {
        let gating = self
            .gating
            .as_ref()
            .map_or(0.0, |g| elastic_net_penalty(&g.model(), &self.penalty));
        gating
            + self
                .components
                .iter()
                .map(|t| elastic_net_penalty(&t.model(), &self.penalty))
                .sum::<f64>()
    }

    fn em_iteration(&mut self) -> Result<()> {
        self.m_step()?;
        let ll = self.e_step()?;
        let objective = -ll + self.total_penalty();
        if let Some(&previous) = self.objectives.last() {
            let change = (previous - objective).abs();
            self.converged = change <= self.config.em_tolerance * previous.abs().max(1.0);
        }
        self.iterations += 1;
        log::debug!(
            "EM iteration {}: log-likelihood {ll:.8}, penalized objective {objective:.8}",
            self.iterations
        );
        self.log_likelihoods.push(ll);
        self.objectives.push(objective);
        Ok(())
    }

    pub fn train(mut self) -> Result<CbmModel> {
        while !self.is_finished() {
            self.em_iteration()?;
        }
        Ok(self.model())
    }
}

impl Resumable for CbmTrainer<'_> {
    type Snapshot = CbmModel;

    fn advance(&mut self, iterations: usize) -> Result<()> {
        for _ in 0..iterations {
            if self.is_finished() {
                break;
            }
            self.em_iteration()?;
        }
        Ok(())
    }

    fn iterations(&self) -> usize {
        self.iterations
    }

    fn is_finished(&self) -> bool {
        self.converged || self.iterations >= self.config.max_em_iterations
    }

    fn snapshot(&self) -> CbmModel {
        self.model()
    }
}

/// Fits a conditional Bernoulli mixture by generalized EM.
pub fn cbm_train_em(dataset: &MultiLabelDataset, config: &CbmConfig, penalty: &ElasticNetConfig) -> Result<CbmModel> {
    CbmTrainer::new(dataset, config, penalty)?.train()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::br_train;

    fn binary(intercept: f64, w: Vec<f64>) -> LinearModel {
        let d = w.len();
        LinearModel::from_parts(2, d, vec![intercept], vec![w]).unwrap()
    }

    fn random_cbm(rng: &mut ChaCha8Rng, k: usize, l: usize, d: usize) -> CbmModel {
        let components = (0..k)
            .map(|_| {
                BrModel::new(
                    (0..l)
                        .map(|_| binary(rng.gen_range(-2.0..2.0), (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        if k == 1 {
            return CbmModel::new(Gating::Single, components).unwrap();
        }
        let v = LinearModel::score_vectors_for(k);
        let gating = LinearModel::from_parts(
            k,
            d,
            (0..v).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..v).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
        )
        .unwrap();
        CbmModel::new(Gating::Linear(gating), components).unwrap()
    }

    /// Two clusters; feature 0 is a noisy continuous cluster signal (`±2 + N(0,1)`).
    /// Cluster A uses labels {0,1}, B uses {2,3}.
    fn two_clusters(rng: &mut ChaCha8Rng, n: usize) -> (MultiLabelDataset, Vec<usize>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut clusters = Vec::new();
        for _ in 0..n {
            let c = usize::from(rng.gen_bool(0.5));
            let normal: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            let signal = if c == 1 { 2.0 } else { -2.0 } + normal;
            let dense = vec![signal, rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            xs.push(SparseInstance::from_dense(&dense).unwrap());
            let labels: Vec<usize> = if c == 0 { vec![0, 1] } else { vec![2, 3] };
            let kept = labels.into_iter().filter(|_| rng.gen_bool(0.9));
            ys.push(LabelVector::new(4, kept).unwrap());
            clusters.push(c);
        }
        (MultiLabelDataset::new(xs, ys, 3, 4).unwrap(), clusters)
    }

    #[test]
    fn mixture_joint_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cbm = random_cbm(&mut rng, 3, 5, 4);
        let x = SparseInstance::from_dense(&[0.3, 0.0, 1.0, 0.5]).unwrap();
        let ys: Vec<LabelVector> = (0..32).map(|m| LabelVector::from_mask(5, m)).collect();
        let total: f64 = cbm.log_joint_many(&x, &ys).unwrap().iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for y in &ys[..4] {
            assert!((cbm.log_joint(&x, y).unwrap() - cbm.log_joint_many(&x, &[y.clone()]).unwrap()[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_component_matches_its_br() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let br = random_cbm(&mut rng, 1, 4, 3).components()[0].clone();
        let cbm = CbmModel::new(Gating::Single, vec![br.clone()]).unwrap();
        let x = SparseInstance::from_dense(&[1.0, -0.5, 0.25]).unwrap();
        for m in 0..16 {
            let y = LabelVector::from_mask(4, m);
            assert!((cbm.log_joint(&x, &y).unwrap() - br.log_joint(&x, &y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_component_drives_samples() {
        let component = |b: f64| BrModel::new(vec![binary(b, vec![0.0]), binary(-b, vec![0.0])]).unwrap();
        let gating = LinearModel::from_parts(2, 1, vec![20.0], vec![vec![0.0]]).unwrap();
        let cbm = CbmModel::new(Gating::Linear(gating), vec![component(3.0), component(-0.5)]).unwrap();
        let x = SparseInstance::new(1, vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 10_000;
        let mut counts = [0usize; 4];
        for y in cbm.sample_many(&x, m, &mut rng).unwrap() {
            counts[y.to_mask() as usize] += 1;
        }
        let target = &cbm.components()[1];
        let chi2: f64 = (0..4u64)
            .map(|mask| {
                let expected = m as f64 * target.log_joint(&x, &LabelVector::from_mask(2, mask)).unwrap().exp();
                (counts[mask as usize] as f64 - expected).powi(2) / expected
            })
            .sum();
        // 3 degrees of freedom, 0.999 quantile
        assert!(chi2 < 16.27, "chi-square {chi2}");
    }

    #[test]
    fn em_is_monotone_and_separates_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (train, _) = two_clusters(&mut rng, 300);
        let (test, clusters) = two_clusters(&mut rng, 200);
        let config = CbmConfig {
            components: 2,
            max_em_iterations: 20,
            em_tolerance: 0.0,
            seed: 7,
            ..CbmConfig::default()
        };
        let mut trainer = CbmTrainer::new(&train, &config, &ElasticNetConfig::new(1e-2, 0.5)).unwrap();
        trainer.advance(20).unwrap();
        let objectives = trainer.objective_trace();
        assert_eq!(objectives.len(), 20);
        for w in objectives.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
        }
        let cbm = trainer.model();
        let assigned: Vec<usize> = test
            .instances()
            .iter()
            .map(|x| {
                let pi = cbm.component_weights(x).unwrap();
                usize::from(pi[1] > pi[0])
            })
            .collect();
        let agree = assigned.iter().zip(&clusters).filter(|(a, b)| a == b).count() as f64 / 200.0;
        // component numbering is arbitrary
        assert!(agree.max(1.0 - agree) >= 0.9, "gating accuracy {agree}");
    }

    #[test]
    fn one_component_training_matches_br() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (data, _) = two_clusters(&mut rng, 150);
        let penalty = ElasticNetConfig {
            tolerance: 1e-9,
            max_iterations: 1000,
            ..ElasticNetConfig::new(1e-2, 0.5)
        };
        let config = CbmConfig {
            components: 1,
            max_em_iterations: 400,
            em_tolerance: 1e-12,
            ..CbmConfig::default()
        };
        let cbm = cbm_train_em(&data, &config, &penalty).unwrap();
        let br = br_train(&data, &penalty).unwrap();
        for x in data.instances() {
            for (a, b) in cbm.marginals(x).unwrap().iter().zip(br.marginals(x).unwrap()) {
                assert!((a - b).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn configuration_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (data, _) = two_clusters(&mut rng, 10);
        let penalty = ElasticNetConfig::default();
        let bad = CbmConfig {
            components: 0,
            ..CbmConfig::default()
        };
        assert!(CbmTrainer::new(&data, &bad, &penalty).is_err());
        let two = random_cbm(&mut rng, 2, 4, 3).components().to_vec();
        assert!(CbmModel::new(Gating::Single, two).is_err());
    }
}
